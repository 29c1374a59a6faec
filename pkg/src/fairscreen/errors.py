"""Exception types shared across the library."""


class FairScreenError(Exception):
    """Base class for library-specific errors."""


class InvalidParams(FairScreenError):
    """Constructor arguments violate a domain invariant."""


class ShapeMismatch(FairScreenError):
    """A policy does not cover the pipeline's groups and stages."""


class NotMinimallyEffective(FairScreenError):
    """A solver that requires tau1 > tau0 at every stage was given a pipeline without it."""


class SizeLimit(FairScreenError):
    """An enumeration or table would exceed the configured budget."""


class InvalidEps(FairScreenError):
    """Accuracy parameter outside (0, 1)."""


class InvalidBounds(FairScreenError):
    """Caller-supplied grid lower bounds outside (0, 1]."""


class DegenerateInterval(FairScreenError):
    """Inner optimization called on an empty interval."""


class ParseError(FairScreenError):
    """Input file rejected; ``path`` points at the offending field."""

    def __init__(self, message: str, path: str = ""):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class UnknownExample(FairScreenError):
    """Reproduction id not in the registry."""
