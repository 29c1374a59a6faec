"""Equal Opportunity and Equalized Odds verification.

Both criteria compare cumulative rates across groups: Equal Opportunity
requires equal cumulative true-positive rates, Equalized Odds additionally
equal cumulative false-positive rates.  The "final" scope compares rates at
the end of the pipeline; the "per_stage" scope compares the cumulative rates
after every stage and reports the worst gap, so per-stage satisfaction implies
final satisfaction.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import InvalidParams
from .model import Pipeline, Policy, cumulative_rates

FINAL = "final"
PER_STAGE = "per_stage"

DEFAULT_TOLERANCE = 1e-6


@dataclass(frozen=True)
class FairnessReport:
    criterion: str  # "equal_opportunity" | "equalized_odds"
    scope: str  # "final" | "per_stage"
    satisfied: bool
    max_gap: float
    witness: tuple[str, str]  # (group with larger rate, group with smaller rate)
    tolerance: float
    stage: int  # 1-based stage where the worst gap occurs


def _worst_gap(values_by_stage: list[dict[str, float]]) -> tuple[float, tuple[str, str], int]:
    """Largest max-minus-min over stages; ids tie-broken lexicographically."""
    best = (-1.0, ("", ""), 0)
    for i, values in enumerate(values_by_stage):
        hi_gid = min(gid for gid, v in values.items() if v == max(values.values()))
        lo_gid = min(gid for gid, v in values.items() if v == min(values.values()))
        gap = values[hi_gid] - values[lo_gid]
        if gap > best[0]:
            best = (gap, (hi_gid, lo_gid), i + 1)
    return best


def _check(
    pl: Pipeline,
    pol: Policy,
    tolerance: float,
    scope: str,
    criterion: str,
    use_fpr: bool,
) -> FairnessReport:
    if tolerance < 0.0:
        raise InvalidParams(f"tolerance must be >= 0, got {tolerance}")
    if scope not in (FINAL, PER_STAGE):
        raise InvalidParams(f"scope must be {FINAL!r} or {PER_STAGE!r}, got {scope!r}")
    rates = cumulative_rates(pl, pol)
    stage_idx = range(pl.k) if scope == PER_STAGE else [pl.k - 1]

    tpr_stages = [{gid: rates[gid][i][0] for gid in rates} for i in stage_idx]
    gap, witness, stage = _worst_gap(tpr_stages)
    if scope == FINAL:
        stage = pl.k
    if use_fpr:
        fpr_stages = [{gid: rates[gid][i][1] for gid in rates} for i in stage_idx]
        fgap, fwitness, fstage = _worst_gap(fpr_stages)
        if fgap > gap:
            gap, witness, stage = fgap, fwitness, (pl.k if scope == FINAL else fstage)
    return FairnessReport(
        criterion=criterion,
        scope=scope,
        satisfied=gap <= tolerance,
        max_gap=gap,
        witness=witness,
        tolerance=tolerance,
        stage=stage,
    )


def check_eo(
    pl: Pipeline, pol: Policy, tolerance: float = DEFAULT_TOLERANCE, scope: str = FINAL
) -> FairnessReport:
    """Equal Opportunity: equal cumulative TPR across groups at the given scope."""
    return _check(pl, pol, tolerance, scope, "equal_opportunity", use_fpr=False)


def check_eodds(
    pl: Pipeline, pol: Policy, tolerance: float = DEFAULT_TOLERANCE, scope: str = FINAL
) -> FairnessReport:
    """Equalized Odds: equal cumulative TPR and FPR; max_gap is the larger of the two gaps."""
    return _check(pl, pol, tolerance, scope, "equalized_odds", use_fpr=True)
