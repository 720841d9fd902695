"""Dynamic decomposition of weighted-aggregate changes and the counterfactual split."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

#: Totals smaller than this make contribution shares meaningless.
SHARE_GUARD = 1e-9


@dataclass(frozen=True)
class MPComponents:
    """Melitz-Polanec components; they sum to ``total_change`` by construction."""

    total_change: float
    within: float
    between: float
    exit: float
    entry: float


@dataclass(frozen=True)
class CounterfactualResult:
    """Split of a labor-share change (pp) into distribution and residual parts.

    Shares are percents of the total and sum to 100; they are ``None`` when
    the total change is too close to zero to divide by.
    """

    total_change: float
    distribution_contribution: float
    residual_contribution: float
    distribution_share: float | None
    residual_share: float | None


def _group_stats(ids: Sequence, weights: dict, values: dict):
    total_weight = sum(weights[i] for i in ids)
    if total_weight == 0.0 or not ids:
        return 0.0, 0.0, 0.0
    agg = sum(weights[i] * values[i] for i in ids) / total_weight
    mean = sum(values[i] for i in ids) / len(ids)
    return total_weight, agg, mean


def melitz_polanec(period1, period2) -> MPComponents:
    """Decompose the change in a weighted aggregate into within/between/exit/entry.

    Each period is a sequence of ``(id, weight, share_value)`` triples; weights
    are normalized within the period.  With survivors S, exiters X, entrants E
    and group aggregates ``Agg_G = sum(w*v)/sum(w)``:

    - within  = change in the unweighted survivor mean,
    - between = change in the survivor covariance term (Agg_S - mean_S),
    - exit    = w_X1 * (Agg_S1 - Agg_X1),
    - entry   = w_E2 * (Agg_E2 - Agg_S2),

    and the four sum to ``Agg_2 - Agg_1`` exactly.  The exit term carries the
    sign that makes the identity hold: a period-1 aggregate pulled down by
    high-share exiters shows up as a negative exit contribution.
    """
    w1, v1 = _read_period(period1, "period1")
    w2, v2 = _read_period(period2, "period2")
    survivors = sorted(set(w1) & set(w2))
    if not survivors:
        raise ValueError("no surviving ids: the decomposition is undefined")
    exiters = sorted(set(w1) - set(w2))
    entrants = sorted(set(w2) - set(w1))

    agg1 = sum(w1[i] * v1[i] for i in w1)
    agg2 = sum(w2[i] * v2[i] for i in w2)

    _, agg_s1, mean_s1 = _group_stats(survivors, w1, v1)
    _, agg_s2, mean_s2 = _group_stats(survivors, w2, v2)
    wx1, agg_x1, _ = _group_stats(exiters, w1, v1)
    we2, agg_e2, _ = _group_stats(entrants, w2, v2)

    within = mean_s2 - mean_s1
    between = (agg_s2 - mean_s2) - (agg_s1 - mean_s1)
    exit_effect = wx1 * (agg_s1 - agg_x1) if exiters else 0.0
    entry_effect = we2 * (agg_e2 - agg_s2) if entrants else 0.0
    total = agg2 - agg1

    residual = total - (within + between + exit_effect + entry_effect)
    if abs(residual) > 1e-12 * max(1.0, abs(total)):
        raise RuntimeError(f"component-sum identity violated by {residual:.3e}")
    return MPComponents(
        total_change=total,
        within=within,
        between=between,
        exit=exit_effect,
        entry=entry_effect,
    )


def _read_period(period, name: str) -> tuple[dict, dict]:
    weights: dict = {}
    values: dict = {}
    for firm_id, weight, value in period:
        if firm_id in weights:
            raise ValueError(f"duplicate id {firm_id!r} in {name}")
        if not (math.isfinite(weight) and weight > 0.0):
            raise ValueError(f"{name}: weight for {firm_id!r} must be positive")
        if not math.isfinite(value):
            raise ValueError(f"{name}: share value for {firm_id!r} must be finite")
        weights[firm_id] = weight
        values[firm_id] = value
    if not weights:
        raise ValueError(f"{name} is empty")
    total = sum(weights.values())
    return {i: w / total for i, w in weights.items()}, values


def counterfactual_from_contribution(
    ls_change_pp: float, distribution_contribution_pp: float
) -> CounterfactualResult:
    """Split a total change (pp) around a known distribution contribution (pp)."""
    residual = ls_change_pp - distribution_contribution_pp
    if abs(ls_change_pp) < SHARE_GUARD:
        dist_share = res_share = None
    else:
        dist_share = distribution_contribution_pp / ls_change_pp * 100.0
        res_share = residual / ls_change_pp * 100.0
    return CounterfactualResult(
        total_change=ls_change_pp,
        distribution_contribution=distribution_contribution_pp,
        residual_contribution=residual,
        distribution_share=dist_share,
        residual_share=res_share,
    )


def counterfactual_contribution(
    ls_change_pp: float, coefficient: float, alpha_start: float, alpha_end: float
) -> CounterfactualResult:
    """Contribution of a tail-index path to a labor-share change.

    Holding everything else on its observed path, a regression coefficient
    ``coefficient`` (share units per unit of alpha) and the move from
    ``alpha_start`` to ``alpha_end`` contribute
    ``100 * coefficient * (alpha_end - alpha_start)`` percentage points; the
    rest of the change is the residual of other forces.
    """
    contribution = 100.0 * coefficient * (alpha_end - alpha_start)
    return counterfactual_from_contribution(ls_change_pp, contribution)
