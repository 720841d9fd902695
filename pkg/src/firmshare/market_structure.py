"""Concentration measures, panel-cell construction, and leave-one-out instruments."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .estimation import DegenerateRegressorError, rank_regression_tail

log = logging.getLogger(__name__)

VALUE_ADDED = "value_added"
OUTPUT = "output"


@dataclass(frozen=True)
class FirmRecord:
    """One firm-year observation.

    ``output``, ``capital``, ``wage_bill`` and ``value_added`` are currency
    amounts, ``labor`` is a headcount; ``value_added`` may be missing, in
    which case only output-basis labor shares are available.
    """

    firm_id: str
    year: int
    region: str
    industry: str
    output: float
    labor: float
    capital: float
    wage_bill: float
    value_added: float | None = None

    def __post_init__(self) -> None:
        for name in ("output", "labor", "capital"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0.0):
                raise ValueError(f"{name} must be a positive finite real, got {value}")
        if not (math.isfinite(self.wage_bill) and self.wage_bill >= 0.0):
            raise ValueError(f"wage_bill must be nonnegative, got {self.wage_bill}")
        if self.value_added is not None and not (
            math.isfinite(self.value_added) and self.value_added > 0.0
        ):
            raise ValueError(f"value_added must be positive when present, got {self.value_added}")


@dataclass(frozen=True)
class PanelCell:
    """One (region, industry, year) aggregate: weighted share plus structure indices.

    ``alpha_hat`` is None for degenerate cells (all outputs equal), where the
    rank-size slope is undefined.
    """

    region: str
    industry: str
    year: int
    weighted_ls: float
    alpha_hat: float | None
    hhi: float
    cr4: float
    gini: float
    n_firms: int
    mean_size: float

    @property
    def total_output(self) -> float:
        return self.n_firms * self.mean_size


@dataclass
class Panel:
    """build_panel output: retained cells plus drop/flag diagnostics."""

    cells: list[PanelCell]
    dropped_cells: int
    n_ls_above_one: int

    def __iter__(self):
        return iter(self.cells)

    def __len__(self) -> int:
        return len(self.cells)


def labor_share(firm: FirmRecord, basis: str = VALUE_ADDED) -> float:
    """Wage bill over value added (default) or over gross output.

    Values above 1 are legal (wages can exceed value added) and are flagged,
    not rejected, at the panel level.
    """
    if basis == VALUE_ADDED:
        if firm.value_added is None:
            raise ValueError(f"firm {firm.firm_id}: value_added missing under value_added basis")
        return firm.wage_bill / firm.value_added
    if basis == OUTPUT:
        return firm.wage_bill / firm.output
    raise ValueError(f"unknown basis {basis!r}")


def weighted_labor_share(
    firms: Sequence[FirmRecord], basis: str = VALUE_ADDED, weight_basis: str = OUTPUT
) -> float:
    """Output-weighted mean labor share, sum(LS_i * Y_i) / sum(Y_i).

    Gross output is the weight in both bases, mirroring the aggregation
    definition; ``weight_basis="value_added"`` is the sensitivity variant.
    """
    if len(firms) == 0:
        raise ValueError("cannot average an empty group of firms")
    shares = np.array([labor_share(f, basis) for f in firms])
    if weight_basis == OUTPUT:
        weights = np.array([f.output for f in firms])
    elif weight_basis == VALUE_ADDED:
        for f in firms:
            if f.value_added is None:
                raise ValueError(f"firm {f.firm_id}: value_added missing for value_added weights")
        weights = np.array([f.value_added for f in firms])
    else:
        raise ValueError(f"unknown weight basis {weight_basis!r}")
    return float(weights @ shares / weights.sum())


def _positive_array(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float).ravel()
    if arr.size == 0:
        raise ValueError(f"{name} must be nonempty")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    if np.any(arr <= 0.0):
        raise ValueError(f"{name} must be strictly positive")
    return arr


def hhi(outputs) -> float:
    """Herfindahl-Hirschman index: sum of squared market shares."""
    arr = _positive_array(outputs, "outputs")
    shares = arr / arr.sum()
    return float(shares @ shares)


def cr4(outputs) -> float:
    """Combined market share of the four largest firms (1.0 when n <= 4)."""
    arr = _positive_array(outputs, "outputs")
    if arr.size <= 4:
        return 1.0
    top = np.partition(arr, arr.size - 4)[-4:]
    return min(1.0, float(top.sum() / arr.sum()))


def gini(values) -> float:
    """Gini coefficient by the sorted-rank formula, O(n log n).

    Equals the normalized mean absolute difference
    sum_ij |x_i - x_j| / (2 n**2 mean); zero for equal values, and strictly
    below 1 for finite samples.
    """
    arr = np.asarray(values, dtype=float).ravel()
    if arr.size == 0:
        raise ValueError("values must be nonempty")
    if not np.all(np.isfinite(arr)) or np.any(arr < 0.0):
        raise ValueError("values must be finite and nonnegative")
    total = arr.sum()
    if total == 0.0:
        raise ValueError("gini undefined: all values are zero")
    srt = np.sort(arr)
    n = srt.size
    ranks = np.arange(1, n + 1, dtype=float)
    return float((2.0 * ranks - n - 1.0) @ srt / (n * total))


def build_panel(
    records: Iterable[FirmRecord],
    min_cell_size: int = 30,
    basis: str = VALUE_ADDED,
    winsorize: bool = False,
) -> Panel:
    """Aggregate firm records into (region, industry, year) cells.

    Each retained cell gets its output-weighted labor share, rank-regression
    tail index, HHI, CR4, Gini coefficient of outputs, firm count, and mean
    size.  Cells below ``min_cell_size`` are dropped (counted, not fatal).
    ``winsorize`` clips firm labor shares at their global 1st/99th
    percentiles before aggregation.
    """
    if min_cell_size < 10:
        raise ValueError(f"min_cell_size must be at least 10, got {min_cell_size}")
    records = list(records)
    shares = np.array([labor_share(f, basis) for f in records], dtype=float)
    n_flagged = int(np.sum(shares > 1.0))
    if winsorize and shares.size:
        lo, hi = np.percentile(shares, [1.0, 99.0])
        shares = np.clip(shares, lo, hi)

    groups: dict[tuple[str, str, int], list[int]] = {}
    for i, firm in enumerate(records):
        groups.setdefault((firm.region, firm.industry, firm.year), []).append(i)

    cells: list[PanelCell] = []
    dropped = 0
    for key in sorted(groups):
        idx = groups[key]
        if len(idx) < min_cell_size:
            dropped += 1
            continue
        outputs = np.array([records[i].output for i in idx])
        cell_shares = shares[idx]
        region, industry, year = key
        try:
            alpha_hat = rank_regression_tail(outputs).alpha_hat
        except DegenerateRegressorError:
            alpha_hat = None
        cells.append(
            PanelCell(
                region=region,
                industry=industry,
                year=year,
                weighted_ls=float(outputs @ cell_shares / outputs.sum()),
                alpha_hat=alpha_hat,
                hhi=hhi(outputs),
                cr4=cr4(outputs),
                gini=gini(outputs),
                n_firms=len(idx),
                mean_size=float(outputs.mean()),
            )
        )
    if dropped:
        log.info("build_panel dropped %d cells below %d firms", dropped, min_cell_size)
    return Panel(cells=cells, dropped_cells=dropped, n_ls_above_one=n_flagged)


def leave_one_out_mean(
    cells: Sequence[PanelCell],
    exclude_region: str,
    pool: Sequence[str] | None = None,
) -> float:
    """Output-weighted mean tail index over peer cells, excluding one region.

    The Bartik-style instrument for one industry-year: every cell except the
    focal region's, weighted by cell total output.  ``pool`` optionally
    restricts the peer set first (e.g. to the focal region's province).
    """
    if len(cells) < 2:
        raise ValueError("need at least 2 cells to leave one out")
    if not any(c.region == exclude_region for c in cells):
        raise ValueError(f"exclude_region {exclude_region!r} not present among the cells")
    peers = [c for c in cells if c.region != exclude_region and c.alpha_hat is not None]
    if pool is not None:
        allowed = set(pool)
        peers = [c for c in peers if c.region in allowed]
    if not peers:
        raise ValueError("exclusion leaves an empty peer pool")
    weights = np.array([c.total_output for c in peers])
    alphas = np.array([c.alpha_hat for c in peers])
    return float(weights @ alphas / weights.sum())
