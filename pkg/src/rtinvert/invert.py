"""Exact p-value step functions and confidence sets for a scalar parameter.

The p-value can only change where the test statistic meets a
randomization statistic. All such crossing points are computed
analytically, pooled and sorted; the p-value on each open interval
between them is then read off by evaluating the statistics at one
interior point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from .algebra import Poly, poly_real_roots
from .errors import ConfigError, IdenticalAbsLines, IdenticalStatistics, ZeroPolynomial
from .stats import DEN_TOL, LinearFamily, RationalFamily

Side = Literal["right", "left", "two_sided", "wald"]
SIDES = ("right", "left", "two_sided", "wald")

MERGE_TOL = 1e-12
SLOPE_TOL = 1e-12
ROOT_TOL = 1e-9


def _check_side(side: str) -> str:
    if side not in SIDES:
        raise ConfigError(f"unknown side {side!r}; choose from {SIDES}")
    return side


def indicator(stats: np.ndarray, side: str) -> np.ndarray:
    """``1[T_Id <= T_g]`` (or the side's analogue) for every row ``g``."""
    t0 = stats[0]
    if side in ("right", "wald"):
        return t0 <= stats
    if side == "left":
        return t0 >= stats
    if side == "two_sided":
        return np.abs(t0) <= np.abs(stats)
    raise ConfigError(f"unknown side {side!r}")


def count_at(family, beta, side: str | None = None):
    """``1 + #{g != Id : indicator}``; vectorised over ``beta``."""
    side = _check_side(side or family.default_side)
    return 1 + np.sum(indicator(family.evaluate(beta), side)[1:], axis=0)


def pvalue_at(family, beta, side: str | None = None) -> float:
    """Direct p-value at one hypothesised value (a pair for 2-D families)."""
    return float(count_at(family, beta, side)) / family.M


# ---------------------------------------------------------------------------
# crossing points
# ---------------------------------------------------------------------------


def crossings_linear(fam: LinearFamily, tol: float = SLOPE_TOL) -> np.ndarray:
    """Where each line meets the identity line; NaN for parallel lines and
    for the identity itself."""
    m, b = fam.slopes, fam.intercepts
    dm = m[0] - m
    parallel = ~(np.abs(dm) > tol * np.maximum(np.abs(m[0]), np.abs(m)))
    out = np.full(fam.M, np.nan)
    ok = ~parallel
    ok[0] = False
    out[ok] = (b[ok] - b[0]) / dm[ok]
    return out


def abs_crossings_pair(
    m_id: float, b_id: float, m_g: float, b_g: float, tol: float = SLOPE_TOL, strict: bool = False
) -> tuple[float, ...]:
    """Points where ``|m_id x + b_id| = |m_g x + b_g|``.

    One point per non-vanishing denominator, merged when they coincide.
    With ``strict=True`` a pair whose absolute values agree everywhere
    raises :class:`IdenticalAbsLines`.
    """
    scale = max(abs(m_id), abs(m_g))
    pts = []
    if abs(m_id + m_g) > tol * scale:
        pts.append(-(b_id + b_g) / (m_id + m_g))
    if abs(m_g - m_id) > tol * scale:
        pts.append((b_id - b_g) / (m_g - m_id))
    if strict and len(pts) < 2 and m_id != 0 and m_g != 0:
        if math.isclose(b_id / m_id, b_g / m_g, rel_tol=1e-12, abs_tol=1e-300):
            raise IdenticalAbsLines("|T_Id| and |T_g| coincide everywhere")
    pts.sort()
    if len(pts) == 2 and pts[1] - pts[0] <= MERGE_TOL * max(abs(pts[0]), abs(pts[1])):
        pts = pts[:1]
    return tuple(pts)


def crossings_abs(fam: LinearFamily, tol: float = SLOPE_TOL) -> list[np.ndarray]:
    """Crossings of ``|T_Id|`` with every ``|T_g|`` (index 0 is empty).

    Pairs that coincide in absolute value contribute no sign change, so
    their formula points are harmless extra breakpoints.
    """
    m, b = fam.slopes, fam.intercepts
    out = [np.zeros(0)]
    for g in range(1, fam.M):
        out.append(np.asarray(abs_crossings_pair(m[0], b[0], m[g], b[g], tol), dtype=float))
    return out


def rational_crossings_pair(
    num_id: Poly,
    den_id: Poly,
    num_g: Poly,
    den_g: Poly,
    root_tol: float = ROOT_TOL,
    den_tol: float = DEN_TOL,
) -> np.ndarray:
    """Real roots of ``den_g * num_id - den_id * num_g`` at which neither
    denominator vanishes.

    Raises
    ------
    IdenticalStatistics
        If the cross-multiplied difference is the zero polynomial.
    """
    diff = den_g * num_id - den_id * num_g
    try:
        roots = poly_real_roots(diff, root_tol)
    except ZeroPolynomial as exc:
        raise IdenticalStatistics("statistics coincide for every beta") from exc
    keep = [
        r
        for r in roots
        if abs(den_id(r)) > den_tol * den_id.abs_eval(r) and abs(den_g(r)) > den_tol * den_g.abs_eval(r)
    ]
    return np.asarray(keep, dtype=float)


def crossings_rational(
    fam: RationalFamily, root_tol: float = ROOT_TOL, den_tol: float = DEN_TOL
) -> list[np.ndarray]:
    """Crossing points per permutation (index 0 is empty); identical
    statistics give an empty set, since their indicator never changes."""
    out = [np.zeros(0)]
    for g in range(1, fam.M):
        try:
            out.append(
                rational_crossings_pair(fam.num[0], fam.den[0], fam.num[g], fam.den[g], root_tol, den_tol)
            )
        except IdenticalStatistics:
            out.append(np.zeros(0))
    return out


def denominator_roots(fam: RationalFamily, root_tol: float = ROOT_TOL) -> np.ndarray:
    roots = [poly_real_roots(d, root_tol) for d in fam.den if d.degree >= 1]
    return np.unique(np.concatenate(roots)) if roots else np.zeros(0)


# ---------------------------------------------------------------------------
# step functions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StepFunction:
    """Piecewise-constant p-value curve.

    ``counts[i]`` is ``M * p`` on the open interval between
    ``breakpoints[i-1]`` and ``breakpoints[i]`` (infinite at the ends);
    ``point_counts[i]`` is ``M * p`` exactly at ``breakpoints[i]``, or -1
    where a statistic is undefined there.
    """

    breakpoints: np.ndarray
    counts: np.ndarray
    point_counts: np.ndarray
    M: int
    side: str = "right"

    def __post_init__(self):
        bp = np.asarray(self.breakpoints, dtype=float)
        c = np.asarray(self.counts, dtype=int)
        pc = np.asarray(self.point_counts, dtype=int)
        if c.shape != (bp.size + 1,) or pc.shape != bp.shape:
            raise ConfigError("need len(counts) == len(breakpoints) + 1 == len(point_counts) + 1")
        if bp.size > 1 and not np.all(np.diff(bp) > 0):
            raise ConfigError("breakpoints must be strictly increasing")
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "counts", c)
        object.__setattr__(self, "point_counts", pc)

    @property
    def values(self) -> np.ndarray:
        return self.counts / self.M

    @property
    def point_values(self) -> np.ndarray:
        return np.where(self.point_counts < 0, np.nan, self.point_counts / self.M)

    @property
    def singular(self) -> np.ndarray:
        return self.breakpoints[self.point_counts < 0]

    def __call__(self, beta: float) -> float:
        i = int(np.searchsorted(self.breakpoints, beta))
        if i < self.breakpoints.size and self.breakpoints[i] == beta:
            return float(self.point_values[i])
        return float(self.values[i])

    def records(self, include_points: bool = False) -> list[tuple[float | None, float | None, float | None]]:
        """``(start, end, p)`` rows with ``None`` for infinite endpoints.

        With ``include_points`` each breakpoint also gets a ``(x, x, p)``
        row, ``p`` being ``None`` at singular points.
        """
        bp = self.breakpoints.tolist()
        edges = [None] + bp + [None]
        rows = []
        for i, c in enumerate(self.counts.tolist()):
            rows.append((edges[i], edges[i + 1], c / self.M))
            if include_points and i < len(bp):
                pc = int(self.point_counts[i])
                rows.append((bp[i], bp[i], None if pc < 0 else pc / self.M))
        return rows

    def equals(self, other: StepFunction) -> bool:
        return (
            self.M == other.M
            and np.array_equal(self.breakpoints, other.breakpoints)
            and np.array_equal(self.counts, other.counts)
            and np.array_equal(self.point_counts, other.point_counts)
        )


def merge_points(points: np.ndarray, tol: float = MERGE_TOL) -> tuple[np.ndarray, np.ndarray]:
    """Sort and merge points within ``tol`` relative distance.

    Returns the kept points and, for each input in sorted order, the index
    of the kept point it was merged into.
    """
    pts = np.sort(np.asarray(points, dtype=float))
    pts = pts[np.isfinite(pts)]
    if pts.size == 0:
        return pts, np.zeros(0, dtype=int)
    owner = np.zeros(pts.size, dtype=int)
    kept = [pts[0]]
    for i in range(1, pts.size):
        if pts[i] - kept[-1] > tol * max(abs(pts[i]), abs(kept[-1])):
            kept.append(pts[i])
        owner[i] = len(kept) - 1
    return np.asarray(kept), owner


def interval_probes(bp: np.ndarray) -> np.ndarray:
    """One interior point per open interval, including the unbounded ends."""
    if bp.size == 0:
        return np.zeros(1)
    off = max(1.0, 0.1 * (bp[-1] - bp[0]))
    mids = bp[:-1] + (bp[1:] - bp[:-1]) / 2
    return np.concatenate([[bp[0] - off], mids, [bp[-1] + off]])


def _point_counts(family, bp: np.ndarray, singular_mask: np.ndarray, side: str) -> np.ndarray:
    pc = np.full(bp.size, -1, dtype=int)
    ok = ~singular_mask
    if ok.any():
        pc[ok] = count_at(family, bp[ok], side)
    return pc


def _finish(bp, counts, pcounts, M, side) -> StepFunction:
    # a breakpoint is redundant when both neighbours and the point agree
    keep = ~((counts[:-1] == counts[1:]) & (pcounts == counts[:-1]))
    if keep.all():
        return StepFunction(bp, counts, pcounts, M, side)
    c_keep = np.concatenate([[True], keep])
    return StepFunction(bp[keep], counts[c_keep], pcounts[keep], M, side)


def build_curve(
    crossings: Sequence[np.ndarray] | np.ndarray,
    family,
    side: str | None = None,
    singular: np.ndarray | Sequence[float] = (),
) -> StepFunction:
    """Assemble the p-value step function from per-permutation crossings.

    Points closer than ``MERGE_TOL`` (relative) are merged. The p-value on
    each open interval comes from direct evaluation at its midpoint; for
    the unbounded ends, at ``max(1, 0.1 * span)`` beyond the outermost
    breakpoint. ``singular`` points (where some statistic is undefined)
    become breakpoints whose own p-value is left undefined.
    """
    side = _check_side(side or family.default_side)
    pts = [np.atleast_1d(np.asarray(c, dtype=float)) for c in crossings]
    sing = np.atleast_1d(np.asarray(singular, dtype=float))
    allp = np.concatenate(pts + [sing]) if pts else sing
    is_sing = np.concatenate([np.zeros(allp.size - sing.size, bool), np.ones(sing.size, bool)])
    order = np.argsort(allp, kind="stable")
    finite = np.isfinite(allp[order])
    bp, owner = merge_points(allp[order][finite])
    sing_mask = np.zeros(bp.size, dtype=bool)
    sing_mask[owner[is_sing[order][finite]]] = True
    counts = np.asarray(count_at(family, interval_probes(bp), side), dtype=int)
    pcounts = _point_counts(family, bp, sing_mask, side)
    return _finish(bp, counts, pcounts, family.M, side)


def counter_curve(fam: LinearFamily, tol: float = SLOPE_TOL) -> StepFunction:
    """Right-sided curve by a sweep that updates a running count.

    Sorting the crossings and walking left to right, the count rises by one
    where a steeper line passes above the identity line and falls by one
    where a flatter line drops below it. Parallel lines contribute a
    constant decided by their intercepts. Kept as a cross-check of
    :func:`build_curve`.
    """
    m, b = fam.slopes, fam.intercepts
    x = crossings_linear(fam, tol)
    crossing = np.isfinite(x)
    parallel = ~crossing
    parallel[0] = False
    left = 1 + int(np.sum(crossing & (m[0] > m))) + int(np.sum(parallel & (b[0] <= b)))
    delta = np.where(m[0] < m, 1, -1)[crossing]
    xs = x[crossing]
    order = np.argsort(xs, kind="stable")
    bp, owner = merge_points(xs[order])
    steps = np.zeros(bp.size, dtype=int)
    np.add.at(steps, owner, delta[order])
    counts = left + np.concatenate([[0], np.cumsum(steps)])
    pcounts = _point_counts(fam, bp, np.zeros(bp.size, bool), "right")
    return _finish(bp, counts, pcounts, fam.M, "right")


def pvalue_curve(family, side: str | None = None, root_tol: float = ROOT_TOL, den_tol: float = DEN_TOL) -> StepFunction:
    """Exact p-value curve for a scalar family."""
    side = _check_side(side or family.default_side)
    if isinstance(family, LinearFamily):
        if side in ("right", "left"):
            x = crossings_linear(family)
            return build_curve([x[np.isfinite(x)]], family, side)
        if side == "two_sided":
            return build_curve(crossings_abs(family), family, side)
        raise ConfigError(f"side {side!r} does not apply to a linear family")
    if isinstance(family, RationalFamily):
        if side != "wald":
            raise ConfigError("rational families only support side='wald'")
        return build_curve(
            crossings_rational(family, root_tol, den_tol),
            family,
            side,
            singular=denominator_roots(family, root_tol),
        )
    raise ConfigError(f"no exact curve for {type(family).__name__}")


# ---------------------------------------------------------------------------
# confidence sets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float
    lo_closed: bool
    hi_closed: bool

    def __contains__(self, x: float) -> bool:
        above = x > self.lo or (self.lo_closed and x == self.lo)
        below = x < self.hi or (self.hi_closed and x == self.hi)
        return above and below


@dataclass(frozen=True)
class ConfidenceSet:
    intervals: tuple[Interval, ...]
    alpha: float

    def __contains__(self, x: float) -> bool:
        return any(x in iv for iv in self.intervals)

    def __iter__(self):
        return iter(self.intervals)

    def __len__(self) -> int:
        return len(self.intervals)

    @property
    def is_empty(self) -> bool:
        return not self.intervals


def confidence_set(curve: StepFunction, alpha: float) -> ConfidenceSet:
    """``{beta : p(beta) > alpha}`` as a union of maximal intervals.

    A breakpoint belongs to the set exactly when its own p-value exceeds
    ``alpha``; singular points never do.
    """
    if not 0.0 < alpha < 1.0:
        raise ConfigError(f"alpha must lie in (0, 1), got {alpha}")
    bp = curve.breakpoints
    K = bp.size
    # segments in order: interval 0, point 0, interval 1, ..., interval K
    inc_iv = curve.counts / curve.M > alpha
    inc_pt = (curve.point_counts >= 0) & (curve.point_counts / curve.M > alpha)
    out: list[Interval] = []
    start: tuple[float, bool] | None = None
    for s in range(2 * K + 1):
        i, is_point = divmod(s, 2)
        included = inc_pt[i] if is_point else inc_iv[i]
        if included and start is None:
            start = (bp[i], True) if is_point else ((bp[i - 1], False) if i > 0 else (-np.inf, False))
        elif not included and start is not None:
            # the run ended on the previous segment
            end = (bp[i], False) if is_point else (bp[i - 1], True)
            out.append(Interval(float(start[0]), float(end[0]), start[1], end[1]))
            start = None
    if start is not None:
        out.append(Interval(float(start[0]), math.inf, start[1], False))
    return ConfidenceSet(tuple(out), alpha)
