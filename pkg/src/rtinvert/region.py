"""Two-coefficient machinery: crossing conics, fast grid p-values,
projected p-value curves and conservative confidence regions.

Grid results are approximate by construction; exact two-dimensional
region boundaries are not computed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy import ndimage

from .errors import ConfigError
from .invert import indicator
from .stats import ConicFamily

CONIC_TOL = 1e-10
GRID_CHUNK = 2_000_000  # statistic evaluations held in memory at once


@dataclass(frozen=True)
class ConicDiff:
    """``Omega_Id - Omega_g`` and its classification by the discriminant.

    ``discriminant`` is ``-det`` of the upper-left 2x2 block: negative for
    an ellipse, zero for a parabola, positive for a hyperbola.
    """

    matrix: np.ndarray
    discriminant: float
    kind: Literal["ellipse", "parabola", "hyperbola"]
    degenerate: bool
    circle: bool
    g: int


def classify_conic(matrix: np.ndarray, tol: float = CONIC_TOL, g: int = -1) -> ConicDiff:
    m = np.asarray(matrix, dtype=float)
    m = (m + m.T) / 2
    A = m[:2, :2]
    disc = -(A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0])
    a_scale = float(np.sum(A * A))
    if abs(disc) <= tol * a_scale:
        kind = "parabola"
    elif disc < 0:
        kind = "ellipse"
    else:
        kind = "hyperbola"
    circle = kind == "ellipse" and abs(A[0, 1]) <= tol * np.sqrt(a_scale) and abs(A[0, 0] - A[1, 1]) <= tol * np.sqrt(a_scale)
    full_scale = float(np.sum(m * m)) ** 1.5
    degenerate = a_scale == 0.0 or abs(np.linalg.det(m)) <= tol * full_scale
    return ConicDiff(m, float(disc), kind, bool(degenerate), bool(circle), g)


def conic_diff(fam: ConicFamily, g: int, tol: float = CONIC_TOL) -> ConicDiff:
    """Crossing locus of the test statistic with randomization statistic ``g``.

    Classification is metadata only; p-values never depend on it.
    """
    if g == 0:
        raise ConfigError("g must differ from the identity")
    return classify_conic(fam.omegas[0] - fam.omegas[g], tol, g)


@dataclass(frozen=True)
class PValueGrid:
    """``counts[i, j] = M * p(axis1[i], axis2[j])``."""

    axis1: np.ndarray
    axis2: np.ndarray
    counts: np.ndarray
    M: int

    @property
    def p(self) -> np.ndarray:
        return self.counts / self.M

    def records(self):
        """Row-major ``(i, j, beta1, beta2, p)`` tuples."""
        for i, x in enumerate(self.axis1.tolist()):
            for j, y in enumerate(self.axis2.tolist()):
                yield i, j, x, y, int(self.counts[i, j]) / self.M


def _check_axis(a, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=float).ravel()
    if a.size == 0:
        raise ConfigError(f"{name} is empty")
    if a.size > 1 and not np.all(np.diff(a) > 0):
        raise ConfigError(f"{name} must be strictly increasing")
    return a


def fast_grid(family, axis1, axis2) -> PValueGrid:
    """p-values over a rectangular grid from stored coefficients.

    Works with any two-coefficient family exposing ``evaluate((x, y))``;
    no statistic is rebuilt from data.
    """
    a1 = _check_axis(axis1, "axis1")
    a2 = _check_axis(axis2, "axis2")
    counts = np.empty((a1.size, a2.size), dtype=int)
    rows = max(1, GRID_CHUNK // max(1, family.M * a2.size))
    for s in range(0, a1.size, rows):
        x = a1[s : s + rows, None]
        t = family.evaluate((x, a2[None, :]))
        counts[s : s + rows] = 1 + np.sum(indicator(t, "wald")[1:], axis=0)
    return PValueGrid(a1, a2, counts, family.M)


@dataclass(frozen=True)
class ProjectedCurve:
    """Sampled projected p-value: the max over the other coefficient."""

    axis: np.ndarray
    counts: np.ndarray
    M: int
    which: int
    approximate: bool = True

    @property
    def p(self) -> np.ndarray:
        return self.counts / self.M


def project_pvalues(grid: PValueGrid, axis: int = 1) -> ProjectedCurve:
    if axis == 1:
        return ProjectedCurve(grid.axis1, grid.counts.max(axis=1), grid.M, 1)
    if axis == 2:
        return ProjectedCurve(grid.axis2, grid.counts.max(axis=0), grid.M, 2)
    raise ConfigError(f"axis must be 1 or 2, got {axis}")


def cell_edges(axis: np.ndarray) -> np.ndarray:
    """Cell boundaries: midpoints between grid points, half a spacing
    beyond the ends."""
    if axis.size == 1:
        return np.array([axis[0], axis[0]])
    mid = (axis[:-1] + axis[1:]) / 2
    return np.concatenate([[axis[0] - (axis[1] - axis[0]) / 2], mid, [axis[-1] + (axis[-1] - axis[-2]) / 2]])


@dataclass(frozen=True)
class RegionComponent:
    cells: np.ndarray  # (n_cells, 2) grid indices
    bbox: tuple[float, float, float, float]  # lo1, hi1, lo2, hi2


@dataclass(frozen=True)
class Region:
    """Conservative confidence region on a grid: passing cells plus their
    rejected 4-neighbours."""

    mask: np.ndarray
    passing: np.ndarray
    components: tuple[RegionComponent, ...]
    alpha: float
    approximate: bool = True


_FOUR = ndimage.generate_binary_structure(2, 1)


def region_extract(grid: PValueGrid, alpha: float) -> Region:
    passing = grid.p > alpha
    mask = ndimage.binary_dilation(passing, structure=_FOUR) if passing.any() else passing.copy()
    labels, n = ndimage.label(mask, structure=_FOUR)
    e1, e2 = cell_edges(grid.axis1), cell_edges(grid.axis2)
    comps = []
    for lab in range(1, n + 1):
        cells = np.argwhere(labels == lab)
        i0, j0 = cells.min(axis=0)
        i1, j1 = cells.max(axis=0)
        comps.append(RegionComponent(cells, (float(e1[i0]), float(e1[i1 + 1]), float(e2[j0]), float(e2[j1 + 1]))))
    return Region(mask, passing, tuple(comps), alpha)
