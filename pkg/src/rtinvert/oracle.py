"""Reference implementation by brute force.

:class:`NaiveTester` recomputes every randomization statistic from the raw
data at each hypothesised value, the way a plain grid search would. It
shares no coefficient code with :mod:`rtinvert.stats` or
:mod:`rtinvert.invert`; only the projections are computed once per
dataset, and even those by a different route (pseudo-inverse instead of
SVD basis).
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .design import DesignData, PermGroup, contiguous_blocks, enumerate_group
from .errors import ConfigError, DegenerateVariance, SingularAtZero, SingularSigma, SingularXX
from .region import PValueGrid
from .stats import DhaultData

TEST_KINDS = ("linear_right", "linear_left", "two_sided", "wald_scalar", "wald_2d", "diciccio", "dhault")
TWO_D_KINDS = ("wald_2d", "diciccio")


def _residual_maker(columns: list[np.ndarray], n: int, rcond: float) -> np.ndarray:
    cols = [c.reshape(n, -1) for c in columns if c.size]
    if not cols:
        return np.eye(n)
    A = np.hstack(cols)
    return np.eye(n) - A @ np.linalg.pinv(A, rcond=rcond)


class NaiveTester:
    """From-scratch statistics and p-values for one dataset and group."""

    def __init__(self, data, group: PermGroup, test_kind: str, rank_tol: float = 1e-10):
        if test_kind not in TEST_KINDS:
            raise ConfigError(f"unknown test kind {test_kind!r}; choose from {TEST_KINDS}")
        self.kind = test_kind
        self.perms = group.perms
        self.M = group.M
        self.data = data
        if test_kind == "dhault":
            if not isinstance(data, DhaultData):
                raise ConfigError("dhault needs DhaultData")
            return
        n = data.n
        ones = np.ones(n)
        gX2 = [data.X2[p] for p in self.perms]
        Q1 = _residual_maker(gX2, n, rank_tol)
        if test_kind in ("linear_right", "linear_left", "two_sided"):
            Q2 = _residual_maker([ones] + [data.X1[p] for p in self.perms] + gX2, n, rank_tol)
            self.q1x = Q1 @ data.X1[:, 0]
            self.Q2 = Q2
        elif test_kind == "wald_scalar":
            self.W = Q1 @ data.Z
            self.Q3 = _residual_maker([ones, data.X1] + gX2, n, rank_tol)
        elif test_kind == "wald_2d":
            self.W = Q1 @ data.Z
            self.Q2 = _residual_maker([ones] + [data.X1[p] for p in self.perms] + gX2, n, rank_tol)

    def statistics(self, beta) -> np.ndarray:
        """All ``M`` statistics at ``beta`` (a pair for 2-D kinds)."""
        kind, P = self.kind, self.perms
        if kind == "dhault":
            return self._dhault(float(beta))
        data = self.data
        n = data.n
        if kind in ("linear_right", "linear_left", "two_sided"):
            r = data.Y - data.X1[:, 0] * float(beta)
            E = data.Y[P] @ self.Q2.T
            sig = np.sqrt(np.mean(self.q1x**2 * E**2, axis=1))
            if np.any(sig <= 0):
                raise DegenerateVariance("zero studentisation")
            return (r[P] @ self.q1x) / sig
        if kind == "wald_scalar":
            r = data.Y - data.X1[:, 0] * float(beta)
            gr = r[P]
            E = gr @ self.Q3.T
            return self._wald(gr @ self.W, E, n, SingularAtZero)
        if kind == "wald_2d":
            b = np.asarray(beta, dtype=float)
            r = data.Y - data.X1 @ b
            E = data.Y[P] @ self.Q2.T
            return self._wald(r[P] @ self.W, E, n, SingularSigma)
        if kind == "diciccio":
            return self._diciccio(np.asarray(beta, dtype=float))
        raise ConfigError(kind)

    def _wald(self, T, E, n, err):
        S = np.einsum("iv,iw,gi->gvw", self.W, self.W, E * E) / n
        try:
            sol = np.linalg.solve(S, T[..., None])[..., 0]
        except np.linalg.LinAlgError as exc:
            raise err("singular covariance") from exc
        return np.einsum("gv,gv->g", T, sol)

    def _diciccio(self, beta):
        X, Y, n = self.data.X1, self.data.Y, self.data.n
        Sxx = X.T @ X / n
        try:
            Sinv = np.linalg.inv(Sxx)
        except np.linalg.LinAlgError as exc:
            raise SingularXX("X'X singular") from exc
        gY = Y[self.perms]
        bhat = np.linalg.lstsq(X, gY.T, rcond=None)[0].T
        e = (bhat - beta) @ Sinv
        res = gY - X @ beta
        Omega = np.einsum("gi,ia,ib->gab", res * res, X, X) / n
        return n * np.einsum("ga,gab,gb->g", e, Omega, e)

    def _dhault(self, beta):
        w = self.data
        v0 = w.Y - w.X[:, 0] * beta
        n = w.n
        out = np.empty(self.M)
        for g, p in enumerate(self.perms):
            v = v0[p]
            Sigma = np.diag((w.D @ v) ** 2)
            S = w.X_tilde.T @ Sigma @ w.X_tilde / n
            s = w.X_tilde.T @ v
            out[g] = s @ np.linalg.solve(S, s)
        return out

    def count(self, beta) -> int:
        t = self.statistics(beta)
        t0, rest = t[0], t[1:]
        if self.kind == "linear_left":
            hits = t0 >= rest
        elif self.kind == "two_sided":
            hits = abs(t0) <= np.abs(rest)
        else:
            hits = t0 <= rest
        return 1 + int(np.count_nonzero(hits))

    def pvalue(self, beta) -> float:
        return self.count(beta) / self.M


def naive_pvalue(data, group: PermGroup, beta, test_kind: str) -> float:
    return NaiveTester(data, group, test_kind).pvalue(beta)


def naive_grid(data, group: PermGroup, axis1, axis2, test_kind: str, tester: NaiveTester | None = None) -> PValueGrid:
    """Grid of p-values, one full recomputation per grid point."""
    if test_kind not in TWO_D_KINDS:
        raise ConfigError(f"{test_kind!r} is not a two-coefficient test")
    tester = tester or NaiveTester(data, group, test_kind)
    a1 = np.asarray(axis1, dtype=float)
    a2 = np.asarray(axis2, dtype=float)
    counts = np.empty((a1.size, a2.size), dtype=int)
    for i, x in enumerate(a1):
        for j, y in enumerate(a2):
            counts[i, j] = tester.count((x, y))
    return PValueGrid(a1, a2, counts, group.M)


# ---------------------------------------------------------------------------
# synthetic data and size simulation
# ---------------------------------------------------------------------------


@dataclass
class DGPConfig:
    """Homoskedastic linear model ``Y = b0 + X1 b1 + X2 b2 + e``.

    ``k > 0`` adds normal instruments that drive ``X1``. With
    ``block_level_x1`` the regressors of interest are constant within
    blocks, which keeps the permuted spans of ``X1`` small.
    """

    n: int = 24
    n_blocks: int = 4
    d: int = 1
    beta1: tuple[float, ...] = (0.5,)
    beta0: float = 1.0
    beta2: tuple[float, ...] = (0.3,)
    k: int = 0
    noise_sd: float = 1.0
    block_level_x1: bool = False
    intercept_in_x2: bool = True


@dataclass
class GroupConfig:
    mode: str = "block_swap"
    cap: int = 1000
    seed: int | None = 0


def simulate_design(cfg: DGPConfig, rng: np.random.Generator) -> DesignData:
    n, d = cfg.n, cfg.d
    blocks = contiguous_blocks(n, cfg.n_blocks)
    beta1 = np.resize(np.asarray(cfg.beta1, dtype=float), d)
    Z = rng.standard_normal((n, cfg.k)) if cfg.k else np.zeros((n, 0))
    if cfg.block_level_x1:
        X1 = np.empty((n, d))
        for b in blocks:
            X1[b] = rng.standard_normal(d)
    else:
        X1 = rng.standard_normal((n, d))
        if cfg.k:
            X1 = X1 + Z @ rng.uniform(0.5, 1.5, size=(cfg.k, d))
    extra = rng.standard_normal((n, len(cfg.beta2)))
    X2 = np.hstack([np.ones((n, 1)), extra]) if cfg.intercept_in_x2 else extra
    Y = cfg.beta0 + X1 @ beta1 + extra @ np.asarray(cfg.beta2, dtype=float) + cfg.noise_sd * rng.standard_normal(n)
    return DesignData(Y, X1, X2, Z, blocks)


def simulate_size(
    dgp: DGPConfig,
    group_cfg: GroupConfig,
    alpha: float,
    reps: int,
    seed: int = 0,
    test_kind: str = "linear_right",
) -> float:
    """Rejection rate of the level-``alpha`` test at the true coefficient.

    Rep ``r`` draws its data from ``default_rng(seed + r)``, so results do
    not depend on evaluation order. A test rejects when ``p <= alpha``.
    """
    if reps < 100:
        raise ConfigError(f"reps must be >= 100, got {reps}")
    blocks = contiguous_blocks(dgp.n, dgp.n_blocks)
    group = enumerate_group(blocks, group_cfg.mode, group_cfg.cap, group_cfg.seed)
    truth = dgp.beta1[0] if test_kind not in TWO_D_KINDS else tuple(np.resize(dgp.beta1, 2))
    rejections = 0
    for r in range(reps):
        data = simulate_design(dgp, np.random.default_rng(seed + r))
        if NaiveTester(data, group, test_kind).pvalue(truth) <= alpha:
            rejections += 1
    return rejections / reps


# ---------------------------------------------------------------------------
# benchmarks
# ---------------------------------------------------------------------------


@dataclass
class BenchReport:
    method: str
    n: int
    M: int
    grid_size: int
    fast_seconds: float
    naive_seconds: float
    match: bool
    speedup: float = field(init=False)

    def __post_init__(self):
        self.speedup = self.naive_seconds / self.fast_seconds if self.fast_seconds > 0 else float("inf")

    def records(self) -> list[dict]:
        base = asdict(self)
        return [
            {"method": f"{self.method}:fast", "n": self.n, "M": self.M, "grid_size": self.grid_size,
             "seconds": self.fast_seconds, "speedup": base["speedup"], "match": self.match},
            {"method": f"{self.method}:naive", "n": self.n, "M": self.M, "grid_size": self.grid_size,
             "seconds": self.naive_seconds, "speedup": 1.0, "match": self.match},
        ]


def bench_grid(data: DesignData, group: PermGroup, axis1, axis2, test_kind: str = "wald_2d") -> BenchReport:
    """Fast grid (coefficients once) against per-point recomputation."""
    from .region import fast_grid
    from .stats import build_conic, build_diciccio

    builder = {"wald_2d": build_conic, "diciccio": build_diciccio}[test_kind]
    t0 = time.perf_counter()
    fast = fast_grid(builder(data, group), axis1, axis2)
    t1 = time.perf_counter()
    naive = naive_grid(data, group, axis1, axis2, test_kind)
    t2 = time.perf_counter()
    return BenchReport(
        f"grid:{test_kind}", data.n, group.M, fast.counts.size, t1 - t0, t2 - t1,
        bool(np.array_equal(fast.counts, naive.counts)),
    )


def bench_curve(data: DesignData, group: PermGroup, betas, test_kind: str = "linear_right") -> BenchReport:
    """Exact curve (then lookup) against per-value recomputation."""
    from .invert import pvalue_curve
    from .stats import build_linear, build_rational

    sides = {"linear_right": "right", "linear_left": "left", "two_sided": "two_sided", "wald_scalar": "wald"}
    if test_kind not in sides:
        raise ConfigError(f"{test_kind!r} has no exact curve")
    betas = np.asarray(betas, dtype=float)
    t0 = time.perf_counter()
    fam = build_rational(data, group) if test_kind == "wald_scalar" else build_linear(data, group)
    curve = pvalue_curve(fam, sides[test_kind])
    fast_counts = np.array([round(curve(b) * curve.M) for b in betas])
    t1 = time.perf_counter()
    tester = NaiveTester(data, group, test_kind)
    naive_counts = np.array([tester.count(b) for b in betas])
    t2 = time.perf_counter()
    return BenchReport(
        f"curve:{test_kind}", data.n, group.M, betas.size, t1 - t0, t2 - t1,
        bool(np.array_equal(fast_counts, naive_counts)),
    )
