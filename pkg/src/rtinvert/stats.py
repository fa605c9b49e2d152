"""Algebraic representations of test and randomization statistics.

Every builder computes the coefficients of each randomization statistic
once per permutation. After that, evaluating all ``M`` statistics at any
hypothesised value costs a handful of multiply-adds per permutation, with
no pass over the data.

Index 0 of every family is the identity permutation, i.e. the test
statistic itself.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .algebra import BiPoly, Poly, PolyMatrix, Rational, polymat_det_adj
from .design import RANK_TOL, DesignData, PermGroup, q_spans
from .errors import (
    ConfigError,
    DegenerateVariance,
    DenominatorZero,
    SingularAtZero,
    SingularSigma,
    SingularXX,
)

DEN_TOL = 1e-12
SINGULAR_TOL = 1e-12
INSTRUMENT_TOL = 1e-8
RESID_TOL = 1e-8


def _rows_polyval(C: np.ndarray, x) -> np.ndarray:
    """Evaluate each row of ``C`` (ascending coefficients) at ``x``.

    Returns shape ``(M,) + np.shape(x)``.
    """
    x = np.asarray(x, dtype=float)
    out = np.broadcast_to(C[:, -1].reshape((-1,) + (1,) * x.ndim), (C.shape[0],) + x.shape).copy()
    for i in range(C.shape[1] - 2, -1, -1):
        out = out * x + C[:, i].reshape((-1,) + (1,) * x.ndim)
    return out


def _pad_rows(polys: list[Poly]) -> np.ndarray:
    width = max(1, max(len(p.coeffs) for p in polys))
    C = np.zeros((len(polys), width))
    for i, p in enumerate(polys):
        C[i, : len(p.coeffs)] = p.coeffs
    return C


def _projected_instruments(Q1: np.ndarray, Z: np.ndarray, err: type) -> np.ndarray:
    """``Q1 Z``, refusing instruments that the projection (nearly) removes."""
    W = Q1 @ Z
    sw = np.linalg.svd(W, compute_uv=False)
    sz = np.linalg.svd(Z, compute_uv=False)
    if sw.min() <= INSTRUMENT_TOL * sz.max():
        raise err("projected instruments are rank deficient; the permuted nuisance span absorbs them")
    return W


def _check_residuals(E: np.ndarray, Y: np.ndarray, err: type) -> None:
    """Refuse permutations whose covariance residuals vanish."""
    bad = ~(np.linalg.norm(E, axis=1) > RESID_TOL * max(np.linalg.norm(Y), 1e-300))
    if bad.any():
        raise err(f"residuals vanish for {int(bad.sum())} permutation(s), first g={int(np.argmax(bad))}")


def _near_singular(mats: np.ndarray, tol: float) -> np.ndarray:
    """Flag PSD matrices whose determinant is negligible against the
    product of their diagonal (Hadamard's bound)."""
    diag = np.abs(np.diagonal(mats, axis1=-2, axis2=-1)).prod(axis=-1)
    det = np.linalg.det(mats)
    return ~(np.abs(det) > tol * diag)


@dataclass(frozen=True)
class LinearFamily:
    """``T_g(beta) = slopes[g] * beta + intercepts[g]``."""

    slopes: np.ndarray
    intercepts: np.ndarray
    sigma: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "slopes", np.asarray(self.slopes, dtype=float))
        object.__setattr__(self, "intercepts", np.asarray(self.intercepts, dtype=float))
        if self.slopes.shape != self.intercepts.shape or self.slopes.ndim != 1:
            raise ConfigError("slopes and intercepts must be 1-D arrays of equal length")
        if not (np.all(np.isfinite(self.slopes)) and np.all(np.isfinite(self.intercepts))):
            raise ConfigError("line coefficients must be finite")

    @property
    def M(self) -> int:
        return self.slopes.shape[0]

    default_side = "right"

    def evaluate(self, beta) -> np.ndarray:
        beta = np.asarray(beta, dtype=float)
        shape = (-1,) + (1,) * beta.ndim
        return self.slopes.reshape(shape) * beta + self.intercepts.reshape(shape)


@dataclass(frozen=True)
class RationalFamily:
    """``t_g(beta) = num[g](beta) / den[g](beta)``.

    ``sigma_coeffs`` optionally keeps the ``(a, b, c)`` arrays, each of shape
    ``(M, k, k)``, from which the quadratic covariance entries were built.
    """

    num: tuple[Poly, ...]
    den: tuple[Poly, ...]
    sigma_coeffs: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None
    den_tol: float = DEN_TOL

    def __post_init__(self):
        if len(self.num) != len(self.den):
            raise ConfigError("numerator and denominator lists differ in length")
        object.__setattr__(self, "num", tuple(self.num))
        object.__setattr__(self, "den", tuple(self.den))
        object.__setattr__(self, "_N", _pad_rows(list(self.num)))
        object.__setattr__(self, "_D", _pad_rows(list(self.den)))
        object.__setattr__(self, "_Dabs", np.abs(self._D))

    default_side = "wald"

    @property
    def M(self) -> int:
        return len(self.num)

    def rational(self, g: int) -> Rational:
        return Rational(self.num[g], self.den[g])

    def evaluate(self, beta) -> np.ndarray:
        """All statistics at ``beta``.

        Raises
        ------
        DenominatorZero
            If some ``|D_g(beta)|`` is within ``den_tol`` of its rounding scale.
        """
        beta = np.asarray(beta, dtype=float)
        D = _rows_polyval(self._D, beta)
        scale = _rows_polyval(self._Dabs, np.abs(beta))
        bad = ~(np.abs(D) > self.den_tol * scale)
        if bad.any():
            idx = np.argwhere(bad)[0]
            where = float(beta) if beta.ndim == 0 else float(beta[tuple(idx[1:])])
            raise DenominatorZero(int(idx[0]), where)
        return _rows_polyval(self._N, beta) / D


@dataclass(frozen=True)
class ConicFamily:
    """``t_g(x, y) = [x, y, 1] omegas[g] [x, y, 1]^T``."""

    omegas: np.ndarray

    def __post_init__(self):
        om = np.asarray(self.omegas, dtype=float)
        if om.ndim != 3 or om.shape[1:] != (3, 3):
            raise ConfigError(f"omegas must have shape (M, 3, 3), got {om.shape}")
        object.__setattr__(self, "omegas", (om + om.transpose(0, 2, 1)) / 2)

    default_side = "wald"

    @property
    def M(self) -> int:
        return self.omegas.shape[0]

    def evaluate(self, beta) -> np.ndarray:
        x, y = (np.asarray(b, dtype=float) for b in beta)
        x, y = np.broadcast_arrays(x, y)
        O = self.omegas.reshape((self.M, 3, 3) + (1,) * x.ndim)
        return (
            O[:, 0, 0] * x * x
            + 2.0 * O[:, 0, 1] * x * y
            + O[:, 1, 1] * y * y
            + 2.0 * O[:, 0, 2] * x
            + 2.0 * O[:, 1, 2] * y
            + O[:, 2, 2]
        )


@dataclass(frozen=True)
class BiPolyFamily:
    """``t_g(x, y) = sum_ij coeffs[g, i, j] x**i y**j``."""

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.ndim != 3 or c.shape[1] != c.shape[2]:
            raise ConfigError(f"coeffs must have shape (M, D+1, D+1), got {c.shape}")
        object.__setattr__(self, "coeffs", c)

    default_side = "wald"

    @property
    def M(self) -> int:
        return self.coeffs.shape[0]

    def poly(self, g: int) -> BiPoly:
        return BiPoly(self.coeffs[g], self.coeffs.shape[1] - 1)

    def evaluate(self, beta) -> np.ndarray:
        x, y = (np.asarray(b, dtype=float) for b in beta)
        x, y = np.broadcast_arrays(x, y)
        D = self.coeffs.shape[1] - 1
        xp = [np.ones_like(x)]
        yp = [np.ones_like(y)]
        for _ in range(D):
            xp.append(xp[-1] * x)
            yp.append(yp[-1] * y)
        out = np.zeros((self.M,) + x.shape)
        tail = (1,) * x.ndim
        for i in range(D + 1):
            for j in range(D + 1 - i):
                c = self.coeffs[:, i, j]
                if np.any(c):
                    out += c.reshape((-1,) + tail) * (xp[i] * yp[j])
        return out


def build_linear(data: DesignData, group: PermGroup, rank_tol: float = RANK_TOL) -> LinearFamily:
    """Lines ``m_g beta + b_g`` for the studentised regression statistic.

    ``sigma_g^2 = mean((Q1 X1)^2 (Q2 g Y)^2)``,
    ``m_g = -(Q1 X1)' g X1 / sigma_g`` and ``b_g = (Q1 X1)' g Y / sigma_g``.
    """
    if data.d != 1:
        raise ConfigError(f"linear statistic needs one regressor of interest, got d={data.d}")
    Q1 = q_spans(data, group, "Q1", rank_tol).Q
    Q2 = q_spans(data, group, "Q2", rank_tol).Q
    x = data.X1[:, 0]
    q1x = Q1 @ x
    gY = data.Y[group.perms]
    gX = x[group.perms]
    resid = gY @ Q2
    sigma = np.sqrt(np.mean(q1x**2 * resid**2, axis=1))
    scale = np.sqrt(np.mean(q1x**2) * np.mean(data.Y**2))
    bad = ~(sigma > 1e-14 * scale)
    if bad.any():
        raise DegenerateVariance(
            f"sigma_g vanishes for {int(bad.sum())} permutation(s), first g={int(np.argmax(bad))}"
        )
    return LinearFamily(-(gX @ q1x) / sigma, (gY @ q1x) / sigma, sigma)


def _rational_from_parts(
    W: np.ndarray, D: np.ndarray, Y: np.ndarray, x: np.ndarray, perms: np.ndarray
) -> RationalFamily:
    n, k = W.shape
    gY = Y[perms]
    gX = x[perms]
    # D applied after the permutation: rows of (D g v)
    yg = gY @ D.T
    xg = gX @ D.T
    _check_residuals(yg, Y, SingularAtZero)
    a = np.einsum("iv,iw,gi->gvw", W, W, yg * yg) / n
    b = -2.0 * np.einsum("iv,iw,gi->gvw", W, W, xg * yg) / n
    c = np.einsum("iv,iw,gi->gvw", W, W, xg * xg) / n
    bad = _near_singular(a, SINGULAR_TOL)
    if bad.any():
        raise SingularAtZero(
            f"covariance singular at beta=0 for {int(bad.sum())} permutation(s), first g={int(np.argmax(bad))}"
        )
    u = gY @ W
    v = gX @ W
    nums, dens = [], []
    for g in range(perms.shape[0]):
        det, adj = polymat_det_adj(PolyMatrix.quadratic(a[g], b[g], c[g]))
        T = [Poly([u[g, i], -v[g, i]]) for i in range(k)]
        N = Poly()
        for i in range(k):
            inner = Poly()
            for j in range(k):
                inner = inner + adj[i, j] * T[j]
            N = N + T[i] * inner
        nums.append(N)
        dens.append(det)
    return RationalFamily(tuple(nums), tuple(dens), (a, b, c))


def build_rational(data: DesignData, group: PermGroup, rank_tol: float = RANK_TOL) -> RationalFamily:
    """Heteroskedasticity-robust Wald statistic with a null-dependent
    covariance, as a ratio of polynomials in the scalar hypothesised value.

    The moment vector is ``(Q1 Z)' g (Y - X1 beta)``; the covariance uses
    residuals ``Q3 g (Y - X1 beta)``, so each covariance entry is quadratic
    in ``beta``. Numerator and denominator come from the adjugate and
    determinant of that quadratic matrix.
    """
    if data.d != 1:
        raise ConfigError(f"scalar Wald statistic needs d=1, got d={data.d}")
    if data.k < 1:
        raise ConfigError("Wald statistic needs at least one instrument")
    Q1 = q_spans(data, group, "Q1", rank_tol).Q
    Q3 = q_spans(data, group, "Q3", rank_tol).Q
    W = _projected_instruments(Q1, data.Z, SingularAtZero)
    return _rational_from_parts(W, Q3, data.Y, data.X1[:, 0], group.perms)


@dataclass(frozen=True)
class DhaultData:
    """Inputs of the discrete-covariate robust Wald test.

    ``X_tilde`` plays the role of the projected instruments and ``D`` the
    residual-making matrix applied inside the covariance.
    """

    X_tilde: np.ndarray
    D: np.ndarray
    X: np.ndarray
    Y: np.ndarray

    def __post_init__(self):
        Y = np.asarray(self.Y, dtype=float).ravel()
        n = Y.shape[0]
        Xt = np.asarray(self.X_tilde, dtype=float)
        Xt = Xt[:, None] if Xt.ndim == 1 else Xt
        X = np.asarray(self.X, dtype=float)
        X = X[:, None] if X.ndim == 1 else X
        D = np.asarray(self.D, dtype=float)
        if Xt.shape[0] != n or X.shape[0] != n or D.shape != (n, n):
            raise ConfigError("X_tilde, X need n rows and D must be n x n")
        for name, val in (("Y", Y), ("X_tilde", Xt), ("X", X), ("D", D)):
            object.__setattr__(self, name, val)

    @property
    def n(self) -> int:
        return self.Y.shape[0]


def build_dhault(wdata: DhaultData, group: PermGroup) -> RationalFamily:
    """Rational family for ``v' Xt (Xt' Sigma(v) Xt)^{-1} Xt' v`` with
    ``v = pi (y - X beta)`` and ``Sigma(v) = diag((D v)^2) / n``."""
    if wdata.X.shape[1] != 1:
        raise ConfigError("only a scalar hypothesised coefficient is supported")
    return _rational_from_parts(wdata.X_tilde, wdata.D, wdata.Y, wdata.X[:, 0], group.perms)


def build_conic(data: DesignData, group: PermGroup, rank_tol: float = RANK_TOL) -> ConicFamily:
    """Quadratic-form representation of the two-coefficient Wald statistic.

    The covariance uses ``Q2 g Y`` and so does not depend on the hypothesis;
    ``t_g(beta) = (u_g - V_g beta)' Sigma_g^{-1} (u_g - V_g beta)`` with
    ``u_g = (Q1 Z)' g Y`` and ``V_g = (Q1 Z)' g X1``.
    """
    if data.d != 2:
        raise ConfigError(f"conic family needs d=2, got d={data.d}")
    if data.k < 1:
        raise ConfigError("conic family needs at least one instrument")
    n = data.n
    W = _projected_instruments(q_spans(data, group, "Q1", rank_tol).Q, data.Z, SingularSigma)
    Q2 = q_spans(data, group, "Q2", rank_tol).Q
    gY = data.Y[group.perms]
    resid = gY @ Q2
    _check_residuals(resid, data.Y, SingularSigma)
    Sigma = np.einsum("iv,iw,gi->gvw", W, W, resid * resid) / n
    bad = _near_singular(Sigma, SINGULAR_TOL)
    if bad.any():
        raise SingularSigma(
            f"covariance singular for {int(bad.sum())} permutation(s), first g={int(np.argmax(bad))}"
        )
    u = gY @ W
    V = np.einsum("gia,iv->gva", data.X1[group.perms], W)
    Si_u = np.linalg.solve(Sigma, u[..., None])[..., 0]
    Si_V = np.linalg.solve(Sigma, V)
    om = np.empty((group.M, 3, 3))
    om[:, :2, :2] = np.einsum("gva,gvb->gab", V, Si_V)
    om[:, :2, 2] = -np.einsum("gva,gv->ga", V, Si_u)
    om[:, 2, :2] = om[:, :2, 2]
    om[:, 2, 2] = np.einsum("gv,gv->g", u, Si_u)
    return ConicFamily(om)


def build_diciccio(data: DesignData, group: PermGroup) -> BiPolyFamily:
    """Quartic bivariate polynomials for the studentised partial-correlation
    statistic ``n (b_pi - beta)' Sxx^{-1} Omega_pi(beta) Sxx^{-1} (b_pi - beta)``.

    ``b_pi`` regresses ``pi Y`` on the two columns of ``X1``;
    ``Omega_pi(beta) = mean((pi Y - X beta)^2 X_i X_i')`` has entries that
    are quadratic in ``beta``.
    """
    if data.d != 2:
        raise ConfigError(f"needs d=2, got d={data.d}")
    if data.k:
        raise ConfigError("this statistic takes no instruments")
    X, n = data.X1, data.n
    Sxx = X.T @ X / n
    if _near_singular(Sxx[None], SINGULAR_TOL)[0]:
        raise SingularXX("X'X is singular")
    Sinv = np.linalg.inv(Sxx)
    gY = data.Y[group.perms]
    bhat = np.linalg.solve(X.T @ X, X.T @ gY.T).T
    x1, x2 = X[:, 0], X[:, 1]
    # weights diag[X_v o X_w] for (v, w) in (0,0), (0,1), (1,1)
    wts = {(v, w): X[:, v] * X[:, w] for v in range(2) for w in range(v, 2)}
    quad = {
        vw: (np.sum(w * x1 * x1), 2.0 * np.sum(w * x1 * x2), np.sum(w * x2 * x2))
        for vw, w in wts.items()
    }
    lin1 = {vw: -2.0 * (gY @ (w * x1)) for vw, w in wts.items()}
    lin2 = {vw: -2.0 * (gY @ (w * x2)) for vw, w in wts.items()}
    const = {vw: (gY * gY) @ w for vw, w in wts.items()}

    out = np.zeros((group.M, 5, 5))
    for g in range(group.M):
        h0 = Sinv @ bhat[g]
        h = [
            BiPoly.from_terms({(0, 0): h0[a], (1, 0): -Sinv[a, 0], (0, 1): -Sinv[a, 1]}, 1)
            for a in range(2)
        ]
        U = BiPoly.const(0.0)
        for v in range(2):
            for w in range(2):
                key = (min(v, w), max(v, w))
                c11, c12, c22 = quad[key]
                omega = BiPoly.from_terms(
                    {
                        (0, 0): const[key][g],
                        (1, 0): lin1[key][g],
                        (0, 1): lin2[key][g],
                        (2, 0): c11,
                        (1, 1): c12,
                        (0, 2): c22,
                    },
                    2,
                ) * (1.0 / n)
                U = U + h[v] * h[w] * omega
        U = U * float(n)
        out[g, : U.max_degree + 1, : U.max_degree + 1] = U.coeffs
    return BiPolyFamily(out)
