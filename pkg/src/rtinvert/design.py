"""Regression data, annihilator matrices and block permutation groups.

A permutation is stored as an index array ``p`` with ``(g @ v) == v[p]``,
so the whole group is an ``(M, n)`` integer array and ``Y[perms]`` gives
every permuted outcome vector at once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import permutations, product
from typing import Literal, Sequence

import numpy as np

from .errors import ConfigError, UnequalBlocks

PermMode = Literal["block_swap", "within_block", "full"]
PERM_MODES = ("block_swap", "within_block", "full")
RANK_TOL = 1e-10


def _as_matrix(a, n: int, name: str) -> np.ndarray:
    if a is None:
        return np.zeros((n, 0))
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2 or a.shape[0] != n:
        raise ConfigError(f"{name} must have {n} rows, got shape {a.shape}")
    return a


def contiguous_blocks(n: int, n_blocks: int) -> list[np.ndarray]:
    """Split ``range(n)`` into ``n_blocks`` contiguous, nearly equal blocks."""
    if not 1 <= n_blocks <= n:
        raise ConfigError(f"need 1 <= blocks <= n, got blocks={n_blocks}, n={n}")
    return [np.asarray(b, dtype=int) for b in np.array_split(np.arange(n), n_blocks)]


@dataclass(frozen=True)
class DesignData:
    """Outcome ``Y``, regressors of interest ``X1``, nuisance ``X2``,
    instruments ``Z`` and a partition of the rows into blocks."""

    Y: np.ndarray
    X1: np.ndarray
    X2: np.ndarray = None
    Z: np.ndarray = None
    blocks: Sequence[np.ndarray] = None

    def __post_init__(self):
        Y = np.asarray(self.Y, dtype=float).ravel()
        n = Y.shape[0]
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "X1", _as_matrix(self.X1, n, "X1"))
        object.__setattr__(self, "X2", _as_matrix(self.X2, n, "X2"))
        object.__setattr__(self, "Z", _as_matrix(self.Z, n, "Z"))
        blocks = self.blocks
        if blocks is None:
            blocks = [np.arange(n)]
        blocks = [np.asarray(b, dtype=int).ravel() for b in blocks]
        seen = np.sort(np.concatenate(blocks)) if blocks else np.zeros(0, int)
        if not np.array_equal(seen, np.arange(n)):
            raise ConfigError("blocks must partition the row indices exactly")
        object.__setattr__(self, "blocks", tuple(blocks))

    @property
    def n(self) -> int:
        return self.Y.shape[0]

    @property
    def d(self) -> int:
        return self.X1.shape[1]

    @property
    def k(self) -> int:
        return self.Z.shape[1]


@dataclass(frozen=True)
class PermGroup:
    perms: np.ndarray
    mode: str
    seed: int | None = None
    exhaustive: bool = True

    @property
    def M(self) -> int:
        return self.perms.shape[0]

    @property
    def n(self) -> int:
        return self.perms.shape[1]

    def __len__(self) -> int:
        return self.M


@dataclass(frozen=True)
class Projector:
    """Symmetric idempotent ``Q`` annihilating a column span."""

    Q: np.ndarray
    rank: int = field(default=0)

    def __matmul__(self, other):
        return self.Q @ other


def group_size(blocks: Sequence[np.ndarray], mode: str) -> int:
    sizes = [len(b) for b in blocks]
    if mode == "block_swap":
        return math.factorial(len(blocks))
    if mode == "within_block":
        return math.prod(math.factorial(s) for s in sizes)
    if mode == "full":
        return math.factorial(sum(sizes))
    raise ConfigError(f"unknown permutation mode {mode!r}; choose from {PERM_MODES}")


def _block_swap_perm(blocks, order) -> np.ndarray:
    n = sum(len(b) for b in blocks)
    p = np.empty(n, dtype=int)
    for dest, src in enumerate(order):
        p[blocks[dest]] = blocks[src]
    return p


def _within_perm(blocks, inner) -> np.ndarray:
    n = sum(len(b) for b in blocks)
    p = np.empty(n, dtype=int)
    for b, order in zip(blocks, inner):
        p[b] = b[list(order)]
    return p


def enumerate_group(
    blocks: Sequence[np.ndarray],
    mode: PermMode = "block_swap",
    cap: int = 1000,
    seed: int | None = None,
) -> PermGroup:
    """Build the permutation group, exhaustively or by sampling.

    When the full group has at most ``cap`` elements it is enumerated with
    the identity first. Otherwise the identity is followed by ``cap - 1``
    distinct non-identity draws from ``np.random.default_rng(seed)``.

    Raises
    ------
    UnequalBlocks
        If ``mode == "block_swap"`` and the blocks differ in size.
    """
    if cap < 2:
        raise ConfigError(f"cap must be >= 2, got {cap}")
    blocks = [np.asarray(b, dtype=int) for b in blocks]
    if mode == "block_swap" and len({len(b) for b in blocks}) > 1:
        raise UnequalBlocks(f"block_swap needs equal block sizes, got {[len(b) for b in blocks]}")
    n = sum(len(b) for b in blocks)
    size = group_size(blocks, mode)

    if size <= cap:
        if mode == "block_swap":
            perms = [_block_swap_perm(blocks, o) for o in permutations(range(len(blocks)))]
        elif mode == "within_block":
            inner = [permutations(range(len(b))) for b in blocks]
            perms = [_within_perm(blocks, combo) for combo in product(*inner)]
        else:
            perms = [np.asarray(o, dtype=int) for o in permutations(range(n))]
        return PermGroup(np.vstack(perms), mode, seed, exhaustive=True)

    rng = np.random.default_rng(seed)
    identity = np.arange(n)
    perms = [identity]
    seen = {identity.tobytes()}
    while len(perms) < cap:
        if mode == "block_swap":
            p = _block_swap_perm(blocks, rng.permutation(len(blocks)))
        elif mode == "within_block":
            p = _within_perm(blocks, [rng.permutation(len(b)) for b in blocks])
        else:
            p = rng.permutation(n)
        key = p.tobytes()
        if key in seen:
            continue
        seen.add(key)
        perms.append(p)
    return PermGroup(np.vstack(perms), mode, seed, exhaustive=False)


def build_annihilator(span: np.ndarray, rank_tol: float = RANK_TOL, n: int | None = None) -> Projector:
    """``I - U U^T`` with ``U`` an orthonormal basis of the column span.

    Singular directions below ``rank_tol`` times the largest singular value
    are dropped. An empty span gives the identity.
    """
    span = np.asarray(span, dtype=float)
    if span.ndim == 1:
        span = span[:, None]
    n = span.shape[0] if n is None else n
    if n < 1:
        raise ConfigError("annihilator needs n >= 1")
    if span.size == 0:
        return Projector(np.eye(n), 0)
    U, s, _ = np.linalg.svd(span, full_matrices=False)
    if s[0] == 0.0:
        return Projector(np.eye(n), 0)
    r = int(np.sum(s > rank_tol * s[0]))
    U = U[:, :r]
    Q = np.eye(n) - U @ U.T
    return Projector((Q + Q.T) / 2, r)


def permuted_columns(X: np.ndarray, group: PermGroup) -> np.ndarray:
    """Stack ``g X`` for every ``g`` side by side, shape ``(n, M * p)``."""
    if X.shape[1] == 0:
        return np.zeros((X.shape[0], 0))
    # X[perms] has shape (M, n, p)
    return np.concatenate(list(X[group.perms]), axis=1)


def q_spans(
    data: DesignData,
    group: PermGroup,
    which: Literal["Q1", "Q2", "Q3"],
    rank_tol: float = RANK_TOL,
) -> Projector:
    """Annihilators used by the statistics.

    ``Q1`` removes ``{g X2}``; ``Q2`` removes ``1``, ``{g X1}`` and
    ``{g X2}``; ``Q3`` removes ``1``, the unpermuted ``X1`` and ``{g X2}``.
    """
    if group.n != data.n:
        raise ConfigError(f"group acts on {group.n} indices but data has n={data.n}")
    ones = np.ones((data.n, 1))
    gX2 = permuted_columns(data.X2, group)
    if which == "Q1":
        span = gX2
    elif which == "Q2":
        span = np.hstack([ones, permuted_columns(data.X1, group), gX2])
    elif which == "Q3":
        span = np.hstack([ones, data.X1, gX2])
    else:
        raise ConfigError(f"unknown projector {which!r}")
    return build_annihilator(span, rank_tol, n=data.n)
