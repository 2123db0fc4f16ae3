"""Streaming diagonal / off-diagonal statistics of the ``ocd`` procedure."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _kernels
from .grid import ScaleGrid


class InputError(ValueError):
    """Raised for malformed or non-finite observations."""


@dataclass(frozen=True)
class ScaleState:
    """Read-only view of the state kept for a single scale.

    ``A[:, j]`` is the tail-sum vector anchored at coordinate j.
    """

    t: np.ndarray
    A: np.ndarray


@dataclass(frozen=True)
class StatSnapshot:
    n: int
    s_diag: float
    s_off: tuple[float, ...]
    argmax_diag: tuple[int, int]
    argmax_off: tuple[tuple[int, int], ...]

    @property
    def s_off_dense(self) -> float:
        return self.s_off[0]

    @property
    def s_off_sparse(self) -> float:
        return self.s_off[1]

    @property
    def argmax_off_dense(self) -> tuple[int, int]:
        return self.argmax_off[0]

    @property
    def argmax_off_sparse(self) -> tuple[int, int]:
        return self.argmax_off[1]

    def values(self) -> np.ndarray:
        return np.array((self.s_diag,) + self.s_off)


@dataclass
class BlockResult:
    """Output of feeding a block of observations to a state.

    ``stats[i]`` holds the statistics after row i; ``argmax[i]`` the
    maximising anchors encoded as ``j * n_scales + g`` (-1 where a method
    has no anchor notion).
    """

    n_done: int
    stats: np.ndarray
    argmax: np.ndarray


def as_block(X, p: int | None = None) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2:
        raise InputError(f"expected a (n, p) array, got shape {X.shape}")
    if p is not None and X.shape[1] != p:
        raise InputError(f"dimension mismatch: expected {p} coordinates, got {X.shape[1]}")
    if not np.isfinite(X).all():
        bad = int(np.argwhere(~np.isfinite(X))[0, 0])
        raise InputError(f"non-finite value in observation {bad}")
    return np.ascontiguousarray(X)


class _StatState:
    """Common driver for the three statistic families."""

    def __init__(self, grid: ScaleGrid, p: int, a_levels: Sequence[float] = (0.0,)):
        self.grid = grid
        self.p = int(p)
        self.a_levels = np.asarray(a_levels, dtype=np.float64).reshape(-1)
        if (self.a_levels < 0).any():
            raise ValueError("thresholding levels must be non-negative")
        self._bs = np.ascontiguousarray(grid.b_values, dtype=np.float64)
        self.n = 0
        self.reset()

    @property
    def n_stats(self) -> int:
        return 1 + len(self.a_levels)

    def reset(self) -> None:
        self.n = 0
        self._alloc()

    def _alloc(self) -> None:
        raise NotImplementedError

    def _run(self, X, thresholds, stop, out_stats, out_arg) -> int:
        raise NotImplementedError

    def process(self, X, thresholds=None) -> BlockResult:
        """Feed rows of X in order.

        With ``thresholds`` given (one per statistic), processing stops after
        the first row on which any statistic meets or exceeds its threshold.
        """
        X = as_block(X, self.p)
        n = X.shape[0]
        out_stats = np.empty((n, self.n_stats))
        out_arg = np.empty((n, self.n_stats), dtype=np.int64)
        if thresholds is None:
            thr = np.full(self.n_stats, np.inf)
            stop = False
        else:
            thr = np.asarray(thresholds, dtype=np.float64)
            if thr.shape != (self.n_stats,):
                raise ValueError(f"expected {self.n_stats} thresholds")
            stop = True
        done = self._run(X, thr, stop, out_stats, out_arg) if n else 0
        self.n += done
        return BlockResult(done, out_stats[:done], out_arg[:done])

    def step(self, x) -> StatSnapshot:
        res = self.process(x)
        return self._snapshot(res.stats[0], res.argmax[0])

    def _snapshot(self, stats, arg) -> StatSnapshot:
        G = len(self._bs)
        pairs = tuple((int(a) // G, int(a) % G) for a in arg)
        return StatSnapshot(
            n=self.n,
            s_diag=float(stats[0]),
            s_off=tuple(float(v) for v in stats[1:]),
            argmax_diag=pairs[0],
            argmax_off=pairs[1:],
        )

    def r_values(self) -> np.ndarray:
        """Current R = b A^{jj} - b^2 t / 2 for every (scale, coordinate)."""
        raise NotImplementedError

    def accumulator_count(self) -> int:
        raise NotImplementedError


class OCDState(_StatState):
    """Plain state: tail lengths ``t`` (G, p) and anchor columns ``A`` (G, p, p)."""

    def _alloc(self):
        G, p = len(self._bs), self.p
        self.t = np.zeros((G, p), dtype=np.int64)
        self.A = np.zeros((G, p, p))

    def _run(self, X, thr, stop, out_stats, out_arg):
        return _kernels.ocd_block(X, self._bs, self.grid.n_core, self.a_levels,
                                  self.t, self.A, thr, stop, out_stats, out_arg)

    def scale(self, g: int) -> ScaleState:
        return ScaleState(t=self.t[g].copy(), A=self.A[g].T.copy())

    def tail_sums(self) -> np.ndarray:
        return self.A

    def r_values(self):
        diag = np.einsum("gjj->gj", self.A)
        b = self._bs[:, None]
        return b * diag - b * b * self.t / 2.0

    def accumulator_count(self):
        return self.t.size + self.A.size


class DedupState(_StatState):
    """State that stores one tail-sum column per distinct tail length.

    Anchors sharing a tail length necessarily share the tail-sum vector, so
    the work per observation scales with p times the number of distinct
    tail lengths instead of p^2 times the number of scales.
    """

    def _alloc(self):
        G, p = len(self._bs), self.p
        K = G * p + 1
        self.t = np.zeros((G, p), dtype=np.int64)
        self._slot = np.full((G, p), -1, dtype=np.int64)
        self._cols = np.zeros((K, p))
        self._ctail = np.zeros(K, dtype=np.int64)
        self._refs = np.zeros(K, dtype=np.int64)
        self._free = np.arange(K - 1, -1, -1, dtype=np.int64)
        self._meta = np.array([K], dtype=np.int64)

    def _run(self, X, thr, stop, out_stats, out_arg):
        return _kernels.dedup_block(X, self._bs, self.grid.n_core, self.a_levels,
                                    self.t, self._slot, self._cols, self._ctail,
                                    self._refs, self._free, self._meta,
                                    thr, stop, out_stats, out_arg)

    @property
    def n_distinct_tails(self) -> int:
        """|T|: number of distinct tail lengths, counting zero."""
        return len(np.unique(self.t))

    def tail_sums(self) -> np.ndarray:
        """Expand to the (G, p, p) layout of :class:`OCDState`."""
        G, p = self.t.shape
        A = np.zeros((G, p, p))
        on = self.t > 0
        A[on] = self._cols[self._slot[on]]
        return A

    def scale(self, g: int) -> ScaleState:
        return ScaleState(t=self.t[g].copy(), A=self.tail_sums()[g].T.copy())

    def r_values(self):
        A = self.tail_sums()
        diag = np.einsum("gjj->gj", A)
        b = self._bs[:, None]
        return b * diag - b * b * self.t / 2.0

    def accumulator_count(self):
        return (self.t.size + self._slot.size + self._cols.size
                + self._ctail.size + self._refs.size + self._free.size)


def init_state(grid: ScaleGrid, p: int, a_levels=(0.0,), dedup: bool = False) -> _StatState:
    cls = DedupState if dedup else OCDState
    return cls(grid, p, a_levels)


def _check_state(state, grid, a_levels, cls):
    if not isinstance(state, cls):
        raise TypeError(f"expected {cls.__name__}, got {type(state).__name__}")
    if state.grid is not grid and not np.array_equal(state.grid.b_values, grid.b_values):
        raise ValueError("state was built for a different grid")
    if a_levels is not None and not np.array_equal(state.a_levels, np.asarray(a_levels, float)):
        raise ValueError("state was built for different thresholding levels")


def step_ocd(state: OCDState, x, grid: ScaleGrid, a_levels=None) -> StatSnapshot:
    """Advance the plain state by one observation and return the statistics."""
    _check_state(state, grid, a_levels, OCDState)
    return state.step(x)


def step_ocd_dedup(state: DedupState, x, grid: ScaleGrid, a_levels=None) -> StatSnapshot:
    """Same observable behaviour as :func:`step_ocd` on the deduplicated state."""
    _check_state(state, grid, a_levels, DedupState)
    return state.step(x)


def r_bruteforce(xs, b: float, j: int = 0) -> tuple[float, int]:
    """Maximum tail log-likelihood ratio and its smallest maximising length.

    Enumerates every tail length h in 0..n (h = 0 is the empty tail with
    sum 0); meant as a reference for the streaming recursion.
    """
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim == 2:
        xs = xs[:, j]
    if xs.size and not np.isfinite(xs).all():
        raise InputError("non-finite input")
    sums = np.concatenate(([0.0], np.cumsum(b * (xs[::-1] - b / 2.0))))
    h = int(np.argmax(sums))
    return float(sums[h]), h


def r_bruteforce_path(xs, b: float, j: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """:func:`r_bruteforce` evaluated on every prefix xs[:1], ..., xs[:n]."""
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim == 2:
        xs = xs[:, j]
    n = xs.shape[0]
    inc = b * (xs - b / 2.0)
    # row m lists the increments of prefix m+1 newest first, zero padded
    idx = np.arange(n)[:, None] - np.arange(n)[None, :]
    M = np.where(idx >= 0, inc[np.clip(idx, 0, None)], 0.0)
    sums = np.concatenate((np.zeros((n, 1)), np.cumsum(M, axis=1)), axis=1)
    valid = np.concatenate((np.ones((n, 1), bool), idx >= 0), axis=1)
    sums = np.where(valid, sums, -np.inf)
    h = np.argmax(sums, axis=1)
    return sums[np.arange(n), h], h
