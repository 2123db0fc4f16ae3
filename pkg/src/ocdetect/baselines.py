"""Competitor monitors: aggregated coordinate CUSUMs and windowed mixture scans."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .base import SequentialDetector
from .core_stats import BlockResult, StatSnapshot, as_block


class MeiState:
    """Per-coordinate CUSUMs at scales +beta/sqrt(p) and -beta/sqrt(p).

    Statistics: max over the two signs of the coordinate sum, and of the
    coordinate maximum.
    """

    names = ("sum", "max")
    n_stats = 2

    def __init__(self, p: int, beta: float):
        self.p = int(p)
        self.beta = float(beta)
        self.b = self.beta / math.sqrt(self.p)
        self.reset()

    def reset(self):
        self.n = 0
        self.R_pos = np.zeros(self.p)
        self.R_neg = np.zeros(self.p)

    def process(self, X, thresholds=None) -> BlockResult:
        X = as_block(X, self.p)
        out = np.empty((len(X), 2))
        stop = thresholds is not None
        thr = np.full(2, np.inf) if thresholds is None else np.asarray(thresholds, float)
        done = _kernels.mei_block(X, self.b, self.R_pos, self.R_neg, thr, stop, out) if len(X) else 0
        self.n += done
        return BlockResult(done, out[:done], np.full((done, 2), -1, dtype=np.int64))

    def accumulator_count(self) -> int:
        return 2 * self.p


def mei_step(state: MeiState, x) -> tuple[float, float]:
    """One observation; returns (sum statistic, max statistic)."""
    res = state.process(x)
    return float(res.stats[0, 0]), float(res.stats[0, 1])


@dataclass(frozen=True)
class MixtureParams:
    p0: float | None = None
    lam: float = 1.0
    kappa: float = 2.0
    w: int = 200

    def __post_init__(self):
        if self.p0 is not None and not 0 < self.p0 <= 1:
            raise ValueError("p0 must lie in (0, 1]")
        if not (self.lam > 0 and self.kappa > 0 and self.w >= 1):
            raise ValueError("lambda, kappa and w must be positive")

    def resolved_p0(self, p: int) -> float:
        return 1.0 / math.sqrt(p) if self.p0 is None else self.p0


PRESETS = {
    "xs": MixtureParams(lam=1.0, kappa=2.0, w=200),
    "chan": MixtureParams(lam=2.0 * math.sqrt(2.0) - 2.0, kappa=4.0, w=200),
}


class WindowState:
    """Ring buffer of the last w observations.

    Each step scans tail lengths r = 1..min(w, n), accumulating the tail sums
    newest-first, and returns the larger of the positive- and negative-part
    mixture log-likelihood scans.
    """

    names = ("mixture",)
    n_stats = 1

    def __init__(self, p: int, params: MixtureParams):
        self.p = int(p)
        self.params = params
        self.p0 = params.resolved_p0(self.p)
        self.reset()

    def reset(self):
        self.n = 0
        self.buf = np.zeros((self.params.w, self.p))
        self._meta = np.zeros(2, dtype=np.int64)

    def process(self, X, thresholds=None) -> BlockResult:
        X = as_block(X, self.p)
        out = np.empty((len(X), 1))
        stop = thresholds is not None
        thr = np.full(1, np.inf) if thresholds is None else np.asarray(thresholds, float)
        pr = self.params
        done = _kernels.mixture_block(X, self.p0, pr.lam, pr.kappa, self.buf, self._meta,
                                      thr, stop, out) if len(X) else 0
        self.n += done
        return BlockResult(done, out[:done], np.full((done, 1), -1, dtype=np.int64))

    def window(self) -> np.ndarray:
        """Retained observations, oldest first."""
        m = min(self.params.w, self.n)
        pos = int(self._meta[0])
        idx = [(pos - m + i) % self.params.w for i in range(m)]
        return self.buf[idx]

    def z_values(self) -> np.ndarray:
        """(min(w, n), p) array of normalized tail sums, row r-1 for tail length r."""
        win = self.window()[::-1]
        r = np.arange(1, len(win) + 1)[:, None]
        return np.cumsum(win, axis=0) / np.sqrt(r)

    def accumulator_count(self) -> int:
        return self.buf.size


def xs_chan_step(state: WindowState, x, params: MixtureParams | None = None) -> float:
    if params is not None and params != state.params:
        raise ValueError("state was built with different mixture parameters")
    return float(state.process(x).stats[0, 0])


def mixture_statistic_reference(window, p0: float, lam: float, kappa: float) -> float:
    """Direct evaluation on a window (oldest first); slow, for cross-checks."""
    window = np.asarray(window, dtype=np.float64)
    best = -math.inf
    m = len(window)
    for r in range(1, m + 1):
        z = window[m - r:].sum(axis=0) / math.sqrt(r)
        for part in (np.maximum(z, 0.0), np.minimum(z, 0.0)):
            val = sum(math.log(1 - p0 + lam * p0 * math.exp(v * v / kappa)) for v in part)
            best = max(best, val)
    return best


class Mei(SequentialDetector):
    """Sum and max of coordinate CUSUMs at +-beta/sqrt(p), thresholds by Monte Carlo."""

    stat_names = MeiState.names

    def __init__(self, beta=1.0, gamma=5000, n_reps=200, random_state=None, n_jobs=None):
        self.beta = beta
        self.gamma = gamma
        self.n_reps = n_reps
        self.random_state = random_state
        self.n_jobs = n_jobs

    def _setup(self, p):
        self.p_ = p

    def _new_state(self):
        return MeiState(self.p_, self.beta)

    def _calibrate(self):
        from .calibrate import calibrate_monitor

        return calibrate_monitor(self._new_state, self.p_, self.gamma, self.n_reps,
                                 self.random_state, combine=True, n_jobs=self.n_jobs)


class MixtureDetector(SequentialDetector):
    """Windowed mixture-likelihood scan; ``preset`` is "xs" or "chan"."""

    stat_names = WindowState.names

    def __init__(self, preset="xs", p0=None, window=None, gamma=5000, n_reps=200,
                 random_state=None, n_jobs=None):
        self.preset = preset
        self.p0 = p0
        self.window = window
        self.gamma = gamma
        self.n_reps = n_reps
        self.random_state = random_state
        self.n_jobs = n_jobs

    def _setup(self, p):
        base = PRESETS[self.preset]
        self.params_ = MixtureParams(p0=self.p0, lam=base.lam, kappa=base.kappa,
                                     w=self.window or base.w)
        self.p_ = p

    def _new_state(self):
        return WindowState(self.p_, self.params_)

    def _calibrate(self):
        from .calibrate import calibrate_monitor

        return calibrate_monitor(self._new_state, self.p_, self.gamma, self.n_reps,
                                 self.random_state, combine=False, n_jobs=self.n_jobs)
