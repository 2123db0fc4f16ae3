"""The ``ocd'`` variant: off-diagonal sums over a dyadically restarted tail.

Besides (t, A) every anchor keeps a shortened tail (tau, Lambda) and an
auxiliary tail (tau~, Lambda~).  Whenever the main tail length reaches a
power of two the shortened tail is replaced by the auxiliary one, which
keeps tau between t/2 and 3t/4 while the main tail keeps growing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .core_stats import StatSnapshot, _check_state, _StatState
from .grid import ScaleGrid


@dataclass(frozen=True)
class PrimeScaleState:
    t: np.ndarray
    A: np.ndarray
    tau: np.ndarray
    tau_tilde: np.ndarray
    Lambda: np.ndarray
    Lambda_tilde: np.ndarray


class PrimeState(_StatState):
    def _alloc(self):
        G, p = len(self._bs), self.p
        self.t = np.zeros((G, p), dtype=np.int64)
        self.tau = np.zeros((G, p), dtype=np.int64)
        self.tau_tilde = np.zeros((G, p), dtype=np.int64)
        self.A = np.zeros((G, p, p))
        self.Lambda = np.zeros((G, p, p))
        self.Lambda_tilde = np.zeros((G, p, p))

    def _run(self, X, thr, stop, out_stats, out_arg):
        return _kernels.ocd_prime_block(
            X, self._bs, self.grid.n_core, self.a_levels,
            self.t, self.tau, self.tau_tilde, self.A, self.Lambda, self.Lambda_tilde,
            thr, stop, out_stats, out_arg,
        )

    def scale(self, g: int) -> PrimeScaleState:
        return PrimeScaleState(
            t=self.t[g].copy(),
            A=self.A[g].T.copy(),
            tau=self.tau[g].copy(),
            tau_tilde=self.tau_tilde[g].copy(),
            Lambda=self.Lambda[g].T.copy(),
            Lambda_tilde=self.Lambda_tilde[g].T.copy(),
        )

    def tail_sums(self) -> np.ndarray:
        return self.A

    def r_values(self):
        diag = np.einsum("gjj->gj", self.A)
        b = self._bs[:, None]
        return b * diag - b * b * self.t / 2.0

    def accumulator_count(self):
        return 3 * self.t.size + 3 * self.A.size


def step_ocd_prime(state: PrimeState, x, grid: ScaleGrid, a_levels=None) -> StatSnapshot:
    """Advance the ``ocd'`` state by one observation."""
    _check_state(state, grid, a_levels, PrimeState)
    return state.step(x)


def dyadic_tail_sequences(n_max: int) -> tuple[np.ndarray, np.ndarray]:
    """Shortened and auxiliary tail lengths of a reset-free run, for t = 0..n_max.

    Direct evaluation of the recursion: at a power of two the shortened tail
    restarts from the auxiliary one, otherwise both grow by one.
    """
    a = np.zeros(n_max + 1, dtype=np.int64)
    b = np.zeros(n_max + 1, dtype=np.int64)
    for n in range(1, n_max + 1):
        if n & (n - 1) == 0:
            a[n] = b[n - 1] + 1
            b[n] = 0
        else:
            a[n] = a[n - 1] + 1
            b[n] = b[n - 1] + 1
    return a, b
