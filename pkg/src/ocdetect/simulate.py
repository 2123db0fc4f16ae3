"""Synthetic null / mean-shift streams and effective sparsity."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .grid import floor_log2, log2

# Rows drawn per call when streams are generated lazily.  Changing it changes
# every seeded stream, so it is fixed project-wide.
CHUNK = 512


def replicate_rng(seed: int | None, *key: int) -> np.random.Generator:
    """Independent generator for replication ``key`` under master ``seed``."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=tuple(int(k) for k in key))
    return np.random.default_rng(ss)


@dataclass(frozen=True)
class ChangeSpec:
    z: int
    theta: np.ndarray
    s_nominal: int | None = None

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=np.float64).reshape(-1)
        object.__setattr__(self, "theta", theta)
        if self.z < 0:
            raise ValueError("changepoint z must be non-negative")
        if self.s_nominal is not None and np.count_nonzero(theta) > self.s_nominal:
            raise ValueError("theta has more non-zero entries than s_nominal")

    @property
    def p(self) -> int:
        return self.theta.shape[0]

    @property
    def vartheta(self) -> float:
        return float(np.linalg.norm(self.theta))

    @classmethod
    def null(cls, p: int) -> ChangeSpec:
        return cls(z=0, theta=np.zeros(p), s_nominal=0)


def sample_sparse_direction(p: int, s: int, rng: np.random.Generator) -> np.ndarray:
    """Unit vector uniform on the union of s-sparse unit spheres in R^p."""
    if not 1 <= s <= p:
        raise ValueError(f"sparsity must be in [1, {p}], got {s}")
    while True:
        support = rng.choice(p, size=s, replace=False)
        z = rng.standard_normal(s)
        norm = np.linalg.norm(z)
        if norm > 0:
            break
    u = np.zeros(p)
    u[support] = z / norm
    return u


def stream_chunks(spec: ChangeSpec, rng: np.random.Generator,
                  chunk: int = CHUNK) -> Iterator[np.ndarray]:
    """Endless sequence of (chunk, p) blocks; rows after the first z are shifted."""
    n = 0
    p = spec.p
    shift = spec.theta
    nonzero = bool(shift.any())
    while True:
        X = rng.standard_normal((chunk, p))
        if nonzero:
            start = max(spec.z - n, 0)
            if start < chunk:
                X[start:] += shift
        n += chunk
        yield X


def generate_stream(spec: ChangeSpec, n_total: int, rng: np.random.Generator) -> np.ndarray:
    """First ``n_total`` rows of :func:`stream_chunks` for the same generator."""
    if n_total < 1:
        raise ValueError("n_total must be >= 1")
    out = np.empty((n_total, spec.p))
    filled = 0
    for X in stream_chunks(spec, rng):
        take = min(len(X), n_total - filled)
        out[filled:filled + take] = X[:take]
        filled += take
        if filled == n_total:
            return out
    raise AssertionError("unreachable")


def effective_sparsity(theta, rtol: float = 1e-12) -> tuple[int, np.ndarray]:
    """Smallest power of two s with at least s coordinates of magnitude
    >= ||theta|| / sqrt(s log2(2p)).

    Returns s and the (0-based) qualifying coordinate set.  ``rtol`` absorbs
    rounding when a coordinate sits exactly on the cut-off, which keeps the
    result invariant under rescaling of theta.
    """
    theta = np.asarray(theta, dtype=np.float64).reshape(-1)
    p = theta.shape[0]
    norm2 = float(theta @ theta)
    if norm2 == 0.0:
        raise ValueError("effective sparsity is undefined for the zero vector")
    l2 = log2(2 * p)
    sq = theta * theta
    for ell in range(floor_log2(p) + 1):
        s = 2**ell
        support = np.flatnonzero(sq * (s * l2) >= norm2 * (1.0 - rtol))
        if len(support) >= s:
            return s, support
    raise AssertionError("no qualifying sparsity level; theta is not a finite vector?")


def write_stream_csv(path, X: np.ndarray, header: dict) -> None:
    """CSV with one row per time point, preceded by a ``# key=value`` line."""
    head = "# " + " ".join(f"{k}={v}" for k, v in header.items())
    np.savetxt(path, X, delimiter=",", fmt="%.17g", header=head[2:], comments="# ")


def change_spec(p: int, s: int, vartheta: float, z: int, rng: np.random.Generator) -> ChangeSpec:
    theta = vartheta * sample_sparse_direction(p, s, rng) if vartheta else np.zeros(p)
    return ChangeSpec(z=z, theta=theta, s_nominal=s)
