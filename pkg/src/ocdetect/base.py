"""Estimator scaffolding shared by ``ocd`` and the baseline monitors."""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import IO, Iterable

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .core_stats import InputError, as_block

BLOCK = 256


class StreamError(RuntimeError):
    """An observation source failed; the message carries the position."""


@dataclass(frozen=True)
class Censored:
    """No declaration within the observations fed."""

    n: int
    reason: str = "max_n"

    declared = False


@dataclass(frozen=True)
class Hit:
    """First time at which one or more statistics met their thresholds."""

    n: int
    crossed: tuple[int, ...]
    stats: np.ndarray
    argmax: np.ndarray = field(repr=False)

    declared = True


def iter_blocks(source, p: int | None = None, block: int = BLOCK):
    """Yield (k, p) float blocks from an array or an iterable of rows.

    The position of the first row of each block is tracked so that source
    failures are reported with context.
    """
    if isinstance(source, np.ndarray):
        X = as_block(source, p)
        for i in range(0, len(X), block):
            yield X[i:i + block]
        return
    it = iter(source)
    try:
        head = next(it)
    except StopIteration:
        return
    except Exception as exc:  # noqa: BLE001 - re-raised with context
        raise StreamError(f"observation source failed before the first row: {exc}") from exc
    if isinstance(head, np.ndarray) and head.ndim == 2:
        # an iterable of blocks, e.g. simulate.stream_chunks
        yield as_block(head, p)
        for X in it:
            yield as_block(X, p)
        return
    it = itertools.chain([head], it)
    pos = 0
    while True:
        try:
            rows = list(itertools.islice(it, block))
        except (InputError, StreamError):
            raise
        except Exception as exc:  # noqa: BLE001 - re-raised with context
            raise StreamError(f"observation source failed after {pos} rows: {exc}") from exc
        if not rows:
            return
        try:
            X = as_block(np.asarray(rows, dtype=np.float64), p)
        except (InputError, ValueError) as exc:
            raise InputError(f"rows {pos + 1}-{pos + len(rows)}: {exc}") from exc
        pos += len(rows)
        yield X


def first_crossing(state, source, thresholds, max_n: int | None = None,
                   trace: IO[str] | None = None, names=None) -> Hit | Censored:
    """Feed ``source`` to ``state`` until a statistic meets its threshold."""
    thr = np.asarray(thresholds, dtype=np.float64)
    n = 0
    for X in iter_blocks(source, state.p):
        if max_n is not None:
            room = max_n - n
            if room <= 0:
                break
            X = X[:room]
        res = state.process(X, thr)
        if trace is not None:
            _write_trace(trace, n, res.stats, thr, names)
        n += res.n_done
        last = res.stats[res.n_done - 1]
        crossed = np.flatnonzero(last >= thr)
        if crossed.size:
            return Hit(n=n, crossed=tuple(int(c) for c in crossed), stats=last.copy(),
                       argmax=res.argmax[res.n_done - 1].copy())
    if max_n is not None and n >= max_n:
        return Censored(n=max_n, reason="max_n")
    return Censored(n=n, reason="end_of_stream")


def _write_trace(fh, n0, stats, thr, names):
    names = names or [f"s{i}" for i in range(stats.shape[1])]
    keys = {"diag": "s_diag", "off_dense": "s_off_d", "off_sparse": "s_off_s"}
    for i, row in enumerate(stats):
        rec = {"n": n0 + i + 1}
        for name, v in zip(names, row):
            rec[keys.get(name, name)] = float(v)
        rec["declared"] = bool((row >= thr).any())
        fh.write(json.dumps(rec) + "\n")


class SequentialDetector(BaseEstimator):
    """Base for online monitors with per-statistic declaration thresholds.

    Subclasses define ``stat_names``, ``_setup(p)``, ``_new_state()`` and
    ``_calibrate()``.  ``fit`` only uses the width of ``X``: statistics are
    calibrated against a standard Gaussian null, so feed standardized data
    (see :class:`ocdetect.preprocess.Standardizer`).
    """

    stat_names: tuple[str, ...] = ()

    def fit(self, X, y=None):
        X = check_array(X, ensure_min_samples=1)
        self.n_features_in_ = X.shape[1]
        self._setup(self.n_features_in_)
        self.thresholds_ = np.asarray(self._calibrate(), dtype=np.float64)
        self.reset()
        return self

    def fit_thresholds(self, p: int, thresholds):
        """Set up for dimension ``p`` with known thresholds, skipping calibration."""
        thr = np.asarray(thresholds, dtype=np.float64).reshape(-1)
        if len(thr) != len(self.stat_names):
            raise ValueError(f"expected {len(self.stat_names)} thresholds, got {len(thr)}")
        self.n_features_in_ = int(p)
        self._setup(self.n_features_in_)
        self.thresholds_ = thr
        self.reset()
        return self

    def _setup(self, p: int) -> None:
        raise NotImplementedError

    def _new_state(self):
        raise NotImplementedError

    def _calibrate(self):
        raise NotImplementedError

    def new_state(self):
        check_is_fitted(self, "thresholds_")
        return self._new_state()

    def reset(self):
        """Restart the internal stream used by :meth:`update`."""
        self.state_ = self._new_state()
        self.declaration_ = None
        return self

    def update(self, x):
        """Feed one observation to the internal stream; returns the statistics.

        Sets ``declaration_`` at the first crossing and keeps monitoring.
        """
        check_is_fitted(self, "thresholds_")
        res = self.state_.process(x)
        row = res.stats[0]
        if self.declaration_ is None and (row >= self.thresholds_).any():
            crossed = tuple(int(c) for c in np.flatnonzero(row >= self.thresholds_))
            self.declaration_ = self._to_declaration(
                Hit(self.state_.n, crossed, row.copy(), res.argmax[0].copy()))
        return row

    def _to_declaration(self, hit: Hit):
        return hit

    def detect(self, X: Iterable, max_n: int | None = None, trace=None):
        """Run a fresh monitor over X; return the declaration or a censored marker."""
        check_is_fitted(self, "thresholds_")
        out = first_crossing(self._new_state(), X, self.thresholds_, max_n=max_n,
                             trace=trace, names=self.stat_names)
        return self._to_declaration(out) if out.declared else out

    def score_samples(self, X) -> np.ndarray:
        """Statistic trajectories, one column per entry of ``stat_names``."""
        check_is_fitted(self, "thresholds_")
        X = check_array(X)
        return self._new_state().process(X).stats

    def decision_function(self, X) -> np.ndarray:
        """Largest statistic-to-threshold ratio per row; >= 1 means alarm."""
        S = self.score_samples(X)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(np.isinf(self.thresholds_), 0.0, S / self.thresholds_)
        return ratio.max(axis=1)

    def predict(self, X) -> np.ndarray:
        """0 before the declaration time, 1 from it onward."""
        X = check_array(X)
        out = np.zeros(len(X), dtype=int)
        res = self.detect(X)
        if res.declared:
            out[res.n - 1:] = 1
        return out
