"""Per-coordinate standardization (optionally AR(1) whitening) from a training prefix."""

from __future__ import annotations

import itertools
from typing import Iterable, Iterator

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .core_stats import InputError

MIN_TRAINING = 10


class DegenerateScaleError(InputError):
    pass


class Standardizer(TransformerMixin, BaseEstimator):
    """Centre and scale each coordinate with training estimates.

    With ``ar1=True`` the lag-1 sample autocorrelation rho of the
    standardized training data is also estimated per coordinate, and
    :meth:`transform` returns ``(y_n - rho * y_{n-1}) / sqrt(1 - rho**2)``,
    which has unit variance under the fitted AR(1) model.  ``transform``
    treats its input as the continuation of the training data: the first
    residual uses the last training observation as its predecessor.
    """

    def __init__(self, ar1: bool = False):
        self.ar1 = ar1

    def fit(self, X, y=None):
        X = check_array(X, ensure_min_samples=MIN_TRAINING)
        self.n_features_in_ = X.shape[1]
        self.mean_ = X.mean(axis=0)
        self.scale_ = X.std(axis=0, ddof=1)
        const = np.flatnonzero(~(self.scale_ > 0))
        if const.size:
            raise DegenerateScaleError(
                f"training data has zero variance in coordinate(s) {const.tolist()}")
        Y = (X - self.mean_) / self.scale_
        if self.ar1:
            num = (Y[1:] * Y[:-1]).sum(axis=0)
            den = (Y * Y).sum(axis=0)
            self.rho_ = num / den
            bad = np.flatnonzero(np.abs(self.rho_) >= 1)
            if bad.size:
                raise DegenerateScaleError(f"|rho| >= 1 in coordinate(s) {bad.tolist()}")
            self.last_ = Y[-1].copy()
        else:
            self.rho_ = np.zeros(X.shape[1])
        return self

    def transform(self, X):
        check_is_fitted(self, "mean_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise InputError(f"expected {self.n_features_in_} coordinates, got {X.shape[1]}")
        Y = (X - self.mean_) / self.scale_
        if not self.ar1:
            return Y
        prev = np.vstack([self.last_[None, :], Y[:-1]])
        return (Y - self.rho_ * prev) / np.sqrt(1.0 - self.rho_**2)

    def stream(self, rows: Iterable) -> Iterator[np.ndarray]:
        """Transform an iterable of rows lazily, carrying the AR(1) predecessor."""
        check_is_fitted(self, "mean_")
        prev = self.last_.copy() if self.ar1 else None
        norm = np.sqrt(1.0 - self.rho_**2)
        for x in rows:
            y = (np.asarray(x, dtype=np.float64) - self.mean_) / self.scale_
            if self.ar1:
                out = (y - self.rho_ * prev) / norm
                prev = y
                yield out
            else:
                yield y

    def params(self) -> dict:
        return {"mean": self.mean_.tolist(), "sd": self.scale_.tolist(),
                "rho": self.rho_.tolist() if self.ar1 else None}


def preprocess(stream: Iterable, training_n: int, ar1: bool = False
               ) -> tuple[Standardizer, Iterator[np.ndarray]]:
    """Fit on the first ``training_n`` rows; return the fitted standardizer and
    the transformed remainder (the training rows are consumed, not emitted)."""
    if training_n < MIN_TRAINING:
        raise ValueError(f"training_n must be >= {MIN_TRAINING}")
    it = iter(stream)
    train = list(itertools.islice(it, training_n))
    if len(train) < training_n:
        raise InputError(f"stream ended after {len(train)} rows, inside the training prefix")
    std = Standardizer(ar1=ar1).fit(np.vstack(train))
    return std, std.stream(it)
