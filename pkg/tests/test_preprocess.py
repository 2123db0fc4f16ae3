from __future__ import annotations

import numpy as np
import pytest

from ocdetect.core_stats import InputError
from ocdetect.preprocess import DegenerateScaleError, Standardizer, preprocess


def _lag1(Y):
    Y = Y - Y.mean(axis=0)
    return (Y[1:] * Y[:-1]).sum(axis=0) / (Y * Y).sum(axis=0)


def test_iid_standardized():
    rng = np.random.default_rng(0)
    X = rng.normal(5.0, 3.0, size=(20_000, 4))
    std, rows = preprocess(iter(X), 10_000)
    Y = np.vstack(list(rows))
    assert Y.shape == (10_000, 4)
    assert np.all(np.abs(Y.mean(axis=0)) < 0.05)
    assert np.all((Y.std(axis=0) > 0.95) & (Y.std(axis=0) < 1.05))


def test_constant_coordinate():
    X = np.random.default_rng(0).standard_normal((50, 3))
    X[:, 1] = 2.0
    with pytest.raises(DegenerateScaleError, match=r"\[1\]"):
        Standardizer().fit(X)


def test_ar1_whitening():
    rng = np.random.default_rng(1)
    n, p, rho = 30_000, 3, 0.5
    e = rng.standard_normal((n, p))
    X = np.empty((n, p))
    X[0] = e[0]
    for t in range(1, n):
        X[t] = rho * X[t - 1] + e[t]
    std, rows = preprocess(iter(X), 10_000, ar1=True)
    assert np.all(np.abs(std.rho_ - rho) < 0.03)
    Y = np.vstack(list(rows))
    assert np.all(np.abs(_lag1(Y)) < 0.05)
    assert np.all(np.abs(Y.std(axis=0) - 1) < 0.05)
    # lazy stream agrees with the batch transform
    np.testing.assert_allclose(Y, std.transform(X[10_000:]), atol=1e-12)


def test_no_look_ahead():
    rng = np.random.default_rng(2)
    A = rng.standard_normal((200, 3))
    B = A.copy()
    B[150:] += 50.0
    sa, ra = preprocess(iter(A), 100, ar1=True)
    sb, rb = preprocess(iter(B), 100, ar1=True)
    assert sa.params() == sb.params()
    Ya, Yb = np.vstack(list(ra)), np.vstack(list(rb))
    assert np.array_equal(Ya[:50], Yb[:50])


def test_training_requirements():
    X = np.random.default_rng(0).standard_normal((50, 2))
    with pytest.raises(ValueError):
        preprocess(iter(X), 9)
    with pytest.raises(InputError, match="training prefix"):
        preprocess(iter(X[:20]), 30)
    with pytest.raises(ValueError):
        Standardizer().fit(X[:5])


def test_transform_dimension_check():
    std = Standardizer().fit(np.random.default_rng(0).standard_normal((20, 2)))
    with pytest.raises(InputError):
        std.transform(np.zeros((3, 4)))
    assert std.params()["rho"] is None
