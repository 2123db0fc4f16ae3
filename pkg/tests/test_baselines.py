from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from ocdetect.baselines import (PRESETS, Mei, MeiState, MixtureDetector, MixtureParams,
                                WindowState, mei_step, mixture_statistic_reference, xs_chan_step)
from ocdetect.core_stats import InputError
from oracles import mixture_scalar


def test_mei_initial_and_zero_stream():
    st_ = MeiState(5, 1.0)
    assert st_.n == 0 and not st_.R_pos.any() and not st_.R_neg.any()
    for _ in range(10):
        assert mei_step(st_, np.zeros(5)) == (0.0, 0.0)


def test_mei_drift_rate():
    p, beta = 16, 2.0
    st_ = MeiState(p, beta)
    x = np.full(p, beta / math.sqrt(p))
    sums = [mei_step(st_, x)[0] for _ in range(20)]
    np.testing.assert_allclose(np.diff(sums), beta**2 / 2, rtol=1e-12)


def _mei_reference(X, b):
    Rp = np.zeros(X.shape[1])
    Rm = np.zeros(X.shape[1])
    out = []
    for x in X:
        Rp = np.maximum(Rp + b * (x - b / 2), 0)
        Rm = np.maximum(Rm - b * (x + b / 2), 0)
        out.append((max(Rp.sum(), Rm.sum()), max(Rp.max(), Rm.max()), Rp.copy(), Rm.copy()))
    return out


@given(st.integers(1, 6).flatmap(lambda p: hnp.arrays(
    np.float64, st.tuples(st.integers(1, 50), st.just(p)), elements=st.floats(-3, 3))),
    st.floats(0.1, 4.0))
def test_mei_matches_reference_and_sign_structure(X, beta):
    p = X.shape[1]
    st_ = MeiState(p, beta)
    for x, (s, m, rp, rm) in zip(X, _mei_reference(X, beta / math.sqrt(p))):
        got = mei_step(st_, x)
        assert got == pytest.approx((s, m), abs=1e-12)
        np.testing.assert_allclose(st_.R_pos, rp, atol=1e-12)
        np.testing.assert_allclose(st_.R_neg, rm, atol=1e-12)
        assert got[0] >= 0 and got[1] >= 0
        for R in (st_.R_pos, st_.R_neg):
            assert np.all(R >= 0) and R.max() <= R.sum() + 1e-15


def test_mei_dimension_check():
    with pytest.raises(InputError):
        mei_step(MeiState(3, 1.0), np.zeros(4))


def test_presets():
    assert PRESETS["xs"] == MixtureParams(lam=1.0, kappa=2.0, w=200)
    chan = PRESETS["chan"]
    assert (chan.lam, chan.kappa, chan.w) == (2 * math.sqrt(2) - 2, 4.0, 200)
    assert chan.resolved_p0(100) == pytest.approx(0.1)
    for bad in (dict(p0=0.0), dict(p0=1.5), dict(lam=0), dict(kappa=-1), dict(w=0)):
        with pytest.raises(ValueError):
            MixtureParams(**bad)


def test_xs_zero_stream_exactly_zero():
    for p in (1, 3, 100, 37):
        st_ = WindowState(p, PRESETS["xs"])
        for _ in range(250):
            assert xs_chan_step(st_, np.zeros(p)) == 0.0


def test_chan_zero_stream_value():
    params = MixtureParams(p0=0.5, lam=PRESETS["chan"].lam, kappa=4.0, w=200)
    st_ = WindowState(4, params)
    v = xs_chan_step(st_, np.zeros(4))
    assert v == pytest.approx(4 * math.log(1 - 0.5 + 0.5 * (2 * math.sqrt(2) - 2)), abs=1e-14)
    # -0.0899 per coordinate, four coordinates
    assert v == pytest.approx(-0.360, abs=2e-3)


@pytest.mark.parametrize("c", [-3.0, -0.5, 0.0, 0.7, 4.0])
@pytest.mark.parametrize("preset", ["xs", "chan"])
def test_single_observation_closed_form(c, preset):
    pr = PRESETS[preset]
    p = 5
    p0 = 1 / math.sqrt(p)
    st_ = WindowState(p, pr)
    x = np.zeros(p)
    x[0] = c
    term = lambda z: math.log(1 - p0 + pr.lam * p0 * math.exp(z * z / pr.kappa))
    base = term(0.0)
    want = max(term(max(c, 0)) + (p - 1) * base, term(min(c, 0)) + (p - 1) * base)
    assert xs_chan_step(st_, x) == pytest.approx(want, rel=1e-12, abs=1e-14)


@settings(max_examples=25)
@given(st.integers(1, 4), st.integers(1, 12), st.integers(1, 40), st.integers(0, 10**6),
       st.sampled_from(["xs", "chan"]), st.floats(0.05, 1.0))
def test_window_scan_matches_scalar_oracle(p, w, n, seed, preset, p0):
    base = PRESETS[preset]
    params = MixtureParams(p0=p0, lam=base.lam, kappa=base.kappa, w=w)
    X = np.random.default_rng(seed).normal(0.3, 1.5, size=(n, p))
    st_ = WindowState(p, params)
    for i, x in enumerate(X):
        got = xs_chan_step(st_, x, params)
        win = X[max(0, i - w + 1): i + 1]
        want = mixture_scalar(win.tolist(), p0, params.lam, params.kappa)
        assert got == pytest.approx(want, rel=1e-9, abs=1e-9)
        assert mixture_statistic_reference(win, p0, params.lam, params.kappa) == pytest.approx(want)
        # retained window and normalized tail sums
        np.testing.assert_array_equal(st_.window(), win)
        r = np.arange(1, len(win) + 1)[:, None]
        np.testing.assert_allclose(st_.z_values(), np.cumsum(win[::-1], axis=0) / np.sqrt(r),
                                   atol=1e-9)
        assert st_.accumulator_count() == w * p


def test_large_signal_no_overflow():
    st_ = WindowState(3, PRESETS["xs"])
    v = 0.0
    for _ in range(200):
        v = xs_chan_step(st_, np.full(3, 60.0))
    assert math.isfinite(v) and v > 1e5


def test_mismatched_params():
    st_ = WindowState(2, PRESETS["xs"])
    with pytest.raises(ValueError):
        xs_chan_step(st_, np.zeros(2), PRESETS["chan"])


def test_baseline_estimators():
    X = np.zeros((1, 6))
    mei = Mei(beta=1.0, gamma=100, n_reps=20, random_state=0).fit(X)
    assert mei.thresholds_.shape == (2,) and mei.stat_names == ("sum", "max")
    mix = MixtureDetector(preset="chan", gamma=100, n_reps=20, random_state=0).fit(X)
    assert mix.thresholds_.shape == (1,) and mix.params_.kappa == 4.0
    Y = np.random.default_rng(0).standard_normal((400, 6)) + 1.5
    for est in (mei, mix):
        d = est.detect(Y)
        assert d.declared and d.n < 50
        assert (est.score_samples(Y)[d.n - 1] >= est.thresholds_).any()
    again = Mei(beta=1.0, gamma=100, n_reps=20, random_state=0).fit(X)
    assert np.array_equal(again.thresholds_, mei.thresholds_)


def test_fit_thresholds_shortcut():
    est = MixtureDetector(preset="xs").fit_thresholds(4, [3.0])
    assert est.n_features_in_ == 4 and est.thresholds_.tolist() == [3.0]
    with pytest.raises(ValueError):
        Mei().fit_thresholds(4, [1.0])
