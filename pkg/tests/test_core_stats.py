from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from ocdetect.core_stats import (DedupState, InputError, OCDState, init_state, r_bruteforce,
                                 r_bruteforce_path, step_ocd, step_ocd_dedup)
from ocdetect.grid import build_grid, sparse_level
from oracles import ReferenceOCD


def _levels(p):
    return (0.0, sparse_level(p))


def _streams(max_p=4, max_n=40):
    return st.integers(1, max_p).flatmap(lambda p: hnp.arrays(
        np.float64, st.tuples(st.integers(1, max_n), st.just(p)),
        elements=st.floats(-3, 3, allow_nan=False, width=64)))


def test_scalar_example_p1():
    grid = build_grid(p=1, beta=1.0)
    g = int(np.flatnonzero(grid.b_values == 1.0)[0])
    state = init_state(grid, 1, (0.0,))
    rs, ts = [], []
    for x in (1.0, -2.0, 1.5):
        snap = step_ocd(state, [x], grid)
        rs.append(state.r_values()[g, 0])
        ts.append(int(state.t[g, 0]))
        assert snap.s_off == (0.0,)
    assert rs == pytest.approx([0.5, 0.0, 1.0], abs=1e-15)
    assert ts == [1, 0, 1]


def test_r_bruteforce_examples():
    assert r_bruteforce([], 1.0) == (0.0, 0)
    R, t = r_bruteforce([1.0, -2.0, 1.5], 1.0)
    assert R == pytest.approx(1.0) and t == 1


def test_r_bruteforce_takes_smallest_maximiser():
    # increments b(x - b/2) = 0 for x = 0.5, b = 1: all h tie at 0
    assert r_bruteforce([0.5, 0.5, 0.5], 1.0) == (0.0, 0)
    # increments +1, -1, +1 (newest last): h = 1 and h = 3 both give 1
    R, t = r_bruteforce([1.5, -0.5, 1.5], 1.0)
    assert (R, t) == (1.0, 1)


@given(hnp.arrays(np.float64, st.integers(1, 60), elements=st.floats(-4, 4)),
       st.floats(-3, 3).filter(lambda b: abs(b) > 1e-3))
def test_bruteforce_path_matches_prefix_enumeration(xs, b):
    R, h = r_bruteforce_path(xs, b)
    for m in range(len(xs)):
        r_m, h_m = r_bruteforce(xs[: m + 1], b)
        assert R[m] == pytest.approx(r_m, abs=1e-12)
        assert h[m] == h_m


def test_all_zero_stream_resets_every_step():
    p = 6
    grid = build_grid(p=p, beta=1.0)
    for state in (OCDState(grid, p, _levels(p)), DedupState(grid, p, _levels(p))):
        for _ in range(20):
            snap = state.step(np.zeros(p))
            assert snap.s_diag == 0.0 and snap.s_off == (0.0, 0.0)
            assert not state.t.any()
        if isinstance(state, DedupState):
            assert state.n_distinct_tails == 1


def test_p1_off_statistics_vanish():
    grid = build_grid(p=1, beta=1.0)
    state = OCDState(grid, 1, _levels(1))
    rng = np.random.default_rng(1)
    S = state.process(rng.normal(0.5, 1, size=(300, 1))).stats
    assert np.all(S[:, 1:] == 0.0)
    assert S[:, 0].max() > 0


@given(_streams(), st.floats(0.2, 4.0), st.floats(-1.0, 1.0))
def test_matches_reference_implementation(X, beta, drift):
    X = X + drift
    p = X.shape[1]
    levels = _levels(p)
    grid = build_grid(p=p, beta=beta)
    ref = ReferenceOCD(p, beta, levels)
    plain, dedup = OCDState(grid, p, levels), DedupState(grid, p, levels)
    got_p = plain.process(X).stats
    got_d = dedup.process(X).stats
    want = np.array([ref.step(x) for x in X])
    np.testing.assert_allclose(got_p, want, rtol=1e-9, atol=1e-9)
    assert np.array_equal(got_p, got_d)
    np.testing.assert_array_equal(plain.t, np.array(ref.t))


@given(_streams(max_p=5, max_n=80), st.floats(0.2, 4.0), st.floats(-1.0, 1.0))
def test_state_invariants(X, beta, drift):
    X = X + drift
    p = X.shape[1]
    grid = build_grid(p=p, beta=beta)
    state = OCDState(grid, p, (0.0, 0.5, 1.0, 2.0))
    size = state.accumulator_count()
    for n, x in enumerate(X, start=1):
        snap = state.step(x)
        assert np.all(state.r_values() >= 0)
        assert np.all(state.t <= n)
        zero = state.t == 0
        assert not state.A[zero].any()
        assert snap.s_diag >= 0
        # harder thresholding removes non-negative terms (up to the rounding
        # of "column total minus own term")
        off = np.array(snap.s_off)
        assert np.all(off[:-1] >= off[1:] * (1 - 1e-12) - 1e-12)
        assert np.all(off >= 0)
        assert state.accumulator_count() == size


def _q_per_anchor(A, t, a, n_core):
    G, p, _ = A.shape
    out = np.zeros((n_core, p))
    for g in range(n_core):
        for j in range(p):
            col = A[g, j]
            keep = np.abs(col) >= a * np.sqrt(t[g, j])
            keep[j] = False
            out[g, j] = (col[keep] ** 2).sum() / max(t[g, j], 1)
    return out


@given(_streams(max_p=5, max_n=50), st.floats(0.0, 2.0), st.floats(0.0, 2.0))
def test_threshold_monotone_per_anchor(X, a1, a2):
    a1, a2 = sorted((a1, a2))
    p = X.shape[1]
    grid = build_grid(p=p, beta=1.0)
    state = OCDState(grid, p, (a1, a2))
    state.process(X + 0.7)
    q1 = _q_per_anchor(state.A, state.t, a1, grid.n_core)
    q2 = _q_per_anchor(state.A, state.t, a2, grid.n_core)
    assert np.all(q1 >= q2)
    s = state.process(np.ones((1, p))).stats[0]
    assert s[1] >= s[2] * (1 - 1e-12)


@pytest.mark.parametrize("p", [1, 2, 3, 5, 8])
def test_dedup_identical_to_plain_500_steps(p):
    rng = np.random.default_rng(100 + p)
    X = rng.standard_normal((500, p)) + rng.normal(0, 0.5, size=p)
    grid = build_grid(p=p, beta=float(rng.uniform(0.3, 3)))
    a, b = OCDState(grid, p, _levels(p)), DedupState(grid, p, _levels(p))
    for x in X:
        sa, sb = step_ocd(a, x, grid), step_ocd_dedup(b, x, grid)
        assert sa == sb
    np.testing.assert_array_equal(a.t, b.t)
    np.testing.assert_allclose(a.A, b.tail_sums(), rtol=0, atol=1e-9)


def test_dedup_spike_stream_distinct_tails():
    p = 16
    grid = build_grid(p=p, beta=1.0)
    state = DedupState(grid, p, _levels(p))
    x = np.zeros(p)
    x[3] = 0.8
    worst = 0
    for _ in range(300):
        state.step(x)
        worst = max(worst, state.n_distinct_tails)
    assert worst <= len(grid) + 1


def test_argmax_tie_break_smallest_coordinate_then_scale():
    p = 3
    grid = build_grid(p=p, beta=1.0)
    state = OCDState(grid, p, (0.0,))
    snap = state.step(np.ones(p))
    # every coordinate is identical, so coordinate 0 wins; the largest
    # positive scale (index 0) maximises b(1 - b/2) for b <= 1
    assert snap.argmax_diag == (0, 0)
    zero = OCDState(grid, p, (0.0,)).step(np.zeros(p))
    assert zero.argmax_diag == (0, 0) and zero.argmax_off == ((0, 0),)


def test_snapshot_reports_consistent_argmax():
    p = 4
    grid = build_grid(p=p, beta=1.0)
    state = OCDState(grid, p, (0.0,))
    rng = np.random.default_rng(5)
    for x in rng.normal(0.4, 1, size=(40, p)):
        snap = state.step(x)
    j, g = snap.argmax_diag
    assert state.r_values()[g, j] == pytest.approx(snap.s_diag)
    j, g = snap.argmax_off[0]
    assert _q_per_anchor(state.A, state.t, 0.0, grid.n_core)[g, j] == pytest.approx(snap.s_off[0])


def test_input_validation():
    grid = build_grid(p=3, beta=1.0)
    state = OCDState(grid, 3)
    with pytest.raises(InputError, match="dimension"):
        state.step(np.zeros(4))
    with pytest.raises(InputError, match="non-finite"):
        state.step([0.0, np.nan, 1.0])
    with pytest.raises(ValueError):
        step_ocd(state, np.zeros(3), build_grid(p=3, beta=2.0))
    with pytest.raises(TypeError):
        step_ocd(DedupState(grid, 3), np.zeros(3), grid)


def test_early_stop_consumes_through_crossing():
    p = 2
    grid = build_grid(p=p, beta=1.0)
    X = np.tile([1.0, 0.0], (50, 1))
    full = OCDState(grid, p, (0.0,)).process(X).stats
    k = int(np.argmax(full[:, 0] >= 5.0))
    state = OCDState(grid, p, (0.0,))
    res = state.process(X, thresholds=[5.0, np.inf])
    assert res.n_done == k + 1 and state.n == k + 1
    np.testing.assert_array_equal(res.stats, full[: k + 1])
