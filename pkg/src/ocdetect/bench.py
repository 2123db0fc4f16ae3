"""Experiment harness: null run lengths, response delays, complexity probes.

Every replication draws from its own generator keyed by (seed, stage, r), so
all outputs are reproducible given (seed, reps) and independent of the
worker schedule.
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import asdict, dataclass, field
from functools import partial
from pathlib import Path
from typing import Literal, Sequence

import numpy as np

from .base import first_crossing
from .calibrate import dumps
from .detector import OCD, ThresholdSet, make_state
from .grid import DetectorConfig, build_grid
from .simulate import CHUNK, ChangeSpec, change_spec, replicate_rng, stream_chunks

STAGE_PATIENCE = 10
STAGE_DELAY = 11
STAGE_TRAJECTORY = 12
STAGE_COMPLEXITY = 13


def as_detector(detector, thresholds: ThresholdSet | None = None):
    """Accept a fitted estimator, or a DetectorConfig plus a ThresholdSet."""
    if isinstance(detector, DetectorConfig):
        if thresholds is None:
            raise ValueError("a DetectorConfig needs an explicit ThresholdSet")
        return OCD.from_config(detector, thresholds)
    if not hasattr(detector, "thresholds_"):
        raise ValueError("detector must be fitted (call fit first)")
    return detector


def _map(job, reps: int, n_jobs: int | None):
    if n_jobs in (None, 1):
        return [job(r) for r in range(reps)]
    from joblib import Parallel, delayed

    return Parallel(n_jobs=n_jobs)(delayed(job)(r) for r in range(reps))


def stopping_times(state, source, thresholds, cap: int) -> np.ndarray:
    """First time each statistic meets its own threshold (0 if not by ``cap``).

    Monitoring continues past the first declaration until every statistic
    has crossed or ``cap`` observations were seen.
    """
    thr = np.asarray(thresholds, dtype=np.float64).copy()
    times = np.zeros(len(thr), dtype=np.int64)
    pending = np.isfinite(thr)
    thr[~pending] = np.inf
    n = 0
    for X in source:
        X = X[: cap - n]
        i = 0
        while i < len(X) and pending.any():
            res = state.process(X[i:], thr)
            i += res.n_done
            n += res.n_done
            hit = pending & (res.stats[res.n_done - 1] >= thr)
            if hit.any():
                times[hit] = n
                pending &= ~hit
                thr[hit] = np.inf
        if not pending.any() or n >= cap:
            break
    return times


# ---------------------------------------------------------------- patience


@dataclass
class PatienceResult:
    truncated_mean: float | None
    declared_fraction: float
    run_lengths: np.ndarray
    censored: np.ndarray
    cap: int

    def survival(self, n: float) -> float:
        """Empirical P(N > n); censored runs count as surviving."""
        return float(np.mean(self.censored | (self.run_lengths > n)))

    def summary(self) -> dict:
        return {"truncated_mean": self.truncated_mean,
                "declared_fraction": self.declared_fraction,
                "reps": int(len(self.run_lengths)), "cap": self.cap}


def _null_run(detector, cap: int, seed, r: int) -> int:
    rng = replicate_rng(seed, STAGE_PATIENCE, r)
    out = first_crossing(detector.new_state(), stream_chunks(ChangeSpec.null(detector.n_features_in_), rng),
                         detector.thresholds_, max_n=cap)
    return out.n if out.declared else 0


def estimate_patience(detector, reps: int = 500, cap: int = 20000, seed=0,
                      thresholds: ThresholdSet | None = None,
                      n_jobs: int | None = None) -> PatienceResult:
    """Run ``reps`` null streams to declaration or ``cap``.

    The truncated mean averages only the runs that declared before ``cap``
    and is ``None`` when none did.
    """
    det = as_detector(detector, thresholds)
    n = np.asarray(_map(partial(_null_run, det, int(cap), seed), reps, n_jobs), dtype=np.int64)
    censored = n == 0
    lengths = np.where(censored, cap, n)
    declared = lengths[~censored]
    mean = float(declared.mean()) if declared.size else None
    return PatienceResult(mean, float(declared.size / reps), lengths, censored, int(cap))


def null_stopping_times(detector, reps: int, cap: int, seed=0,
                        thresholds: ThresholdSet | None = None,
                        n_jobs: int | None = None) -> np.ndarray:
    """(reps, n_stats) per-statistic null run lengths; 0 marks censoring."""
    det = as_detector(detector, thresholds)

    def job(r):
        rng = replicate_rng(seed, STAGE_PATIENCE, r)
        src = stream_chunks(ChangeSpec.null(det.n_features_in_), rng)
        return stopping_times(det.new_state(), src, det.thresholds_, cap)

    return np.vstack(_map(job, reps, n_jobs))


# ------------------------------------------------------------------- delay


@dataclass
class DelayResult:
    stat_names: tuple[str, ...]
    combined_delay: float | None
    trigger_share: dict
    per_statistic_delay: dict | None
    false_alarms: int
    censored: int
    reps: int
    delays: np.ndarray = field(repr=False)

    def summary(self) -> dict:
        d = asdict(self)
        d.pop("delays")
        d["stat_names"] = list(self.stat_names)
        return d


def _delay_run(detector, p, s, vartheta, z, mode, cap, seed, r):
    rng = replicate_rng(seed, STAGE_DELAY, r)
    spec = change_spec(p, s, vartheta, z, rng)
    src = stream_chunks(spec, rng)
    k = len(detector.thresholds_)
    if mode == "all_three":
        times = stopping_times(detector.new_state(), src, detector.thresholds_, cap)
        hit = times > 0
        if not hit.any():
            return 0, np.zeros(k, bool), times
        n = int(times[hit].min())
        return n, hit & (times == n), times
    out = first_crossing(detector.new_state(), src, detector.thresholds_, max_n=cap)
    if not out.declared:
        return 0, np.zeros(k, bool), None
    first = np.zeros(k, bool)
    first[list(out.crossed)] = True
    return out.n, first, None


def estimate_delay(detector, p: int, s: int, vartheta: float, z: int = 0, reps: int = 200,
                   mode: Literal["first_trigger", "all_three"] = "first_trigger",
                   seed=0, cap: int | None = None, thresholds: ThresholdSet | None = None,
                   n_jobs: int | None = None) -> DelayResult:
    """Response delays after a change of norm ``vartheta`` on ``s`` random coordinates.

    Delay is N - z.  Runs declaring at or before z are false alarms: they are
    discarded and counted.  Trigger shares are percentages of the remaining
    runs on which each statistic crossed first or equal first.
    """
    if z < 0:
        raise ValueError("z must be non-negative")
    if mode not in ("first_trigger", "all_three"):
        raise ValueError(f"unknown mode {mode!r}")
    det = as_detector(detector, thresholds)
    if det.n_features_in_ != p:
        raise ValueError(f"detector fitted for p={det.n_features_in_}, not {p}")
    cap = int(cap) if cap is not None else z + 100_000
    rows = _map(partial(_delay_run, det, p, s, vartheta, int(z), mode, cap, seed), reps, n_jobs)
    names = tuple(det.stat_names)
    n = np.array([r[0] for r in rows])
    first = np.array([r[1] for r in rows]).reshape(reps, len(names))
    censored = n == 0
    valid = (~censored) & (n > z)
    fa = int(((~censored) & (n <= z)).sum())
    delays = (n - z)[valid]
    share = {nm: (100.0 * float(first[valid, k].mean()) if valid.any() else None)
             for k, nm in enumerate(names)}
    per_stat = None
    if mode == "all_three":
        times = np.vstack([r[2] for r in rows])[valid]
        per_stat = {}
        for k, nm in enumerate(names):
            ok = times[:, k] > z
            per_stat[nm] = float((times[ok, k] - z).mean()) if ok.any() else None
    return DelayResult(names, float(delays.mean()) if delays.size else None, share,
                       per_stat, fa, int(censored.sum()), int(reps), delays)


# ------------------------------------------------------------- trajectories


def trajectories(detector, spec: ChangeSpec, n_steps: int, seed=0, reps: int = 1) -> list[dict]:
    """Long-format statistic paths: one record per (rep, n, statistic)."""
    det = as_detector(detector)
    out = []
    for r in range(reps):
        rng = replicate_rng(seed, STAGE_TRAJECTORY, r)
        state = det.new_state()
        n0 = 0
        for X in stream_chunks(spec, rng):
            X = X[: n_steps - n0]
            S = state.process(X).stats
            for i, row in enumerate(S):
                for name, v, t in zip(det.stat_names, row, det.thresholds_):
                    out.append({"rep": r, "n": n0 + i + 1, "statistic": name,
                                "value": float(v), "threshold": float(t)})
            n0 += len(X)
            if n0 >= n_steps:
                break
    return out


# -------------------------------------------------------------- complexity


@dataclass
class ComplexityReport:
    n_points: int
    window: int
    early_median_s: float
    late_median_s: float
    accumulators_start: int
    accumulators_end: int

    @property
    def ratio(self) -> float:
        return self.late_median_s / self.early_median_s


def _timed_steps(state, X) -> np.ndarray:
    out = np.empty(len(X))
    clock = time.perf_counter
    for i in range(len(X)):
        x = X[i:i + 1]
        t0 = clock()
        state.process(x)
        out[i] = clock() - t0
    return out


def complexity_probe(config: DetectorConfig, n_points: int = 100_000, window: int = 1000,
                     seed=0, warmup: int | None = None) -> ComplexityReport:
    """Median per-step wall time near the start and the end of a null run.

    The early window covers steps ``warmup + 1 .. warmup + window`` (by
    default the window ending at step 1000 when n_points allows) and the late
    window the last ``window`` steps.  The accumulator count is recorded at
    both ends.
    """
    if n_points < 1000:
        raise ValueError("n_points must be >= 1000")
    window = min(window, n_points // 2)
    warmup = max(0, min(1000, n_points // 2) - window) if warmup is None else warmup
    state = make_state(config, build_grid(config))
    rng = replicate_rng(seed, STAGE_COMPLEXITY, 0)
    acc0 = state.accumulator_count()
    p = config.p
    state.process(np.zeros((0, p)))
    if warmup:
        state.process(rng.standard_normal((warmup, p)))
    early = _timed_steps(state, rng.standard_normal((window, p)))
    left = n_points - warmup - 2 * window
    while left > 0:
        k = min(CHUNK, left)
        state.process(rng.standard_normal((k, p)))
        left -= k
    late = _timed_steps(state, rng.standard_normal((window, p)))
    return ComplexityReport(n_points, window, float(np.median(early)), float(np.median(late)),
                            acc0, state.accumulator_count())


# ------------------------------------------------------------------ output


def write_table(path, rows: Sequence[dict], metadata: dict | None = None) -> None:
    """CSV table plus a JSON sidecar (``<path>.json``) with run metadata."""
    path = Path(path)
    rows = list(rows)
    cols = list(dict.fromkeys(k for row in rows for k in row))
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols)
        w.writeheader()
        for row in rows:
            w.writerow({k: _fmt(row.get(k)) for k in cols})
    if metadata is not None:
        Path(str(path) + ".json").write_text(dumps(metadata) + "\n")


def _fmt(v):
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return "" if v is None else v


def experiment_metadata(seed, reps, thresholds, **extra) -> dict:
    thr = thresholds.tolist() if isinstance(thresholds, np.ndarray) else thresholds
    meta = {"seed": seed, "reps": reps, "thresholds": thr}
    meta.update(extra)
    return json.loads(dumps(meta))
