"""Monte Carlo calibration of declaration thresholds.

Each statistic first gets an individual threshold: the (1/e)-quantile of its
maximum over gamma null observations.  A second, independent set of null
runs then finds the common factor by which all individual thresholds are
rescaled so that the combined rule has the nominal patience.
"""

from __future__ import annotations

import json
import math
from functools import partial
from pathlib import Path

import numpy as np
from scipy import stats

from .detector import STAT_NAMES, ThresholdSet, make_state
from .grid import DetectorConfig, ScaleGrid
from .simulate import CHUNK, replicate_rng

MIN_REPS = 20
STAGE_INDIVIDUAL = 0
STAGE_COMBINED = 1


class CalibrationError(RuntimeError):
    pass


def quantile_index(B: int) -> int:
    """1-based order statistic used as the (1/e)-quantile of B values."""
    return int(math.floor(B / math.e))


def one_over_e_quantile(values) -> float:
    v = np.sort(np.asarray(values, dtype=np.float64))
    if len(v) < MIN_REPS:
        raise CalibrationError(f"need at least {MIN_REPS} replications, got {len(v)}")
    return float(v[quantile_index(len(v)) - 1])


def _rep_maxima(new_state, p: int, n_steps: int, seed, stage: int, r: int) -> np.ndarray:
    rng = replicate_rng(seed, stage, r)
    state = new_state()
    best = None
    left = n_steps
    while left > 0:
        k = min(CHUNK, left)
        res = state.process(rng.standard_normal((k, p)))
        m = res.stats.max(axis=0)
        best = m if best is None else np.maximum(best, m)
        left -= k
    if not np.isfinite(best).all():
        raise CalibrationError(f"non-finite statistic in replication {r}")
    return best


def null_maxima(new_state, p: int, n_steps: int, B_reps: int, seed, stage: int,
                n_jobs: int | None = None) -> np.ndarray:
    """(B_reps, n_stats) array: per-replication maxima over n_steps null rows.

    Replication r draws from its own generator keyed by (seed, stage, r), so
    the result does not depend on scheduling.
    """
    if B_reps < MIN_REPS:
        raise CalibrationError(f"B_reps must be >= {MIN_REPS}, got {B_reps}")
    if seed is None:
        seed = int(np.random.SeedSequence().entropy % 2**63)
    job = partial(_rep_maxima, new_state, p, int(n_steps), seed, stage)
    if n_jobs in (None, 1):
        rows = [job(r) for r in range(B_reps)]
    else:
        from joblib import Parallel, delayed

        rows = Parallel(n_jobs=n_jobs)(delayed(job)(r) for r in range(B_reps))
    return np.vstack(rows)


def individual_thresholds(maxima: np.ndarray) -> np.ndarray:
    return np.array([one_over_e_quantile(maxima[:, k]) for k in range(maxima.shape[1])])


def combined_factor(maxima: np.ndarray, individual) -> float:
    """(1/e)-quantile of the per-replication maximum of normalized statistics."""
    ind = np.asarray(individual, dtype=np.float64).copy()
    # statistics that vanish identically (p = 1 off-diagonals) get 1 so
    # the normalization is defined; they then never trigger
    ind[ind == 0] = 1.0
    W = (maxima / ind).max(axis=1)
    return one_over_e_quantile(W)


def calibrate_monitor(new_state, p: int, gamma: float, B_reps: int = 200, seed=None,
                      combine: bool = True, n_jobs: int | None = None) -> np.ndarray:
    """Thresholds for any monitor built by ``new_state``; one per statistic."""
    if seed is None:
        seed = int(np.random.SeedSequence().entropy % 2**63)
    n_steps = int(gamma)
    ind = individual_thresholds(null_maxima(new_state, p, n_steps, B_reps, seed,
                                            STAGE_INDIVIDUAL, n_jobs))
    ind[ind == 0] = 1.0
    if not combine or len(ind) == 1:
        return ind
    fresh = null_maxima(new_state, p, n_steps, B_reps, seed, STAGE_COMBINED, n_jobs)
    return ind * combined_factor(fresh, ind)


def _factory(config: DetectorConfig, grid: ScaleGrid):
    return partial(make_state, config, grid)


def calibrate_individual(config: DetectorConfig, grid: ScaleGrid, statistic: str,
                         B_reps: int = 200, seed=None, n_jobs: int | None = None) -> float:
    """Individual (1/e)-quantile threshold for one of diag / off_dense / off_sparse."""
    k = STAT_NAMES.index(statistic)
    maxima = null_maxima(_factory(config, grid), config.p, int(config.gamma), B_reps,
                         seed, STAGE_INDIVIDUAL, n_jobs)
    return one_over_e_quantile(maxima[:, k])


def calibrate_combined(config: DetectorConfig, grid: ScaleGrid, individual,
                       B_reps: int = 200, seed=None, n_jobs: int | None = None
                       ) -> ThresholdSet:
    """Rescale individual thresholds by the combined (1/e)-quantile factor."""
    ind = np.asarray(individual, dtype=np.float64).copy()
    if (ind < 0).any():
        raise CalibrationError("individual thresholds must be non-negative")
    ind[ind == 0] = 1.0
    fresh = null_maxima(_factory(config, grid), config.p, int(config.gamma), B_reps,
                        seed, STAGE_COMBINED, n_jobs)
    return ThresholdSet.from_array(ind * combined_factor(fresh, ind), "monte_carlo")


def calibrate_thresholds(config: DetectorConfig, grid: ScaleGrid, B_reps: int = 200,
                         seed=None, n_jobs: int | None = None) -> ThresholdSet:
    """Both calibration passes; all three individual thresholds share one set
    of null runs."""
    thr = calibrate_monitor(_factory(config, grid), config.p, config.gamma, B_reps,
                            seed, combine=True, n_jobs=n_jobs)
    return ThresholdSet.from_array(thr, "monte_carlo")


def exponentiality_check(run_lengths) -> float:
    """Kolmogorov-Smirnov distance between N / (median(N) / log 2) and Exp(1)."""
    x = np.asarray(run_lengths, dtype=np.float64)
    if x.size == 0:
        raise ValueError("no run lengths given")
    if x.size < 50:
        raise ValueError(f"need at least 50 run lengths, got {x.size}")
    scale = np.median(x) / math.log(2.0)
    return float(stats.kstest(x / scale, "expon").statistic)


def save_thresholds(path, thresholds: ThresholdSet, config: DetectorConfig,
                    seed=None, B_reps: int | None = None) -> None:
    doc = {
        "method": config.variant,
        "p": config.p,
        "beta": config.beta,
        "gamma": config.gamma,
        "t_diag": thresholds.t_diag,
        "t_off_dense": thresholds.t_off_dense,
        "t_off_sparse": thresholds.t_off_sparse,
        "stat_names": list(STAT_NAMES),
        "values": thresholds.as_array().tolist(),
        "source": thresholds.source,
        "seed": seed,
        "B_reps": B_reps,
    }
    Path(path).write_text(dumps(doc) + "\n")


def save_monitor_thresholds(path, method: str, stat_names, values, p: int, gamma: float,
                            seed=None, B_reps: int | None = None, **extra) -> None:
    """Threshold file for any monitor: one value per statistic, in order."""
    doc = {"method": method, "p": p, "gamma": gamma, "stat_names": list(stat_names),
           "values": [float(v) for v in values], "source": "monte_carlo",
           "seed": seed, "B_reps": B_reps}
    doc.update(extra)
    Path(path).write_text(dumps(doc) + "\n")


def load_thresholds(path) -> tuple[ThresholdSet, dict]:
    doc = json.loads(Path(path).read_text())
    try:
        ts = ThresholdSet(float(doc["t_diag"]), float(doc["t_off_dense"]),
                          float(doc["t_off_sparse"]), doc.get("source", "monte_carlo"))
    except KeyError as exc:
        raise ValueError(f"{path}: missing field {exc}") from exc
    return ts, doc


def load_threshold_values(path) -> tuple[np.ndarray, dict]:
    """Per-statistic thresholds of any monitor, plus the full document."""
    doc = json.loads(Path(path).read_text())
    if "values" in doc:
        return np.asarray(doc["values"], dtype=np.float64), doc
    ts, doc = load_thresholds(path)
    return ts.as_array(), doc


def dumps(doc: dict) -> str:
    """JSON with round-trip float precision; infinities written as ``Infinity``."""
    return json.dumps(doc, indent=2, allow_nan=True)
