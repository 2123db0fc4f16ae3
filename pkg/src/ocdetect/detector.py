"""Adaptive stopping rule, threshold sets and the ``OCD`` estimator."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import IO, Iterable, Literal

import numpy as np

from .base import Censored, Hit, SequentialDetector, first_crossing
from .core_stats import DedupState, OCDState
from .grid import ConfigError, DetectorConfig, ScaleGrid, build_grid, log2
from .ocd_prime import PrimeState

STAT_NAMES = ("diag", "off_dense", "off_sparse")
ThresholdSource = Literal["theoretical_dense", "theoretical_sparse",
                          "theoretical_adaptive", "monte_carlo"]


@dataclass(frozen=True)
class ThresholdSet:
    t_diag: float
    t_off_dense: float
    t_off_sparse: float
    source: ThresholdSource = "monte_carlo"

    def __post_init__(self):
        for name in ("t_diag", "t_off_dense", "t_off_sparse"):
            v = getattr(self, name)
            if not v > 0:
                raise ValueError(f"{name} must be positive, got {v!r}")

    def as_array(self) -> np.ndarray:
        return np.array([self.t_diag, self.t_off_dense, self.t_off_sparse])

    @classmethod
    def from_array(cls, values, source: ThresholdSource = "monte_carlo") -> ThresholdSet:
        d, od, os_ = (float(v) for v in values)
        return cls(d, od, os_, source)

    def scaled(self, factor: float) -> ThresholdSet:
        return ThresholdSet(self.t_diag * factor, self.t_off_dense * factor,
                            self.t_off_sparse * factor, self.source)


@dataclass(frozen=True)
class Declaration:
    """A change declared at observation ``n``.

    ``trigger`` is ``"multiple"`` when several statistics crossed at the same
    time; ``crossed`` lists all of them.  ``anchor``, ``scale_index`` and
    ``statistic_value`` describe the first crossing statistic in the order
    diag, off_dense, off_sparse.
    """

    n: int
    trigger: str
    crossed: tuple[str, ...]
    anchor: int
    scale_index: int
    statistic_value: float
    values: dict

    declared = True

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "trigger": self.trigger,
            "crossed": list(self.crossed),
            "anchor": self.anchor,
            "scale_index": self.scale_index,
            "statistic_value": self.statistic_value,
        }


def psi(x: float, p: int) -> float:
    """Declaration threshold for the dense off-diagonal statistic: chi-squared
    tail map p - 1 + x + sqrt(2 (p - 1) x)."""
    return p - 1 + x + math.sqrt(2.0 * (p - 1) * x)


def theoretical_thresholds(config: DetectorConfig,
                           mode: Literal["dense", "sparse", "adaptive"] = "adaptive"
                           ) -> ThresholdSet:
    """Thresholds with guaranteed patience at least gamma.

    The statistic not used by a single-sparsity mode gets an infinite
    threshold, so it never triggers.
    """
    p, gamma = config.p, config.gamma
    if gamma < 1:
        raise ConfigError("gamma must be >= 1")
    if mode == "dense":
        c = 16.0
    elif mode in ("sparse", "adaptive"):
        if p < 2:
            raise ConfigError(f"{mode} thresholds need p >= 2")
        c = 16.0 if mode == "sparse" else 24.0
    else:
        raise ConfigError(f"unknown threshold mode {mode!r}")
    t_diag = math.log(c * p * gamma * log2(4 * p))
    core = math.log(c * p * gamma * log2(2 * p))
    t_dense = psi(2.0 * core, p)
    t_sparse = 8.0 * core
    if mode == "dense":
        t_sparse = math.inf
    elif mode == "sparse":
        t_dense = math.inf
    return ThresholdSet(t_diag, t_dense, t_sparse, f"theoretical_{mode}")


def make_state(config: DetectorConfig, grid: ScaleGrid | None = None):
    grid = grid if grid is not None else build_grid(config)
    if config.variant == "ocd_prime":
        cls = PrimeState
    else:
        cls = DedupState if config.dedup else OCDState
    return cls(grid, config.p, config.a_levels)


def hit_to_declaration(hit: Hit, n_scales: int, names=STAT_NAMES) -> Declaration:
    crossed = tuple(names[c] for c in hit.crossed)
    first = hit.crossed[0]
    enc = int(hit.argmax[first])
    return Declaration(
        n=hit.n,
        trigger=crossed[0] if len(crossed) == 1 else "multiple",
        crossed=crossed,
        anchor=enc // n_scales,
        scale_index=enc % n_scales,
        statistic_value=float(hit.stats[first]),
        values={name: float(v) for name, v in zip(names, hit.stats)},
    )


def run_detector(stream: Iterable, config: DetectorConfig, grid: ScaleGrid | None,
                 thresholds: ThresholdSet, max_n: int | None = None,
                 trace: IO[str] | None = None) -> Declaration | Censored:
    """Monitor ``stream`` until a statistic meets or exceeds its threshold.

    ``trace``, if given, receives one JSON line per observation with the
    three statistics and whether a declaration happened.
    """
    grid = grid if grid is not None else build_grid(config)
    state = make_state(config, grid)
    out = first_crossing(state, stream, thresholds.as_array(), max_n=max_n,
                         trace=trace, names=STAT_NAMES)
    if isinstance(out, Censored):
        return out
    return hit_to_declaration(out, len(grid))


class OCD(SequentialDetector):
    """Adaptive high-dimensional online changepoint detector.

    Parameters
    ----------
    beta : float
        Assumed lower bound on the Euclidean norm of the mean change.
    gamma : float
        Nominal patience (average run length without change).
    variant : {"ocd", "ocd_prime"}
    dedup : bool
        Share tail sums between anchors with equal tail length (``ocd`` only).
    a_sparse_mode : {"practical", "theoretical"}
        Hard-thresholding level of the sparse statistic.
    thresholds : "monte_carlo", "theoretical", or a ThresholdSet
        How ``fit`` sets the declaration thresholds.
    n_reps : int
        Monte Carlo replications per calibration pass.
    random_state : int or None
        Master seed of the calibration.
    n_jobs : int or None
        Parallel calibration workers.
    """

    stat_names = STAT_NAMES

    def __init__(self, beta=1.0, gamma=5000, variant="ocd", dedup=True,
                 a_sparse_mode="practical", thresholds="monte_carlo", n_reps=200,
                 random_state=None, n_jobs=None):
        self.beta = beta
        self.gamma = gamma
        self.variant = variant
        self.dedup = dedup
        self.a_sparse_mode = a_sparse_mode
        self.thresholds = thresholds
        self.n_reps = n_reps
        self.random_state = random_state
        self.n_jobs = n_jobs

    @classmethod
    def from_config(cls, config: DetectorConfig, thresholds: ThresholdSet) -> OCD:
        """Fitted detector with known thresholds; no calibration."""
        est = cls(beta=config.beta, gamma=config.gamma, variant=config.variant,
                  dedup=config.dedup, thresholds=thresholds)
        est.n_features_in_ = config.p
        est.config_ = config
        est.grid_ = build_grid(config)
        est.threshold_set_ = thresholds
        est.thresholds_ = thresholds.as_array()
        est.reset()
        return est

    def _setup(self, p):
        self.config_ = DetectorConfig(p=p, beta=float(self.beta), gamma=float(self.gamma),
                                      variant=self.variant, dedup=bool(self.dedup),
                                      a_sparse_mode=self.a_sparse_mode)
        self.grid_ = build_grid(self.config_)

    def _new_state(self):
        return make_state(self.config_, self.grid_)

    def _calibrate(self):
        from .calibrate import calibrate_thresholds

        spec = self.thresholds
        if isinstance(spec, ThresholdSet):
            ts = spec
        elif spec == "theoretical":
            ts = theoretical_thresholds(self.config_, "adaptive")
        elif spec == "monte_carlo":
            ts = calibrate_thresholds(self.config_, self.grid_, B_reps=self.n_reps,
                                      seed=self.random_state, n_jobs=self.n_jobs)
        else:
            raise ValueError(f"unknown thresholds option {spec!r}")
        self.threshold_set_ = ts
        return ts.as_array()

    def _to_declaration(self, hit):
        return hit_to_declaration(hit, len(self.grid_))
