"""Detector configuration and the signed dyadic scale grid."""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Literal

import numpy as np

Variant = Literal["ocd", "ocd_prime"]
SparseMode = Literal["practical", "theoretical"]


class ConfigError(ValueError):
    """Raised for an invalid detector configuration."""


def floor_log2(p: int) -> int:
    """Exact floor(log2(p)) for a positive integer."""
    return int(p).bit_length() - 1


def log2(x: float) -> float:
    return math.log(x) / math.log(2.0)


def sparse_level(p: int, mode: SparseMode = "practical") -> float:
    """Hard-thresholding level used by the sparse off-diagonal statistic.

    ``practical`` gives sqrt(2 log p); ``theoretical`` gives sqrt(8 log(p - 1))
    and needs p >= 2.
    """
    if mode == "practical":
        return math.sqrt(2.0 * math.log(p))
    if mode == "theoretical":
        if p < 2:
            raise ConfigError("theoretical sparse level needs p >= 2")
        return math.sqrt(8.0 * math.log(p - 1))
    raise ConfigError(f"unknown a_sparse_mode {mode!r}")


@dataclass(frozen=True)
class DetectorConfig:
    p: int
    beta: float = 1.0
    gamma: float = 5000.0
    a_dense: float = 0.0
    a_sparse: float | None = None
    variant: Variant = "ocd"
    dedup: bool = True
    a_sparse_mode: SparseMode = field(default="practical", compare=False)

    def __post_init__(self):
        if int(self.p) != self.p or self.p < 1:
            raise ConfigError(f"p must be a positive integer, got {self.p!r}")
        if not self.beta > 0 or not math.isfinite(self.beta):
            raise ConfigError(f"beta must be positive, got {self.beta!r}")
        if not self.gamma >= 1:
            raise ConfigError(f"gamma must be >= 1, got {self.gamma!r}")
        if self.a_dense < 0:
            raise ConfigError("a_dense must be non-negative")
        if self.variant not in ("ocd", "ocd_prime"):
            raise ConfigError(f"unknown variant {self.variant!r}")
        object.__setattr__(self, "p", int(self.p))
        if self.a_sparse is None:
            object.__setattr__(self, "a_sparse", sparse_level(self.p, self.a_sparse_mode))
        elif self.a_sparse < 0:
            raise ConfigError("a_sparse must be non-negative")

    @property
    def a_levels(self) -> tuple[float, float]:
        return (float(self.a_dense), float(self.a_sparse))

    def with_(self, **changes) -> DetectorConfig:
        if "a_sparse_mode" in changes and "a_sparse" not in changes:
            changes["a_sparse"] = None
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return {
            "p": self.p,
            "beta": self.beta,
            "gamma": self.gamma,
            "a_dense": self.a_dense,
            "a_sparse": self.a_sparse,
            "variant": self.variant,
            "dedup": self.dedup,
        }


_CONFIG_KEYS = {
    "p": int,
    "beta": float,
    "gamma": float,
    "a_sparse_mode": str,
    "variant": str,
    "dedup": None,
}


def _parse_bool(value: str) -> bool:
    v = value.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {value!r}")


def read_config_file(path: str | Path) -> dict:
    """Read a flat ``key = value`` file into a dict of typed config values.

    Only the keys p, beta, gamma, a_sparse_mode, variant and dedup are
    accepted; ``#`` starts a comment line.
    """
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    text = Path(path).read_text()
    parser.read_string("[ocd]\n" + text)
    out = {}
    for key, raw in parser["ocd"].items():
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"{path}: unknown config key {key!r}")
        conv = _CONFIG_KEYS[key]
        try:
            out[key] = _parse_bool(raw) if conv is None else conv(raw.strip())
        except ValueError as exc:
            raise ConfigError(f"{path}: bad value for {key}: {raw!r}") from exc
    return out


def config_from_mapping(values: dict) -> DetectorConfig:
    values = dict(values)
    mode = values.pop("a_sparse_mode", "practical")
    try:
        return DetectorConfig(a_sparse_mode=mode, **values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


@dataclass(frozen=True, eq=False)
class ScaleGrid:
    """Signed scales ordered as +b_0, -b_0, +b_1, -b_1, ..., with the two
    extra diagonal-only scales last.

    ``n_core`` is the number of leading scales that also feed the
    off-diagonal statistics.
    """

    b_values: np.ndarray
    n_core: int

    @property
    def b_core(self) -> np.ndarray:
        return self.b_values[: self.n_core]

    @property
    def b_extra(self) -> np.ndarray:
        return self.b_values[self.n_core :]

    def __len__(self) -> int:
        return len(self.b_values)


def build_grid(config: DetectorConfig | None = None, *, p: int | None = None,
               beta: float | None = None) -> ScaleGrid:
    """Build the scale grid for dimension p and signal lower bound beta."""
    if config is not None:
        p, beta = config.p, config.beta
    if p is None or int(p) != p or p < 1:
        raise ConfigError(f"p must be a positive integer, got {p!r}")
    if beta is None or not beta > 0:
        raise ConfigError(f"beta must be positive, got {beta!r}")
    L = floor_log2(int(p))
    l2 = log2(2 * p)
    vals = []
    for ell in range(L + 2):
        b = beta / math.sqrt(2.0**ell * l2)
        vals.extend((b, -b))
    b_values = np.array(vals, dtype=np.float64)
    b_values.setflags(write=False)
    return ScaleGrid(b_values=b_values, n_core=2 * (L + 1))
