"""Scenario configuration, geometry and seeded random streams.

Configuration documents are YAML mappings whose keys carry their unit
(``area_side_m``, ``noise_power_mw``...). Every key is optional; missing
keys fall back to the defaults of :class:`ScenarioConfig`.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Dict, Mapping, Tuple

import numpy as np
import yaml

POLICIES = ("fixed", "dynamic", "cb_baseline", "full_jt_baseline")

STREAM_NAMES = ("geometry", "fading", "blockage", "arrivals", "solver_init")


class ConfigError(ValueError):
    """Raised when a configuration document is malformed or invalid."""


@dataclass(frozen=True)
class ScenarioConfig:
    """All parameters of one simulated scenario.

    Powers are linear milliwatts so that ``10*log10(p)`` is dBm.
    """

    num_rrus: int = 4
    num_ues: int = 4
    antennas_per_rru: int = 16
    area_side_m: float = 50.0
    carrier_freq_hz: float = 28e9
    num_paths: int = 3
    pathloss_exponent_range: Tuple[float, float] = (2.0, 6.0)
    min_distance_m: float = 0.5
    blockage_prob: float = 0.1
    arrival_rate_bits_per_slot: float = 3.5
    queue_threshold_bits: float = 5.0
    violation_tolerance: float = 0.1
    tradeoff_v: float = 1.0
    serving_policy: str = "fixed"
    subset_min_size: int = 2
    averaging_window_slots: int = 50
    blockage_prior: float = 0.0
    dual_step_size: float = 0.01
    dual_step_rule: str = "newton"
    noise_power_mw: float = 1e-9
    num_slots: int = 2000
    num_replications: int = 20
    inner_iters: int = 4
    outer_iters: int = 100
    solver_tolerance: float = 1e-4
    solver_patience: int = 5
    master_seed: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "pathloss_exponent_range",
            tuple(float(v) for v in self.pathloss_exponent_range))
        validate(self)

    def replace(self, **changes) -> "ScenarioConfig":
        """Return a copy with ``changes`` applied (and re-validated)."""
        return dataclasses.replace(self, **changes)


def validate(cfg: ScenarioConfig) -> None:
    """Raise :class:`ConfigError` if any invariant of ``cfg`` is broken."""
    counts = ("num_rrus", "num_ues", "antennas_per_rru", "num_paths",
              "averaging_window_slots", "num_slots", "num_replications",
              "inner_iters", "outer_iters", "solver_patience")
    for name in counts:
        value = getattr(cfg, name)
        if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 1:
            raise ConfigError(f"{name} must be a positive integer, got {value!r}")
    if not 1 <= cfg.subset_min_size <= cfg.num_rrus:
        raise ConfigError(
            f"subset_min_size must lie in [1, num_rrus={cfg.num_rrus}], "
            f"got {cfg.subset_min_size}")
    if not 0.0 <= cfg.blockage_prob <= 1.0:
        raise ConfigError(f"blockage_prob must lie in [0, 1], got {cfg.blockage_prob}")
    if not 0.0 <= cfg.blockage_prior <= 1.0:
        raise ConfigError(f"blockage_prior must lie in [0, 1], got {cfg.blockage_prior}")
    if not 0.0 < cfg.violation_tolerance < 1.0:
        raise ConfigError(
            f"violation_tolerance must lie in (0, 1), got {cfg.violation_tolerance}")
    lo, hi = cfg.pathloss_exponent_range
    if len(cfg.pathloss_exponent_range) != 2 or not 0.0 <= lo <= hi:
        raise ConfigError(
            f"pathloss_exponent_range must be [lo, hi] with 0 <= lo <= hi, "
            f"got {cfg.pathloss_exponent_range}")
    positive = ("area_side_m", "carrier_freq_hz", "min_distance_m",
                "dual_step_size", "noise_power_mw", "solver_tolerance")
    for name in positive:
        value = getattr(cfg, name)
        if not (math.isfinite(value) and value > 0):
            raise ConfigError(f"{name} must be positive and finite, got {value!r}")
    nonneg = ("arrival_rate_bits_per_slot", "queue_threshold_bits", "tradeoff_v")
    for name in nonneg:
        value = getattr(cfg, name)
        if not (math.isfinite(value) and value >= 0):
            raise ConfigError(f"{name} must be nonnegative and finite, got {value!r}")
    if cfg.serving_policy not in POLICIES:
        raise ConfigError(
            f"serving_policy must be one of {POLICIES}, got {cfg.serving_policy!r}")
    if cfg.dual_step_rule not in ("newton", "subgradient"):
        raise ConfigError(
            f"dual_step_rule must be 'newton' or 'subgradient', got {cfg.dual_step_rule!r}")
    if not 0 <= cfg.master_seed < 2**64:
        raise ConfigError(f"master_seed must be a 64-bit unsigned integer, got {cfg.master_seed}")


_FIELDS = {f.name: f for f in dataclasses.fields(ScenarioConfig)}


def _coerce(name: str, value):
    default = _FIELDS[name].default
    if name == "pathloss_exponent_range":
        if not isinstance(value, (list, tuple)) or len(value) != 2:
            raise ConfigError(f"{name} must be a two-element list, got {value!r}")
        return tuple(float(v) for v in value)
    if isinstance(default, bool):
        return bool(value)
    if isinstance(default, int):
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{name} must be an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{name} must be a number, got {value!r}")
        return float(value)
    if not isinstance(value, str):
        raise ConfigError(f"{name} must be a string, got {value!r}")
    return value


def config_from_mapping(data: Mapping) -> ScenarioConfig:
    """Build a validated config from a plain mapping of overrides."""
    unknown = sorted(set(data) - set(_FIELDS))
    if unknown:
        raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
    values = {name: _coerce(name, value) for name, value in data.items()}
    return ScenarioConfig(**values)


def load_config(text: str) -> ScenarioConfig:
    """Parse a YAML configuration document.

    Parameters
    ----------
    text : str
        YAML mapping of configuration keys. An empty document yields the
        defaults.

    Returns
    -------
    ScenarioConfig

    Raises
    ------
    ConfigError
        On YAML syntax errors, unknown keys, wrong types or broken
        invariants.
    """
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse configuration: {exc}") from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("configuration document must be a mapping")
    return config_from_mapping(data)


def dump_config(cfg: ScenarioConfig) -> str:
    """Canonical YAML emitter; ``load_config(dump_config(c)) == c``."""
    data = {}
    for name in _FIELDS:
        value = getattr(cfg, name)
        data[name] = list(value) if isinstance(value, tuple) else value
    return yaml.safe_dump(data, sort_keys=False)


def parse_override(item: str) -> Tuple[str, object]:
    """Split a ``key=value`` override; the value is parsed as YAML."""
    if "=" not in item:
        raise ConfigError(f"override must look like key=value, got {item!r}")
    key, raw = item.split("=", 1)
    key = key.strip()
    if key not in _FIELDS:
        raise ConfigError(f"unknown configuration key {key!r}")
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse value for {key}: {exc}") from exc
    return key, _coerce(key, value)


def apply_overrides(cfg: ScenarioConfig, items) -> ScenarioConfig:
    changes = dict(parse_override(item) for item in items)
    return cfg.replace(**changes) if changes else cfg


@dataclass(frozen=True)
class Geometry:
    """RRU and UE placement with the derived distance matrix.

    Attributes
    ----------
    rru_positions : ndarray, shape (B, 2)
    ue_positions : ndarray, shape (K, 2)
    distances : ndarray, shape (B, K)
        Euclidean distances clamped below at the configured minimum.
    serving_sets : tuple of tuple of int
        Base serving set of every user (0-based RRU indices).
    """

    rru_positions: np.ndarray
    ue_positions: np.ndarray
    distances: np.ndarray
    serving_sets: Tuple[Tuple[int, ...], ...] = field(default=())


def rru_grid(num_rrus: int, side: float) -> np.ndarray:
    """Place RRUs at the centres of a square grid of cells.

    The grid has ``ceil(sqrt(B))`` cells per side, filled column by column,
    so four RRUs in a 50 m square land at the quadrant centres.
    """
    g = math.ceil(math.sqrt(num_rrus))
    cell = side / g
    pts = [((i + 0.5) * cell, (j + 0.5) * cell) for i in range(g) for j in range(g)]
    return np.array(pts[:num_rrus], dtype=float)


def generate_geometry(cfg: ScenarioConfig, seed) -> Geometry:
    """Drop UEs uniformly in the square and compute RRU-UE distances.

    ``seed`` may be an integer, a ``SeedSequence`` or a ``Generator``;
    the result is a pure function of ``(cfg, seed)``.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    rru = rru_grid(cfg.num_rrus, cfg.area_side_m)
    ue = rng.uniform(0.0, cfg.area_side_m, size=(cfg.num_ues, 2))
    d = np.linalg.norm(rru[:, None, :] - ue[None, :, :], axis=2)
    d = np.maximum(d, cfg.min_distance_m)
    base = tuple(range(cfg.num_rrus))
    return Geometry(rru, ue, d, tuple(base for _ in range(cfg.num_ues)))


def make_streams(master_seed: int, replication: int = 0) -> Dict[str, np.random.Generator]:
    """Independent named generators for one replication.

    Each stream is keyed by ``(replication, name index)`` under the master
    seed, so drawing more from one stream never shifts another.
    """
    out = {}
    for idx, name in enumerate(STREAM_NAMES):
        ss = np.random.SeedSequence(master_seed, spawn_key=(replication, idx))
        out[name] = np.random.default_rng(ss)
    return out
