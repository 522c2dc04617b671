"""Scenario configuration: the single dataclass every other module reads.

Defaults follow the reference system configuration (1 km cell, 15.3 +
37.6 log10(d) path loss, -99 dBm noise, 23 dBm transmit power, length-32
orthogonal cluster preambles).  Powers are stored in dBm / mW and converted
to linear mW by the helpers below; amplitudes are linear throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace

from .exceptions import ConfigError

Ring = tuple[float, float]


def dbm_to_mw(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0)


def default_rings(n_clusters: int, cell_radius_m: float) -> list[Ring]:
    """Equal-width concentric rings covering [0, R]."""
    width = cell_radius_m / n_clusters
    return [(k * width, (k + 1) * width) for k in range(n_clusters)]


@dataclass
class ScenarioConfig:
    # Cell geometry and propagation
    cell_radius_m: float = 1000.0
    min_distance_m: float = 25.0        # close-in reference distance of the path-loss model
    pathloss_alpha: float = 15.3        # dB at 1 m
    pathloss_beta: float = 37.6         # dB per decade
    shadowing_var: float = 8.0          # dB^2
    noise_power_dbm: float = -99.0

    # Population and layering
    n_users: int = 10000
    n_clusters: int = 4
    group_size: int = 5
    groups_per_cluster: int = 1000      # per-cluster minimum column count
    cluster_rings: list[Ring] | None = None

    # Preambles and power
    cluster_preamble_len: int = 32
    tx_power_dbm: float = 23.0          # P (phase-I reference, D2D signaling)
    tx_power2_dbm: float | None = None  # P_k (phase-II); defaults to tx_power_dbm

    # Access behavior
    sparsity: float = 0.05
    target_pf: float = 0.05
    target_pm: float = 0.05
    amp_max_iters: int = 50
    amp_tau_tol: float = 1e-3
    safety_factor: float = 1.1
    min_preamble_len: int = 32
    guard_symbols: int = 0
    dps_bound: str = "dynamic"          # "dynamic" | "relaxed"
    estimator: str = "energy"           # "energy" | "literal"
    phase1_reps: int = 4
    calibration: str = "se"             # "se" | "empirical"
    fixed_length: int = 0               # >0 disables adaptive planning
    bs_channel_knowledge: str = "realized"  # "realized" | "mean"
    use_true_sparsity_prior: bool = False

    # Grouping
    hearing_threshold_db: float = 30.0  # SNR above noise floor to "hear" a head
    d2d_max_range_m: float = 300.0
    kmeans_rounds: int = 3
    group_cap_enforced: bool = True
    d2d_payload_bits: float = 1000.0    # D
    d2d_bandwidth_hz: float = 1e6       # B
    distance_noise_std_m: float = 0.0

    # Energy / delay bookkeeping (non-paper defaults, config-only)
    wait_power_mw: float = 10.0
    pcs_power_mw: float = 50.0
    pcs_symbols: int = 200
    wait1_symbols: int = 200
    symbols_per_slot: int = 839
    slot_ms: float = 0.5

    # Channel toggles (AWGN-style ablations)
    shadowing_enabled: bool = True
    smallscale_enabled: bool = True
    unit_gain: bool = False             # g = 1 for every user
    pdf_mode: str = "area"              # "area" | "paper"

    rng_seed: int = 1

    def __post_init__(self):
        if self.cluster_rings is None:
            self.cluster_rings = default_rings(self.n_clusters, self.cell_radius_m)
        self.cluster_rings = [(float(a), float(b)) for a, b in self.cluster_rings]
        self.validate()

    # -- derived quantities ------------------------------------------------

    @property
    def noise_power_mw(self) -> float:
        return dbm_to_mw(self.noise_power_dbm)

    @property
    def tx_power_mw(self) -> float:
        return dbm_to_mw(self.tx_power_dbm)

    @property
    def tx_power2_mw(self) -> float:
        dbm = self.tx_power_dbm if self.tx_power2_dbm is None else self.tx_power2_dbm
        return dbm_to_mw(dbm)

    @property
    def symbol_seconds(self) -> float:
        return self.slot_ms * 1e-3 / self.symbols_per_slot

    @property
    def shadowing_std(self) -> float:
        return math.sqrt(self.shadowing_var) if self.shadowing_enabled else 0.0

    def validate(self):
        if self.n_users < 0:
            raise ConfigError("n_users must be non-negative")
        if self.n_clusters < 1:
            raise ConfigError("n_clusters must be >= 1")
        if self.group_size < 1:
            raise ConfigError("group_size must be >= 1")
        if self.groups_per_cluster < 1:
            raise ConfigError("groups_per_cluster must be >= 1")
        if not 0.0 <= self.sparsity < 1.0:
            raise ConfigError("sparsity must lie in [0, 1)")
        if not (0.0 < self.target_pf < 1.0 and 0.0 < self.target_pm < 1.0):
            raise ConfigError("target_pf/target_pm must lie in (0, 1)")
        if self.safety_factor < 1.0:
            raise ConfigError("safety_factor must be >= 1")
        for name in ("cell_radius_m", "min_distance_m", "cluster_preamble_len",
                     "amp_max_iters", "min_preamble_len", "symbols_per_slot",
                     "slot_ms", "d2d_payload_bits", "d2d_bandwidth_hz"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be strictly positive")
        if self.shadowing_var < 0:
            raise ConfigError("shadowing_var must be non-negative")
        if self.estimator not in ("energy", "literal"):
            raise ConfigError(f"unknown estimator {self.estimator!r}")
        if self.dps_bound not in ("dynamic", "relaxed"):
            raise ConfigError(f"unknown dps_bound {self.dps_bound!r}")
        if self.calibration not in ("se", "empirical"):
            raise ConfigError(f"unknown calibration mode {self.calibration!r}")
        if self.bs_channel_knowledge not in ("realized", "mean"):
            raise ConfigError(f"unknown bs_channel_knowledge {self.bs_channel_knowledge!r}")
        if self.pdf_mode not in ("area", "paper"):
            raise ConfigError(f"unknown pdf_mode {self.pdf_mode!r}")
        if self.phase1_reps < 1:
            raise ConfigError("phase1_reps must be >= 1")
        rings = self.cluster_rings
        if len(rings) != self.n_clusters:
            raise ConfigError("cluster_rings must list one (R1, R2) per cluster")
        for k, (r1, r2) in enumerate(rings):
            if not 0.0 <= r1 < r2:
                raise ConfigError(f"ring {k} is not ordered: {(r1, r2)}")
            if k > 0 and not math.isclose(rings[k - 1][1], r1):
                raise ConfigError("cluster_rings must be contiguous and disjoint")
        if not math.isclose(rings[0][0], 0.0) or not math.isclose(rings[-1][1], self.cell_radius_m):
            raise ConfigError("cluster_rings must cover [0, cell_radius_m]")

    def with_overrides(self, **kwargs) -> "ScenarioConfig":
        return replace(self, **kwargs)

    def to_mapping(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "cluster_rings":
                v = format_rings(v)
            out[f.name] = v
        return out


def format_rings(rings: list[Ring]) -> str:
    return ",".join(f"{a:g}:{b:g}" for a, b in rings)


def parse_rings(text: str) -> list[Ring]:
    rings = []
    for part in text.split(","):
        a, _, b = part.partition(":")
        try:
            rings.append((float(a), float(b)))
        except ValueError as e:
            raise ConfigError(f"bad ring spec {part!r}") from e
    return rings


_BOOL_TRUE = {"1", "true", "yes", "on"}
_BOOL_FALSE = {"0", "false", "no", "off"}


def _coerce(name: str, text: str, target_type) -> object:
    text = text.strip()
    if name == "cluster_rings":
        return parse_rings(text)
    if target_type is bool or target_type == "bool":
        low = text.lower()
        if low in _BOOL_TRUE:
            return True
        if low in _BOOL_FALSE:
            return False
        raise ConfigError(f"{name}: cannot parse {text!r} as bool")
    try:
        if target_type is int or target_type == "int":
            return int(text)
        if target_type is float or target_type in ("float", "float | None"):
            return float(text)
    except ValueError as e:
        raise ConfigError(f"{name}: cannot parse {text!r}") from e
    return text


def _field_types() -> dict:
    types = {}
    defaults = ScenarioConfig()
    for f in fields(ScenarioConfig):
        v = getattr(defaults, f.name)
        if f.name == "cluster_rings":
            types[f.name] = "rings"
        elif f.name == "tx_power2_dbm":
            types[f.name] = float
        elif isinstance(v, bool):
            types[f.name] = bool
        elif isinstance(v, int):
            types[f.name] = int
        elif isinstance(v, float):
            types[f.name] = float
        else:
            types[f.name] = str
    return types


def config_from_mapping(mapping: dict) -> ScenarioConfig:
    types = _field_types()
    kwargs = {}
    for key, value in mapping.items():
        if key not in types:
            raise ConfigError(f"unknown config key {key!r}")
        if isinstance(value, str):
            if types[key] == "rings":
                value = parse_rings(value)
            else:
                value = _coerce(key, value, types[key])
        kwargs[key] = value
    return ScenarioConfig(**kwargs)


def load_config(path: str) -> ScenarioConfig:
    """Read a flat `key = value` file; '#' starts a comment, blank lines skipped."""
    mapping = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
            key, _, value = line.partition("=")
            mapping[key.strip()] = value.strip()
    return config_from_mapping(mapping)
