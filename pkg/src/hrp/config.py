"""Run configuration: every scenario, channel, association, allocation and
solver parameter, with units in the field names.

The on-disk format is YAML, grouped into sections.  Loading is strict:
unknown sections or keys are a hard error, never silently ignored.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import yaml

SPEED_OF_LIGHT = 299_792_458.0

# Zenith dry-air attenuation (dB) for the mean annual global reference
# atmosphere (1013.25 hPa, 15 degC), from the ITU-R P.676 Annex 2
# approximation; see channel.dry_air_zenith_attenuation_db.
DEFAULT_ZENITH_ATTEN_DB = {
    0.5e9: 0.0159,
    1e9: 0.0281,
    2e9: 0.0347,
    3.5e9: 0.0369,
    5e9: 0.0379,
    6e9: 0.0384,
    10e9: 0.0413,
    15e9: 0.0476,
    20e9: 0.0585,
    28e9: 0.0934,
    30e9: 0.1078,
    40e9: 0.2661,
}

BS_POWER_MODES = ("per_subcarrier", "total")
PROPORTIONAL_WEIGHTINGS = ("amplitude", "power")


class ConfigError(ValueError):
    pass


def _f(default, section, **kw):
    return field(default=default, metadata={"section": section, **kw})


@dataclass(frozen=True)
class NetworkConfig:
    # scenario
    area_side_m: float = _f(10_000.0, "scenario")
    num_ues: int = _f(100, "scenario")
    min_ue_separation_m: float = _f(100.0, "scenario")
    num_bs: int = _f(4, "scenario")
    l_max: int = _f(4, "scenario")
    bs_height_m: float = _f(25.0, "scenario")
    ue_height_m: float = _f(1.5, "scenario")
    haps_altitude_m: float = _f(20_000.0, "scenario")
    cs_x_m: Optional[float] = _f(None, "scenario")  # None: area center
    cs_y_m: Optional[float] = _f(None, "scenario")
    cs_height_m: float = _f(0.0, "scenario")
    seed: int = _f(0, "scenario")

    # channel
    carrier_freq_hz: float = _f(2e9, "channel")
    g_bs_db: float = _f(8.0, "channel")
    g_ue_db: float = _f(0.0, "channel")
    g_cs_db: float = _f(43.2, "channel")
    shadow_sigma_db: float = _f(8.0, "channel")
    noise_psd_dbm_hz: float = _f(-174.0, "channel")
    rho: float = _f(1.0, "channel")
    phase_bits: Optional[int] = _f(None, "channel")  # None: continuous phases
    zenith_atten_db: dict = field(
        default_factory=lambda: dict(DEFAULT_ZENITH_ATTEN_DB),
        metadata={"section": "channel"},
    )

    # association
    bw_bs_hz: float = _f(50e6, "association")
    bw_ue_hz: float = _f(2e6, "association")
    p_bs_dbm: float = _f(35.0, "association")
    bs_power_mode: str = _f("per_subcarrier", "association")
    r_min_bps: float = _f(2e6, "association")

    # allocation
    r_th_bps: float = _f(2e6, "allocation")
    p_cs_max_dbm: float = _f(33.0, "allocation")
    p_k_min_dbm: float = _f(15.0, "allocation")
    p_k_max_dbm: float = _f(20.0, "allocation")
    n_max: int = _f(200_000, "allocation")
    n_k_min: int = _f(1000, "allocation")
    n_k_max: int = _f(10_000, "allocation")
    proportional_weighting: str = _f("amplitude", "allocation")

    # solver
    gp_gap_tol: float = _f(1e-8, "solver")
    gp_kkt_tol: float = _f(1e-6, "solver")
    gp_max_outer: int = _f(500, "solver")

    def __post_init__(self):
        table = {float(k): float(v) for k, v in self.zenith_atten_db.items()}
        object.__setattr__(self, "zenith_atten_db", dict(sorted(table.items())))
        self.validate()

    # -- derived quantities -------------------------------------------------

    @property
    def num_subcarriers(self) -> int:
        return int(round(self.bw_bs_hz / self.bw_ue_hz))

    @property
    def noise_power_w(self) -> float:
        return dbm_to_w(self.noise_psd_dbm_hz) * self.bw_ue_hz

    @property
    def bs_subcarrier_power_w(self) -> float:
        p = dbm_to_w(self.p_bs_dbm)
        if self.bs_power_mode == "total":
            p /= self.num_subcarriers
        return p

    @property
    def cs_position(self) -> tuple[float, float, float]:
        c = self.area_side_m / 2.0
        x = c if self.cs_x_m is None else self.cs_x_m
        y = c if self.cs_y_m is None else self.cs_y_m
        return (x, y, self.cs_height_m)

    @property
    def haps_position(self) -> tuple[float, float, float]:
        c = self.area_side_m / 2.0
        return (c, c, self.haps_altitude_m)

    def replace(self, **changes) -> "NetworkConfig":
        return dataclasses.replace(self, **changes)

    # -- validation -----------------------------------------------------------

    def validate(self) -> None:
        problems = []
        positive = [
            "area_side_m", "num_ues", "min_ue_separation_m", "l_max", "bs_height_m",
            "ue_height_m", "haps_altitude_m", "carrier_freq_hz", "bw_bs_hz",
            "bw_ue_hz", "r_min_bps", "r_th_bps", "n_max", "n_k_min", "n_k_max",
            "rho", "gp_gap_tol", "gp_kkt_tol", "gp_max_outer",
        ]
        for name in positive:
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                problems.append(f"{name} must be positive and finite (got {v!r})")
        if self.num_bs < 0:
            problems.append("num_bs must be >= 0")
        if self.num_bs > self.l_max:
            problems.append(f"num_bs={self.num_bs} exceeds l_max={self.l_max}")
        if self.shadow_sigma_db < 0:
            problems.append("shadow_sigma_db must be >= 0")
        if not 0 < self.rho <= 1:
            problems.append("rho must lie in (0, 1]")
        if self.phase_bits is not None and self.phase_bits < 1:
            problems.append("phase_bits must be >= 1 or null (continuous)")
        if self.n_k_min > self.n_k_max:
            problems.append("n_k_min exceeds n_k_max")
        if self.p_k_min_dbm > self.p_k_max_dbm:
            problems.append("p_k_min_dbm exceeds p_k_max_dbm")
        if self.bw_bs_hz > 0 and self.bw_ue_hz > 0:
            ratio = self.bw_bs_hz / self.bw_ue_hz
            if ratio < 1 or abs(ratio - round(ratio)) > 1e-9 * ratio:
                problems.append("bw_bs_hz / bw_ue_hz must be a positive integer")
        if self.bs_power_mode not in BS_POWER_MODES:
            problems.append(f"bs_power_mode must be one of {BS_POWER_MODES}")
        if self.proportional_weighting not in PROPORTIONAL_WEIGHTINGS:
            problems.append(f"proportional_weighting must be one of {PROPORTIONAL_WEIGHTINGS}")
        if self.haps_altitude_m <= max(self.ue_height_m, self.cs_height_m):
            problems.append("haps_altitude_m must exceed UE and CS heights")
        if self.area_side_m > 0 and self.num_ues > 0 and self.min_ue_separation_m > 0:
            packed = self.num_ues * math.pi * (self.min_ue_separation_m / 2.0) ** 2
            if packed >= self.area_side_m ** 2:
                problems.append("UE packing infeasible: K*pi*(min_sep/2)^2 >= area")
        if not self.zenith_atten_db:
            problems.append("zenith_atten_db table is empty")
        for f, a in self.zenith_atten_db.items():
            if f <= 0 or a < 0:
                problems.append(f"invalid zenith_atten_db entry {f}: {a}")
        if problems:
            raise ConfigError("; ".join(problems))

    # -- serialization ----------------------------------------------------------

    def to_sections(self) -> dict[str, dict[str, Any]]:
        out: dict[str, dict[str, Any]] = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if isinstance(v, dict):
                v = dict(v)
            out.setdefault(f.metadata["section"], {})[f.name] = v
        return out

    def to_flat(self) -> dict[str, Any]:
        return {f.name: getattr(self, f.name) for f in dataclasses.fields(self)}

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_sections(), sort_keys=False, default_flow_style=False)

    def config_hash(self, include_seed: bool = False) -> str:
        flat = self.to_flat()
        if not include_seed:
            flat.pop("seed")
        flat["zenith_atten_db"] = [[k, v] for k, v in flat["zenith_atten_db"].items()]
        blob = json.dumps(flat, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    @classmethod
    def from_sections(cls, data: dict) -> "NetworkConfig":
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigError("config root must be a mapping of sections")
        fields = {f.name: f for f in dataclasses.fields(cls)}
        sections = {f.metadata["section"] for f in fields.values()}
        unknown = []
        kwargs: dict[str, Any] = {}
        for sec, body in data.items():
            if sec not in sections:
                unknown.append(str(sec))
                continue
            if body is None:
                continue
            if not isinstance(body, dict):
                raise ConfigError(f"section {sec!r} must be a mapping")
            for key, value in body.items():
                f = fields.get(key)
                if f is None or f.metadata["section"] != sec:
                    unknown.append(f"{sec}.{key}")
                    continue
                kwargs[key] = _coerce(f, value)
        if unknown:
            raise ConfigError("unknown config keys: " + ", ".join(sorted(unknown)))
        return cls(**kwargs)

    @classmethod
    def from_yaml(cls, text: str) -> "NetworkConfig":
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse config: {exc}") from exc
        return cls.from_sections(data)

    @classmethod
    def load(cls, path) -> "NetworkConfig":
        return cls.from_yaml(Path(path).read_text(encoding="utf-8"))


def _coerce(f: dataclasses.Field, value):
    default = f.default if f.default is not dataclasses.MISSING else None
    name = f.name
    if name == "zenith_atten_db":
        if not isinstance(value, dict):
            raise ConfigError("zenith_atten_db must map frequency_hz -> dB")
        try:
            return {float(k): float(v) for k, v in value.items()}
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"zenith_atten_db: {exc}") from exc
    if value is None:
        if name in ("cs_x_m", "cs_y_m", "phase_bits"):
            return None
        raise ConfigError(f"{name} may not be null")
    if isinstance(default, str):
        return str(value)
    if isinstance(value, bool):
        raise ConfigError(f"{name} must be numeric")
    try:
        if isinstance(default, int) or name == "phase_bits":
            if float(value) != int(float(value)):
                raise ConfigError(f"{name} must be an integer (got {value!r})")
            return int(float(value))
        return float(value)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: cannot interpret {value!r}") from exc


def dbm_to_w(dbm):
    return 10.0 ** ((dbm - 30.0) / 10.0)


def w_to_dbm(w):
    return 10.0 * math.log10(w) + 30.0


def db_to_lin(db):
    return 10.0 ** (db / 10.0)
