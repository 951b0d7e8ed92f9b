"""Channel models.

Terrestrial BS-UE links follow the 3GPP TR 38.901 urban-macro path loss and
LoS probability with lognormal shadowing.  The beyond-cell link is the
cascade CS -> HAPS -> UE: free-space loss on each leg plus dry-air
attenuation, with the RIS array gain carried separately by the reflection
gain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import ndtri

from .config import SPEED_OF_LIGHT, NetworkConfig, db_to_lin
from .scenario import STREAM_LINKS, Topology, distance_3d, substream

FSPL_CONST_DB = 20.0 * math.log10(4.0 * math.pi / SPEED_OF_LIGHT)  # -147.55
UMA_MIN_D2D = 10.0
UMA_HE = 1.0


class ModelValidityError(ValueError):
    pass


@dataclass(frozen=True)
class TerrestrialLink:
    ue_index: int
    bs_index: int
    d_2d: float
    d_3d: float
    los: bool
    pathloss_db: float
    shadow_db: float
    gain_lin: float


@dataclass(frozen=True)
class BeyondCellLink:
    ue_index: int
    d_cs_haps: float
    d_haps_ue: float
    pl_cascaded_db: float
    atten_db: float
    gain_lin: float


@dataclass(frozen=True)
class RisGainModel:
    rho: float = 1.0
    phase_bits: Optional[int] = None   # None: continuous phases

    def __post_init__(self):
        if not 0 < self.rho <= 1:
            raise ValueError("rho must lie in (0, 1]")
        if self.phase_bits is not None and self.phase_bits < 1:
            raise ValueError("phase_bits must be >= 1")

    @classmethod
    def from_config(cls, config: NetworkConfig) -> "RisGainModel":
        return cls(config.rho, config.phase_bits)


@dataclass
class ChannelSet:
    """Static channel snapshot for one scenario."""
    gains: np.ndarray        # (K, L) terrestrial |h_kl|^2
    los: np.ndarray          # (K, L) bool
    shadow_db: np.ndarray    # (K, L)
    pathloss_db: np.ndarray  # (K, L)
    beyond_gains: np.ndarray  # (K,) effective CS-HAPS-UE |h_k|^2


# --- free space and atmosphere ------------------------------------------------

def fspl_db(d, f):
    """Free-space path loss in dB for distance ``d`` (m) and frequency ``f`` (Hz)."""
    return 20.0 * np.log10(d) + 20.0 * np.log10(f) + FSPL_CONST_DB


def dry_air_zenith_attenuation_db(f_hz: float, pressure_hpa: float = 1013.25,
                                  temperature_c: float = 15.0) -> float:
    """Zenith oxygen (dry-air) attenuation, ITU-R P.676 Annex 2 approximation.

    Valid below 54 GHz.  Specific attenuation at the surface times the
    equivalent oxygen height.  Used once to derive the default zenith table.
    """
    f = f_hz / 1e9
    if not 0 < f < 54:
        raise ModelValidityError("model validity: dry-air approximation needs f < 54 GHz")
    rp = pressure_hpa / 1013.0
    rt = 288.0 / (273.0 + temperature_c)

    def phi(a, b, c, d):
        return rp ** a * rt ** b * math.exp(c * (1 - rp) + d * (1 - rt))

    xi1 = phi(0.0717, -1.8132, 0.0156, -1.6515)
    xi2 = phi(0.5146, -4.6368, -0.1921, -5.7416)
    xi3 = phi(0.3414, -6.5851, 0.2130, -8.5854)
    gamma_o = (7.2 * rt ** 2.8 / (f ** 2 + 0.34 * rp ** 2 * rt ** 1.6)
               + 0.62 * xi3 / ((54 - f) ** (1.16 * xi1) + 0.83 * xi2)) * f ** 2 * rp ** 2 * 1e-3
    t1 = 4.64 / (1 + 0.066 * rp ** -2.3) * math.exp(
        -(((f - 59.7) / (2.87 + 12.4 * math.exp(-7.9 * rp))) ** 2))
    t2 = 0.14 * math.exp(2.12 * rp) / ((f - 118.75) ** 2 + 0.031 * math.exp(2.2 * rp))
    t3 = (0.0114 / (1 + 0.14 * rp ** -2.6) * f * (-0.0247 + 0.0001 * f + 1.61e-6 * f ** 2)
          / (1 - 0.0169 * f + 4.1e-5 * f ** 2 + 3.2e-7 * f ** 3))
    h_o = 6.1 / (1 + 0.17 * rp ** -1.1) * (1 + t1 + t2 + t3)
    return gamma_o * h_o


def zenith_attenuation_db(f: float, table: dict) -> float:
    """Zenith attenuation from a frequency table, linear between entries."""
    freqs = np.array(sorted(table))
    if f in table:
        return float(table[f])
    if f < freqs[0] or f > freqs[-1]:
        raise ModelValidityError(
            f"model validity: no zenith attenuation entry covers {f:.6g} Hz"
        )
    vals = np.array([table[x] for x in freqs])
    return float(np.interp(f, freqs, vals))


def atmospheric_attenuation_db(f: float, elevation_deg: float, config: NetworkConfig) -> float:
    """Slant-path dry-air attenuation: zenith value scaled by 1/sin(elevation)."""
    if elevation_deg <= 0:
        raise ValueError("below horizon: elevation must be positive")
    if elevation_deg > 90:
        raise ValueError("elevation above 90 degrees")
    return zenith_attenuation_db(f, config.zenith_atten_db) / math.sin(math.radians(elevation_deg))


def elevation_deg(ground, air) -> float:
    ground = np.asarray(ground, dtype=float)
    air = np.asarray(air, dtype=float)
    horiz = math.hypot(air[0] - ground[0], air[1] - ground[1])
    return math.degrees(math.atan2(air[2] - ground[2], horiz))


# --- terrestrial urban macro ---------------------------------------------------

def los_probability(d_2d, h_ut: float = 1.5):
    """UMa LoS probability (TR 38.901 Table 7.4.2-1)."""
    d = np.asarray(d_2d, dtype=float)
    base = np.where(d <= 18.0, 1.0,
                    18.0 / np.maximum(d, 18.0)
                    + np.exp(-d / 63.0) * (1.0 - 18.0 / np.maximum(d, 18.0)))
    if h_ut > 13.0:
        c = ((h_ut - 13.0) / 10.0) ** 1.5
        base = np.where(d <= 18.0, 1.0,
                        base * (1 + c * 1.25 * (d / 100.0) ** 3 * np.exp(-d / 150.0)))
    out = np.clip(base, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def uma_pathloss_db(d_2d, d_3d, f, los, h_bs: float = 25.0, h_ut: float = 1.5):
    """UMa path loss (TR 38.901 Table 7.4.1-1), vectorised over distances.

    ``d_2d`` below 10 m is clamped to 10 m (and ``d_3d`` recomputed from the
    clamped value).  Beyond 5 km the far-field slope is extrapolated.
    """
    f_ghz = f / 1e9
    if not 0.5 <= f_ghz <= 100.0:
        raise ModelValidityError(f"model validity: UMa needs 0.5-100 GHz, got {f_ghz:g} GHz")
    d2 = np.asarray(d_2d, dtype=float)
    d3 = np.asarray(d_3d, dtype=float)
    short = d2 < UMA_MIN_D2D
    if np.any(short):
        d2 = np.where(short, UMA_MIN_D2D, d2)
        d3 = np.where(short, np.hypot(UMA_MIN_D2D, h_bs - h_ut), d3)
    los = np.asarray(los, dtype=bool)

    d_bp = 4.0 * (h_bs - UMA_HE) * (h_ut - UMA_HE) * f / SPEED_OF_LIGHT
    pl1 = 28.0 + 22.0 * np.log10(d3) + 20.0 * math.log10(f_ghz)
    pl2 = (28.0 + 40.0 * np.log10(d3) + 20.0 * math.log10(f_ghz)
           - 9.0 * math.log10(d_bp ** 2 + (h_bs - h_ut) ** 2))
    pl_los = np.where(d2 <= d_bp, pl1, pl2)
    pl_nlos = 13.54 + 39.08 * np.log10(d3) + 20.0 * math.log10(f_ghz) - 0.6 * (h_ut - 1.5)
    out = np.where(los, pl_los, np.maximum(pl_los, pl_nlos))
    return float(out) if out.ndim == 0 else out


def _link_geometry(bs, ue):
    bs = np.asarray(bs, dtype=float)
    ue = np.asarray(ue, dtype=float)
    d2 = math.hypot(bs[0] - ue[0], bs[1] - ue[1])
    return d2, distance_3d(bs, ue)


def terrestrial_gain(bs, ue, config: NetworkConfig, rng: np.random.Generator,
                     ue_index: int = 0, bs_index: int = 0,
                     force_los: Optional[bool] = None) -> TerrestrialLink:
    """One BS-UE link: draw the LoS state, then the shadowing, then compose.

    The generator is consumed as exactly two uniforms (LoS, then shadowing
    through the inverse normal CDF), the same recipe as ``link_draws``.
    """
    d2, d3 = _link_geometry(bs, ue)
    u, z = _uniform_normal(rng.random(2))
    los = bool(u < los_probability(d2, config.ue_height_m)) if force_los is None else force_los
    pl = uma_pathloss_db(d2, d3, config.carrier_freq_hz, los, config.bs_height_m, config.ue_height_m)
    shadow = float(config.shadow_sigma_db * z)
    gain = db_to_lin(config.g_bs_db + config.g_ue_db - pl - shadow)
    return TerrestrialLink(ue_index, bs_index, d2, d3, los, pl, shadow, gain)


def link_draws(seed: int, bs_index: int, num_ues: int):
    """Uniform and standard-normal draws for every UE towards one BS.

    Keyed by ``(seed, bs_index)`` and indexed by UE, so the draw of link
    ``(k, l)`` never depends on how many BSs exist or on evaluation order.
    """
    rng = substream(seed, STREAM_LINKS, bs_index)
    return _uniform_normal(rng.random((num_ues, 2)))


def _uniform_normal(draws):
    # inverse-CDF normal: one uniform per quantity, so per-link and batched
    # draws consume the stream identically
    draws = np.asarray(draws)
    u = draws[..., 0]
    z = ndtri(np.clip(draws[..., 1], 1e-300, 1.0 - 1e-16))
    return u, z


def terrestrial_channels(topo: Topology, config: NetworkConfig, seed: int):
    """Gain, LoS, shadowing and path-loss matrices, each ``(K, L)``."""
    ues, bss = topo.ues, topo.bs_sites
    k, l = len(ues), len(bss)
    if l == 0:
        empty = np.empty((k, 0))
        return empty, empty.astype(bool), empty.copy(), empty.copy()
    dx = ues[:, None, 0] - bss[None, :, 0]
    dy = ues[:, None, 1] - bss[None, :, 1]
    dz = ues[:, None, 2] - bss[None, :, 2]
    d2 = np.hypot(dx, dy)
    d3 = np.sqrt(d2 ** 2 + dz ** 2)
    u = np.empty((k, l))
    z = np.empty((k, l))
    for j in range(l):
        u[:, j], z[:, j] = link_draws(seed, j, k)
    los = u < los_probability(d2, config.ue_height_m)
    pl = uma_pathloss_db(d2, d3, config.carrier_freq_hz, los, config.bs_height_m, config.ue_height_m)
    shadow = config.shadow_sigma_db * z
    gain = 10.0 ** ((config.g_bs_db + config.g_ue_db - pl - shadow) / 10.0)
    return gain, los, shadow, pl


# --- beyond-cell cascade -------------------------------------------------------

def beyond_cell_gain(ue, topo: Topology, config: NetworkConfig, ue_index: int = 0,
                     attenuation: bool = True) -> BeyondCellLink:
    """Effective CS -> HAPS -> UE power gain, excluding the RIS array gain."""
    f = config.carrier_freq_hz
    d1 = distance_3d(topo.cs_pos, topo.haps_pos)
    d2 = distance_3d(ue, topo.haps_pos)
    pl = float(fspl_db(d1, f) + fspl_db(d2, f))
    att = 0.0
    if attenuation:
        att = (atmospheric_attenuation_db(f, elevation_deg(topo.cs_pos, topo.haps_pos), config)
               + atmospheric_attenuation_db(f, elevation_deg(ue, topo.haps_pos), config))
    gain = db_to_lin(config.g_cs_db + config.g_ue_db - pl - att)
    return BeyondCellLink(ue_index, d1, d2, pl, att, gain)


def beyond_cell_gains(topo: Topology, config: NetworkConfig) -> np.ndarray:
    return np.array([beyond_cell_gain(u, topo, config, i).gain_lin for i, u in enumerate(topo.ues)])


def build_channels(topo: Topology, config: NetworkConfig, seed: int) -> ChannelSet:
    gain, los, shadow, pl = terrestrial_channels(topo, config, seed)
    return ChannelSet(gain, los, shadow, pl, beyond_cell_gains(topo, config))


# --- RIS reflection gain -------------------------------------------------------

def quantize_phases(phases, bits: int):
    """Round phases to the ``2**bits``-level uniform grid on [0, 2pi)."""
    step = 2.0 * math.pi / 2 ** bits
    phases = np.asarray(phases, dtype=float)
    return np.mod(np.round(phases / step) * step, 2.0 * math.pi)


def phase_residuals(ideal_phases, bits: int):
    """Residual alignment error of each unit after quantisation, in [-pi/2^b, pi/2^b]."""
    ideal = np.asarray(ideal_phases, dtype=float)
    err = quantize_phases(ideal, bits) - ideal
    return np.angle(np.exp(1j * err))


def ris_reflection_gain(n_k: int, model: RisGainModel,
                        phase_errors: Optional[Sequence[float]] = None) -> float:
    """Amplitude of the coherent reflection sum for ``n_k`` units.

    With ideal alignment (no residual errors) this is ``rho * n_k``.  Given
    per-unit residual phase errors it is ``|rho * sum(exp(j*err))|``; with
    a finite phase resolution every error must lie within half a step.
    """
    if n_k < 1:
        raise ValueError("n_k must be >= 1")
    if phase_errors is None:
        return model.rho * n_k
    err = np.asarray(phase_errors, dtype=float)
    if err.shape != (n_k,):
        raise ValueError(f"expected {n_k} phase errors, got shape {err.shape}")
    if model.phase_bits is not None:
        half_step = math.pi / 2 ** model.phase_bits
        if np.any(np.abs(err) > half_step * (1 + 1e-12)):
            raise ValueError("phase error exceeds half a quantisation step")
    return float(abs(model.rho * np.exp(1j * err).sum()))
