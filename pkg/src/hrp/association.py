"""Within-cell SINR/rates, UE-BS association under the rate threshold and the
per-BS subcarrier cap, and the resulting within-cell / beyond-cell split."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import NetworkConfig


@dataclass
class Partition:
    k1: list            # (ue_index, bs_index, subcarrier_index, rate_bps), sorted by UE
    k2: list            # ue indices, ascending
    per_bs_load: list

    @property
    def coverage(self) -> float:
        total = len(self.k1) + len(self.k2)
        return len(self.k1) / total if total else 0.0

    def check(self, num_ues: int, cap: int, r_min: float) -> None:
        seen = [ue for ue, *_ in self.k1] + list(self.k2)
        assert sorted(seen) == list(range(num_ues)), "partition does not cover UEs exactly once"
        assert all(load <= cap for load in self.per_bs_load), "load cap violated"
        assert all(rate >= r_min for *_, rate in self.k1), "K1 member below R_min"


def rate_bps(gamma, bw):
    """Shannon rate ``bw * log2(1 + gamma)``."""
    return bw * np.log2(1.0 + np.asarray(gamma, dtype=float))


def sinr_within_cell(k: int, l: int, gains, config: NetworkConfig) -> float:
    """SINR of UE ``k`` served by BS ``l``; every other BS interferes at full load."""
    g = np.asarray(gains, dtype=float)[k]
    p = config.bs_subcarrier_power_w
    signal = p * g[l]
    interference = p * (g.sum() - g[l])
    return float(signal / (interference + config.noise_power_w))


def sinr_matrix(gains, config: NetworkConfig) -> np.ndarray:
    g = np.asarray(gains, dtype=float)
    p = config.bs_subcarrier_power_w
    total = g.sum(axis=1, keepdims=True)
    return p * g / (p * (total - g) + config.noise_power_w)


def rate_matrix(gains, config: NetworkConfig) -> np.ndarray:
    return rate_bps(sinr_matrix(gains, config), config.bw_ue_hz)


def associate(rates, gains, config: NetworkConfig) -> Partition:
    """Best-rate association with lowest-gain eviction from overloaded BSs.

    A UE joins the BS with the highest rate among those meeting ``R_min``.
    A BS holding more than ``B_BS/B_UE`` UEs drops its lowest serving-gain
    members (ties: higher UE index dropped first) to the beyond-cell set.
    Subcarriers are handed out in descending serving-gain order.
    """
    rates = np.asarray(rates, dtype=float)
    gains = np.asarray(gains, dtype=float)
    k_total = rates.shape[0]
    n_bs = rates.shape[1] if rates.ndim == 2 else 0
    cap = config.num_subcarriers
    r_min = config.r_min_bps

    members: dict[int, list[int]] = {l: [] for l in range(n_bs)}
    k2 = []
    for k in range(k_total):
        row = rates[k] if n_bs else np.empty(0)
        ok = row >= r_min
        if not ok.any():
            k2.append(k)
            continue
        masked = np.where(ok, row, -np.inf)
        members[int(np.argmax(masked))].append(k)  # argmax: lowest index on ties

    k1 = []
    load = [0] * n_bs
    for l in range(n_bs):
        # strongest first; among equal gains the lower UE index is kept
        ranked = sorted(members[l], key=lambda k: (-gains[k, l], k))
        kept, dropped = ranked[:cap], ranked[cap:]
        k2.extend(dropped)
        load[l] = len(kept)
        for sub, k in enumerate(kept):
            k1.append((k, l, sub, float(rates[k, l])))

    k1.sort()
    return Partition(k1=k1, k2=sorted(k2), per_bs_load=load)
