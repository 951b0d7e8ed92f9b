"""End-to-end scenario runs, parameter sweeps and their aggregation.

A scenario is topology -> channels -> partition -> allocation for each
requested objective.  A sweep is the Cartesian product of axis values and
seeds; cells are independent and may run in worker processes, but rows and
aggregates are always produced in sorted (axis value, seed, objective) order.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .allocator import (
    EMPTY,
    OBJECTIVES,
    AllocationProblem,
    solve,
)
from .association import associate, rate_matrix
from .channel import build_channels
from .config import NetworkConfig
from .scenario import build_topology

log = logging.getLogger(__name__)

DEFAULT_SEED_COUNT = 20

# sweep axis -> (config field, converter)
AXES = {
    "bs_count": ("num_bs", int),
    "carrier_freq": ("carrier_freq_hz", float),
    "n_max": ("n_max", int),
    "r_min": ("r_th_bps", float),       # the rate floor of the beyond-cell UEs
    "p_cs_max": ("p_cs_max_dbm", float),
}

DEFAULT_AXIS_VALUES = {
    "bs_count": [1, 2, 4, 8, 12, 16, 20, 24],
    "carrier_freq": [2e9, 10e9, 20e9],
    "n_max": [200_000, 300_000, 400_000, 500_000, 600_000],
    "r_min": [float(v) * 1e6 for v in range(1, 11)],
    "p_cs_max": [30.0, 31.0, 32.0, 33.0, 34.0, 35.0, 36.0],
}

METRICS = (
    "coverage_pct",
    "served_pct",
    "sum_rate_bps",
    "mean_rate_bps",
    "worst_rate_bps",
    "total_n_units",
    "total_p_watts",
)


def default_seeds(base: int = 0, count: int = DEFAULT_SEED_COUNT) -> list:
    return list(range(base, base + count))


def apply_axis(config: NetworkConfig, axis: str, value) -> NetworkConfig:
    """Config for one sweep point.  A BS-count beyond ``l_max`` lifts ``l_max``."""
    if axis not in AXES:
        raise ValueError(f"unknown sweep axis {axis!r}; choose from {sorted(AXES)}")
    name, conv = AXES[axis]
    changes = {name: conv(value)}
    if axis == "bs_count":
        changes["l_max"] = max(config.l_max, int(value))
    return config.replace(**changes)


@dataclass
class ObjectiveResult:
    objective: str
    status: str
    sum_rate_bps: float
    mean_rate_bps: float
    worst_rate_bps: float
    total_n_units: int
    total_p_watts: float
    solver_iters: int
    served_k2: int
    reasons: list = field(default_factory=list)


@dataclass
class ScenarioRecord:
    seed: int
    config_hash: str
    num_ues: int
    k1_count: int
    k2_count: int
    coverage_pct: float
    k1_mean_rate_bps: float
    k1_worst_rate_bps: float
    results: list                   # ObjectiveResult, in requested order
    axis_value: object = None

    def served_pct(self, res: ObjectiveResult) -> float:
        if not self.num_ues:
            return 0.0
        return 100.0 * (self.k1_count + res.served_k2) / self.num_ues

    def rows(self) -> list:
        """One flat row per objective (the CSV schema plus the config hash)."""
        out = []
        for r in self.results:
            out.append({
                "seed": self.seed,
                "axis_value": self.axis_value,
                "objective": r.objective,
                "k1_count": self.k1_count,
                "k2_count": self.k2_count,
                "coverage_pct": self.coverage_pct,
                "served_pct": self.served_pct(r),
                "sum_rate_bps": r.sum_rate_bps,
                "mean_rate_bps": r.mean_rate_bps,
                "worst_rate_bps": r.worst_rate_bps,
                "total_n_units": r.total_n_units,
                "total_p_watts": r.total_p_watts,
                "solver_status": r.status,
                "solver_iters": r.solver_iters,
                "config_hash": self.config_hash,
                "k1_mean_rate_bps": self.k1_mean_rate_bps,
                "k1_worst_rate_bps": self.k1_worst_rate_bps,
            })
        return out

    def result(self, objective: str) -> ObjectiveResult:
        for r in self.results:
            if r.objective == objective:
                return r
        raise KeyError(objective)


def _objective_result(ap: AllocationProblem, kind: str, config: NetworkConfig) -> ObjectiveResult:
    alloc = solve(ap, kind, gap_tol=config.gp_gap_tol, kkt_tol=config.gp_kkt_tol,
                  max_outer=config.gp_max_outer)
    served = int(np.count_nonzero(alloc.rates_bps >= ap.r_th)) if alloc.ok else 0
    return ObjectiveResult(
        objective=kind,
        status=alloc.status,
        sum_rate_bps=alloc.sum_rate,
        mean_rate_bps=alloc.mean_rate,
        worst_rate_bps=alloc.worst_rate,
        total_n_units=alloc.total_n,
        total_p_watts=alloc.total_p,
        solver_iters=alloc.iterations,
        served_k2=served,
        reasons=list(alloc.reasons),
    )


def run_scenario(config: NetworkConfig, seed: int | None = None, objectives=OBJECTIVES,
                 axis_value=None) -> ScenarioRecord:
    """Full pipeline for one ``(config, seed)``; infeasibility stays per objective."""
    seed = config.seed if seed is None else int(seed)
    for kind in objectives:
        if kind not in OBJECTIVES:
            raise ValueError(f"unknown objective {kind!r}")
    topo = build_topology(config, seed)
    channels = build_channels(topo, config, seed)
    if config.num_bs:
        part = associate(rate_matrix(channels.gains, config), channels.gains, config)
        k1_rates = np.array([rate for *_, rate in part.k1])
        k2 = part.k2
    else:
        k1_rates = np.zeros(0)
        k2 = list(range(topo.num_ues))
    k1_count = len(k1_rates)

    results = []
    if objectives:
        ap = AllocationProblem.from_config(channels.beyond_gains[k2], config)
        results = [_objective_result(ap, kind, config) for kind in objectives]
    rec = ScenarioRecord(
        seed=seed,
        config_hash=config.config_hash(),
        num_ues=topo.num_ues,
        k1_count=k1_count,
        k2_count=len(k2),
        coverage_pct=100.0 * k1_count / topo.num_ues,
        k1_mean_rate_bps=float(k1_rates.mean()) if k1_count else float("nan"),
        k1_worst_rate_bps=float(k1_rates.min()) if k1_count else float("nan"),
        results=results,
        axis_value=axis_value,
    )
    log.debug("seed %d: |K1|=%d |K2|=%d %s", seed, k1_count, len(k2),
              {r.objective: r.status for r in results})
    return rec


@dataclass
class SweepSpec:
    axis: str
    values: list
    seeds: list
    objectives: list

    def __post_init__(self):
        if self.axis not in AXES:
            raise ValueError(f"unknown sweep axis {self.axis!r}; choose from {sorted(AXES)}")
        if not self.values or not self.seeds or not self.objectives:
            raise ValueError("sweep values, seeds and objectives must be nonempty")
        bad = [o for o in self.objectives if o not in OBJECTIVES]
        if bad:
            raise ValueError(f"unknown objectives {bad}")
        _, conv = AXES[self.axis]
        self.values = [conv(v) for v in self.values]
        self.seeds = [int(s) for s in self.seeds]

    @property
    def cells(self) -> list:
        return [(v, s) for v in sorted(set(self.values)) for s in sorted(set(self.seeds))]


def _run_cell(args):
    base, axis, value, seed, objectives = args
    cfg = apply_axis(base, axis, value)
    return run_scenario(cfg, seed, objectives, axis_value=value)


def sweep(spec: SweepSpec, base: NetworkConfig, jobs: int = 1) -> list:
    """Records for every (value, seed) cell, sorted by value then seed."""
    for v in sorted(set(spec.values)):
        apply_axis(base, spec.axis, v)          # fail fast on invalid sweep points
    tasks = [(base, spec.axis, v, s, tuple(spec.objectives)) for v, s in spec.cells]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_run_cell, tasks))
    else:
        records = [_run_cell(t) for t in tasks]
    return sorted(records, key=lambda r: (r.axis_value, r.seed))


def _mean_std(values):
    vals = sorted(v for v in values if not math.isnan(v))
    if not vals:
        return float("nan"), float("nan")
    mean = math.fsum(vals) / len(vals)
    var = math.fsum((v - mean) ** 2 for v in vals) / len(vals)
    return mean, math.sqrt(var)


def aggregate(records) -> list:
    """Mean/std of each metric per (axis value, objective) over seeds.

    Values are sorted before summation with ``math.fsum`` so the result does
    not depend on the order the seeds were run in.  Failed solves contribute
    to ``n_ok``/``n_infeasible`` counts but not to the rate/resource means.
    """
    groups: dict = {}
    for rec in records:
        for row in rec.rows():
            groups.setdefault((row["axis_value"], row["objective"]), []).append(row)
    out = []
    for (axis_value, objective) in sorted(groups, key=lambda k: (_sort_key(k[0]), k[1])):
        rows = groups[(axis_value, objective)]
        agg = {"axis_value": axis_value, "objective": objective, "n_seeds": len(rows)}
        ok = [r for r in rows if r["solver_status"] in ("optimal", EMPTY)]
        agg["n_ok"] = len(ok)
        agg["n_infeasible"] = sum(r["solver_status"] == "infeasible" for r in rows)
        for m in METRICS:
            source = rows if m in ("coverage_pct",) else ok
            mean, std = _mean_std([float(r[m]) for r in source])
            agg[f"{m}_mean"] = mean
            agg[f"{m}_std"] = std
        for m in ("k1_mean_rate_bps", "k1_worst_rate_bps"):
            agg[f"{m}_mean"], agg[f"{m}_std"] = _mean_std([float(r[m]) for r in rows])
        out.append(agg)
    return out


def coverage_by_value(records) -> dict:
    """Seed-averaged coverage % keyed by axis value (objective-independent)."""
    groups: dict = {}
    for rec in records:
        groups.setdefault(rec.axis_value, []).append(rec.coverage_pct)
    return {v: _mean_std(groups[v])[0] for v in sorted(groups, key=_sort_key)}


def _sort_key(v):
    return (0, v) if v is not None else (-1, 0)
