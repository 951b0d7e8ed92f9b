"""CS power and RIS-unit allocation for the beyond-cell UEs.

Three GP formulations share the same constraint set (rate floors, RIS and
power budgets, per-UE boxes):

* ``sum_rate``: minimize ``prod(1/gamma_k)``, i.e. maximize the high-SNR
  sum rate ``B * sum(log2 gamma_k)``;
* ``max_min``: maximize a common SNR level ``t`` with ``t <= gamma_k``,
  encoded as minimizing ``1/t``;
* ``min_ris``: minimize the total number of reflecting units.

Unit counts are relaxed to reals for the solve and rounded up afterwards.
A ``proportional`` benchmark hands out units by inverse channel strength.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .channel import RisGainModel, ris_reflection_gain
from .config import NetworkConfig, dbm_to_w
from .gp import INFEASIBLE, OPTIMAL, GpProgram, GpSolution, Monomial, Posynomial, gp_solve

SUM_RATE = "sum_rate"
MAX_MIN = "max_min"
MIN_RIS = "min_ris"
PROPORTIONAL = "proportional"
OBJECTIVES = (SUM_RATE, MAX_MIN, MIN_RIS, PROPORTIONAL)
GP_OBJECTIVES = (SUM_RATE, MAX_MIN, MIN_RIS)

OBJECTIVE_LABELS = {
    SUM_RATE: "sum-rate (high-SNR product of SNRs)",
    MAX_MIN: "max-min (t maximized)",
    MIN_RIS: "min-ris (total units minimized)",
    PROPORTIONAL: "proportional benchmark",
}

EMPTY = "empty"


@dataclass
class AllocationProblem:
    k2_gains: np.ndarray      # effective |h_k|^2 of the beyond-cell UEs
    rho: float
    n_max: float
    n_k_min: float
    n_k_max: float
    p_k_min: float            # W
    p_k_max: float            # W
    p_cs_max: float           # W
    r_th: float               # bit/s
    b_ue: float               # Hz
    noise: float              # W, N0 * B_UE
    weighting: str = "amplitude"

    def __post_init__(self):
        self.k2_gains = np.asarray(self.k2_gains, dtype=float)

    @classmethod
    def from_config(cls, k2_gains, config: NetworkConfig) -> "AllocationProblem":
        return cls(
            k2_gains=np.asarray(k2_gains, dtype=float),
            rho=config.rho,
            n_max=float(config.n_max),
            n_k_min=float(config.n_k_min),
            n_k_max=float(config.n_k_max),
            p_k_min=dbm_to_w(config.p_k_min_dbm),
            p_k_max=dbm_to_w(config.p_k_max_dbm),
            p_cs_max=dbm_to_w(config.p_cs_max_dbm),
            r_th=config.r_th_bps,
            b_ue=config.bw_ue_hz,
            noise=config.noise_power_w,
            weighting=config.proportional_weighting,
        )

    @property
    def size(self) -> int:
        return len(self.k2_gains)

    @property
    def gamma_min(self) -> float:
        """Exact Shannon SNR threshold for ``r_th``."""
        return 2.0 ** (self.r_th / self.b_ue) - 1.0

    @property
    def snr_coeffs(self) -> np.ndarray:
        """``gamma_k = coeff_k * p_k * n_k**2``."""
        return self.k2_gains * self.rho ** 2 / self.noise

    def budget_reasons(self) -> list:
        """Violations that make any box-respecting allocation impossible."""
        k = self.size
        out = []
        if k * self.n_k_min > self.n_max:
            out.append(f"sum of n_k_min ({k} x {self.n_k_min:g}) exceeds n_max {self.n_max:g}")
        if k * self.p_k_min > self.p_cs_max * (1 + 1e-12):
            out.append(f"sum of p_k_min exceeds p_cs_max for {k} UEs")
        return out

    def infeasibility_reasons(self) -> list:
        """Necessary conditions for the rate-floored problems."""
        k = self.size
        out = self.budget_reasons()
        if k:
            best = self.snr_coeffs * self.p_k_max * self.n_k_max ** 2
            weak = np.flatnonzero(best < self.gamma_min)
            if len(weak):
                out.append(f"UEs {weak.tolist()} miss r_th even at (p_k_max, n_k_max)")
        return out

    @property
    def feasible(self) -> bool:
        return not self.infeasibility_reasons()


@dataclass
class Allocation:
    objective_kind: str
    status: str
    p_k_watts: np.ndarray = field(default_factory=lambda: np.zeros(0))
    n_k_units: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    rates_bps: np.ndarray = field(default_factory=lambda: np.zeros(0))
    approx_rates_bps: np.ndarray = field(default_factory=lambda: np.zeros(0))
    n_continuous: np.ndarray = field(default_factory=lambda: np.zeros(0))
    solver_diag: dict = field(default_factory=dict)
    reasons: list = field(default_factory=list)

    @property
    def label(self) -> str:
        return OBJECTIVE_LABELS[self.objective_kind]

    @property
    def ok(self) -> bool:
        return self.status in (OPTIMAL, EMPTY)

    @property
    def sum_rate(self) -> float:
        return float(self.rates_bps.sum()) if self.ok else float("nan")

    @property
    def mean_rate(self) -> float:
        return float(self.rates_bps.mean()) if self.ok and len(self.rates_bps) else float("nan")

    @property
    def worst_rate(self) -> float:
        return float(self.rates_bps.min()) if self.ok and len(self.rates_bps) else float("nan")

    @property
    def total_n(self) -> int:
        return int(self.n_k_units.sum()) if self.ok else 0

    @property
    def total_p(self) -> float:
        return float(self.p_k_watts.sum()) if self.ok else 0.0

    @property
    def iterations(self) -> int:
        return int(self.solver_diag.get("iterations", 0))


# --- rate evaluation -----------------------------------------------------------

def snr_beyond_cell(p_k, n_k, gain, model: RisGainModel, noise) -> float:
    """SNR of one beyond-cell UE with ideally aligned phases."""
    phi = ris_reflection_gain(n_k, model)
    return p_k * gain * phi ** 2 / noise


def snr_vector(ap: AllocationProblem, p, n) -> np.ndarray:
    return ap.snr_coeffs * np.asarray(p, dtype=float) * np.asarray(n, dtype=float) ** 2


def exact_rates(ap: AllocationProblem, p, n) -> np.ndarray:
    return ap.b_ue * np.log2(1.0 + snr_vector(ap, p, n))


def approx_rates(ap: AllocationProblem, p, n) -> np.ndarray:
    return ap.b_ue * np.log2(snr_vector(ap, p, n))


# --- GP builders ---------------------------------------------------------------

def _names(k):
    return [f"p{i}" for i in range(k)], [f"n{i}" for i in range(k)]


def _snr_monomial(ap, k, pn, nn) -> Monomial:
    return Monomial.from_log(math.log(ap.snr_coeffs[k]), {pn: 1.0, nn: 2.0})


def _common(ap: AllocationProblem):
    k = ap.size
    pnames, nnames = _names(k)
    cons, names = [], []
    for i in range(k):
        cons.append(ap.gamma_min * _snr_monomial(ap, i, pnames[i], nnames[i]) ** -1)
        names.append(f"rate_floor[{i}]")
    cons.append(Posynomial(Monomial(1.0 / ap.n_max, {n: 1.0}) for n in nnames))
    names.append("ris_budget")
    cons.append(Posynomial(Monomial(1.0 / ap.p_cs_max, {p: 1.0}) for p in pnames))
    names.append("power_budget")
    bounds = {}
    for i in range(k):
        bounds[pnames[i]] = (ap.p_k_min, ap.p_k_max)
        bounds[nnames[i]] = (ap.n_k_min, ap.n_k_max)
    variables = [v for pair in zip(pnames, nnames) for v in pair]
    return cons, names, bounds, variables


def _require_feasible(ap):
    if ap.size == 0:
        raise ValueError("allocation problem has no UEs")
    reasons = ap.infeasibility_reasons()
    if reasons:
        raise ValueError("infeasible allocation problem: " + "; ".join(reasons))


def build_sum_rate_problem(ap: AllocationProblem) -> GpProgram:
    _require_feasible(ap)
    cons, names, bounds, variables = _common(ap)
    pnames, nnames = _names(ap.size)
    exps = {}
    for p, n in zip(pnames, nnames):
        exps[p] = -1.0
        exps[n] = -2.0
    obj = Monomial.from_log(-float(np.log(ap.snr_coeffs).sum()), exps)
    return GpProgram(obj, cons, bounds, variables, names)


def build_max_min_problem(ap: AllocationProblem) -> GpProgram:
    _require_feasible(ap)
    cons, names, bounds, variables = _common(ap)
    pnames, nnames = _names(ap.size)
    t = Monomial.var("t")
    for i in range(ap.size):
        cons.append(t * _snr_monomial(ap, i, pnames[i], nnames[i]) ** -1)
        names.append(f"level[{i}]")
    c = ap.snr_coeffs
    t_lo = 0.5 * min(ap.gamma_min, float(np.min(c)) * ap.p_k_min * ap.n_k_min ** 2)
    t_hi = 2.0 * float(np.max(c)) * ap.p_k_max * ap.n_k_max ** 2
    bounds["t"] = (t_lo, t_hi)
    return GpProgram(t ** -1, cons, bounds, variables + ["t"], names)


def build_level_refinement_problem(ap: AllocationProblem, level: float) -> GpProgram:
    """Sum-rate objective restricted to allocations giving every UE ``γ ≥ level``.

    Used after a max-min solve: any point on the optimal level set is
    max-min optimal, and this picks the one with the largest rate product,
    so resources a box-limited worst UE cannot use are not left idle.
    """
    prog = build_sum_rate_problem(ap)
    pnames, nnames = _names(ap.size)
    cons, names = list(prog.inequality_constraints), list(prog.constraint_names)
    for i in range(ap.size):
        cons.append(level * _snr_monomial(ap, i, pnames[i], nnames[i]) ** -1)
        names.append(f"level[{i}]")
    return GpProgram(prog.objective, cons, prog.variable_bounds, prog.variables, names)


def build_min_ris_problem(ap: AllocationProblem) -> GpProgram:
    _require_feasible(ap)
    cons, names, bounds, variables = _common(ap)
    _, nnames = _names(ap.size)
    obj = Posynomial(Monomial.var(n) for n in nnames)
    return GpProgram(obj, cons, bounds, variables, names)


BUILDERS = {
    SUM_RATE: build_sum_rate_problem,
    MAX_MIN: build_max_min_problem,
    MIN_RIS: build_min_ris_problem,
}


def build_problem(ap: AllocationProblem, kind: str) -> GpProgram:
    try:
        return BUILDERS[kind](ap)
    except KeyError:
        raise ValueError(f"no GP formulation for objective {kind!r}") from None


# --- rounding -----------------------------------------------------------------

def round_units(ap: AllocationProblem, p, n_star) -> np.ndarray:
    """Ceiling of the relaxed unit counts, then budget repair.

    If the rounded total exceeds ``n_max``, one unit at a time is taken from
    the UE with the largest exact-rate slack above ``r_th`` (lowest index on
    ties) that is still above ``n_k_min``.
    """
    n = np.clip(np.ceil(np.asarray(n_star, dtype=float)), ap.n_k_min, ap.n_k_max).astype(np.int64)
    while n.sum() > ap.n_max:
        slack = exact_rates(ap, p, n) - ap.r_th
        slack = np.where(n > ap.n_k_min, slack, -np.inf)
        i = int(np.argmax(slack))
        if not np.isfinite(slack[i]):
            break
        n[i] -= 1
    return n


def refit_powers(ap: AllocationProblem, p, n) -> np.ndarray:
    """Move power to UEs that miss ``r_th`` at their integer unit counts.

    Each short UE is raised to the power it needs at ``n_k``; the extra comes
    first from the unused power budget, then from the other UEs' surplus
    above their own need, proportionally.  Returns ``p`` unchanged when no
    UE is short or the integer point cannot meet every floor.
    """
    p = np.asarray(p, dtype=float).copy()
    # a relative margin keeps a refitted UE from landing a rounding error below r_th
    need = np.maximum(ap.p_k_min,
                      (1 + 1e-9) * ap.gamma_min / (ap.snr_coeffs * np.asarray(n, dtype=float) ** 2))
    short = exact_rates(ap, p, n) < ap.r_th
    if not short.any() or np.any(need > ap.p_k_max) or need.sum() > ap.p_cs_max:
        return p
    extra = float((need - p)[short].sum())
    p[short] = need[short]
    extra -= min(extra, max(0.0, ap.p_cs_max - p.sum() + extra))
    if extra > 0:
        surplus = np.where(short, 0.0, np.maximum(0.0, p - need))
        p -= surplus * (extra / surplus.sum())
    p = np.clip(p, need, ap.p_k_max)
    if p.sum() > ap.p_cs_max:
        p *= ap.p_cs_max / p.sum()
    return p


# --- benchmark -----------------------------------------------------------------

def proportional_weights(gains, weighting: str = "amplitude") -> np.ndarray:
    gains = np.asarray(gains, dtype=float)
    if weighting == "amplitude":
        w = 1.0 / np.sqrt(gains)
    elif weighting == "power":
        w = 1.0 / gains
    else:
        raise ValueError(f"unknown weighting {weighting!r}")
    return w / w.sum()


def proportional_allocation(ap: AllocationProblem) -> Allocation:
    """Units in proportion to inverse channel strength, equal power split.

    Shares are floored, clamped to the per-UE box, and leftover units go to
    the weakest UEs first.  Rates below ``r_th`` are reported, not rejected.
    """
    k = ap.size
    if k == 0:
        return _empty(PROPORTIONAL)
    reasons = ap.budget_reasons()
    if reasons:
        return Allocation(PROPORTIONAL, INFEASIBLE, solver_diag={"status": INFEASIBLE, "iterations": 0},
                          reasons=reasons)
    w = proportional_weights(ap.k2_gains, ap.weighting)
    n = np.clip(np.floor(ap.n_max * w), ap.n_k_min, ap.n_k_max).astype(np.int64)
    order = np.lexsort((np.arange(k), ap.k2_gains))     # weakest first
    residual = int(ap.n_max - n.sum())
    if residual > 0:
        for i in order:
            give = min(residual, int(ap.n_k_max - n[i]))
            n[i] += give
            residual -= give
            if residual == 0:
                break
    elif residual < 0:
        for i in order[::-1]:
            take = min(-residual, int(n[i] - ap.n_k_min))
            n[i] -= take
            residual += take
            if residual == 0:
                break
    p = np.full(k, np.clip(ap.p_cs_max / k, ap.p_k_min, ap.p_k_max))
    return _finish(ap, PROPORTIONAL, OPTIMAL, p, n, n.astype(float), {"status": OPTIMAL, "iterations": 0})


# --- dispatch ------------------------------------------------------------------

def _empty(kind) -> Allocation:
    return Allocation(kind, EMPTY, solver_diag={"status": EMPTY, "iterations": 0})


def _finish(ap, kind, status, p, n, n_cont, diag) -> Allocation:
    return Allocation(
        objective_kind=kind,
        status=status,
        p_k_watts=np.asarray(p, dtype=float),
        n_k_units=np.asarray(n, dtype=np.int64),
        rates_bps=exact_rates(ap, p, n),
        approx_rates_bps=approx_rates(ap, p, n),
        n_continuous=np.asarray(n_cont, dtype=float),
        solver_diag=diag,
    )


# relative back-off of the max-min level when refining on its optimal set
LEVEL_BACKOFF = 1e-7


def solve(ap: AllocationProblem, kind: str, gap_tol: float = 1e-8, kkt_tol: float = 1e-6,
          max_outer: int = 500) -> Allocation:
    """Solve one objective: build the GP, solve, round units up, re-check rates."""
    if kind not in OBJECTIVES:
        raise ValueError(f"unknown objective {kind!r}")
    if ap.size == 0:
        return _empty(kind)
    if kind == PROPORTIONAL:
        return proportional_allocation(ap)
    reasons = ap.infeasibility_reasons()
    if reasons:
        return Allocation(kind, INFEASIBLE, solver_diag={"status": INFEASIBLE, "iterations": 0},
                          reasons=reasons)

    prog = build_problem(ap, kind)
    sol: GpSolution = gp_solve(prog, gap_tol=gap_tol, kkt_tol=kkt_tol, max_outer=max_outer)
    diag = sol.summary()
    if sol.status == INFEASIBLE:
        name = prog.constraint_names[sol.most_violated] if sol.most_violated is not None else "?"
        return Allocation(kind, INFEASIBLE, solver_diag=diag, reasons=[f"most violated: {name}"])

    pnames, nnames = _names(ap.size)
    if kind == MAX_MIN:
        diag["t"] = sol.values["t"]
        refined = gp_solve(build_level_refinement_problem(ap, sol.values["t"] * (1.0 - LEVEL_BACKOFF)),
                           gap_tol=gap_tol, kkt_tol=kkt_tol, max_outer=max_outer)
        diag["refinement_status"] = refined.status
        if refined.status == OPTIMAL:
            sol = refined
    p = np.clip([sol.values[v] for v in pnames], ap.p_k_min, ap.p_k_max)
    if p.sum() > ap.p_cs_max:
        p *= ap.p_cs_max / p.sum()
    n_star = np.array([sol.values[v] for v in nnames])
    n = round_units(ap, p, n_star)
    refit = refit_powers(ap, p, n)
    diag["power_refit"] = bool(np.any(refit != p))
    p = refit
    return _finish(ap, kind, sol.status, p, n, n_star, diag)


def solve_all(ap: AllocationProblem, kinds=OBJECTIVES, **kw) -> dict:
    return {k: solve(ap, k, **kw) for k in kinds}


def min_units_closed_form(ap: AllocationProblem, p) -> np.ndarray:
    """Units each UE needs to just meet ``r_th`` at power ``p`` (no boxes)."""
    return np.sqrt(ap.gamma_min / (ap.snr_coeffs * np.asarray(p, dtype=float)))

