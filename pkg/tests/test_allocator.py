import math

import numpy as np
import pytest

from hrp.allocator import (
    MAX_MIN,
    MIN_RIS,
    PROPORTIONAL,
    SUM_RATE,
    AllocationProblem,
    approx_rates,
    build_max_min_problem,
    build_sum_rate_problem,
    exact_rates,
    min_units_closed_form,
    proportional_allocation,
    refit_powers,
    round_units,
    snr_beyond_cell,
    snr_vector,
    solve,
)
from hrp.channel import RisGainModel, beyond_cell_gain
from hrp.config import NetworkConfig
from hrp.gp import INFEASIBLE, OPTIMAL
from hrp.scenario import Topology

import oracles
from conftest import default_scenario

RTOL = 1e-5


def problem(gains, n_max=8000.0, p_cs_max=0.15, n_box=(1000.0, 10_000.0), p_box=(0.01, 0.1),
            r_th=2e6, b_ue=2e6, weighting="amplitude"):
    """Unit noise and ``rho = 1``: the gains are the SNR coefficients."""
    return AllocationProblem(
        k2_gains=np.asarray(gains, dtype=float), rho=1.0, n_max=n_max,
        n_k_min=n_box[0], n_k_max=n_box[1], p_k_min=p_box[0], p_k_max=p_box[1],
        p_cs_max=p_cs_max, r_th=r_th, b_ue=b_ue, noise=1.0, weighting=weighting,
    )


def continuous_snr(alloc, ap):
    return snr_vector(ap, alloc.p_k_watts, alloc.n_continuous)


# --- SNR and rate -------------------------------------------------------------

def test_snr_unit_example():
    model = RisGainModel(rho=1.0)
    assert snr_beyond_cell(1.0, 2, 1.0, model, 1.0) == pytest.approx(4.0)


def test_snr_quadratic_in_units():
    model = RisGainModel(rho=0.8)
    a = snr_beyond_cell(0.1, 1500, 3e-18, model, 4e-15)
    b = snr_beyond_cell(0.1, 3000, 3e-18, model, 4e-15)
    assert b / a == pytest.approx(4.0, rel=1e-12)


def test_mid_area_rate_at_4000_units():
    cfg = NetworkConfig()
    topo = Topology(np.zeros((1, 3)), np.zeros((0, 3)), cfg.haps_position, cfg.cs_position)
    ue = (5000.0, 5000.0, 1.5)
    link = beyond_cell_gain(ue, topo, cfg)
    # hand evaluation: both hops vertical, so each takes the 2 GHz zenith table entry
    c = 299_792_458.0
    fspl = lambda d: 20 * math.log10(4 * math.pi * d * 2e9 / c)
    gain_db = 43.2 + 0.0 - fspl(20_000.0) - fspl(20_000.0 - 1.5) - 2 * 0.0347
    assert link.gain_lin == pytest.approx(10 ** (gain_db / 10), rel=1e-12)
    assert link.gain_lin == pytest.approx(2.602127287052841e-21, rel=1e-12)

    noise = 10 ** (-174 / 10) * 1e-3 * 2e6
    snr = snr_beyond_cell(0.1, 4000, link.gain_lin, RisGainModel(rho=1.0), noise)
    rate = 2e6 * math.log2(1 + snr)
    assert rate == pytest.approx(1213642.1540776945, rel=1e-9)
    # 4000 units at the per-UE power cap fall short of 2 Mb/s mid-area
    assert rate < 2e6


def test_exact_minus_approximate_rate_is_log_of_inverse_snr():
    ap = problem([1e-6, 4e-6])
    p, n = np.array([0.05, 0.07]), np.array([2000.0, 5000.0])
    gap = exact_rates(ap, p, n) - approx_rates(ap, p, n)
    gamma = snr_vector(ap, p, n)
    assert np.allclose(gap, ap.b_ue * np.log2(1 + 1 / gamma), rtol=1e-12)


def test_threshold_is_exact_shannon_inverse():
    ap = problem([1e-6], r_th=3e6, b_ue=2e6)
    assert ap.gamma_min == pytest.approx(2 ** 1.5 - 1)
    n = min_units_closed_form(ap, [0.1])
    assert exact_rates(ap, [0.1], n)[0] == pytest.approx(3e6, rel=1e-12)


# --- sum-rate -------------------------------------------------------------------

def test_sum_rate_symmetric_split():
    ap = problem([1e-6, 1e-6])
    a = solve(ap, SUM_RATE)
    assert a.status == OPTIMAL
    assert np.allclose(a.p_k_watts, [0.075, 0.075], rtol=RTOL)
    assert np.allclose(a.n_continuous, [4000, 4000], rtol=RTOL)


def test_sum_rate_unequal_channels_still_equal_split():
    ap = problem([1e-6, 4e-6])
    a = solve(ap, SUM_RATE)
    assert np.allclose(a.p_k_watts, [0.075, 0.075], rtol=RTOL)
    assert np.allclose(a.n_continuous, [4000, 4000], rtol=RTOL)
    # oracle: the same optimum value on the grid
    grid, _ = oracles.grid_optimum(ap, SUM_RATE)
    gp_value = build_sum_rate_problem(ap).objective(
        {"p0": a.p_k_watts[0], "p1": a.p_k_watts[1], "n0": a.n_continuous[0], "n1": a.n_continuous[1]})
    assert gp_value == pytest.approx(grid, rel=1e-3)


def test_sum_rate_binding_floor_gets_exactly_threshold():
    ap = problem([3e-7, 4e-6], n_max=10_000)
    a = solve(ap, SUM_RATE)
    gamma = continuous_snr(a, ap)
    assert gamma[0] == pytest.approx(ap.gamma_min, rel=RTOL)
    assert gamma[1] > 2 * ap.gamma_min
    # the other UE takes the remainder of both budgets
    assert a.p_k_watts.sum() == pytest.approx(ap.p_cs_max, rel=RTOL)
    assert a.n_continuous.sum() == pytest.approx(ap.n_max, rel=RTOL)
    assert a.n_continuous[0] > a.n_continuous[1]


# --- max-min --------------------------------------------------------------------

def test_max_min_symmetric_instance():
    ap = problem([1e-6, 1e-6])
    a = solve(ap, MAX_MIN)
    gamma = continuous_snr(a, ap)
    assert np.allclose(a.n_continuous, [4000, 4000], rtol=RTOL)
    assert a.solver_diag["t"] == pytest.approx(gamma[0], rel=RTOL)


def test_max_min_equalizes_when_boxes_inactive():
    ap = problem([1e-6, 4e-6])
    a = solve(ap, MAX_MIN)
    lo_n, hi_n = ap.n_k_min, ap.n_k_max
    assert np.all((a.n_continuous > lo_n * 1.01) & (a.n_continuous < hi_n * 0.99))
    assert np.all((a.p_k_watts > ap.p_k_min * 1.01) & (a.p_k_watts < ap.p_k_max * 0.99))
    gamma = continuous_snr(a, ap)
    assert gamma.max() - gamma.min() <= 1e-4 * gamma.min()
    grid, _ = oracles.grid_optimum(ap, MAX_MIN)
    assert 1 / gamma.min() == pytest.approx(grid, rel=1e-3)


@pytest.mark.parametrize("seed", range(6))
def test_max_min_worst_rate_dominates_sum_rate(seed):
    ap = oracles.random_problem(np.random.default_rng(100 + seed), 3)
    sr, mm = solve(ap, SUM_RATE), solve(ap, MAX_MIN)
    if not (sr.ok and mm.ok):
        pytest.skip("instance infeasible")
    # compare the solved (continuous) allocations; rounding perturbs both
    assert continuous_snr(mm, ap).min() >= continuous_snr(sr, ap).min() * (1 - 1e-6)


# --- min-RIS --------------------------------------------------------------------

def test_min_ris_single_ue_closed_form():
    ap = problem([1e-6], n_max=20_000, p_cs_max=0.2)
    a = solve(ap, MIN_RIS)
    assert a.p_k_watts[0] == pytest.approx(ap.p_k_max, rel=RTOL)
    n_star = math.sqrt(ap.gamma_min * ap.noise / (ap.p_k_max * 1e-6 * 1.0))
    assert a.n_continuous[0] == pytest.approx(n_star, rel=RTOL)
    assert a.n_k_units[0] == math.ceil(n_star)
    assert a.rates_bps[0] >= ap.r_th


def test_min_ris_power_up_one_db_shrinks_units():
    # wide boxes so only the total power cap binds
    kw = dict(n_max=1e6, n_box=(1.0, 1e6), p_box=(1e-4, 10.0))
    gains = [1e-6, 3e-6, 7e-7]
    base = solve(problem(gains, p_cs_max=0.1, **kw), MIN_RIS)
    up = solve(problem(gains, p_cs_max=0.1 * 10 ** 0.1, **kw), MIN_RIS)
    ratio = up.n_continuous.sum() / base.n_continuous.sum()
    assert ratio == pytest.approx(10 ** (-1 / 20), rel=1e-5)


@pytest.mark.parametrize("alpha", [0.5, 2.0, 4.0])
def test_min_ris_power_scaling_law(alpha):
    kw = dict(n_max=1e6, n_box=(1.0, 1e6), p_box=(1e-4, 10.0))
    gains = [2e-6, 5e-7, 1e-6, 8e-6]
    base = solve(problem(gains, p_cs_max=0.1, **kw), MIN_RIS)
    scaled = solve(problem(gains, p_cs_max=0.1 * alpha, **kw), MIN_RIS)
    ratio = scaled.n_continuous.sum() / base.n_continuous.sum()
    assert ratio == pytest.approx(alpha ** -0.5, rel=5e-3)


def test_min_ris_doubled_rate_target():
    r, b = 2e6, 2e6
    base = solve(problem([1e-6], n_max=20_000, p_cs_max=0.2, r_th=r, b_ue=b), MIN_RIS)
    double = solve(problem([1e-6], n_max=20_000, p_cs_max=0.2, r_th=2 * r, b_ue=b), MIN_RIS)
    expected = math.sqrt((2 ** (2 * r / b) - 1) / (2 ** (r / b) - 1))
    assert double.n_continuous[0] / base.n_continuous[0] == pytest.approx(expected, rel=RTOL)


def test_min_ris_rates_meet_floor_after_rounding():
    rng = np.random.default_rng(11)
    for _ in range(10):
        ap = oracles.random_problem(rng, 3)
        a = solve(ap, MIN_RIS)
        if a.ok:
            assert np.all(a.rates_bps >= ap.r_th)


# --- proportional benchmark ------------------------------------------------------

def test_proportional_equal_channels():
    a = proportional_allocation(problem([1e-6, 1e-6, 1e-6], n_max=9000, p_cs_max=0.3))
    assert a.n_k_units.tolist() == [3000, 3000, 3000]
    assert np.allclose(a.p_k_watts, 0.1)


def test_proportional_inverse_amplitude_weights():
    a = proportional_allocation(problem([4e-6, 1e-6], n_max=9000))
    assert a.n_k_units.tolist() == [3000, 6000]


def test_proportional_power_weighting_option():
    a = proportional_allocation(problem([4e-6, 1e-6], n_max=10_000, weighting="power"))
    assert a.n_k_units.tolist() == [2000, 8000]


def test_proportional_respects_budget_and_boxes():
    rng = np.random.default_rng(5)
    for _ in range(50):
        k = int(rng.integers(1, 12))
        gains = 10 ** rng.uniform(-8, -5, size=k)
        ap = problem(gains, n_max=float(rng.integers(k * 1000, k * 12_000)), p_cs_max=0.05 * k)
        a = proportional_allocation(ap)
        assert a.n_k_units.sum() <= ap.n_max
        assert np.all((a.n_k_units >= ap.n_k_min) & (a.n_k_units <= ap.n_k_max))
        assert a.p_k_watts.sum() <= ap.p_cs_max * (1 + 1e-12)


def test_proportional_reports_budget_violation():
    a = proportional_allocation(problem([1e-6] * 10, n_max=5000))
    assert a.status == INFEASIBLE and a.reasons


# --- properties over random instances ---------------------------------------------

def _instances():
    rng = np.random.default_rng(2024)
    return [oracles.random_problem(rng, 2 + i % 3) for i in range(12)]


INSTANCES = _instances()


@pytest.mark.parametrize("i", range(len(INSTANCES)))
def test_resource_conservation(i):
    ap = INSTANCES[i]
    for kind in (SUM_RATE, MAX_MIN, MIN_RIS, PROPORTIONAL):
        a = solve(ap, kind)
        if not a.ok:
            continue
        assert a.n_k_units.sum() <= ap.n_max
        assert a.p_k_watts.sum() <= ap.p_cs_max
        assert np.all((a.n_k_units >= ap.n_k_min) & (a.n_k_units <= ap.n_k_max))
        assert np.all((a.p_k_watts >= ap.p_k_min * (1 - 1e-12)) & (a.p_k_watts <= ap.p_k_max))


def _slack(a):
    """Exact minus approximate sum rate: the tolerance for comparing exact sums."""
    return float((a.rates_bps - a.approx_rates_bps).sum())


@pytest.mark.parametrize("i", range(len(INSTANCES)))
def test_objective_dominance(i):
    ap = INSTANCES[i]
    res = {k: solve(ap, k) for k in (SUM_RATE, MAX_MIN, PROPORTIONAL)}
    if not all(a.ok for a in res.values()):
        pytest.skip("not all objectives succeed")
    sr, mm, pr = (res[k] for k in (SUM_RATE, MAX_MIN, PROPORTIONAL))
    # sum-rate maximizes the approximate sum over a set containing both others
    assert sr.sum_rate >= mm.sum_rate - _slack(mm) - 1e-6 * sr.sum_rate
    assert sr.sum_rate >= pr.sum_rate - _slack(pr) - 1e-6 * sr.sum_rate
    # the benchmark point lies in the max-min feasible set (or below the floor)
    assert mm.worst_rate >= pr.worst_rate * (1 - 1e-6)


def test_max_min_sum_can_trail_benchmark_when_boxes_bind():
    # two weak UEs pinned at n_k_max: max-min starves the strong UE of power,
    # which lifts the worst rate but costs more sum rate than the equal split
    ap = INSTANCES[10]
    mm, pr = solve(ap, MAX_MIN), solve(ap, PROPORTIONAL)
    assert mm.worst_rate > pr.worst_rate
    assert mm.sum_rate < pr.sum_rate - _slack(pr)
    assert mm.p_k_watts[0] == pytest.approx(ap.p_k_min, rel=1e-6)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_objective_dominance_default_scenarios(seed, default_config):
    topo, ch, part = default_scenario(seed)
    ap = AllocationProblem.from_config(ch.beyond_gains[part.k2], default_config)
    res = {k: solve(ap, k) for k in (SUM_RATE, MAX_MIN, PROPORTIONAL)}
    assert all(a.ok for a in res.values())
    sr, mm, pr = (res[k] for k in (SUM_RATE, MAX_MIN, PROPORTIONAL))
    assert sr.sum_rate >= mm.sum_rate - _slack(mm)
    assert mm.sum_rate >= pr.sum_rate - _slack(pr)
    assert mm.worst_rate >= sr.worst_rate


@pytest.mark.parametrize("i", range(len(INSTANCES)))
def test_approximation_slack_bound(i):
    ap = INSTANCES[i]
    for kind in (SUM_RATE, MAX_MIN, MIN_RIS, PROPORTIONAL):
        a = solve(ap, kind)
        if not a.ok:
            continue
        gamma = snr_vector(ap, a.p_k_watts, a.n_k_units)
        gap = a.rates_bps - a.approx_rates_bps
        assert np.all(gap >= 0)
        assert np.all(gap <= ap.b_ue * np.log2(1 + 1 / gamma) * (1 + 1e-12))
        assert np.all(gap <= ap.b_ue / (gamma * math.log(2)) * (1 + 1e-12))


@pytest.mark.parametrize("i", range(len(INSTANCES)))
def test_rounding_never_lowers_rates(i):
    ap = INSTANCES[i]
    for kind in (SUM_RATE, MAX_MIN, MIN_RIS):
        a = solve(ap, kind)
        if not a.ok:
            continue
        ceiled = np.clip(np.ceil(a.n_continuous), ap.n_k_min, ap.n_k_max)
        if np.array_equal(a.n_k_units, ceiled):      # no budget repair happened
            assert np.all(a.rates_bps >= exact_rates(ap, a.p_k_watts, a.n_continuous) * (1 - 1e-12))
        assert a.n_k_units.sum() - a.n_continuous.sum() <= ap.size


def test_rounding_repair_stays_within_budget():
    ap = problem([1e-6, 1e-6], n_max=8000)
    n = round_units(ap, [0.075, 0.075], [4000.4, 3999.9])
    assert n.sum() == 8000
    assert np.all(n >= ap.n_k_min)


def test_power_refit_restores_floor_after_repair():
    # ceilings 5821 + 3191 overflow the 9011-unit budget; the repair leaves
    # UE 1 one unit short, and a small power shift from UE 0 closes the gap
    ap = problem([1.0 / (0.0914415 * 5820.50732966 ** 2), 1.0 / (0.05646039 * 3190.34486191 ** 2)],
                 n_max=9011.389469109901, p_cs_max=0.0914415 + 0.05646039)
    p = np.array([0.0914415, 0.05646039])
    n = round_units(ap, p, [5820.50732966, 3190.34486191])
    assert n.tolist() == [5821, 3190]
    assert exact_rates(ap, p, n)[1] < ap.r_th
    q = refit_powers(ap, p, n)
    assert np.all(exact_rates(ap, q, n) >= ap.r_th)
    assert q.sum() <= ap.p_cs_max
    assert q[0] < p[0] and q[1] > p[1]


def test_power_refit_leaves_satisfied_allocations_alone():
    ap = problem([1e-6, 1e-6])
    p = np.array([0.075, 0.075])
    assert refit_powers(ap, p, np.array([4000, 4000])) is not p
    assert np.array_equal(refit_powers(ap, p, np.array([4000, 4000])), p)


# --- dispatch ---------------------------------------------------------------------

def test_infeasible_up_front():
    ap = problem([1e-9, 1e-6])           # UE 0 misses r_th even at full power and units
    a = solve(ap, SUM_RATE)
    assert a.status == INFEASIBLE
    assert "miss r_th" in a.reasons[0]
    with pytest.raises(ValueError, match="infeasible"):
        build_max_min_problem(ap)


def test_solver_reported_infeasibility_names_constraint():
    # every UE meets its floor alone, but not all at once under the unit budget
    ap = problem([1.2e-7] * 3, n_max=3.2e4 * 0 + 25_000, p_cs_max=0.3)
    a = solve(ap, MIN_RIS)
    assert a.status == INFEASIBLE
    assert a.reasons == ["most violated: ris_budget"]


def test_empty_problem():
    a = solve(problem([]), SUM_RATE)
    assert a.ok and a.total_n == 0


def test_symmetric_instance_gives_symmetric_allocation():
    ap = problem([2e-6, 2e-6, 2e-6], n_max=12_000, p_cs_max=0.2)
    for kind in (SUM_RATE, MAX_MIN, MIN_RIS, PROPORTIONAL):
        a = solve(ap, kind)
        assert np.ptp(a.p_k_watts) <= 1e-6 * a.p_k_watts.max()
        assert np.ptp(a.n_k_units) <= 1
