import math

import numpy as np
import pandas as pd
import pytest

from mems_app.errors import CertificateViolation, StepFailure
from mems_app.solvers import evolution
from mems_app.solvers.eigen import cached_eigenpair
from mems_app.solvers.evolution import (
    EvolutionControls,
    EvolutionTrace,
    comparison_suite,
    convergence_to_stationary,
    dichotomy_probe,
    energy_inequality_check,
    evolve,
    picard_local,
    remaining_time,
    touchdown_bounds,
    touchdown_report,
    uniform_schedule,
)
from mems_app.solvers.grid import Field, Interval, build_grid
from mems_app.solvers.model import ForcingProfile, NonlinearityProfile, gap_integral
from mems_app.solvers.stationary import lambda_bounds, minimal_solution


@pytest.fixture(scope="module")
def touchdown_run(unit_interval, classic_gap, uniform_forcing):
    return evolve(unit_interval, uniform_forcing, classic_gap, 6.0, 0.0, 1.0)


@pytest.fixture(scope="module")
def v_ref(coarse_interval, classic_gap, uniform_forcing):
    return minimal_solution(coarse_interval, uniform_forcing, classic_gap, 0.7).v


def _sine(grid, amplitude):
    return Field.from_function(grid, lambda x: amplitude * np.sin(math.pi * x))


def test_uniform_schedule_covers_the_interval():
    steps = uniform_schedule(1.0, 0.3)
    assert len(steps) == 4
    assert steps.sum() == pytest.approx(1.0)
    assert len(uniform_schedule(0.1, 1e-3)) == 100


# ─── time stepping ──────────────────────────────────────────────────────
def test_heat_decay(coarse_interval, classic_gap, uniform_forcing):
    trace = evolve(coarse_interval, uniform_forcing, classic_gap, 0.0, _sine(coarse_interval, 1.0), 0.1)
    assert trace.status == "completed"
    assert trace.t[-1] == pytest.approx(0.1)
    assert trace.max_u[-1] == pytest.approx(math.exp(-(math.pi**2) * 0.1), abs=5e-3)
    assert all(b > a for a, b in zip(trace.t, trace.t[1:]))


def test_trace_frame_columns(coarse_interval, classic_gap, uniform_forcing, tmp_path):
    trace = evolve(coarse_interval, uniform_forcing, classic_gap, 0.5, 0.0, 0.2)
    frame = trace.to_frame()
    assert list(frame.columns) == ["t", "max_u", "E", "dist_to_ref", "dt"]
    assert frame["E"].max() < 1.0
    assert frame["dist_to_ref"].isna().all()
    path = tmp_path / "trace.csv"
    trace.to_csv(path)
    assert len(pd.read_csv(path)) == len(trace.t)


def test_evolution_is_deterministic(coarse_interval, classic_gap, uniform_forcing):
    a = evolve(coarse_interval, uniform_forcing, classic_gap, 3.0, 0.0, 0.5)
    b = evolve(coarse_interval, uniform_forcing, classic_gap, 3.0, 0.0, 0.5)
    assert a.t == b.t and a.max_u == b.max_u and a.energy == b.energy
    assert a.touchdown_bracket == b.touchdown_bracket


def test_invalid_inputs(coarse_interval, classic_gap, uniform_forcing):
    with pytest.raises(ValueError):
        evolve(coarse_interval, uniform_forcing, classic_gap, 1.0, 1.0, 0.1)
    with pytest.raises(ValueError):
        evolve(coarse_interval, uniform_forcing, classic_gap, 1.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        evolve(coarse_interval, uniform_forcing, classic_gap, -1.0, 0.0, 0.1)


def test_step_failure_raises():
    trace = EvolutionTrace(t=[0.0], max_u=[0.5], status="step-failure")
    with pytest.raises(StepFailure):
        trace.raise_for_status()
    EvolutionTrace(t=[0.0], max_u=[0.5], status="touchdown").raise_for_status()


def test_below_pull_in_settles_on_minimal_solution(coarse_interval, classic_gap, uniform_forcing, v_ref):
    trace = evolve(
        coarse_interval, uniform_forcing, classic_gap, 0.7, 0.0, 5.0, EvolutionControls(reference=v_ref)
    )
    assert trace.status == "completed"
    assert trace.dist_to_ref[-1] < 1e-4
    assert np.all(trace.final.values <= v_ref.values + 1e-9)


def test_stationary_field_stays_put(coarse_interval, classic_gap, uniform_forcing, v_ref):
    trace = evolve(
        coarse_interval, uniform_forcing, classic_gap, 0.7, v_ref, 0.5, EvolutionControls(reference=v_ref)
    )
    assert max(trace.dist_to_ref) < 1e-8


def test_far_above_pull_in_touches_down(coarse_interval, classic_gap, uniform_forcing):
    lam = 2 * lambda_bounds(coarse_interval, uniform_forcing, classic_gap).upper_1_2.value
    trace = evolve(coarse_interval, uniform_forcing, classic_gap, lam, 0.0, 1.0)
    assert trace.status == "touchdown"
    lo, hi = trace.touchdown_bracket
    assert 0 < lo < hi < 1.0
    assert trace.touchdown_time == hi


@pytest.mark.parametrize("p", [1.0, 2.0, 4.0, 6.0])
def test_quench_ends_as_touchdown_for_any_power(unit_interval, uniform_forcing, p):
    gap = NonlinearityProfile("power", p=p)
    coarse = evolve(unit_interval, uniform_forcing, gap, 6.0, 0.0, 5.0)
    assert coarse.status == "touchdown"
    coarse.raise_for_status()
    lo, hi = coarse.touchdown_bracket
    assert coarse.step_t[-1] < lo < hi

    # a smaller dt_min follows the same steps further; it must stop inside the window
    fine = evolve(unit_interval, uniform_forcing, gap, 6.0, 0.0, 5.0, EvolutionControls(dt_min=1e-15))
    assert fine.status == "touchdown"
    assert fine.max_u[-1] > coarse.max_u[-1]
    assert lo <= fine.step_t[-1] <= hi
    fine_lo, fine_hi = fine.touchdown_bracket
    assert lo <= fine_lo and fine_hi <= hi


def test_remaining_time_window(coarse_interval, classic_gap, uniform_forcing):
    f_nodes = uniform_forcing.nodes(coarse_interval)
    u = _sine(coarse_interval, 0.9).values
    m = float(u.max())
    lo, hi = remaining_time(coarse_interval, f_nodes, classic_gap, 6.0, 1.0, u)
    assert lo == pytest.approx(gap_integral(classic_gap, m) / 6.0, rel=1e-12)
    net = 6.0 - (1 - m) ** 2 * 0.9 * math.pi**2
    assert hi == pytest.approx(2 * gap_integral(classic_gap, m) / net, rel=1e-3)
    # a plateau next to the wall: diffusion beats the reaction at the first maximiser
    flat = Field.constant(coarse_interval, 0.9).values
    assert remaining_time(coarse_interval, f_nodes, classic_gap, 6.0, 1.0, flat) is None
    assert remaining_time(coarse_interval, f_nodes, classic_gap, 0.0, 1.0, u) is None


def test_touchdown_time_decreases_with_voltage(coarse_interval, classic_gap, uniform_forcing):
    times = [
        evolve(coarse_interval, uniform_forcing, classic_gap, lam, 0.0, 1.0).touchdown_time
        for lam in (4.0, 6.0, 8.0)
    ]
    assert all(t is not None for t in times)
    assert times[0] >= times[1] >= times[2]


# ─── touchdown bounds ───────────────────────────────────────────────────
def test_touchdown_at_six_respects_the_bounds(unit_interval, classic_gap, uniform_forcing, touchdown_run):
    bounds = touchdown_bounds(unit_interval, uniform_forcing, classic_gap, 6.0, 0.0)
    mu = cached_eigenpair(unit_interval).mu
    assert bounds.e0 == 0.0
    assert bounds.bound_3_2.value == pytest.approx((1 / 3) / (6.0 - mu * 4 / 27), rel=1e-9)
    assert bounds.bound_3_2.value == pytest.approx(0.0735, rel=1e-2)
    assert bounds.bound_3_11.value == pytest.approx(0.1230, rel=1e-2)
    assert bounds.lambda_R.value == pytest.approx(5.85, rel=1e-2)
    assert bounds.bound_localized.applicable
    assert not bounds.bound_fast.applicable
    assert bounds.a0 == pytest.approx(0.33, abs=0.01)

    assert touchdown_run.status == "touchdown"
    lo, hi = touchdown_run.touchdown_bracket
    # the spatially constant ODE solution is a supersolution: touchdown no earlier than 1/18
    assert hi >= 1 / 18
    report = touchdown_report(touchdown_run, bounds)
    assert report.dominance() and all(report.dominance().values())
    assert report.as_dict()["bracket"] == [lo, hi]


def test_bounds_applicability(coarse_interval, classic_gap, uniform_forcing):
    below = touchdown_bounds(coarse_interval, uniform_forcing, classic_gap, 3.0, 0.0)
    assert below.bound_3_2.applicable
    assert not below.bound_3_11.applicable
    assert not below.bound_localized.applicable

    raised = touchdown_bounds(coarse_interval, uniform_forcing, classic_gap, 6.0, 0.5)
    assert raised.e0 == pytest.approx(0.5)
    assert raised.bound_fast.applicable
    assert raised.bound_fast.value == pytest.approx(0.05)
    assert set(raised.applicable()) >= {"bound_3_2", "bound_3_11", "bound_fast"}
    # the half sub-interval has μ_R ≈ 4π², which pushes its threshold above 1/2
    assert raised.a1 == pytest.approx(0.57, abs=0.02)
    assert not raised.bound_localized_fast.applicable


def test_localized_fast_bound(coarse_interval, classic_gap, uniform_forcing):
    bounds = touchdown_bounds(coarse_interval, uniform_forcing, classic_gap, 6.0, 0.8)
    assert bounds.bound_localized_fast.applicable
    assert bounds.bound_localized_fast.value == pytest.approx(0.02, rel=1e-9)
    assert bounds.as_dict()["bound_localized_fast"]["applicable"]

    trace = evolve(coarse_interval, uniform_forcing, classic_gap, 6.0, 0.8, 1.0)
    assert trace.status == "touchdown"
    dominance = touchdown_report(trace, bounds).dominance()
    assert dominance["bound_localized_fast"]
    assert all(dominance.values())

    negative = touchdown_bounds(coarse_interval, uniform_forcing, classic_gap, 6.0, -0.1)
    assert not negative.bound_localized_fast.applicable


def test_bounds_never_raise_on_zero_forcing(coarse_interval, classic_gap):
    bounds = touchdown_bounds(coarse_interval, ForcingProfile(amplitude=0.0), classic_gap, 6.0, 0.0)
    assert bounds.applicable() == {}
    assert bounds.lambda_prime == math.inf


# ─── energy inequality ──────────────────────────────────────────────────
def test_energy_inequality_along_touchdown(unit_interval, classic_gap, uniform_forcing, touchdown_run):
    check = energy_inequality_check(touchdown_run, unit_interval, uniform_forcing, classic_gap, 6.0)
    assert check.samples > 0
    assert check.passed


def test_energy_check_flags_a_falling_energy(coarse_interval, classic_gap, uniform_forcing):
    fake = EvolutionTrace(step_t=[0.0, 0.1, 0.2], step_energy=[0.5, 0.3, 0.1])
    check = energy_inequality_check(fake, coarse_interval, uniform_forcing, classic_gap, 6.0)
    assert not check.passed
    assert check.worst_time == pytest.approx(0.1)


def test_energy_check_needs_a_step(coarse_interval, classic_gap, uniform_forcing):
    empty = EvolutionTrace(step_t=[0.0], step_energy=[0.0])
    check = energy_inequality_check(empty, coarse_interval, uniform_forcing, classic_gap, 1.0)
    assert check.passed and check.samples == 0


def test_energy_records_every_step(coarse_interval, classic_gap, uniform_forcing):
    trace = evolve(coarse_interval, uniform_forcing, classic_gap, 0.0, _sine(coarse_interval, 0.5), 0.05)
    assert len(trace.step_t) == trace.steps + 1
    assert trace.step_energy[0] == trace.energy[0]
    assert trace.step_energy[-1] == pytest.approx(trace.energy[-1], rel=1e-15)
    # pure heat flow: the stepper meets the inequality with equality
    check = energy_inequality_check(trace, coarse_interval, uniform_forcing, classic_gap, 0.0)
    assert check.passed
    assert check.samples == trace.steps
    assert abs(check.max_raw_gap) < 1e-6


# ─── Picard iteration ───────────────────────────────────────────────────
def test_picard_on_local_interval(coarse_interval, classic_gap, uniform_forcing):
    res = picard_local(coarse_interval, uniform_forcing, classic_gap, 1.0, 0.0)
    assert res.T_local == pytest.approx(1 / 16)
    assert res.ceiling == 0.5
    assert res.retries == 0
    assert res.iterate.shape == (res.steps + 1, coarse_interval.N)
    assert all(b < a for a, b in zip(res.gaps, res.gaps[1:]))
    assert res.final_gap < 1e-6
    assert res.iterate.max() < res.ceiling

    stepped = evolve(
        coarse_interval,
        uniform_forcing,
        classic_gap,
        1.0,
        0.0,
        res.T_local,
        EvolutionControls(schedule=np.full(res.steps, res.dt), sample_stride=1, keep_fields=True),
    )
    assert np.abs(np.asarray(stepped.fields) - res.iterate).max() < 1e-6


def test_picard_needs_positive_voltage(coarse_interval, classic_gap, uniform_forcing):
    with pytest.raises(ValueError):
        picard_local(coarse_interval, uniform_forcing, classic_gap, 0.0, 0.0)
    with pytest.raises(ValueError):
        picard_local(coarse_interval, uniform_forcing, classic_gap, 1.0, 0.0, k_iter=0)


def test_picard_ceiling_violation_after_retries(classic_gap, uniform_forcing, monkeypatch):
    grid = build_grid(Interval(1.0), 32)
    monkeypatch.setattr(evolution, "local_existence_time", lambda g, lam, f_sup, a: 1.0)
    with pytest.raises(CertificateViolation):
        picard_local(grid, uniform_forcing, classic_gap, 6.0, 0.0, k_iter=2)


# ─── comparison and convergence ─────────────────────────────────────────
def test_comparison_orders_distinct_data(coarse_interval, classic_gap, uniform_forcing):
    rep = comparison_suite(
        coarse_interval, uniform_forcing, classic_gap, 0.7, 0.0, _sine(coarse_interval, 0.2), 0.5
    )
    assert rep.strict_samples > 0
    assert rep.min_gap >= 0.0
    assert rep.l1_ok
    assert not rep.identical
    assert rep.b > 0


def test_comparison_of_equal_data_is_identical(coarse_interval, classic_gap, uniform_forcing):
    rep = comparison_suite(coarse_interval, uniform_forcing, classic_gap, 0.7, 0.1, 0.1, 0.2)
    assert rep.identical
    assert rep.strict_samples == 0
    assert rep.min_gap == 0.0


def test_comparison_rejects_unordered_data(coarse_interval, classic_gap, uniform_forcing):
    with pytest.raises(ValueError):
        comparison_suite(coarse_interval, uniform_forcing, classic_gap, 0.7, 0.2, 0.1, 0.2)


def test_convergence_from_rest(coarse_interval, classic_gap, uniform_forcing, v_ref):
    rec = convergence_to_stationary(coarse_interval, uniform_forcing, classic_gap, 0.7, 0.0, v_ref)
    assert rec.converged
    assert rec.sandwich_ok
    assert rec.t_final < 50.0
    assert rec.dissipation_tail < 1e-8
    assert rec.decay_rate is not None and rec.decay_rate > 0


def test_heat_decay_rate_is_principal_eigenvalue(coarse_interval, classic_gap, uniform_forcing):
    mu = cached_eigenpair(coarse_interval).mu
    rec = convergence_to_stationary(
        coarse_interval,
        uniform_forcing,
        classic_gap,
        0.0,
        _sine(coarse_interval, -0.5),
        Field.zeros(coarse_interval),
    )
    assert rec.converged and rec.sandwich_ok
    assert rec.decay_rate == pytest.approx(mu, rel=2e-2)


def test_convergence_rejects_data_above_reference(coarse_interval, classic_gap, uniform_forcing, v_ref):
    with pytest.raises(ValueError):
        convergence_to_stationary(coarse_interval, uniform_forcing, classic_gap, 0.7, 0.9, v_ref)


# ─── dichotomy ──────────────────────────────────────────────────────────
def test_dichotomy_above_pull_in(coarse_interval, classic_gap, uniform_forcing):
    lam = 2 * lambda_bounds(coarse_interval, uniform_forcing, classic_gap).upper_1_2.value
    rep = dichotomy_probe(coarse_interval, uniform_forcing, classic_gap, lam, 1.0)
    assert rep.status == "touchdown"
    assert rep.touchdown_time is not None
    t90, t99 = rep.level_times[0.9], rep.level_times[0.99]
    assert t90 is not None and t99 is not None and t90 <= t99
    assert rep.max_u_nondecreasing


def test_dichotomy_below_pull_in(coarse_interval, classic_gap, uniform_forcing, v_ref):
    rep = dichotomy_probe(coarse_interval, uniform_forcing, classic_gap, 0.7, 5.0, reference=v_ref)
    assert rep.status == "completed"
    assert rep.touchdown_time is None
    assert rep.level_times[0.9] is None
    assert rep.final_distance < 1e-3
