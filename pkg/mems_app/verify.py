"""
Verify – the acceptance suite behind `mems-app verify-all`.

Each check reproduces one claim on the reference setup (unit interval,
f ≡ 1, g = (1 − s)², N from the scenario) and returns a pass/fail record;
the runner prints a rich table and writes verify.json next to summary.json.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Callable

import numpy as np
from rich.console import Console
from rich.table import Table
from scipy.special import jn_zeros
from tqdm import tqdm

from mems_app.errors import MemsError
from mems_app.report import dumps_json
from mems_app.solvers.eigen import principal_eigenpair
from mems_app.solvers.evolution import (
    EvolutionControls,
    comparison_suite,
    convergence_to_stationary,
    dichotomy_probe,
    energy_inequality_check,
    evolve,
    picard_local,
    touchdown_bounds,
)
from mems_app.solvers.grid import Ball, GridDomain, Interval, build_grid
from mems_app.solvers.model import ForcingProfile, NonlinearityProfile
from mems_app.solvers.stationary import (
    PullInEstimate,
    lambda_sweep,
    minimal_solution,
    minimal_solution_monotonicity_suite,
    pull_in_shooting,
    pull_in_voltage,
)

# ─── logger ─────────────────────────────────────────────────────────────
logger = logging.getLogger(__name__)

VERIFY_FILE = "verify.json"
SLACK = 0.02
TOUCHDOWN_LAMBDA = 6.0


@dataclass
class CheckResult:
    criterion: int
    name: str
    passed: bool
    detail: dict[str, Any] = field(default_factory=dict)
    message: str = ""

    def as_dict(self) -> dict[str, Any]:
        return {
            "criterion": self.criterion,
            "passed": self.passed,
            "detail": self.detail,
            "message": self.message,
        }


class _Reference:
    """Shared, lazily computed objects of the reference setup."""

    def __init__(self, N: int) -> None:
        self.N = N
        self.f = ForcingProfile()
        self.g = NonlinearityProfile()

    def interval(self, N: int | None = None) -> GridDomain:
        return build_grid(Interval(1.0), N or self.N)

    @cached_property
    def grid(self) -> GridDomain:
        return self.interval()

    @cached_property
    def pullin(self) -> PullInEstimate:
        return pull_in_voltage(self.grid, self.f, self.g)


# ─── Criteria ───────────────────────────────────────────────────────────
def check_eigen_accuracy(ref: _Reference) -> tuple[bool, dict[str, Any]]:
    mu_int = principal_eigenpair(ref.grid).mu
    mu_disk = principal_eigenpair(build_grid(Ball(2, 1.0), ref.N)).mu
    j01_sq = float(jn_zeros(0, 1)[0]) ** 2
    errors = [abs(principal_eigenpair(ref.interval(n)).mu - math.pi**2) for n in (100, 200, 400)]
    orders = [math.log2(errors[i] / errors[i + 1]) for i in range(2)]
    detail = {
        "mu_interval": mu_int,
        "mu_disk": mu_disk,
        "rel_err_interval": abs(mu_int - math.pi**2) / math.pi**2,
        "rel_err_disk": abs(mu_disk - j01_sq) / j01_sq,
        "orders": orders,
    }
    passed = (
        detail["rel_err_interval"] < 1e-3
        and detail["rel_err_disk"] < 5e-3
        and all(1.8 <= p <= 2.2 for p in orders)
    )
    return passed, detail


def check_pullin_bracket(ref: _Reference) -> tuple[bool, dict[str, Any]]:
    est = ref.pullin
    coarse = pull_in_voltage(ref.interval(200), ref.f, ref.g)
    oracle = pull_in_shooting(ref.g)
    lower = est.bounds.lower_1_1.value
    detail = {
        "lambda_lo": est.lambda_lo,
        "lambda_hi": est.lambda_hi,
        "lower_1_1": lower,
        "upper_1_2": est.bounds.upper_1_2.value,
        "lambda_star_N200": coarse.estimate,
        "shooting": oracle,
    }
    passed = (
        est.lambda_lo >= lower * (1 - SLACK)
        and est.lambda_hi <= math.pi**2 / 3 * (1 + SLACK)
        and est.lambda_hi - est.lambda_lo <= 1e-4 * est.lambda_hi
        and abs(coarse.estimate - est.estimate) < 0.01 * est.estimate
        and abs(est.estimate - oracle) < 0.01 * oracle
    )
    return passed, detail


def check_pohozaev(ref: _Reference) -> tuple[bool, dict[str, Any]]:
    disk = build_grid(Ball(2, 1.0), ref.N)
    est = pull_in_voltage(disk, ref.f, ref.g)
    bounds = est.bounds
    cap = min(bounds.pohozaev.value, bounds.upper_1_2.value)
    detail = {
        "pohozaev": bounds.pohozaev.value,
        "upper_1_2": bounds.upper_1_2.value,
        "lambda_hi": est.lambda_hi,
    }
    passed = abs(bounds.pohozaev.value - 8.0) < 1e-12 and est.lambda_hi <= cap * (1 + SLACK)
    return passed, detail


def check_monotone_iteration(ref: _Reference) -> tuple[bool, dict[str, Any]]:
    res = minimal_solution(ref.grid, ref.f, ref.g, 1.0, record_trace=True)
    zero = minimal_solution(ref.grid, ref.f, ref.g, 0.0)
    scale = 1e-7 * (1.0 + 1.0 / float(ref.g.g(res.v.max())))
    detail = {
        "converged": res.converged,
        "iterations": res.iterations,
        "residual": res.residual,
        "residual_cap": scale,
        "monotone": res.monotone,
        "lambda0_iterations": zero.iterations,
    }
    passed = (
        res.converged
        and res.monotone
        and res.residual <= scale
        and zero.converged
        and zero.iterations == 1
        and zero.v.sup_norm() == 0.0
    )
    return passed, detail


def check_stability_branch(ref: _Reference) -> tuple[bool, dict[str, Any]]:
    lam_star = ref.pullin.estimate
    branch = lambda_sweep(ref.grid, ref.f, ref.g, np.linspace(0.1, 0.95, 10) * lam_star)
    mus = np.array([p.mu_tilde for p in branch])
    increasing = all(
        np.all(b.v.values > a.v.values) for a, b in zip(branch, branch[1:])
    )
    detail = {"lambdas": [p.lam for p in branch], "mu_tilde": mus.tolist()}
    passed = bool(np.all(mus > 0) and np.all(np.diff(mus) < 0) and increasing)
    return passed, detail


def check_monotonicity(ref: _Reference) -> tuple[bool, dict[str, Any]]:
    doubled = ForcingProfile(amplitude=2.0)
    lam = 0.3 * ref.pullin.estimate
    report = minimal_solution_monotonicity_suite(ref.grid, ref.g, lam, ref.f, doubled)
    est_big = pull_in_voltage(ref.grid, doubled, ref.g)
    detail = {
        "lambda": lam,
        "min_gap": report.min_gap,
        "lambda_star_f": ref.pullin.estimate,
        "lambda_star_2f": est_big.estimate,
    }
    passed = report.min_gap > 0 and est_big.lambda_lo <= ref.pullin.lambda_hi
    return passed, detail


def check_comparison(ref: _Reference) -> tuple[bool, dict[str, Any]]:
    lam = 0.5 * ref.pullin.estimate
    ordered = comparison_suite(ref.grid, ref.f, ref.g, lam, 0.0, 0.2, t_end=5.0)
    same = comparison_suite(ref.grid, ref.f, ref.g, lam, 0.1, 0.1, t_end=5.0)
    detail = {"ordered": ordered.as_dict(), "equal_data_identical": same.identical}
    passed = ordered.strict_samples > 0 and ordered.l1_ok and same.identical
    return passed, detail


def check_picard(ref: _Reference) -> tuple[bool, dict[str, Any]]:
    res = picard_local(ref.grid, ref.f, ref.g, 1.0, 0.0, k_iter=8)
    stepped = evolve(
        ref.grid, ref.f, ref.g, 1.0, 0.0, res.T_local,
        EvolutionControls(schedule=np.full(res.steps, res.dt), sample_stride=1, keep_fields=True),
    )
    mismatch = float(np.abs(np.asarray(stepped.fields) - res.iterate).max())
    gaps = res.gaps
    geometric = all(b <= 0.5 * a for a, b in zip(gaps, gaps[1:]) if a > 1e-14)
    tol = 5 * (res.dt + ref.grid.h**2)
    detail = {"T_local": res.T_local, "gaps": list(gaps), "mismatch": mismatch, "tolerance": tol}
    passed = res.T_local == 1 / 16 and geometric and res.final_gap < 1e-6 and mismatch <= tol
    return passed, detail


def check_convergence(ref: _Reference) -> tuple[bool, dict[str, Any]]:
    lam = 0.5 * ref.pullin.estimate
    v_ref = minimal_solution(ref.grid, ref.f, ref.g, lam).v
    rec = convergence_to_stationary(ref.grid, ref.f, ref.g, lam, 0.0, v_ref, t_max=50.0)
    passed = (
        rec.final_distance < 1e-4
        and rec.t_final < 50.0
        and rec.sandwich_ok
        and rec.dissipation_tail < 1e-8
    )
    return passed, rec.as_dict()


def check_touchdown(ref: _Reference) -> tuple[bool, dict[str, Any]]:
    lam = TOUCHDOWN_LAMBDA
    bounds = touchdown_bounds(ref.grid, ref.f, ref.g, lam, 0.0)
    trace = evolve(ref.grid, ref.f, ref.g, lam, 0.0, 1.0)
    energy = energy_inequality_check(trace, ref.grid, ref.f, ref.g, lam)
    observed = trace.touchdown_time
    named = (bounds.bound_3_2, bounds.bound_3_11, bounds.bound_localized)
    detail = {
        "status": trace.status,
        "bracket": trace.touchdown_bracket,
        "bounds": bounds.as_dict(),
        "energy_max_violation": energy.max_violation,
    }
    passed = (
        trace.status == "touchdown"
        and all(b.applicable for b in named)
        and all(observed <= b.value * 1.05 for b in named)
        and energy.passed
    )
    return passed, detail


def check_dichotomy(ref: _Reference) -> tuple[bool, dict[str, Any]]:
    est = ref.pullin
    above = dichotomy_probe(ref.grid, ref.f, ref.g, 1.05 * est.lambda_hi, t_max=200.0)
    lam_below = 0.9 * est.lambda_lo
    v_below = minimal_solution(ref.grid, ref.f, ref.g, lam_below).v
    below = dichotomy_probe(
        ref.grid, ref.f, ref.g, lam_below, t_max=50.0, reference=v_below,
        controls=EvolutionControls(stop_distance=1e-5),
    )
    detail = {"above": above.as_dict(), "below": below.as_dict()}
    passed = (
        above.level_times.get(0.99) is not None
        and above.max_u_nondecreasing
        and below.status == "completed"
        and below.final_distance is not None
        and below.final_distance < 1e-4
    )
    return passed, detail


CRITERIA: list[tuple[int, str, Callable[[_Reference], tuple[bool, dict[str, Any]]]]] = [
    (1, "eigen_accuracy", check_eigen_accuracy),
    (2, "pullin_bound_sandwich", check_pullin_bracket),
    (3, "pohozaev_bound", check_pohozaev),
    (4, "monotone_iteration", check_monotone_iteration),
    (5, "stability_branch", check_stability_branch),
    (6, "minimal_solution_monotonicity", check_monotonicity),
    (7, "comparison_principle", check_comparison),
    (8, "picard_duhamel", check_picard),
    (9, "global_convergence", check_convergence),
    (10, "touchdown_bounds", check_touchdown),
    (11, "dichotomy_probe", check_dichotomy),
]


def run_checks(N: int, only: set[int] | None = None) -> list[CheckResult]:
    ref = _Reference(N)
    results: list[CheckResult] = []
    selected = [c for c in CRITERIA if only is None or c[0] in only]
    for number, name, check in tqdm(selected, desc="Acceptance checks"):
        try:
            passed, detail = check(ref)
            results.append(CheckResult(number, name, bool(passed), detail))
        except (MemsError, ValueError, ArithmeticError) as exc:
            logger.error("Check %s raised: %s", name, exc)
            results.append(CheckResult(number, name, False, message=f"{type(exc).__name__}: {exc}"))
    return results


def render_table(results: list[CheckResult]) -> Table:
    table = Table(title="Acceptance criteria")
    table.add_column("#", justify="right")
    table.add_column("check")
    table.add_column("result")
    table.add_column("note", overflow="fold")
    for r in results:
        mark = "[green]PASS[/]" if r.passed else "[red]FAIL[/]"
        table.add_row(str(r.criterion), r.name, mark, r.message)
    return table


def write_verify_json(results: list[CheckResult], out_dir: str | Path) -> Path:
    out = Path(out_dir)
    path = out / VERIFY_FILE
    payload = {r.name: r.as_dict() for r in results}
    try:
        out.mkdir(parents=True, exist_ok=True)
        path.write_text(dumps_json(payload), encoding="utf-8")
    except OSError as exc:
        raise OSError(f"Cannot write {path}: {exc}") from exc
    return path


def run_verify_all(N: int, out_dir: str | Path, only: set[int] | None = None) -> list[CheckResult]:
    """Run the checks, print the table and write verify.json."""
    results = run_checks(N, only)
    Console(stderr=True).print(render_table(results))
    write_verify_json(results, out_dir)
    failed = [r.name for r in results if not r.passed]
    if failed:
        logger.error("Failed checks: %s", ", ".join(failed))
    else:
        logger.info("✓ all %d acceptance checks passed", len(results))
    return results
