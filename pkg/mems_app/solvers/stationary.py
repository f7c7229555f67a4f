"""
Stationary – minimal solutions of −Δv = λ f/g(v) by monotone iteration,
the linearised stability eigenvalue, bisection for the pull-in voltage λ*,
and every analytic λ* bound.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.integrate import quad
from scipy.optimize import minimize_scalar
from tqdm import tqdm

from mems_app.config.settings import settings
from mems_app.errors import BracketError, CertificateViolation, OrderingViolation
from mems_app.solvers.eigen import (
    EigenPair,
    ball_eigenfunction,
    cached_eigenpair,
    dilation_product,
    inverse_iteration,
    nu_lower_bound,
    principal_eigenpair,
)
from mems_app.solvers.grid import (
    Field,
    GridDomain,
    Interval,
    apply_laplacian,
    integrate,
    restrict_to_subdomain,
    solve_poisson,
)
from mems_app.solvers.model import (
    Bound,
    ForcingProfile,
    NonlinearityProfile,
    check_hypotheses,
    forcing_stats,
    gap_integral,
    sup_s_g,
)

# ─── logger ─────────────────────────────────────────────────────────────
logger = logging.getLogger(__name__)

# ─── Divergence detection ───────────────────────────────────────────────
STALL_AFTER = 100         # non-contraction is only judged past this iteration
STALL_RUN = 50            # consecutive growing increments that mean "no solution"
MONOTONE_SLACK = 1e-13    # roundoff allowance on v_k <= v_{k+1}
CERTIFICATE_SLACK = 1e-10
BRACKET_FACTOR = 1.05


@dataclass
class StationaryResult:
    converged: bool
    v: Field
    iterations: int
    increment: float
    residual: float | None
    status: str                          # converged | guard | stalled | max-iter
    monotone: bool = True
    supersolution: Field | None = None
    trace: list[tuple[int, float, float]] = field(default_factory=list)

    def trace_rows(self) -> list[dict[str, float]]:
        return [{"k": k, "sup_increment": inc, "max_v": vmax} for k, inc, vmax in self.trace]


def _reaction(f_nodes: np.ndarray, g: NonlinearityProfile, lam: float, v: np.ndarray) -> np.ndarray:
    if lam == 0.0:
        return np.zeros_like(v)
    return lam * f_nodes / g.g(v)


def residual_norm(
    grid: GridDomain, f: ForcingProfile, g: NonlinearityProfile, lam: float, v: Field
) -> float:
    """‖Δ_h v + λ f/g(v)‖_∞."""
    lap = apply_laplacian(grid, v).values
    return float(np.abs(lap + _reaction(f.nodes(grid), g, lam, v.values)).max())


def _check_subsolution(
    grid: GridDomain, f_nodes: np.ndarray, g: NonlinearityProfile, lam: float, s: Field, sign: int
) -> None:
    """sign = +1: −Δψ >= λf/g(ψ) (super); sign = −1: −Δψ <= λf/g(ψ) (sub)."""
    if s.max() >= 1.0:
        raise CertificateViolation("certificate must stay below 1", int(np.argmax(s.values)), s.max())
    gap = sign * (-apply_laplacian(grid, s).values - _reaction(f_nodes, g, lam, s.values))
    scale = 1.0 + np.abs(_reaction(f_nodes, g, lam, s.values)).max()
    worst = int(np.argmin(gap))
    if gap[worst] < -CERTIFICATE_SLACK * scale * grid.N:
        kind = "supersolution" if sign > 0 else "subsolution"
        raise CertificateViolation(
            f"supplied {kind} fails its discrete inequality at node {worst}",
            worst,
            float(gap[worst]),
        )


def minimal_solution(
    grid: GridDomain,
    f: ForcingProfile,
    g: NonlinearityProfile,
    lam: float,
    supersolution: Field | None = None,
    tol: float | None = None,
    max_iter: int | None = None,
    *,
    subsolution: Field | None = None,
    record_trace: bool = False,
) -> StationaryResult:
    """Monotone iteration −Δv_k = λ f/g(v_{k−1}) from v₀ = 0 (or a subsolution).

    Stops as converged when ‖v_k − v_{k−1}‖_∞ < tol; as diverged when an
    iterate reaches 1 − ε_guard or increments keep growing past STALL_AFTER.
    """
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    tol = settings.iteration_tol if tol is None else tol
    max_iter = settings.max_iter if max_iter is None else max_iter
    check_hypotheses(g, f, grid).require(("0.1", "0.2"))

    f_nodes = f.nodes(grid)
    if supersolution is not None:
        _check_subsolution(grid, f_nodes, g, lam, supersolution, sign=+1)
    if subsolution is not None:
        _check_subsolution(grid, f_nodes, g, lam, subsolution, sign=-1)
        v = np.array(subsolution.values)
    else:
        v = np.zeros(grid.N)

    limit = 1.0 - settings.guard_eps
    trace: list[tuple[int, float, float]] = []
    monotone = True
    inc_prev = math.inf
    growing = 0
    inc = math.inf
    status = "max-iter"
    k = 0
    for k in range(1, max_iter + 1):
        v_new = solve_poisson(grid, _reaction(f_nodes, g, lam, v)).values
        delta = v_new - v
        inc = float(np.abs(delta).max())
        if record_trace:
            trace.append((k, inc, float(v_new.max())))
        if delta.min() < -MONOTONE_SLACK * max(1.0, float(np.abs(v_new).max())):
            monotone = False
        if supersolution is not None:
            over = v_new - supersolution.values
            node = int(np.argmax(over))
            if over[node] > CERTIFICATE_SLACK:
                raise CertificateViolation(
                    f"iterate {k} exceeds the supplied supersolution at node {node}",
                    node,
                    float(over[node]),
                )
        if v_new.max() >= limit:
            v = v_new
            status = "guard"
            break
        growing = growing + 1 if (k > STALL_AFTER and inc > inc_prev) else 0
        v = v_new
        if growing >= STALL_RUN:
            status = "stalled"
            break
        if inc < tol:
            status = "converged"
            break
        inc_prev = inc

    converged = status == "converged"
    v_field = Field(grid, v)
    residual = residual_norm(grid, f, g, lam, v_field) if v.max() < 1.0 else None
    if not monotone:
        logger.warning("Monotone iteration lost monotonicity beyond roundoff at lambda=%.6g", lam)
    logger.debug(
        "minimal_solution lambda=%.8g: %s after %d iterations (increment %.3g)", lam, status, k, inc
    )
    return StationaryResult(
        converged=converged,
        v=v_field,
        iterations=k,
        increment=inc,
        residual=residual,
        status=status,
        monotone=monotone,
        supersolution=supersolution,
        trace=trace,
    )


def supersolution_from_enclosure(
    grid: GridDomain, f: ForcingProfile, g: NonlinearityProfile, a: float, A: float
) -> tuple[Field, float]:
    """ψ = A·ψ_{Ω₁} on the dilated enclosure and the largest λ it certifies.

    λ_max = μ_{Ω₁} s_{Ω₁} A g(A) / max f.
    """
    if not 0 < A < 1:
        raise ValueError(f"amplitude A must lie in (0, 1), got {A}")
    shape = grid.shape
    mu, s = dilation_product(shape, a)
    if isinstance(shape, Interval):
        big = shape.length * (1 + 2 * a)
        psi = np.sin(math.pi * (grid.nodes - shape.left + a * shape.length) / big)
    else:
        psi = ball_eigenfunction(shape.n, shape.radius * (1 + a), grid.nodes)
    lam_max = mu * s * A * float(g.g(A)) / forcing_stats(f, grid).sup_norm
    return Field(grid, A * psi), lam_max


# ─── Linearised stability ───────────────────────────────────────────────
def linearized_eigenvalue(
    grid: GridDomain, f: ForcingProfile, g: NonlinearityProfile, lam: float, v: Field
) -> float:
    """μ̃₁: smallest eigenvalue of w ↦ −Δ_h w + λ f g'(v)/g(v)² w."""
    if v.max() >= 1.0:
        raise ValueError("linearisation needs v < 1 at every node")
    potential = lam * f.nodes(grid) * np.asarray(g.dg(v.values)) / np.asarray(g.g(v.values)) ** 2
    mu, _, _ = inverse_iteration(grid, potential, tol=1e-10)
    return mu


@dataclass(frozen=True)
class BranchPoint:
    lam: float
    mu_tilde: float
    v: Field


def lambda_sweep(
    grid: GridDomain, f: ForcingProfile, g: NonlinearityProfile, lambdas: Sequence[float]
) -> list[BranchPoint]:
    """Minimal branch (λ, μ̃₁, v_λ) for increasing λ, warm-started from the previous point."""
    points: list[BranchPoint] = []
    previous: Field | None = None
    for lam in tqdm(sorted(lambdas), desc="Minimal branch", disable=not settings.verbose):
        res = minimal_solution(grid, f, g, lam, subsolution=previous)
        if not res.converged:
            raise ValueError(f"no minimal solution at lambda={lam:.6g} ({res.status})")
        points.append(BranchPoint(lam, linearized_eigenvalue(grid, f, g, lam, res.v), res.v))
        previous = res.v
    return points


# ─── Analytic bounds ────────────────────────────────────────────────────
@dataclass(frozen=True)
class BoundsRecord:
    lower_1_1: Bound
    upper_1_1: Bound
    upper_1_2: Bound
    pohozaev: Bound
    touchdown_threshold: Bound      # λ₁ = (μ₁/δ₁) sup s g(s)
    localized_threshold: Bound      # λ_R on the centred half sub-domain
    nu_hat: float
    best_dilation: float
    mu1: float
    f_phi1: float

    @property
    def upper(self) -> float:
        return min(b.value for b in (self.upper_1_1, self.upper_1_2, self.pohozaev) if b.applicable)

    def as_dict(self) -> dict[str, object]:
        return {
            "lower_1_1": self.lower_1_1.as_dict(),
            "upper_1_1": self.upper_1_1.as_dict(),
            "upper_1_2": self.upper_1_2.as_dict(),
            "pohozaev_1_3": self.pohozaev.as_dict(),
            "lambda_1": self.touchdown_threshold.as_dict(),
            "lambda_R": self.localized_threshold.as_dict(),
            "nu_hat": self.nu_hat,
            "best_dilation": self.best_dilation,
            "mu1": self.mu1,
            "int_f_phi1": self.f_phi1,
        }


def localized_threshold(
    grid: GridDomain, f: ForcingProfile, g: NonlinearityProfile
) -> tuple[Bound, GridDomain, EigenPair | None, float]:
    """λ_R = (μ_R/δ_R) sup s g(s) on the centred half sub-domain."""
    sub = restrict_to_subdomain(grid, grid.shape.size / 4 if grid.shape.kind == "interval" else grid.shape.size / 2)
    delta_r = forcing_stats(f, sub).delta1
    if delta_r <= 0:
        return Bound.skip("delta_R = inf f on the sub-domain is not positive"), sub, None, delta_r
    pair = principal_eigenpair(sub)
    return Bound.of(pair.mu / delta_r * sup_s_g(g).value), sub, pair, delta_r


def lambda_bounds(
    grid: GridDomain,
    f: ForcingProfile,
    g: NonlinearityProfile,
    eigenpair: EigenPair | None = None,
) -> BoundsRecord:
    """Every analytic λ* bound, tagged applicable or not; never raises."""
    pair = eigenpair or cached_eigenpair(grid)
    stats = forcing_stats(f, grid)
    hyp = check_hypotheses(g, f, grid)
    f_phi = integrate(grid, Field(grid, f.nodes(grid)) * pair.phi)
    sup_sg = sup_s_g(g).value
    g0 = float(g.g(0.0))
    nu = nu_lower_bound(grid.shape, settings.dilation_min, settings.dilation_max, settings.dilation_steps)

    if not (hyp.passed("0.1") and hyp.passed("0.2")):
        reason = "hypotheses (0.1)/(0.2) fail"
        lower = upper11 = upper12 = Bound.skip(reason)
    else:
        lower = Bound.of(nu.nu_hat * sup_sg / stats.sup_norm)
        upper11 = Bound.of(pair.mu * g0 / f_phi)
        upper12 = Bound.of(pair.mu * gap_integral(g, 0.0) / f_phi)

    if grid.shape.kind != "ball":
        pohozaev = Bound.skip("Pohozaev bound needs a ball")
    elif stats.delta1 <= 0:
        pohozaev = Bound.skip("Pohozaev bound needs delta_1 > 0")
    else:
        n, R = grid.shape.n, grid.shape.radius
        pohozaev = Bound.of(n * ((n + 2) * stats.sup_norm + 2 * stats.b1) / (stats.delta1**2 * R) * g0)

    if stats.delta1 > 0:
        lam1 = Bound.of(pair.mu / stats.delta1 * sup_sg)
    else:
        lam1 = Bound.skip("lambda_1 needs delta_1 > 0")
    lam_r, _, _, _ = localized_threshold(grid, f, g)

    return BoundsRecord(
        lower_1_1=lower,
        upper_1_1=upper11,
        upper_1_2=upper12,
        pohozaev=pohozaev,
        touchdown_threshold=lam1,
        localized_threshold=lam_r,
        nu_hat=nu.nu_hat,
        best_dilation=nu.best_dilation,
        mu1=pair.mu,
        f_phi1=f_phi,
    )


# ─── Pull-in voltage ────────────────────────────────────────────────────
@dataclass(frozen=True)
class PullInEstimate:
    lambda_lo: float
    lambda_hi: float
    bounds: BoundsRecord
    evaluations: int
    v_lo: Field

    @property
    def estimate(self) -> float:
        return 0.5 * (self.lambda_lo + self.lambda_hi)

    def as_dict(self) -> dict[str, object]:
        return {
            "lambda_lo": self.lambda_lo,
            "lambda_hi": self.lambda_hi,
            "lambda_star_est": self.estimate,
            "evaluations": self.evaluations,
            "bounds": self.bounds.as_dict(),
        }


def pull_in_voltage(
    grid: GridDomain,
    f: ForcingProfile,
    g: NonlinearityProfile,
    tol_lambda: float | None = None,
) -> PullInEstimate:
    """Bisection on λ with predicate "monotone iteration converges"."""
    tol_lambda = settings.bisection_rel_tol if tol_lambda is None else tol_lambda
    check_hypotheses(g, f, grid).require(("0.1", "0.2"))
    bounds = lambda_bounds(grid, f, g)
    lo, hi = 0.0, bounds.upper_1_2.value * BRACKET_FACTOR

    top = minimal_solution(grid, f, g, hi)
    if top.converged:
        raise BracketError(
            f"monotone iteration converges at lambda={hi:.6g}, above the analytic bound"
        )
    v_lo = Field.zeros(grid)
    evaluations = 1
    while hi - lo > tol_lambda * hi:
        mid = 0.5 * (lo + hi)
        res = minimal_solution(grid, f, g, mid, subsolution=v_lo)
        evaluations += 1
        if res.converged:
            lo, v_lo = mid, res.v
        else:
            hi = mid
        logger.debug("Bisection bracket [%.10g, %.10g]", lo, hi)

    logger.info("Pull-in voltage bracket: [%.8g, %.8g] after %d solves", lo, hi, evaluations)
    return PullInEstimate(lambda_lo=lo, lambda_hi=hi, bounds=bounds, evaluations=evaluations, v_lo=v_lo)


def pull_in_shooting(g: NonlinearityProfile, amplitude: float = 1.0, length: float = 1.0) -> float:
    """Independent λ* for u'' + λ c/g(u) = 0 on (0, L) with constant forcing c.

    With s = √(λc)(x − L/2) the symmetric solution of height m reaches zero at
    S(m) = ∫₀^m dw / √(2(Q(m) − Q(w))), Q' = 1/g, so λ(m) = 4 S(m)² / (c L²)
    and λ* = max_m λ(m). The substitution w = m(1 − τ²) removes the endpoint
    singularity.
    """

    def reach(m: float) -> float:
        def integrand(tau: float) -> float:
            if tau == 0.0:
                return math.sqrt(2.0 * m * float(g.g(m)))
            w = m * (1.0 - tau * tau)
            dq, _ = quad(lambda s: 1.0 / float(g.g(s)), w, m, epsabs=1e-14, epsrel=1e-12)
            return 2.0 * m * tau / math.sqrt(2.0 * dq)

        value, _ = quad(integrand, 0.0, 1.0, epsabs=1e-12, epsrel=1e-10, limit=200)
        return value

    res = minimize_scalar(
        lambda m: -4.0 * reach(m) ** 2 / (amplitude * length**2),
        bounds=(1e-6, 1.0 - 1e-6),
        method="bounded",
        options={"xatol": 1e-9},
    )
    return float(-res.fun)


# ─── Monotonicity in f and g ────────────────────────────────────────────
@dataclass(frozen=True)
class OrderingReport:
    min_gap: float
    strict: bool
    node: int
    v_small: Field
    v_big: Field


def minimal_solution_monotonicity_suite(
    grid: GridDomain,
    g: NonlinearityProfile,
    lam: float,
    f_small: ForcingProfile,
    f_big: ForcingProfile,
    g_big: NonlinearityProfile | None = None,
) -> OrderingReport:
    """Minimal solutions are ordered: f_small <= f_big and g >= g_big give v_small <= v_big.

    *g_big* is the nonlinearity on the "big" side (pointwise <= g); it
    defaults to g. Strict ordering is required whenever the data differ.
    """
    g_big = g if g_big is None else g_big
    fs, fb = f_small.nodes(grid), f_big.nodes(grid)
    if np.any(fs > fb):
        raise ValueError("f_small must not exceed f_big")
    levels = np.linspace(0.0, 0.999, 1000)
    gs, gb = np.asarray(g.g(levels)), np.asarray(g_big.g(levels))
    if np.any(gb > gs):
        raise ValueError("g_big must not exceed g on [0, 1)")

    small = minimal_solution(grid, f_small, g, lam)
    big = minimal_solution(grid, f_big, g_big, lam)
    if not (small.converged and big.converged):
        raise ValueError(f"lambda={lam:.6g} is not below both pull-in voltages")

    gap = big.v.values - small.v.values
    node = int(np.argmin(gap))
    differ = bool(np.any(fb != fs) or np.any(gb != gs))
    if gap[node] < -MONOTONE_SLACK:
        raise OrderingViolation(f"v_small > v_big at node {node} (gap {gap[node]:.3g})", node)
    if differ and gap[node] <= 0.0:
        raise OrderingViolation(f"ordering not strict at node {node}", node)
    return OrderingReport(
        min_gap=float(gap[node]), strict=differ, node=node, v_small=small.v, v_big=big.v
    )
