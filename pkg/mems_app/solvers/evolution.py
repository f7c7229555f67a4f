"""
Evolution – semi-implicit time stepping of u_t = Δu + λ f/g(u) with touchdown
detection, the Picard local-existence scheme, touchdown-time bounds and the
comparison / convergence / dichotomy checks built on completed traces.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
import pandas as pd
from scipy.optimize import brentq

from mems_app.config.settings import settings
from mems_app.errors import CertificateViolation, OrderingViolation, StepFailure
from mems_app.solvers.eigen import EigenPair, cached_eigenpair
from mems_app.solvers.grid import (
    CSV_FLOAT_FORMAT,
    Field,
    GridDomain,
    as_field,
    implicit_diffusion_step,
    integrate,
    transfer,
)
from mems_app.solvers.model import (
    Bound,
    ForcingProfile,
    NonlinearityProfile,
    check_hypotheses,
    forcing_stats,
    gap_integral,
    gap_integral_nodes,
    sup_s_g,
)
from mems_app.solvers.stationary import localized_threshold

# ─── logger ─────────────────────────────────────────────────────────────
logger = logging.getLogger(__name__)

# ─── Stepping constants ─────────────────────────────────────────────────
REACTION_EPS = 1e-14          # ε in the reaction step limit
REMAINING_MARGIN = 2.0        # upper end of the remaining-time window
SAMPLE_RISE = 0.02            # extra sample whenever max u rises this much
TIME_EPS = 1e-13

# ─── Check tolerances ───────────────────────────────────────────────────
ORDER_TOL = 1e-14
STRICT_RESOLUTION = 1e-10     # strict ordering only judged above this gap
L1_TOL = 1e-8
SANDWICH_TOL = 1e-9
ENERGY_C = 2.0
ROUNDING_ULPS = 64.0
PICARD_RETRIES = 5
FAST_RATE = 10.0              # right-hand side level in the fast-touchdown bound
BOUND_SLACK = 1.05


# ─── Controls and trace ─────────────────────────────────────────────────
@dataclass(frozen=True)
class EvolutionControls:
    """Step-size and sampling controls; None means "derive from settings and grid".

    A forced *schedule* of step sizes replaces the adaptive rule, so two runs
    can share one time grid; *sample_stride* then samples every k-th step.
    """

    dt_max: float | None = None
    dt_min: float = field(default_factory=lambda: settings.dt_min)
    reaction_cfl: float = field(default_factory=lambda: settings.reaction_cfl)
    touchdown_eps: float = field(default_factory=lambda: settings.touchdown_eps)
    quench_horizon: float = field(default_factory=lambda: settings.quench_horizon)
    sample_interval: float | None = None
    schedule: np.ndarray | None = None
    sample_stride: int | None = None
    keep_fields: bool = False
    reference: Field | None = None
    stop_distance: float | None = None

    def resolved_dt_max(self, grid: GridDomain) -> float:
        if self.dt_max is not None:
            return self.dt_max
        return settings.dt_max_factor * grid.shape.size**2


def uniform_schedule(t_end: float, dt: float) -> np.ndarray:
    """ceil(t_end/dt) equal steps covering [0, t_end]."""
    n = max(1, math.ceil(t_end / dt - 1e-9))
    return np.full(n, t_end / n)


@dataclass
class EvolutionTrace:
    t: list[float] = field(default_factory=list)
    max_u: list[float] = field(default_factory=list)
    energy: list[float] = field(default_factory=list)
    dist_to_ref: list[float | None] = field(default_factory=list)
    dt: list[float] = field(default_factory=list)
    dissipation: list[float] = field(default_factory=list)
    sample_steps: list[int] = field(default_factory=list)
    fields: list[np.ndarray] = field(default_factory=list)
    dt_history: list[float] = field(default_factory=list)
    step_t: list[float] = field(default_factory=list)        # t and E after every accepted step
    step_energy: list[float] = field(default_factory=list)
    status: str = "completed"           # completed | touchdown | step-failure
    touchdown_bracket: tuple[float, float] | None = None
    final: Field | None = None
    lam: float = 0.0

    @property
    def steps(self) -> int:
        return len(self.dt_history)

    @property
    def touchdown_time(self) -> float | None:
        return None if self.touchdown_bracket is None else self.touchdown_bracket[1]

    def raise_for_status(self) -> None:
        if self.status == "step-failure":
            raise StepFailure(
                f"time step fell below dt_min at t={self.t[-1]:.6g} with max u={self.max_u[-1]:.6g}"
            )

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "t": self.t,
                "max_u": self.max_u,
                "E": self.energy,
                "dist_to_ref": [np.nan if d is None else d for d in self.dist_to_ref],
                "dt": self.dt,
            },
            columns=["t", "max_u", "E", "dist_to_ref", "dt"],
        )

    def to_csv(self, path) -> None:
        try:
            self.to_frame().to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT)
        except OSError as exc:
            raise OSError(f"Cannot write trace CSV to {path}: {exc}") from exc


def _reaction_dt(g: NonlinearityProfile, lam: float, f_sup: float, m: float, c_r: float) -> float:
    """c_r · g(m)² / (λ‖f‖|g'(m)| + ε)."""
    if lam == 0.0 or f_sup == 0.0:
        return math.inf
    gm = float(g.g(m))
    return c_r * gm * gm / (lam * f_sup * abs(float(g.dg(m))) + REACTION_EPS)


def remaining_time(
    grid: GridDomain,
    f_nodes: np.ndarray,
    g: NonlinearityProfile,
    lam: float,
    f_sup: float,
    u: np.ndarray,
) -> tuple[float, float] | None:
    """Window (lo, hi) for the time left before max u reaches 1, or None without a net upward push.

    lo = H(m)/(λ‖f‖): the spatially constant solution of w' = λ‖f‖/g(w) from m
    lies above u. hi takes the reaction at the maximiser net of its diffusion,
    λ f_i + g(m) min(Δ_h u_i, 0), with a factor REMAINING_MARGIN.
    """
    if lam == 0.0 or f_sup == 0.0:
        return None
    i = int(np.argmax(u))
    m = float(u[i])
    if m >= 1.0:
        return 0.0, 0.0
    lap = -float(grid.stiffness_matvec(u)[i]) / float(grid.weights[i])
    rate = lam * float(f_nodes[i]) + float(g.g(m)) * min(lap, 0.0)
    if rate <= 0.0:
        return None
    h_m = gap_integral(g, m)
    return h_m / (lam * f_sup), REMAINING_MARGIN * h_m / rate


def evolve(
    grid: GridDomain,
    f: ForcingProfile,
    g: NonlinearityProfile,
    lam: float,
    u0: Field | float,
    t_end: float,
    controls: EvolutionControls | None = None,
    eigenpair: EigenPair | None = None,
) -> EvolutionTrace:
    """Semi-implicit stepping: (W + dt K) u^{n+1} = W (u^n + dt λ f/g(u^n)).

    Stops at t_end, at touchdown, or once the distance to the reference
    field drops below *stop_distance* (checked at samples only).
    """
    controls = controls or EvolutionControls()
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    if not t_end > 0:
        raise ValueError(f"t_end must be positive, got {t_end}")
    check_hypotheses(g, f, grid).require(("0.1", "0.2"))
    start = as_field(grid, u0)
    if start.max() >= 1.0:
        raise ValueError(f"initial data must stay below 1 (max u0 = {start.max():.6g})")

    phi = (eigenpair or cached_eigenpair(grid)).phi.values
    f_nodes = f.nodes(grid)
    f_sup = forcing_stats(f, grid).sup_norm
    dt_max = controls.resolved_dt_max(grid)
    sample_dt = controls.sample_interval or settings.sample_factor * dt_max
    schedule = None if controls.schedule is None else np.asarray(controls.schedule, dtype=float)
    stride = controls.sample_stride
    ref = controls.reference.values if controls.reference is not None else None
    td_level = 1.0 - controls.touchdown_eps

    trace = EvolutionTrace(lam=lam)
    u = np.array(start.values)
    t = 0.0
    step = 0
    dissipation = 0.0
    last_dt = 0.0

    def record() -> float | None:
        dist = None if ref is None else float(np.abs(u - ref).max())
        trace.t.append(t)
        trace.max_u.append(float(u.max()))
        trace.energy.append(float(np.dot(grid.weights, u * phi)))
        trace.dist_to_ref.append(dist)
        trace.dt.append(last_dt)
        trace.dissipation.append(dissipation)
        trace.sample_steps.append(step)
        if controls.keep_fields:
            trace.fields.append(u.copy())
        return dist

    def reaction(x: np.ndarray) -> np.ndarray:
        return lam * f_nodes / g.g(x) if lam else np.zeros_like(x)

    def classify_underflow() -> None:
        # the step limit fell below dt_min: touchdown only if the time left is below resolution
        window = remaining_time(grid, f_nodes, g, lam, f_sup, u)
        if window is not None and window[0] <= controls.quench_horizon * controls.dt_min:
            trace.status = "touchdown"
            trace.touchdown_bracket = (t + window[0], t + window[1])
        else:
            trace.status = "step-failure"

    record()
    trace.step_t.append(t)
    trace.step_energy.append(trace.energy[0])
    next_sample = sample_dt
    last_sampled_max = float(u.max())

    while t_end - t > TIME_EPS * max(1.0, t_end):
        if schedule is not None:
            if step >= len(schedule):
                break
            dt = float(schedule[step])
        else:
            dt = min(dt_max, _reaction_dt(g, lam, f_sup, float(u.max()), controls.reaction_cfl))
            if dt < controls.dt_min:
                classify_underflow()
                break
            dt = min(dt, t_end - t)

        u_new = implicit_diffusion_step(grid, dt, u + dt * reaction(u))
        while not (np.all(np.isfinite(u_new)) and u_new.max() < 1.0):
            if schedule is not None:
                break
            dt *= 0.5
            if dt < controls.dt_min:
                break
            u_new = implicit_diffusion_step(grid, dt, u + dt * reaction(u))
        if not (np.all(np.isfinite(u_new)) and u_new.max() < 1.0):
            if schedule is not None:
                # a forced step overshoots 1: touchdown lies in (t, t + dt)
                trace.status = "touchdown"
                trace.touchdown_bracket = (t, t + dt)
            else:
                classify_underflow()
            break

        dissipation += float(np.dot(grid.weights, (u_new - u) ** 2)) / dt
        t += dt
        u = u_new
        step += 1
        last_dt = dt
        trace.dt_history.append(dt)
        trace.step_t.append(t)
        trace.step_energy.append(float(np.dot(grid.weights, u * phi)))

        if u.max() >= td_level:
            window = remaining_time(grid, f_nodes, g, lam, f_sup, u)
            trace.status = "touchdown"
            trace.touchdown_bracket = (t, t + dt) if window is None else (t + window[0], t + window[1])
            record()
            break

        if stride is not None:
            due = step % stride == 0
        else:
            due = t >= next_sample * (1 - 1e-12) or u.max() - last_sampled_max >= SAMPLE_RISE
        if due:
            dist = record()
            last_sampled_max = float(u.max())
            while next_sample <= t * (1 + 1e-12):
                next_sample += sample_dt
            if controls.stop_distance is not None and dist is not None and dist < controls.stop_distance:
                break

    if trace.t[-1] != t:
        record()
    trace.final = Field(grid, u)

    if trace.status == "touchdown":
        logger.info("Touchdown at lambda=%.6g in [%.10g, %.10g]", lam, *trace.touchdown_bracket)
    elif trace.status == "step-failure":
        logger.warning("Step failure at lambda=%.6g, t=%.6g (max u %.6g)", lam, t, u.max())
    else:
        logger.debug("Evolution completed at lambda=%.6g: t=%.6g, %d steps", lam, t, step)
    return trace


# ─── Picard local existence ─────────────────────────────────────────────
@dataclass(frozen=True)
class PicardResult:
    T_local: float
    a: float
    ceiling: float
    dt: float
    steps: int
    gaps: tuple[float, ...]
    iterate: np.ndarray           # (steps + 1, N): last iterate at every time level
    retries: int

    @property
    def final_gap(self) -> float:
        return self.gaps[-1]

    def as_dict(self) -> dict[str, object]:
        return {
            "T_local": self.T_local,
            "a": self.a,
            "ceiling": self.ceiling,
            "dt": self.dt,
            "steps": self.steps,
            "iterate_gaps": list(self.gaps),
            "retries": self.retries,
            "bound_certificate": True,
        }


def local_existence_time(g: NonlinearityProfile, lam: float, f_sup: float, a: float) -> float:
    """T = (1 − a) g((1 + a)/2) / (4 λ ‖f‖)."""
    return (1.0 - a) * float(g.g(0.5 * (1.0 + a))) / (4.0 * lam * f_sup)


def _picard_sweeps(
    grid: GridDomain,
    f_nodes: np.ndarray,
    g: NonlinearityProfile,
    lam: float,
    u0: np.ndarray,
    k_iter: int,
    dt: float,
    steps: int,
    ceiling: float,
) -> tuple[np.ndarray, list[float]]:
    # u_0(t): the heat evolution of u0
    current = np.empty((steps + 1, grid.N))
    current[0] = u0
    for j in range(steps):
        current[j + 1] = implicit_diffusion_step(grid, dt, current[j])

    gaps: list[float] = []
    for k in range(1, k_iter + 1):
        nxt = np.empty_like(current)
        nxt[0] = u0
        for j in range(steps):
            source = lam * f_nodes / g.g(current[j])
            nxt[j + 1] = implicit_diffusion_step(grid, dt, nxt[j] + dt * source)
        level, node = np.unravel_index(int(np.argmax(nxt)), nxt.shape)
        if nxt[level, node] > ceiling:
            raise CertificateViolation(
                f"Picard iterate {k} exceeds (1+a)/2 at level {level}",
                int(node),
                float(nxt[level, node]),
            )
        gaps.append(float(np.abs(nxt - current).max()))
        current = nxt
    return current, gaps


def picard_local(
    grid: GridDomain,
    f: ForcingProfile,
    g: NonlinearityProfile,
    lam: float,
    u0: Field | float,
    k_iter: int = 8,
    dt_max: float | None = None,
) -> PicardResult:
    """Picard sweeps of the linear heat problem with the frozen source λ f/g(u_k) on [0, T_local]."""
    if lam <= 0:
        raise ValueError("picard_local needs lambda > 0 (the local time is infinite at lambda = 0)")
    if k_iter < 1:
        raise ValueError(f"k_iter must be >= 1, got {k_iter}")
    start = as_field(grid, u0)
    a = max(0.0, start.max())
    if a >= 1.0:
        raise ValueError(f"initial data must stay below 1 (a = {a:.6g})")
    check_hypotheses(g, f, grid).require(("0.1", "0.2"))

    f_sup = forcing_stats(f, grid).sup_norm
    ceiling = 0.5 * (1.0 + a)
    T = local_existence_time(g, lam, f_sup, a)
    cap = dt_max or settings.dt_max_factor * grid.shape.size**2
    steps = max(1, math.ceil(T / cap))

    for retry in range(PICARD_RETRIES + 1):
        dt = T / steps
        try:
            iterate, gaps = _picard_sweeps(grid, f.nodes(grid), g, lam, start.values, k_iter, dt, steps, ceiling)
        except CertificateViolation as exc:
            if retry == PICARD_RETRIES:
                raise
            logger.warning("%s; halving dt to %.3g", exc, dt / 2)
            steps *= 2
            continue
        logger.info("Picard: T_local=%.6g, %d steps, final gap %.3g", T, steps, gaps[-1])
        return PicardResult(
            T_local=T, a=a, ceiling=ceiling, dt=dt, steps=steps, gaps=tuple(gaps), iterate=iterate, retries=retry
        )
    raise AssertionError("unreachable")


# ─── Touchdown-time bounds ──────────────────────────────────────────────
@dataclass(frozen=True)
class TouchdownBounds:
    e0: float
    lambda_1: Bound
    lambda_prime: float
    lambda_R: Bound
    bound_3_2: Bound
    bound_3_11: Bound
    bound_localized: Bound
    bound_fast: Bound
    bound_localized_fast: Bound
    a0: float | None
    a1: float | None

    def applicable(self) -> dict[str, float]:
        named = {
            "bound_3_2": self.bound_3_2,
            "bound_3_11": self.bound_3_11,
            "bound_localized": self.bound_localized,
            "bound_fast": self.bound_fast,
            "bound_localized_fast": self.bound_localized_fast,
        }
        return {k: b.value for k, b in named.items() if b.applicable}

    def as_dict(self) -> dict[str, object]:
        return {
            "E0": self.e0,
            "lambda_1": self.lambda_1.as_dict(),
            "lambda_prime": self.lambda_prime,
            "lambda_R": self.lambda_R.as_dict(),
            "bound_3_2": self.bound_3_2.as_dict(),
            "bound_3_11": self.bound_3_11.as_dict(),
            "bound_localized": self.bound_localized.as_dict(),
            "bound_fast": self.bound_fast.as_dict(),
            "bound_localized_fast": self.bound_localized_fast.as_dict(),
            "a0": self.a0,
            "a1": self.a1,
        }


def fast_threshold(g: NonlinearityProfile, lam: float, mu: float, delta1: float) -> float | None:
    """Smallest a₀ in [0, 1) with −μy + λδ₁/g(y) >= 10 on [a₀, 1); None if g stays away from 0."""
    if not g.vanishes_at_one or lam <= 0 or delta1 <= 0:
        return None

    def excess(y: float) -> float:
        return -mu * y + lam * delta1 / float(g.g(y)) - FAST_RATE

    ys = 1.0 - np.geomspace(1.0, 1e-12, 2000)
    vals = np.array([excess(float(y)) for y in ys])
    negative = np.nonzero(vals < 0)[0]
    if negative.size == 0:
        return 0.0
    last = int(negative[-1])
    if last == len(ys) - 1:
        return None
    return float(brentq(excess, ys[last], ys[last + 1], xtol=1e-14))


def touchdown_bounds(
    grid: GridDomain,
    f: ForcingProfile,
    g: NonlinearityProfile,
    lam: float,
    u0: Field | float,
    eigenpair: EigenPair | None = None,
) -> TouchdownBounds:
    """Every touchdown-time bound with its applicability; never raises on a failed hypothesis."""
    pair = eigenpair or cached_eigenpair(grid)
    start = as_field(grid, u0)
    stats = forcing_stats(f, grid)
    hyp = check_hypotheses(g, f, grid)
    mu = pair.mu
    e0 = integrate(grid, start * pair.phi)
    sup_sg = sup_s_g(g).value
    f_phi = integrate(grid, Field(grid, f.nodes(grid)) * pair.phi)

    # (3.2): needs δ₁ > 0, (1/g)'' >= 0 and λ > λ₁
    if stats.delta1 > 0:
        lam1 = Bound.of(mu / stats.delta1 * sup_sg)
    else:
        lam1 = Bound.skip("(1.4) fails: delta_1 = 0")
    if not lam1.applicable:
        b32 = Bound.skip(lam1.reason)
    elif not hyp.passed("1.10"):
        b32 = Bound.skip("(1.10) fails")
    elif lam <= lam1.value:
        b32 = Bound.skip(f"lambda <= lambda_1 = {lam1.value:.6g}")
    else:
        b32 = Bound.of(gap_integral(g, e0) / ((lam - lam1.value) * stats.delta1))

    # (3.11): λ > λ′
    lam_prime = mu * gap_integral(g, 0.0) / f_phi if f_phi > 0 else math.inf
    if lam <= lam_prime:
        b311 = Bound.skip(f"lambda <= lambda' = {lam_prime:.6g}")
    else:
        h_u0 = float(np.dot(grid.weights, gap_integral_nodes(g, start.values) * pair.phi.values))
        b311 = Bound.of(h_u0 / ((lam - lam_prime) * f_phi))

    # localized bounds on the centred half sub-domain
    lam_r, sub, sub_pair, delta_r = localized_threshold(grid, f, g)
    e1 = integrate(sub, transfer(start, sub) * sub_pair.phi) if sub_pair is not None else 0.0
    if not lam_r.applicable:
        b_loc = Bound.skip(lam_r.reason)
    elif start.min() < 0:
        b_loc = Bound.skip("localized bound needs u0 >= 0")
    elif not hyp.passed("1.10"):
        b_loc = Bound.skip("(1.10) fails")
    elif lam <= lam_r.value:
        b_loc = Bound.skip(f"lambda <= lambda_R = {lam_r.value:.6g}")
    else:
        b_loc = Bound.of(gap_integral(g, e1) / ((lam - lam_r.value) * delta_r))

    a0 = fast_threshold(g, lam, mu, stats.delta1) if hyp.passed("1.10") else None
    if a0 is None:
        b_fast = Bound.skip("(3.3), (1.10) or delta_1 > 0 fails")
    elif e0 < a0:
        b_fast = Bound.skip(f"E(0) = {e0:.6g} below a0 = {a0:.6g}")
    else:
        b_fast = Bound.of((1.0 - e0) / FAST_RATE)

    # same threshold argument for E_R(t) = ∫_{B_R} u φ_R, valid for any λ > 0
    a1 = None
    if sub_pair is not None and hyp.passed("1.10"):
        a1 = fast_threshold(g, lam, sub_pair.mu, delta_r)
    if a1 is None:
        b_loc_fast = Bound.skip("(3.3), (1.10) or delta_R > 0 fails")
    elif start.min() < 0:
        b_loc_fast = Bound.skip("localized bound needs u0 >= 0")
    elif e1 < a1:
        b_loc_fast = Bound.skip(f"E_R(0) = {e1:.6g} below a1 = {a1:.6g}")
    else:
        b_loc_fast = Bound.of((1.0 - e1) / FAST_RATE)

    return TouchdownBounds(
        e0=e0,
        lambda_1=lam1,
        lambda_prime=lam_prime,
        lambda_R=lam_r,
        bound_3_2=b32,
        bound_3_11=b311,
        bound_localized=b_loc,
        bound_fast=b_fast,
        bound_localized_fast=b_loc_fast,
        a0=a0,
        a1=a1,
    )


@dataclass(frozen=True)
class TouchdownReport:
    bounds: TouchdownBounds
    status: str
    bracket: tuple[float, float] | None

    def dominance(self, slack: float = BOUND_SLACK) -> dict[str, bool]:
        """Per applicable bound: observed upper bracket <= bound · slack."""
        if self.bracket is None:
            return {}
        return {k: self.bracket[1] <= v * slack for k, v in self.bounds.applicable().items()}

    def as_dict(self) -> dict[str, object]:
        return {
            "status": self.status,
            "bracket": None if self.bracket is None else list(self.bracket),
            "bounds": self.bounds.as_dict(),
            "dominance": self.dominance(),
        }


def touchdown_report(trace: EvolutionTrace, bounds: TouchdownBounds) -> TouchdownReport:
    return TouchdownReport(bounds=bounds, status=trace.status, bracket=trace.touchdown_bracket)


# ─── Energy inequality ──────────────────────────────────────────────────
@dataclass(frozen=True)
class EnergyCheck:
    max_violation: float          # max over steps of rhs − slope − tol; <= 0 means no violation
    worst_time: float | None
    max_raw_gap: float            # same without the tolerance
    samples: int

    @property
    def passed(self) -> bool:
        return self.max_violation <= 0.0


def energy_inequality_check(
    trace: EvolutionTrace,
    grid: GridDomain,
    f: ForcingProfile,
    g: NonlinearityProfile,
    lam: float,
    eigenpair: EigenPair | None = None,
    c_tol: float = ENERGY_C,
) -> EnergyCheck:
    """dE/dt >= −μ₁E + λδ₁/g(E) along every accepted step of the trace.

    The stepper gives (E_{n+1} − E_n)/dt_n = −μ₁E_{n+1} + λ∫φ₁ f/g(u^n), so the
    slope is the forward difference and the right-hand side is read at
    (E_{n+1}, E_n) the same way. tol_n = C (dt_n + h²)(1 + |rhs_n| + |slope_n|) plus
    the rounding of the difference quotient on very short steps.
    """
    pair = eigenpair or cached_eigenpair(grid)
    delta1 = forcing_stats(f, grid).delta1
    t = np.asarray(trace.step_t, dtype=float)
    e = np.asarray(trace.step_energy, dtype=float)
    if len(t) < 2:
        return EnergyCheck(max_violation=-math.inf, worst_time=None, max_raw_gap=-math.inf, samples=0)

    dt = np.diff(t)
    slope = np.diff(e) / dt
    rhs = -pair.mu * e[1:] + (lam * delta1 / np.asarray(g.g(e[:-1])) if lam else 0.0)
    raw = rhs - slope
    tol = c_tol * (dt + grid.h**2) * (1.0 + np.abs(rhs) + np.abs(slope))
    tol += ROUNDING_ULPS * np.finfo(float).eps * (np.abs(e[1:]) + np.abs(e[:-1])) / dt
    violation = raw - tol
    worst = int(np.argmax(violation))
    return EnergyCheck(
        max_violation=float(violation[worst]),
        worst_time=float(t[1 + worst]),
        max_raw_gap=float(raw.max()),
        samples=len(dt),
    )


# ─── Comparison principle ───────────────────────────────────────────────
@dataclass(frozen=True)
class ComparisonReport:
    b: float
    samples: int
    strict_samples: int
    min_gap: float
    l1_excess_low_high: float     # max_t ∫(u_low − u_high)₊ − e^{bt}∫(u0_low − u0_high)₊
    l1_excess_high_low: float
    l1_excess_abs: float
    identical: bool

    @property
    def l1_ok(self) -> bool:
        return max(self.l1_excess_low_high, self.l1_excess_high_low, self.l1_excess_abs) <= L1_TOL

    def as_dict(self) -> dict[str, object]:
        return {
            "b": self.b,
            "samples": self.samples,
            "strict_samples": self.strict_samples,
            "min_gap": self.min_gap,
            "l1_excess_low_high": self.l1_excess_low_high,
            "l1_excess_high_low": self.l1_excess_high_low,
            "l1_excess_abs": self.l1_excess_abs,
            "l1_ok": self.l1_ok,
            "identical": self.identical,
        }


def comparison_suite(
    grid: GridDomain,
    f: ForcingProfile,
    g: NonlinearityProfile,
    lam: float,
    u0_low: Field | float,
    u0_high: Field | float,
    t_end: float,
    controls: EvolutionControls | None = None,
) -> ComparisonReport:
    """Run both evolutions on one time grid and check ordering and the L¹ estimates.

    Raises OrderingViolation on the first sample where u_low > u_high, or where
    distinct data fail to stay strictly ordered while their gap is resolvable.
    """
    low, high = as_field(grid, u0_low), as_field(grid, u0_high)
    if np.any(low.values > high.values):
        raise ValueError("u0_low must not exceed u0_high")
    base = controls or EvolutionControls()
    shared = replace(
        base,
        schedule=uniform_schedule(t_end, base.resolved_dt_max(grid)),
        sample_stride=max(1, int(round(settings.sample_factor))),
        keep_fields=True,
        reference=None,
        stop_distance=None,
    )
    tr_low = evolve(grid, f, g, lam, low, t_end, shared)
    tr_high = evolve(grid, f, g, lam, high, t_end, shared)
    for tr in (tr_low, tr_high):
        if tr.status != "completed":
            raise ValueError(f"comparison run ended with status {tr.status!r}; lower lambda or t_end")

    a1 = max(max(tr_low.max_u), max(tr_high.max_u))
    f_sup = forcing_stats(f, grid).sup_norm
    b = lam * f_sup * max(float(g.inverse_gap_derivative(a1)), 0.0)

    differ = bool(np.any(low.values != high.values))
    init_lh = integrate(grid, np.maximum(low.values - high.values, 0.0))
    init_hl = integrate(grid, np.maximum(high.values - low.values, 0.0))
    init_abs = integrate(grid, np.abs(high.values - low.values))

    strict = 0
    min_gap = math.inf
    ex_lh = ex_hl = ex_abs = -math.inf
    for t, ul, uh in zip(tr_low.t, tr_low.fields, tr_high.fields):
        diff = uh - ul
        node = int(np.argmin(diff))
        min_gap = min(min_gap, float(diff[node]))
        if diff[node] < -ORDER_TOL:
            raise OrderingViolation(f"u_low > u_high at node {node}, t={t:.6g}", node, t)
        if differ and t > 0 and diff.max() >= STRICT_RESOLUTION:
            if diff[node] <= 0.0:
                raise OrderingViolation(f"ordering not strict at node {node}, t={t:.6g}", node, t)
            strict += 1
        growth = math.exp(b * t)
        ex_lh = max(ex_lh, integrate(grid, np.maximum(-diff, 0.0)) - growth * init_lh)
        ex_hl = max(ex_hl, integrate(grid, np.maximum(diff, 0.0)) - growth * init_hl)
        ex_abs = max(ex_abs, integrate(grid, np.abs(diff)) - growth * init_abs)

    identical = tr_low.t == tr_high.t and all(
        np.array_equal(x, y) for x, y in zip(tr_low.fields, tr_high.fields)
    )
    logger.info("Comparison: %d samples, %d strictly ordered, b=%.4g", len(tr_low.t), strict, b)
    return ComparisonReport(
        b=b,
        samples=len(tr_low.t),
        strict_samples=strict,
        min_gap=min_gap,
        l1_excess_low_high=ex_lh,
        l1_excess_high_low=ex_hl,
        l1_excess_abs=ex_abs,
        identical=identical,
    )


# ─── Global convergence ─────────────────────────────────────────────────
@dataclass(frozen=True)
class ConvergenceRecord:
    converged: bool
    t_final: float
    final_distance: float
    decay_rate: float | None
    sandwich_ok: bool
    sandwich_worst: float
    dissipation: float
    dissipation_tail: float
    trace: EvolutionTrace

    def as_dict(self) -> dict[str, object]:
        return {
            "converged": self.converged,
            "t_final": self.t_final,
            "final_distance": self.final_distance,
            "decay_rate": self.decay_rate,
            "sandwich_ok": self.sandwich_ok,
            "sandwich_worst": self.sandwich_worst,
            "dissipation": self.dissipation,
            "dissipation_tail": self.dissipation_tail,
        }


def _decay_rate(t: Sequence[float], dist: Sequence[float], floor: float) -> float | None:
    pts = [(ti, di) for ti, di in zip(t, dist) if di is not None and di > floor]
    if len(pts) < 3:
        return None
    ts, ds = zip(*pts)
    slope, _ = np.polyfit(np.asarray(ts), np.log(np.asarray(ds)), 1)
    return float(-slope)


def convergence_to_stationary(
    grid: GridDomain,
    f: ForcingProfile,
    g: NonlinearityProfile,
    lam: float,
    u0: Field | float,
    v_ref: Field,
    controls: EvolutionControls | None = None,
    tol_conv: float = 1e-5,
    t_max: float = 50.0,
) -> ConvergenceRecord:
    """Evolve towards v_ref and check the sandwich w <= u <= v_ref against the λ = 0 run w."""
    start = as_field(grid, u0)
    if np.any(start.values > v_ref.values + SANDWICH_TOL):
        raise ValueError("initial data must lie below the reference stationary field")
    base = controls or EvolutionControls()
    stride = max(1, int(round(settings.sample_factor)))
    run = replace(
        base,
        schedule=uniform_schedule(t_max, base.resolved_dt_max(grid)),
        sample_stride=stride,
        keep_fields=True,
        reference=v_ref,
        stop_distance=tol_conv,
    )
    trace = evolve(grid, f, g, lam, start, t_max, run)
    heat = evolve(
        grid, f, g, 0.0, start, t_max,
        replace(run, schedule=np.asarray(trace.dt_history), reference=None, stop_distance=None),
    )

    worst = -math.inf
    for u, w in zip(trace.fields, heat.fields):
        worst = max(worst, float((w - u).max()), float((u - v_ref.values).max()))
    dist = trace.dist_to_ref[-1]
    diss = trace.dissipation
    tail = diss[-1] - diss[-2] if len(diss) > 1 else 0.0
    record = ConvergenceRecord(
        converged=dist is not None and dist < tol_conv,
        t_final=trace.t[-1],
        final_distance=float(dist),
        decay_rate=_decay_rate(trace.t, trace.dist_to_ref, 10 * tol_conv),
        sandwich_ok=worst <= SANDWICH_TOL,
        sandwich_worst=worst,
        dissipation=diss[-1],
        dissipation_tail=tail,
        trace=trace,
    )
    if not record.converged:
        logger.warning("No convergence to v_lambda by t=%.6g (distance %.3g)", t_max, dist)
    return record


# ─── Dichotomy above the pull-in voltage ────────────────────────────────
@dataclass(frozen=True)
class DichotomyReport:
    lam: float
    status: str
    touchdown_time: float | None
    level_times: dict[float, float | None]
    max_u_nondecreasing: bool
    final_max_u: float
    final_distance: float | None
    trace: EvolutionTrace

    def as_dict(self) -> dict[str, object]:
        return {
            "lambda": self.lam,
            "status": self.status,
            "touchdown_time": self.touchdown_time,
            "level_times": {str(k): v for k, v in self.level_times.items()},
            "max_u_nondecreasing": self.max_u_nondecreasing,
            "final_max_u": self.final_max_u,
            "final_distance": self.final_distance,
        }


def dichotomy_probe(
    grid: GridDomain,
    f: ForcingProfile,
    g: NonlinearityProfile,
    lam: float,
    t_max: float,
    levels: Sequence[float] = (0.9, 0.99),
    reference: Field | None = None,
    controls: EvolutionControls | None = None,
) -> DichotomyReport:
    """Evolve from u0 ≡ 0 and report when sup u passes each level; finiteness is not asserted."""
    run = replace(controls or EvolutionControls(), reference=reference)
    trace = evolve(grid, f, g, lam, 0.0, t_max, run)
    maxima = np.asarray(trace.max_u)
    level_times = {
        level: next((t for t, m in zip(trace.t, maxima) if m >= level), None) for level in levels
    }
    return DichotomyReport(
        lam=lam,
        status=trace.status,
        touchdown_time=trace.touchdown_time,
        level_times=level_times,
        max_u_nondecreasing=bool(np.all(np.diff(maxima) >= -1e-12)),
        final_max_u=float(maxima[-1]),
        final_distance=trace.dist_to_ref[-1],
        trace=trace,
    )
