"""
Model – the gap function g and forcing f of u_t = Δu + λ f(x)/g(u).

Profiles are immutable analytic families; each kind certifies its hypotheses
in closed form rather than by sampling. Any request for g at s >= 1 is a hard
error so callers must guard touchdown first.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np
from scipy.integrate import quad
from scipy.optimize import minimize_scalar

from mems_app.errors import GapDomainError, HypothesisError
from mems_app.solvers.grid import GridDomain

# ─── logger ─────────────────────────────────────────────────────────────
logger = logging.getLogger(__name__)

GapKind = Literal["power", "exp", "constant", "damped-power"]
ForcingKind = Literal["constant", "bump", "polynomial"]

QUAD_ABS_TOL = 1e-12
SUP_S_TOL = 1e-10
# sampling window for the g > 0 / g' <= 0 witnesses
_WITNESS_S = np.linspace(-2.0, 0.999, 400)


# ─── Nonlinearity ───────────────────────────────────────────────────────
@dataclass(frozen=True)
class NonlinearityProfile:
    """g(s) for s < 1.

    power        (1 − s)^p,           p > 0
    exp          e^{−s}
    constant     1
    damped-power (1 − s)^p e^{−κ s},  p > 0, κ >= 0  (no closed-form H)
    """

    kind: GapKind = "power"
    p: float = 2.0
    kappa: float = 1.0

    def __post_init__(self) -> None:
        if self.kind in ("power", "damped-power") and not self.p > 0:
            raise ValueError(f"{self.kind} gap needs p > 0, got {self.p}")
        if self.kind == "damped-power" and self.kappa < 0:
            raise ValueError(f"damped-power gap needs kappa >= 0, got {self.kappa}")

    @staticmethod
    def _guard(s: np.ndarray | float) -> np.ndarray:
        arr = np.asarray(s, dtype=float)
        if np.any(arr >= 1.0):
            raise GapDomainError(f"g evaluated at s >= 1 (max s = {arr.max():.17g})")
        return arr

    def g(self, s: np.ndarray | float) -> np.ndarray | float:
        s = self._guard(s)
        if self.kind == "power":
            out = (1.0 - s) ** self.p
        elif self.kind == "exp":
            out = np.exp(-s)
        elif self.kind == "constant":
            out = np.ones_like(s)
        else:
            out = (1.0 - s) ** self.p * np.exp(-self.kappa * s)
        return out if out.ndim else float(out)

    def dg(self, s: np.ndarray | float) -> np.ndarray | float:
        s = self._guard(s)
        if self.kind == "power":
            out = -self.p * (1.0 - s) ** (self.p - 1.0)
        elif self.kind == "exp":
            out = -np.exp(-s)
        elif self.kind == "constant":
            out = np.zeros_like(s)
        else:
            out = -((1.0 - s) ** self.p) * np.exp(-self.kappa * s) * (
                self.p / (1.0 - s) + self.kappa
            )
        return out if out.ndim else float(out)

    def inverse_gap_derivative(self, s: np.ndarray | float) -> np.ndarray | float:
        """(1/g)'(s) = −g'(s)/g(s)²."""
        gs = np.asarray(self.g(s))
        out = -np.asarray(self.dg(s)) / gs**2
        return out if out.ndim else float(out)

    def limit_at_one(self) -> float:
        """lim_{s↗1} g(s)."""
        return {"power": 0.0, "exp": math.exp(-1.0), "constant": 1.0, "damped-power": 0.0}[
            self.kind
        ]

    # --- analytic certificates -----------------------------------------
    @property
    def reciprocal_convex(self) -> bool:
        """(1.10): (1/g)'' >= 0 on s < 1.

        power:        p(p+1)(1−s)^{−p−2} > 0
        exp:          e^{s} > 0
        constant:     0
        damped-power: 1/g = exp(κs − p ln(1−s)), convex exponent
        """
        return True

    @property
    def reciprocal_slope_bounded(self) -> bool:
        """(2.26): sup_{s<=a} (1/g)'(s) < ∞ for every a < 1 (all kinds are C¹ up to a)."""
        return True

    @property
    def vanishes_at_one(self) -> bool:
        """(3.3): g(s) → 0 as s ↗ 1."""
        return self.limit_at_one() == 0.0


def gap_integral(g: NonlinearityProfile, v: float) -> float:
    """H(v) = ∫_v^1 g(s) ds."""
    if v >= 1.0:
        raise GapDomainError(f"H(v) needs v < 1, got {v!r}")
    if g.kind == "power":
        return (1.0 - v) ** (g.p + 1.0) / (g.p + 1.0)
    if g.kind == "exp":
        return math.exp(-v) - math.exp(-1.0)
    if g.kind == "constant":
        return 1.0 - v
    # integrand is continuous on [v, 1] once g(1) is read as its limit;
    # H <= (1 − v)^{p+1}/(p+1), so the absolute tolerance shrinks with it near 1
    scale = min(1.0, (1.0 - v) ** (g.p + 1.0) / (g.p + 1.0))
    value, _ = quad(
        lambda s: g.g(s) if s < 1.0 else g.limit_at_one(),
        v,
        1.0,
        epsabs=QUAD_ABS_TOL * scale,
        epsrel=1e-12,
        limit=200,
    )
    return float(value)


def gap_integral_nodes(g: NonlinearityProfile, values: np.ndarray) -> np.ndarray:
    """H applied nodewise."""
    if g.kind == "power":
        values = np.asarray(values, dtype=float)
        if np.any(values >= 1.0):
            raise GapDomainError("H(v) needs v < 1 at every node")
        return (1.0 - values) ** (g.p + 1.0) / (g.p + 1.0)
    return np.array([gap_integral(g, float(v)) for v in np.asarray(values)])


@dataclass(frozen=True)
class SupResult:
    value: float
    maximizer: float


def sup_s_g(g: NonlinearityProfile) -> SupResult:
    """sup over s ∈ [0, 1] of s·g(s), with g(1) read as its limit."""
    if g.kind == "power":
        s_star = 1.0 / (g.p + 1.0)
        return SupResult(s_star * (1.0 - s_star) ** g.p, s_star)
    if g.kind == "constant":
        return SupResult(1.0, 1.0)

    res = minimize_scalar(
        lambda s: -s * g.g(s),
        bounds=(0.0, 1.0 - 1e-15),
        method="bounded",
        options={"xatol": SUP_S_TOL},
    )
    best = SupResult(float(-res.fun), float(res.x))
    at_one = g.limit_at_one()
    if at_one >= best.value:
        best = SupResult(at_one, 1.0)
    return best


# ─── Forcing ────────────────────────────────────────────────────────────
@dataclass(frozen=True)
class ForcingProfile:
    """f(x) >= 0, written in the distance ρ from *center* (radial on balls).

    constant    amplitude
    bump        base + amplitude · exp(−(ρ/width)²)
    polynomial  Σ_k coefficients[k] · ρ^k
    """

    kind: ForcingKind = "constant"
    amplitude: float = 1.0
    center: float | None = None
    width: float = 0.25
    base: float = 0.0
    coefficients: tuple[float, ...] = field(default=(1.0,))

    def __post_init__(self) -> None:
        if self.kind == "bump" and not self.width > 0:
            raise ValueError(f"bump forcing needs width > 0, got {self.width}")
        if self.kind == "polynomial" and not self.coefficients:
            raise ValueError("polynomial forcing needs at least one coefficient")

    def _rho(self, x: np.ndarray, grid: GridDomain) -> tuple[np.ndarray, np.ndarray]:
        """(signed offset, distance) from the profile centre."""
        c = grid.shape.center if self.center is None else self.center
        if grid.shape.kind == "ball":
            c = 0.0  # radial profiles on balls are centred by construction
        offset = np.asarray(x, dtype=float) - c
        return offset, np.abs(offset)

    def evaluate(self, x: np.ndarray, grid: GridDomain) -> np.ndarray:
        _, rho = self._rho(x, grid)
        if self.kind == "constant":
            return np.full_like(rho, self.amplitude)
        if self.kind == "bump":
            return self.base + self.amplitude * np.exp(-((rho / self.width) ** 2))
        return np.polynomial.polynomial.polyval(rho, self.coefficients)

    def radial_derivative(self, x: np.ndarray, grid: GridDomain) -> np.ndarray:
        """df/dρ."""
        _, rho = self._rho(x, grid)
        if self.kind == "constant":
            return np.zeros_like(rho)
        if self.kind == "bump":
            return -2.0 * rho / self.width**2 * self.amplitude * np.exp(-((rho / self.width) ** 2))
        deriv = np.polynomial.polynomial.polyder(self.coefficients)
        return np.polynomial.polynomial.polyval(rho, deriv)

    def nodes(self, grid: GridDomain) -> np.ndarray:
        """f at the interior nodes."""
        return self.evaluate(grid.nodes, grid)

    def x_dot_grad(self, x: np.ndarray, grid: GridDomain) -> np.ndarray:
        """x·∇f with the origin at the domain centre: ρ f'(ρ) when centres coincide."""
        centered = np.asarray(x, dtype=float) - grid.shape.center
        offset, rho = self._rho(x, grid)
        # ∇f = f'(ρ) · offset/ρ, so x·∇f = f'(ρ) (centered·offset)/ρ
        with np.errstate(invalid="ignore", divide="ignore"):
            direction = np.where(rho > 0, centered * offset / np.where(rho > 0, rho, 1.0), 0.0)
        return self.radial_derivative(x, grid) * direction


@dataclass(frozen=True)
class ForcingStats:
    """δ₁ = inf f, ‖f‖_∞, b₁ = sup |x·∇f| on the closed grid."""

    delta1: float
    sup_norm: float
    b1: float


def forcing_stats(f: ForcingProfile, grid: GridDomain) -> ForcingStats:
    if f.kind == "constant":
        c = float(f.amplitude)
        return ForcingStats(delta1=c, sup_norm=abs(c), b1=0.0)
    pts = grid.closure_nodes
    vals = f.evaluate(pts, grid)
    return ForcingStats(
        delta1=float(vals.min()),
        sup_norm=float(np.abs(vals).max()),
        b1=float(np.abs(f.x_dot_grad(pts, grid)).max()),
    )


# ─── Hypotheses ─────────────────────────────────────────────────────────
HYPOTHESIS_LABELS = {
    "0.1": "f >= 0, f not identically 0",
    "0.2": "g > 0 and g' <= 0 on s < 1",
    "1.4": "delta_1 = inf f > 0",
    "1.10": "(1/g)'' >= 0 on s < 1",
    "2.26": "sup_{s<=a} (1/g)'(s) finite for a < 1",
    "3.3": "g(s) -> 0 as s -> 1",
}


@dataclass(frozen=True)
class HypothesisCheck:
    name: str
    passed: bool
    witness: str

    @property
    def label(self) -> str:
        return HYPOTHESIS_LABELS[self.name]


@dataclass(frozen=True)
class HypothesisReport:
    checks: tuple[HypothesisCheck, ...]

    def __getitem__(self, name: str) -> HypothesisCheck:
        for check in self.checks:
            if check.name == name:
                return check
        raise KeyError(name)

    def passed(self, name: str) -> bool:
        return self[name].passed

    def require(self, names: Sequence[str]) -> None:
        """Raise HypothesisError for the first required hypothesis that fails."""
        for name in names:
            check = self[name]
            if not check.passed:
                raise HypothesisError(name, check.witness)

    def as_dict(self) -> dict[str, dict[str, object]]:
        return {
            c.name: {"passed": c.passed, "witness": c.witness, "label": c.label}
            for c in self.checks
        }


def check_hypotheses(
    g: NonlinearityProfile, f: ForcingProfile, grid: GridDomain
) -> HypothesisReport:
    """Report every hypothesis with its witness; never raises."""
    f_vals = f.evaluate(grid.closure_nodes, grid)
    f_min, f_max = float(f_vals.min()), float(f_vals.max())
    if f_max == 0.0 and f_min == 0.0:
        c01 = HypothesisCheck("0.1", False, "f ≡ 0")
    else:
        c01 = HypothesisCheck("0.1", f_min >= 0.0, f"min f = {f_min:.6g}, max f = {f_max:.6g}")

    g_vals = np.asarray(g.g(_WITNESS_S))
    dg_vals = np.asarray(g.dg(_WITNESS_S))
    g_ok = bool(g_vals.min() > 0.0 and dg_vals.max() <= 0.0)
    c02 = HypothesisCheck(
        "0.2", g_ok, f"min sampled g = {g_vals.min():.6g}, max sampled g' = {dg_vals.max():.6g}"
    )

    stats = forcing_stats(f, grid)
    c14 = HypothesisCheck("1.4", stats.delta1 > 0.0, f"delta_1 = {stats.delta1:.6g}")
    c110 = HypothesisCheck("1.10", g.reciprocal_convex, f"analytic certificate for {g.kind}")
    c226 = HypothesisCheck(
        "2.26", g.reciprocal_slope_bounded, f"analytic certificate for {g.kind}"
    )
    c33 = HypothesisCheck(
        "3.3", g.vanishes_at_one, f"lim g(s) as s -> 1 = {g.limit_at_one():.6g}"
    )
    report = HypothesisReport((c01, c02, c14, c110, c226, c33))
    for check in report.checks:
        logger.debug("Hypothesis (%s) %s: %s", check.name, check.passed, check.witness)
    return report


# ─── Shared bound record ────────────────────────────────────────────────
@dataclass(frozen=True)
class Bound:
    """An analytic bound, or the reason it does not apply."""

    value: float | None
    applicable: bool
    reason: str = ""

    @classmethod
    def of(cls, value: float) -> "Bound":
        return cls(float(value), True)

    @classmethod
    def skip(cls, reason: str) -> "Bound":
        return cls(None, False, reason)

    def as_dict(self) -> dict[str, object]:
        return {"value": self.value, "applicable": self.applicable, "reason": self.reason}
