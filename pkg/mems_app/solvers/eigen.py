"""
Eigen – principal Dirichlet eigenpair (μ₁, φ₁) of −Δ_h, the ν_Ω lower
estimate over dilated enclosures, and the shifted inverse iteration reused by
the linearised stability operator.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Literal

import numpy as np
from scipy.linalg import solve_banded
from scipy.optimize import brentq
from scipy.special import gamma, jv, jn_zeros

from mems_app.errors import ConvergenceError
from mems_app.solvers.grid import (
    Ball,
    Field,
    GridDomain,
    Interval,
    Shape,
    gradient_energy,
    integrate,
)

# ─── logger ─────────────────────────────────────────────────────────────
logger = logging.getLogger(__name__)

EIGEN_TOL = 1e-12
EIGEN_MAX_ITER = 10_000
# eigenvector sup-change at which the residual bound ‖Δφ + μφ‖ ≤ 1e-8 μ‖φ‖ is met
_VECTOR_TOL = 1e-10


@dataclass(frozen=True)
class EigenPair:
    mu: float
    phi: Field
    normalization: Literal["integral-one", "max-one"]
    iterations: int = 0


def inverse_iteration(
    grid: GridDomain,
    potential: np.ndarray | None = None,
    *,
    tol: float = EIGEN_TOL,
    max_iter: int = EIGEN_MAX_ITER,
) -> tuple[float, np.ndarray, int]:
    """Smallest eigenvalue of −Δ_h + V by shifted inverse iteration.

    Works on the generalised symmetric problem (K + W V) x = μ W x. Without a
    potential the shift is 0; otherwise it sits one unit below the Gershgorin
    lower bound of W^{-1/2}(K + WV)W^{-1/2}, so the shifted matrix is SPD.
    Stops once μ is stable to *tol* and the eigenvector has stopped moving.
    """
    V = np.zeros(grid.N) if potential is None else np.asarray(potential, dtype=float)
    diag_sym = grid.stiffness_bands()[1] / grid.weights
    off_sym = np.abs(grid.stiffness_bands()[0, 1:]) / np.sqrt(grid.weights[:-1] * grid.weights[1:])
    radius = np.zeros(grid.N)
    radius[:-1] += off_sym
    radius[1:] += off_sym
    shift = 0.0 if potential is None else float(np.min(diag_sym + V - radius)) - 1.0

    ab = grid.stiffness_bands(mass=V - shift)
    x = np.ones(grid.N)
    mu_prev = math.inf
    change_prev = math.inf
    for it in range(1, max_iter + 1):
        y = solve_banded((1, 1), ab, grid.weights * x, check_finite=False)
        y /= np.abs(y).max()
        if y.sum() < 0:
            y = -y
        mu = float(
            (y @ grid.stiffness_matvec(y) + np.sum(grid.weights * V * y * y))
            / np.sum(grid.weights * y * y)
        )
        change = float(np.abs(y - x).max())
        x = y
        settled = change <= _VECTOR_TOL or (it > 30 and change >= change_prev)
        if abs(mu - mu_prev) <= tol * max(abs(mu), 1.0) and settled:
            logger.debug("Inverse iteration converged: mu=%.12g after %d sweeps", mu, it)
            return mu, x, it
        mu_prev, change_prev = mu, change
    raise ConvergenceError(f"inverse iteration did not converge in {max_iter} sweeps")


def principal_eigenpair(grid: GridDomain, tol: float = EIGEN_TOL) -> EigenPair:
    """(μ₁, φ₁) of −Δ_h with φ₁ > 0 and ∫φ₁ = 1."""
    mu, x, iterations = inverse_iteration(grid, tol=tol)
    phi = x / integrate(grid, x)
    return EigenPair(mu=mu, phi=Field(grid, phi), normalization="integral-one", iterations=iterations)


@lru_cache(maxsize=64)
def cached_eigenpair(grid: GridDomain) -> EigenPair:
    """principal_eigenpair memoised per grid (grids hash by identity)."""
    return principal_eigenpair(grid)


def rayleigh_quotient(grid: GridDomain, u: Field) -> float:
    """∫|∇_h u|² / ∫u²."""
    return gradient_energy(grid, u) / integrate(grid, u * u)


# ─── Closed-form enclosures ─────────────────────────────────────────────
def bessel_first_zero(order: float) -> float:
    """First positive zero j_{ν,1} of J_ν."""
    if float(order).is_integer():
        return float(jn_zeros(int(order), 1)[0])
    # j_{ν,1} lies in (ν, ν + 2ν^{1/3} + 3); scan for the first sign change
    x = max(order, 1e-3) + 1e-3
    step = 0.05
    while jv(order, x + step) * jv(order, x) > 0:
        x += step
    return float(brentq(lambda z: jv(order, z), x, x + step, xtol=1e-15))


def ball_eigenvalue(n: int, radius: float) -> float:
    """First Dirichlet eigenvalue of −Δ on B_R ⊂ ℝⁿ."""
    return (bessel_first_zero(n / 2 - 1) / radius) ** 2


def ball_eigenfunction(n: int, radius: float, r: np.ndarray) -> np.ndarray:
    """Radial principal eigenfunction of B_R normalised to max 1 (attained at r = 0)."""
    nu = n / 2 - 1
    k = bessel_first_zero(nu) / radius
    r = np.asarray(r, dtype=float)
    kr = k * r
    with np.errstate(invalid="ignore", divide="ignore"):
        vals = gamma(nu + 1) * (2.0 / kr) ** nu * jv(nu, kr)
    return np.where(kr > 0, vals, 1.0)


def dilation_product(shape: Shape, a: float) -> tuple[float, float]:
    """(μ_{Ω₁}, s_{Ω₁}) for the enclosure Ω₁ = (1 + a)·Ω.

    Intervals are enlarged symmetrically by a·L on each side.
    """
    if a <= 0:
        raise ValueError(f"dilation must be positive, got {a}")
    if isinstance(shape, Interval):
        big = shape.length * (1 + 2 * a)
        return (math.pi / big) ** 2, math.sin(math.pi * a / (1 + 2 * a))
    assert isinstance(shape, Ball)
    big = shape.radius * (1 + a)
    mu = ball_eigenvalue(shape.n, big)
    s = float(ball_eigenfunction(shape.n, big, np.array([shape.radius]))[0])
    return mu, s


@dataclass(frozen=True)
class NuEstimate:
    nu_hat: float
    best_dilation: float


def nu_lower_bound(
    shape: Shape, a_min: float = 0.05, a_max: float = 5.0, steps: int = 500
) -> NuEstimate:
    """max over scanned concentric dilations of μ_{Ω₁}·s_{Ω₁} (a lower estimate of ν_Ω)."""
    if steps < 1 or a_max < a_min:
        raise ValueError("dilation scan is empty")
    if a_min <= 0:
        raise ValueError(f"a_min must be positive, got {a_min}")
    scan = np.linspace(a_min, a_max, steps)
    products = np.array([np.prod(dilation_product(shape, float(a))) for a in scan])
    best = int(np.argmax(products))
    if best in (0, steps - 1):
        logger.warning("Dilation scan maximiser sits on the scan edge (a=%.4g)", scan[best])
    return NuEstimate(nu_hat=float(products[best]), best_dilation=float(scan[best]))
