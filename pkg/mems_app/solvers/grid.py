"""
Grid – finite-difference discretisation of an interval (0, L) or a radially
symmetric ball B_R ⊂ ℝⁿ.

Both shapes share one conservative three-point stencil

    Δ_h u_i = (F_{i+½} − F_{i−½}) / w_i,   F_{i+½} = a_{i+½} (u_{i+1} − u_i) / h

with face areas a ≡ 1 on the interval and a = ω_{n−1} r^{n−1} on the ball,
and w_i the cell volumes. The symmetric "stiffness" matrix K (−Δ_h = W⁻¹K)
is tridiagonal, so every solve below is a banded direct solve.
On the ball the first cell is [0, 3h/2] and the face at r = 0 carries zero
flux, which is the symmetry condition u'(0) = 0.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Literal, Union

import numpy as np
import pandas as pd
from scipy.linalg import solve_banded
from scipy.special import gamma

from mems_app.errors import GridMismatchError

# ─── logger ─────────────────────────────────────────────────────────────
logger = logging.getLogger(__name__)

MIN_NODES = 8
CSV_FLOAT_FORMAT = "%.17g"


# ─── Shapes ─────────────────────────────────────────────────────────────
@dataclass(frozen=True)
class Interval:
    length: float
    left: float = 0.0
    kind: Literal["interval"] = "interval"

    @property
    def dim(self) -> int:
        return 1

    @property
    def size(self) -> float:
        return self.length

    @property
    def center(self) -> float:
        return self.left + self.length / 2


@dataclass(frozen=True)
class Ball:
    n: int
    radius: float
    kind: Literal["ball"] = "ball"

    @property
    def dim(self) -> int:
        return self.n

    @property
    def size(self) -> float:
        return self.radius

    @property
    def center(self) -> float:
        return 0.0


Shape = Union[Interval, Ball]


def sphere_area(n: int) -> float:
    """ω_{n−1}: surface area of the unit sphere in ℝⁿ."""
    return 2.0 * math.pi ** (n / 2) / gamma(n / 2)


# ─── Grid ───────────────────────────────────────────────────────────────
@dataclass(frozen=True, eq=False)
class GridDomain:
    """Immutable discretisation; compared and hashed by identity."""

    shape: Shape
    N: int
    h: float
    nodes: np.ndarray            # x_i (interval) or r_i (ball), strictly interior
    weights: np.ndarray          # cell volumes w_i
    face_areas: np.ndarray       # a_{i+½}, i = 0..N (a_{½} is the left face)
    volume: float                # |Ω|
    boundary_measure: float      # |∂Ω|
    _diag: np.ndarray = field(repr=False)
    _off: np.ndarray = field(repr=False)

    @property
    def closure_nodes(self) -> np.ndarray:
        """Nodes of Ω̄ used for inf/sup of the forcing."""
        if self.shape.kind == "interval":
            left = self.shape.left
            return np.concatenate(([left], self.nodes, [left + self.shape.length]))
        return np.concatenate(([0.0], self.nodes, [self.shape.radius]))

    def stiffness_bands(self, stiff: float = 1.0, mass: np.ndarray | float = 0.0) -> np.ndarray:
        """Banded (1,1) storage of stiff·K + diag(mass·w)."""
        ab = np.zeros((3, self.N))
        ab[0, 1:] = stiff * self._off
        ab[1, :] = stiff * self._diag + mass * self.weights
        ab[2, :-1] = stiff * self._off
        return ab

    def stiffness_matvec(self, u: np.ndarray) -> np.ndarray:
        """K u."""
        out = self._diag * u
        out[:-1] += self._off * u[1:]
        out[1:] += self._off * u[:-1]
        return out


def build_grid(shape: Shape, N: int) -> GridDomain:
    """Uniform grid with N strictly interior nodes."""
    if N < MIN_NODES:
        raise ValueError(f"grid needs N >= {MIN_NODES}, got {N}")
    if shape.size <= 0:
        raise ValueError(f"domain size must be positive, got {shape.size}")

    h = shape.size / (N + 1)
    idx = np.arange(1, N + 1, dtype=float)

    if shape.kind == "interval":
        nodes = shape.left + idx * h
        weights = np.full(N, h)
        faces = np.ones(N + 1)
        volume = shape.length
        boundary = 2.0
    else:
        if shape.n < 2:
            raise ValueError(f"ball dimension must be >= 2, got {shape.n}")
        n = shape.n
        omega = sphere_area(n)
        nodes = idx * h
        outer = (idx + 0.5) * h
        inner = (idx - 0.5) * h
        inner[0] = 0.0  # first cell reaches the centre
        weights = omega * (outer**n - inner**n) / n
        face_r = (np.arange(0, N + 1) + 0.5) * h
        faces = omega * face_r ** (n - 1)
        faces[0] = 0.0  # zero flux through r = 0
        volume = omega * shape.radius**n / n
        boundary = omega * shape.radius ** (n - 1)

    diag = (faces[:-1] + faces[1:]) / h
    off = -faces[1:-1] / h

    logger.debug("Built %s grid: N=%d h=%.3g", shape.kind, N, h)
    return GridDomain(
        shape=shape,
        N=N,
        h=h,
        nodes=nodes,
        weights=weights,
        face_areas=faces,
        volume=volume,
        boundary_measure=boundary,
        _diag=diag,
        _off=off,
    )


# ─── Field ──────────────────────────────────────────────────────────────
@dataclass(frozen=True, eq=False)
class Field:
    """Nodal values at the interior nodes of one grid (zero on the boundary)."""

    grid: GridDomain
    values: np.ndarray

    def __post_init__(self) -> None:
        vals = np.array(self.values, dtype=float)
        if vals.shape != (self.grid.N,):
            raise ValueError(f"field needs {self.grid.N} values, got shape {vals.shape}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    # --- constructors ---------------------------------------------------
    @classmethod
    def zeros(cls, grid: GridDomain) -> "Field":
        return cls(grid, np.zeros(grid.N))

    @classmethod
    def constant(cls, grid: GridDomain, value: float) -> "Field":
        return cls(grid, np.full(grid.N, float(value)))

    @classmethod
    def from_function(cls, grid: GridDomain, func: Callable[[np.ndarray], np.ndarray]) -> "Field":
        return cls(grid, np.asarray(func(grid.nodes), dtype=float))

    # --- arithmetic -----------------------------------------------------
    def _other(self, other: "Field | float") -> np.ndarray | float:
        if isinstance(other, Field):
            _same_grid(self.grid, other.grid)
            return other.values
        return float(other)

    def __add__(self, other: "Field | float") -> "Field":
        return Field(self.grid, self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other: "Field | float") -> "Field":
        return Field(self.grid, self.values - self._other(other))

    def __rsub__(self, other: float) -> "Field":
        return Field(self.grid, float(other) - self.values)

    def __mul__(self, other: "Field | float") -> "Field":
        return Field(self.grid, self.values * self._other(other))

    __rmul__ = __mul__

    def __neg__(self) -> "Field":
        return Field(self.grid, -self.values)

    def max(self) -> float:
        return float(self.values.max())

    def min(self) -> float:
        return float(self.values.min())

    def sup_norm(self) -> float:
        return float(np.abs(self.values).max())

    # --- I/O ------------------------------------------------------------
    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"coordinate": self.grid.nodes, "value": self.values})

    def to_csv(self, path: str | Path) -> None:
        try:
            self.to_frame().to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT)
        except OSError as exc:
            raise OSError(f"Cannot write field CSV to {path}: {exc}") from exc


def _same_grid(a: GridDomain, b: GridDomain) -> None:
    if a is not b:
        raise GridMismatchError("fields live on different grids")


def as_field(grid: GridDomain, u: "Field | float") -> Field:
    """Accept a Field on *grid* or a constant."""
    if isinstance(u, Field):
        _same_grid(grid, u.grid)
        return u
    return Field.constant(grid, float(u))


# ─── Operators ──────────────────────────────────────────────────────────
def apply_laplacian(grid: GridDomain, u: Field) -> Field:
    """Δ_h u with homogeneous Dirichlet data."""
    _same_grid(grid, u.grid)
    return Field(grid, -grid.stiffness_matvec(u.values) / grid.weights)


def solve_poisson(grid: GridDomain, rhs: Field | np.ndarray) -> Field:
    """Solve −Δ_h v = rhs, v = 0 on the boundary (tridiagonal direct solve)."""
    values = rhs.values if isinstance(rhs, Field) else np.asarray(rhs, dtype=float)
    if isinstance(rhs, Field):
        _same_grid(grid, rhs.grid)
    v = solve_banded((1, 1), grid.stiffness_bands(), grid.weights * values, check_finite=False)
    return Field(grid, v)


def implicit_diffusion_step(grid: GridDomain, dt: float, rhs: np.ndarray) -> np.ndarray:
    """Backward-Euler diffusion: solve (I − dt Δ_h) u = rhs."""
    ab = grid.stiffness_bands(stiff=dt, mass=1.0)
    return solve_banded((1, 1), ab, grid.weights * rhs, check_finite=False)


def integrate(grid: GridDomain, u: Field | np.ndarray) -> float:
    """Σ w_i u_i."""
    if isinstance(u, Field):
        _same_grid(grid, u.grid)
        u = u.values
    return float(np.dot(grid.weights, u))


def gradient_energy(grid: GridDomain, u: Field) -> float:
    """∫|∇_h u|² by summation over faces (boundary faces see u = 0)."""
    _same_grid(grid, u.grid)
    padded = np.concatenate(([0.0], u.values, [0.0]))
    jumps = np.diff(padded) / grid.h
    return float(np.sum(grid.face_areas * jumps**2) * grid.h)


# ─── Sub-domains ────────────────────────────────────────────────────────
def restrict_to_subdomain(grid: GridDomain, radius: float) -> GridDomain:
    """Grid of the concentric inscribed ball / centred sub-interval of half-width *radius*.

    The spacing matches the parent grid as closely as the node count allows.
    """
    shape = grid.shape
    if shape.kind == "interval":
        if not 0 < radius <= shape.length / 2:
            raise ValueError(f"sub-interval half-width {radius} does not fit in {shape}")
        sub_shape: Shape = Interval(length=2 * radius, left=shape.center - radius)
    else:
        if not 0 < radius <= shape.radius:
            raise ValueError(f"inscribed radius {radius} does not fit in {shape}")
        sub_shape = Ball(n=shape.n, radius=radius)
    n_sub = max(MIN_NODES, int(round(sub_shape.size / grid.h)) - 1)
    return build_grid(sub_shape, n_sub)


def transfer(field_: Field, target: GridDomain) -> Field:
    """Piecewise-linear interpolation of *field_* onto the nodes of *target*."""
    src = field_.grid
    xs = src.closure_nodes
    if src.shape.kind == "ball":
        # value at r = 0 by even extension
        ys = np.concatenate(([field_.values[0]], field_.values, [0.0]))
    else:
        ys = np.concatenate(([0.0], field_.values, [0.0]))
    return Field(target, np.interp(target.nodes, xs, ys))
