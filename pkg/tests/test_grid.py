import math

import numpy as np
import pandas as pd
import pytest
from numpy.testing import assert_allclose

from mems_app.errors import GridMismatchError
from mems_app.solvers.grid import (
    Ball,
    Field,
    Interval,
    apply_laplacian,
    build_grid,
    gradient_energy,
    integrate,
    restrict_to_subdomain,
    solve_poisson,
    transfer,
)


def test_interval_nodes_are_strictly_interior():
    grid = build_grid(Interval(1.0), 99)
    assert grid.h == pytest.approx(0.01)
    assert grid.nodes[0] == pytest.approx(0.01)
    assert grid.nodes[-1] == pytest.approx(0.99)
    assert_allclose(grid.weights, 0.01)


def test_disk_weights_follow_ring_areas():
    grid = build_grid(Ball(2, 1.0), 99)
    assert_allclose(grid.nodes[[0, -1]], [0.01, 0.99])
    # every cell but the central one is the annulus around r_i
    assert_allclose(grid.weights[1:], 2 * math.pi * grid.nodes[1:] * grid.h, rtol=1e-12)
    assert grid.weights[0] == pytest.approx(math.pi * (1.5 * grid.h) ** 2)


@pytest.mark.parametrize(
    "shape, deficit",
    [(Interval(1.0), 2.49e-3), (Ball(2, 1.0), 2.49e-3), (Ball(3, 1.0), 3.74e-3)],
)
def test_weights_approximate_the_volume(shape, deficit):
    grid = build_grid(shape, 400)
    # cells stop half a spacing short of each boundary point
    if shape.kind == "interval":
        covered = 1.0 - grid.h / shape.size
    else:
        covered = (1.0 - grid.h / (2 * shape.size)) ** shape.dim
    total = integrate(grid, np.ones(grid.N))
    assert total == pytest.approx(grid.volume * covered, rel=1e-12)
    assert 1.0 - total / grid.volume == pytest.approx(deficit, rel=1e-2)


def test_too_few_nodes_rejected():
    with pytest.raises(ValueError):
        build_grid(Interval(1.0), 4)
    with pytest.raises(ValueError):
        build_grid(Interval(-1.0), 50)
    with pytest.raises(ValueError):
        build_grid(Ball(1, 1.0), 50)


def test_sine_is_a_discrete_eigenvector():
    grid = build_grid(Interval(1.0), 99)
    u = Field.from_function(grid, lambda x: np.sin(np.pi * x))
    lap = apply_laplacian(grid, u)
    assert_allclose(lap.values, -(math.pi**2) * u.values, rtol=1e-3)


@pytest.mark.parametrize("shape", [Interval(1.0), Ball(2, 1.0), Ball(3, 2.0)])
def test_poisson_is_exact_on_quadratics(shape):
    grid = build_grid(shape, 99)
    v = solve_poisson(grid, Field.constant(grid, 1.0))
    if shape.kind == "interval":
        exact = grid.nodes * (1 - grid.nodes) / 2
    else:
        exact = (shape.radius**2 - grid.nodes**2) / (2 * shape.n)
    assert_allclose(v.values, exact, atol=1e-12)


def test_poisson_residual():
    grid = build_grid(Ball(2, 1.0), 32)
    rhs = Field.from_function(grid, lambda r: 1 + np.cos(r))
    v = solve_poisson(grid, rhs)
    residual = (-apply_laplacian(grid, v) - rhs).sup_norm()
    assert residual <= 1e-12 * (1 + rhs.sup_norm())


def _poisson_error(N):
    grid = build_grid(Interval(1.0), N)
    rhs = Field.from_function(grid, lambda x: math.pi**2 * np.sin(math.pi * x) + np.exp(x))
    v = solve_poisson(grid, rhs)
    # −v'' = π² sin πx + eˣ, v(0) = v(1) = 0
    x = grid.nodes
    exact = np.sin(math.pi * x) - np.exp(x) + 1 + (math.e - 1) * x
    return float(np.abs(v.values - exact).max())


def test_poisson_converges_at_second_order():
    coarse, fine = _poisson_error(99), _poisson_error(199)
    order = math.log(coarse / fine) / math.log(2.0)
    assert 1.8 < order < 2.2


def test_ball_laplacian_converges_at_second_order():
    errors = []
    for N in (99, 199):
        grid = build_grid(Ball(3, 1.0), N)
        u = Field.from_function(grid, lambda r: np.sin(math.pi * r) / (math.pi * r))
        errors.append((apply_laplacian(grid, u) + math.pi**2 * u).sup_norm())
    assert errors[0] < 1e-2
    assert errors[1] < errors[0] / 3


@pytest.mark.parametrize("shape", [Interval(1.0), Ball(2, 1.0)])
def test_green_identity_and_sign(shape):
    grid = build_grid(shape, 200)
    u = Field.from_function(grid, lambda x: np.sin(math.pi * x) * (1 + x))
    w = Field.from_function(grid, lambda x: (1 - x) * np.cos(x) * (1 if shape.kind == "ball" else x))
    lhs = integrate(grid, w * apply_laplacian(grid, u))
    rhs = integrate(grid, u * apply_laplacian(grid, w))
    assert lhs == pytest.approx(rhs, rel=1e-10)
    assert integrate(grid, u * apply_laplacian(grid, u)) < 0
    assert -integrate(grid, u * apply_laplacian(grid, u)) == pytest.approx(
        gradient_energy(grid, u), rel=1e-10
    )


def test_fields_on_different_grids_do_not_mix():
    a = Field.zeros(build_grid(Interval(1.0), 16))
    b = Field.zeros(build_grid(Interval(1.0), 16))
    with pytest.raises(GridMismatchError):
        _ = a + b
    with pytest.raises(GridMismatchError):
        apply_laplacian(a.grid, b)


def test_field_values_are_read_only():
    u = Field.constant(build_grid(Interval(1.0), 16), 0.5)
    with pytest.raises(ValueError):
        u.values[0] = 1.0
    with pytest.raises(ValueError):
        Field(u.grid, np.zeros(3))


def test_field_csv_has_one_row_per_node(tmp_path):
    grid = build_grid(Interval(1.0), 32)
    path = tmp_path / "u.csv"
    Field.from_function(grid, np.sin).to_csv(path)
    frame = pd.read_csv(path, float_precision="round_trip")
    assert list(frame.columns) == ["coordinate", "value"]
    assert len(frame) == 32
    # 17 significant digits read back to the same doubles
    assert np.array_equal(frame["coordinate"].to_numpy(), grid.nodes)
    assert np.array_equal(frame["value"].to_numpy(), np.sin(grid.nodes))


def test_subinterval_shares_the_parent_spacing():
    grid = build_grid(Interval(1.0), 399)
    sub = restrict_to_subdomain(grid, 0.25)
    assert sub.shape.left == pytest.approx(0.25)
    assert sub.N == 199
    assert sub.h == pytest.approx(grid.h)
    u = Field.from_function(grid, lambda x: x * (1 - x))
    assert_allclose(transfer(u, sub).values, sub.nodes * (1 - sub.nodes), atol=1e-12)


def test_subdomain_must_fit():
    grid = build_grid(Ball(2, 1.0), 64)
    assert restrict_to_subdomain(grid, 0.5).shape == Ball(2, 0.5)
    with pytest.raises(ValueError):
        restrict_to_subdomain(grid, 1.5)
