"""Numerical kernels: profiles, grids, eigenpairs, stationary and evolution solvers."""
