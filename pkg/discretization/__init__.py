"""Discretization package — grids, nodal fields, covariance and the elliptic solver (pure computation, no I/O)."""
