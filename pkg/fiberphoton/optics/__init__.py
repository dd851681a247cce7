"""Dipole emission at planar interfaces and fiber collection."""
