"""Stochastic series expansion and exact solvers for non-Hermitian XXZ chains."""

from .model import Boundary, ChainParams, VertexTable, build_vertex_table, sign_free

__all__ = ["Boundary", "ChainParams", "VertexTable", "build_vertex_table", "sign_free"]
__version__ = "0.1.0"
