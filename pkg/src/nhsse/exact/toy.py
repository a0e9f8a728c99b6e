"""Analytic toy-model winding weights and the reality of the partition function."""

from __future__ import annotations

import numpy as np

from .ed import BiorthogonalDecomposition

__all__ = ["toy_weight", "toy_argmax", "partition_reality_check"]


def toy_weight(alpha: float, beta: float, w) -> np.ndarray | float:
    """Relative weight ``exp[-(2 pi w - alpha beta)^2 / (4 beta)]`` of winding sector ``w``.

    The w-independent prefactor is dropped; only ratios between sectors matter.
    """
    if not beta > 0:
        raise ValueError("beta must be positive")
    w = np.asarray(w, dtype=float)
    out = np.exp(-((2 * np.pi * w - alpha * beta) ** 2) / (4 * beta))
    return float(out) if out.ndim == 0 else out


def toy_argmax(alpha: float, beta: float) -> int:
    """Integer winding with the largest toy weight (nearest integer to alpha beta / 2 pi)."""
    c = alpha * beta / (2 * np.pi)
    lo = int(np.floor(c))
    return lo if toy_weight(alpha, beta, lo) >= toy_weight(alpha, beta, lo + 1) else lo + 1


def partition_reality_check(decomp: BiorthogonalDecomposition | np.ndarray, beta: float) -> dict:
    """``Z = sum exp(-beta E_i)`` and ``|Im Z| / |Re Z|``.

    The ratio is computed after factoring out ``exp(-beta min Re E)`` so it
    is meaningful even when ``Z`` itself overflows; ``log_scale`` is that
    factored exponent and ``z`` is reported unscaled (possibly inf).
    """
    e = np.asarray(getattr(decomp, "eigenvalues", decomp), complex)
    shift = float(e.real.min())
    zs = np.exp(-beta * (e - shift)).sum()
    with np.errstate(over="ignore"):
        z = complex(zs * np.exp(-beta * shift))
    ratio = float(abs(zs.imag) / abs(zs.real)) if zs.real != 0 else float("inf")
    return {"z": z, "imag_ratio": ratio, "log_scale": -beta * shift, "z_scaled": complex(zs)}
