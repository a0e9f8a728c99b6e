"""Exact diagonalization of the spin chain in fixed total-Sz sectors, with boundary flux."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.linalg as sla

from ..model import Boundary, ChainParams

MAX_SITES = 16
DEFECT_COND = 1e12

__all__ = [
    "BiorthogonalDecomposition",
    "sector_basis",
    "ed_hamiltonian",
    "ed_eigenvalues",
    "ed_spectrum",
    "biorthogonal_eig",
    "thermal_energy",
    "ground_energy",
]


@dataclass(frozen=True)
class BiorthogonalDecomposition:
    """Right and left eigenvectors normalised so that ``left.conj().T @ right = 1``.

    Attributes
    ----------
    eigenvalues : complex ndarray
        Sorted by real part, then imaginary part.
    right, left : ndarray
        Eigenvectors in columns.
    residual : float
        ``max |L^dag R - 1|``.
    defective : bool
        True when the eigenvector matrix is numerically singular; the vectors
        are then unreliable but the eigenvalues can still be used.
    """

    eigenvalues: np.ndarray
    right: np.ndarray
    left: np.ndarray
    residual: float
    defective: bool = False

    @property
    def dim(self) -> int:
        return len(self.eigenvalues)

    def completeness_residual(self) -> float:
        eye = np.eye(self.dim)
        return float(np.max(np.abs(self.right @ self.left.conj().T - eye)))

    def ground_index(self) -> int:
        return int(np.argmin(self.eigenvalues.real))


def _sorted(w: np.ndarray, r: np.ndarray, l: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    order = np.lexsort((np.round(w.imag, 12), np.round(w.real, 12)))
    return w[order], r[:, order], l[:, order]


def biorthogonal_eig(h: np.ndarray, gauge: np.ndarray | None = None) -> BiorthogonalDecomposition:
    """Biorthonormal eigendecomposition of a square matrix.

    ``gauge`` is an optional positive diagonal ``d`` such that
    ``diag(d) @ h @ diag(1/d)`` is Hermitian; the decomposition is then
    obtained from a Hermitian solver, which stays accurate where the
    eigenvector matrix of ``h`` itself is very ill-conditioned.
    """
    h = np.asarray(h)
    if gauge is not None:
        hs = (gauge[:, None] * h) / gauge[None, :]
        hs = 0.5 * (hs + hs.conj().T)
        w, v = np.linalg.eigh(hs)
        right = v / gauge[:, None]
        left = v * gauge[:, None]
        w = w.astype(complex)
    elif np.allclose(h, h.conj().T, atol=1e-14, rtol=0):
        w, v = np.linalg.eigh(h)
        right = left = v
        w = w.astype(complex)
    else:
        w, right = sla.eig(h)
        cond = np.linalg.cond(right)
        if not np.isfinite(cond) or cond > DEFECT_COND:
            left = np.full_like(right, np.nan)
            w, right, left = _sorted(w, right, left)
            return BiorthogonalDecomposition(w, right, left, float("inf"), defective=True)
        left = np.linalg.inv(right).conj().T
    w, right, left = _sorted(np.asarray(w, complex), right, left)
    res = float(np.max(np.abs(left.conj().T @ right - np.eye(len(w)))))
    return BiorthogonalDecomposition(w, right, left, res)


@lru_cache(maxsize=64)
def sector_basis(n_sites: int, sector: int = 0) -> np.ndarray:
    """Sorted bit patterns (bit i = site i up) with ``n_sites/2 + sector`` up spins."""
    if n_sites > MAX_SITES:
        raise ValueError(f"ED is limited to N <= {MAX_SITES}; use the free-fermion solver for larger chains")
    n_up = n_sites // 2 + sector
    if not 0 <= n_up <= n_sites:
        raise ValueError(f"sector {sector} impossible for N = {n_sites}")
    states = np.arange(1 << n_sites, dtype=np.int64)
    pop = np.zeros_like(states)
    for i in range(n_sites):
        pop += (states >> i) & 1
    out = states[pop == n_up]
    out.flags.writeable = False
    return out


def _pieces(params: ChainParams, sector: int):
    """Diagonal, bulk hopping and the two boundary hopping matrices of one sector."""
    n = params.n_sites
    basis = sector_basis(n, sector)
    dim = len(basis)
    bits = ((basis[:, None] >> np.arange(n)) & 1).astype(float)
    sz = bits - 0.5
    bonds = params.bond_sites()
    t = params.stagger()
    diag = -params.mu * sz.sum(axis=1)
    bulk = np.zeros((dim, dim))
    edge_right = np.zeros((dim, dim))  # moves an up spin across the ring-closing bond to the right
    edge_left = np.zeros((dim, dim))
    for k, (i, j) in enumerate(bonds):
        diag = diag + params.jz * sz[:, i] * sz[:, j]
        flip = (1 << int(i)) | (1 << int(j))
        target = np.searchsorted(basis, basis ^ flip)
        right = (bits[:, i] == 1) & (bits[:, j] == 0)
        left = (bits[:, i] == 0) & (bits[:, j] == 1)
        ring = params.periodic and k == len(bonds) - 1
        dst_r = edge_right if ring else bulk
        dst_l = edge_left if ring else bulk
        src = np.nonzero(right)[0]
        dst_r[target[src], src] += 0.5 * (t[k] + params.delta)
        src = np.nonzero(left)[0]
        dst_l[target[src], src] += 0.5 * (t[k] - params.delta)
    return diag, bulk, edge_right, edge_left


def ed_hamiltonian(params: ChainParams, flux: float = 0.0, sector: int = 0) -> np.ndarray:
    """Dense sector Hamiltonian.

    The boundary bond's rightward hop carries ``exp(i flux)``, the leftward
    one ``exp(-i flux)``; spin APBC adds pi to the flux.  ``flux`` is ignored
    under OBC.
    """
    diag, bulk, er, el = _pieces(params, sector)
    h = bulk + np.diag(diag)
    if not params.periodic:
        return h
    phi = flux + (np.pi if params.boundary is Boundary.APBC else 0.0)
    if phi == 0.0:
        return h + er + el
    return h + np.exp(1j * phi) * er + np.exp(-1j * phi) * el


def _obc_gauge(params: ChainParams, sector: int) -> np.ndarray | None:
    """Imaginary-gauge factors that symmetrise the open chain, if all hops are positive."""
    t = params.stagger()
    a = 0.5 * (t + params.delta)
    c = 0.5 * (t - params.delta)
    if np.any(a <= 0) or np.any(c <= 0):
        return None
    # x_{k+1} - x_k = ln(a_k / c_k) / 2 on every bond; a spin at site i contributes x_i
    x = np.concatenate([[0.0], np.cumsum(0.5 * np.log(a / c))])
    x -= x.mean()
    basis = sector_basis(params.n_sites, sector)
    bits = ((basis[:, None] >> np.arange(params.n_sites)) & 1).astype(float)
    return np.exp(-(bits @ x))


def ed_spectrum(params: ChainParams, flux: float = 0.0, sector: int = 0) -> BiorthogonalDecomposition:
    """Biorthonormal eigendecomposition of the sector Hamiltonian."""
    h = ed_hamiltonian(params, flux, sector)
    gauge = None
    if params.boundary is Boundary.OBC and params.delta != 0:
        gauge = _obc_gauge(params, sector)
    return biorthogonal_eig(h, gauge)


def ed_eigenvalues(params: ChainParams, flux: float = 0.0, sector: int = 0) -> np.ndarray:
    h = ed_hamiltonian(params, flux, sector)
    if np.allclose(h, h.conj().T, atol=1e-14, rtol=0):
        return np.linalg.eigvalsh(h).astype(complex)
    return np.sort_complex(np.linalg.eigvals(h))


def ground_energy(params: ChainParams, sector: int = 0) -> float:
    """Smallest real part of the sector spectrum."""
    return float(ed_eigenvalues(params, 0.0, sector).real.min())


def thermal_energy(params: ChainParams, sector: int = 0) -> float:
    """``Tr[H e^{-beta H}] / Tr[e^{-beta H}]`` in one sector, at ``params.beta``.

    Complex-conjugate pairs contribute real totals; the tiny imaginary
    remainder is dropped.
    """
    e = ed_eigenvalues(params, 0.0, sector)
    e0 = e.real.min()
    w = np.exp(-params.beta * (e - e0))
    return float(((e * w).sum() / w.sum()).real)
