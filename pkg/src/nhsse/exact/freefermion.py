"""Biorthogonal free-fermion ground states, correlation matrices and Renyi-2 entropies."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..model import Boundary, ChainParams, fermion_boundary, jordan_wigner_hamiltonian
from .ed import BiorthogonalDecomposition, biorthogonal_eig

__all__ = [
    "DegenerateFillingError",
    "FreeFermionState",
    "EntropyResult",
    "single_particle_spectrum",
    "ff_ground_state",
    "correlation_matrix",
    "renyi2",
    "default_region",
    "delta_s",
]

EDGE_TOL = 1e-9
LOG_TOL = 1e-14


class DegenerateFillingError(ValueError):
    """The N_f-th and (N_f+1)-th modes share the same real part."""

    def __init__(self, modes: list[int], energies: np.ndarray):
        self.modes = modes
        self.energies = energies
        super().__init__(f"degenerate real parts at the filling edge, modes {modes} "
                         f"with energies {np.round(energies, 12).tolist()}; shift mu slightly")


@dataclass(frozen=True)
class FreeFermionState:
    energy: complex
    occupied: tuple[int, ...]
    decomposition: BiorthogonalDecomposition
    fermion_bc: Boundary
    n_fermions: int


@dataclass(frozen=True)
class EntropyResult:
    s2: complex
    s2_abs: float
    region: tuple[int, ...]
    boundary: Boundary


def single_particle_spectrum(params: ChainParams, fermion_bc: Boundary | str | None = None,
                             flux: float = 0.0) -> BiorthogonalDecomposition:
    sp = jordan_wigner_hamiltonian(params, fermion_bc, flux)
    gauge = None
    if sp.boundary is Boundary.OBC and params.delta != 0:
        n = sp.dim
        t = params.stagger()[: n - 1]
        right = 0.5 * (t + params.delta)
        left = 0.5 * (t - params.delta)
        if np.all(right > 0) and np.all(left > 0):
            # d_{i+1}/d_i = sqrt(left/right) makes the hopping symmetric
            x = np.concatenate([[0.0], np.cumsum(0.5 * np.log(left / right))])
            gauge = np.exp(x - x.mean())
    return biorthogonal_eig(sp.matrix, gauge)


def ff_ground_state(params: ChainParams, fermion_bc: Boundary | str | None = None,
                    n_fermions: int | None = None) -> FreeFermionState:
    """Fill the ``n_fermions`` modes with the lowest real parts (default N/2).

    ``fermion_bc`` defaults to the Jordan-Wigner image of ``params.boundary``
    at the chosen filling.  The energy includes the constant ``mu N / 2``
    from ``-mu Sz = -mu (n - 1/2)``, so it equals the spin-chain energy.

    Raises
    ------
    DegenerateFillingError
        When the last filled and first empty modes have equal real parts.
    """
    n = params.n_sites
    nf = n // 2 if n_fermions is None else n_fermions
    if fermion_bc is None:
        fermion_bc = fermion_boundary(n, nf, params.boundary)
    fermion_bc = Boundary.parse(fermion_bc)
    dec = single_particle_spectrum(params, fermion_bc)
    order = np.argsort(dec.eigenvalues.real, kind="stable")
    re = dec.eigenvalues.real[order]
    if 0 < nf < n:
        scale = max(1.0, float(np.max(np.abs(re))))
        if re[nf] - re[nf - 1] < EDGE_TOL * scale:
            tied = np.nonzero(np.abs(re - re[nf - 1]) < EDGE_TOL * scale)[0]
            modes = sorted(int(order[k]) for k in tied)
            raise DegenerateFillingError(modes, dec.eigenvalues[modes])
    occ = tuple(sorted(int(k) for k in order[:nf]))
    energy = complex(dec.eigenvalues[list(occ)].sum()) + params.mu * n / 2
    return FreeFermionState(energy, occ, dec, fermion_bc, nf)


def correlation_matrix(gs: FreeFermionState) -> np.ndarray:
    """``C[i, j] = <c_i^dag c_j> = sum_occ conj(L_n(i)) R_n(j)`` in the biorthogonal ground state."""
    occ = list(gs.occupied)
    left = gs.decomposition.left[:, occ]
    right = gs.decomposition.right[:, occ]
    return left.conj() @ right.T


def default_region(n_sites: int) -> tuple[int, ...]:
    """Central half of the chain, sites ``N/4 .. 3N/4 - 1`` (0-based)."""
    return tuple(range(n_sites // 4, 3 * n_sites // 4))


def renyi2(c: np.ndarray, region=None, boundary: Boundary = Boundary.OBC) -> EntropyResult:
    """Second Renyi entropy of a region from the correlation matrix.

    Returns ``S = -sum ln[xi^2 + (1 - xi)^2]`` (complex in general) and the
    variant with ``xi`` replaced by ``|xi|``.
    """
    n = c.shape[0]
    region = default_region(n) if region is None else tuple(int(i) for i in region)
    if not region or len(set(region)) >= n:
        raise ValueError("region must be a non-empty proper subset of the sites")
    if len(set(region)) != len(region) or min(region) < 0 or max(region) >= n:
        raise ValueError(f"invalid region {region}")
    sub = c[np.ix_(region, region)]
    xi = np.linalg.eigvals(sub)
    arg = xi ** 2 + (1 - xi) ** 2
    if np.any(np.abs(arg) < LOG_TOL):
        raise ValueError("eigenvalue of the reduced correlation matrix at a log singularity")
    s2 = complex(-np.log(arg.astype(complex)).sum())
    a = np.abs(xi)
    s2_abs = float(-np.log(a ** 2 + (1 - a) ** 2).sum())
    return EntropyResult(s2, s2_abs, region, boundary)


def delta_s(params: ChainParams, region=None) -> dict:
    """Ring-minus-open Renyi-2 differences at half filling.

    ``dS``/``dS_abs`` use the ring of ``params`` (spin PBC unless APBC is
    given).  ``variants`` also holds the result for the other spin ring
    boundary, or ``None`` where its filling edge is degenerate.
    """
    if params.jz != 0:
        raise ValueError("delta_s needs jz == 0")
    n = params.n_sites
    region = default_region(n) if region is None else tuple(region)
    open_s = renyi2(correlation_matrix(ff_ground_state(params.replace(boundary=Boundary.OBC))),
                    region, Boundary.OBC)
    main = params.boundary if params.periodic else Boundary.PBC
    variants: dict[str, dict | None] = {}
    for spin_bc in (Boundary.PBC, Boundary.APBC):
        fbc = fermion_boundary(n, n // 2, spin_bc)
        try:
            gs = ff_ground_state(params.replace(boundary=spin_bc), fbc)
        except DegenerateFillingError:
            variants[spin_bc.value] = None
            continue
        ring = renyi2(correlation_matrix(gs), region, fbc)
        variants[spin_bc.value] = {
            "fermion_bc": fbc.value,
            "dS": ring.s2 - open_s.s2,
            "dS_abs": ring.s2_abs - open_s.s2_abs,
        }
    chosen = variants[main.value]
    if chosen is None:
        raise DegenerateFillingError([], np.array([]))
    return {"dS": chosen["dS"], "dS_abs": chosen["dS_abs"], "spin_bc": main.value,
            "fermion_bc": chosen["fermion_bc"], "variants": variants}
