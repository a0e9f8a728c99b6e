"""Non-Hermitian XXZ-type chain: parameters, SSE vertex weights, Jordan-Wigner image.

The chain is

    H = sum_b Jz Sz_b Sz_{b+1}
        + 1/2 [1 - (-1)^b dJ - delta] S+_b S-_{b+1}
        + 1/2 [1 - (-1)^b dJ + delta] S-_b S+_{b+1}
        - mu sum_i Sz_i

with bonds labelled b = 1, 2, ... (bond b joins sites b and b+1, 1-based).
In code, sites and bonds are 0-based: bond ``k`` joins sites ``k`` and
``k + 1 (mod N)`` and carries the label b = k + 1, so its staggering factor is
``1 + dJ * (-1)**k``.

For the SSE decomposition H = -sum_b (H1_b + H2_b + H3_b) the diagonal operator
is H1_b = C - Jz Sz Sz + (field share) with C = eps + Jz/4.  H3_b moves an up
spin one site to the right, H2_b one site to the left.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, fields, replace

import numpy as np

__all__ = [
    "Boundary",
    "ChainParams",
    "VertexTable",
    "SingleParticleHam",
    "sign_free",
    "build_vertex_table",
    "jordan_wigner_hamiltonian",
    "fermion_boundary",
    "params_to_text",
    "params_from_text",
    "parse_kv_text",
]


class Boundary(str, enum.Enum):
    OBC = "OBC"
    PBC = "PBC"
    APBC = "APBC"

    @classmethod
    def parse(cls, value: "str | Boundary") -> "Boundary":
        if isinstance(value, Boundary):
            return value
        return cls(str(value).strip().upper())


@dataclass(frozen=True)
class ChainParams:
    """Physical and algorithmic parameters of one chain.

    Attributes
    ----------
    n_sites : int
        Even number of sites N.
    jz : float
        Ising coupling.
    dj : float
        Staggered XY modulation.
    delta : float
        Non-reciprocity (non-Hermiticity) of the XY hopping.
    eps : float
        Constant added to every diagonal SSE operator; leaves physics unchanged.
    mu : float
        Uniform field, ``-mu * sum Sz`` (Fermi energy after Jordan-Wigner).
    beta : float
        Inverse temperature.
    boundary : Boundary
        OBC, PBC or APBC (APBC is available to the exact solvers only).
    seed : int
        Default RNG seed for stochastic runs.
    """

    n_sites: int
    jz: float = 0.0
    dj: float = 0.0
    delta: float = 0.0
    eps: float = 0.5
    mu: float = 0.0
    beta: float = 10.0
    boundary: Boundary = Boundary.PBC
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "boundary", Boundary.parse(self.boundary))
        if int(self.n_sites) != self.n_sites or self.n_sites < 2 or self.n_sites % 2:
            raise ValueError(f"n_sites must be a positive even integer, got {self.n_sites}")
        object.__setattr__(self, "n_sites", int(self.n_sites))
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        for name in ("jz", "dj", "delta", "eps", "mu", "beta"):
            object.__setattr__(self, name, float(getattr(self, name)))
        object.__setattr__(self, "seed", int(self.seed))

    @property
    def n_bonds(self) -> int:
        return self.n_sites - 1 if self.boundary is Boundary.OBC else self.n_sites

    @property
    def periodic(self) -> bool:
        return self.boundary is not Boundary.OBC

    def bond_sites(self) -> np.ndarray:
        """``(n_bonds, 2)`` array of (left, right) site indices."""
        k = np.arange(self.n_bonds)
        return np.stack([k, (k + 1) % self.n_sites], axis=1)

    def stagger(self) -> np.ndarray:
        """``1 - (-1)^b dJ`` for every bond, b = k + 1."""
        k = np.arange(self.n_bonds)
        return 1.0 + self.dj * np.where(k % 2 == 0, 1.0, -1.0)

    def replace(self, **changes) -> "ChainParams":
        return replace(self, **changes)


def field_shares(params: ChainParams) -> np.ndarray:
    """Fraction of each site's field assigned to the two ends of each bond.

    Returns an ``(n_bonds, 2)`` array.  Every site belongs to two bonds on a
    ring (share 1/2 each); the two chain ends under OBC belong to a single bond
    and take the whole field.
    """
    shares = np.full((params.n_bonds, 2), 0.5)
    if params.boundary is Boundary.OBC:
        shares[0, 0] = 1.0
        shares[-1, 1] = 1.0
    return shares


def _diagonal_weights(params: ChainParams) -> np.ndarray:
    """``(n_bonds, 4)`` diagonal vertex weights indexed by ``s_left + 2 * s_right``."""
    shares = field_shares(params)
    out = np.empty((params.n_bonds, 4))
    for q in range(4):
        sl = 0.5 if q & 1 else -0.5
        sr = 0.5 if q & 2 else -0.5
        out[:, q] = (params.eps + params.jz / 4 - params.jz * sl * sr
                     + params.mu * (shares[:, 0] * sl + shares[:, 1] * sr))
    return out


def sign_free(params: ChainParams) -> bool:
    """True when every SSE vertex weight of ``params`` is non-negative."""
    if params.boundary is Boundary.APBC:
        # boundary hoppings change sign; odd winding sectors come with weight < 0
        return False
    if 1.0 - abs(params.dj) - abs(params.delta) < 0:
        return False
    if params.eps < max(0.0, -params.jz / 2):
        return False
    return bool(np.all(_diagonal_weights(params) >= 0))


@dataclass(frozen=True)
class VertexTable:
    """Non-zero SSE matrix elements for every bond.

    ``w11`` (up-up), ``w12`` (down-down), ``w13`` (up-down) and ``w14``
    (down-up) are the diagonal weights, ``w2`` moves an up spin left and ``w3``
    moves it right.  Each field is an array with one entry per bond; with the
    field folded in, OBC edge bonds differ from the bulk.
    """

    w11: np.ndarray
    w12: np.ndarray
    w13: np.ndarray
    w14: np.ndarray
    w2: np.ndarray
    w3: np.ndarray

    @property
    def n_bonds(self) -> int:
        return len(self.w2)

    def bond(self, k: int) -> dict[str, float]:
        return {f.name: float(getattr(self, f.name)[k]) for f in fields(self)}

    def by_parity(self, parity: int) -> dict[str, float]:
        """Weights of the first bulk bond whose label b = k + 1 has ``b % 2 == parity``."""
        k = (parity + 1) % 2
        if self.n_bonds > 2:
            k += 2  # skip OBC edge bonds
        return self.bond(k % self.n_bonds)

    def diagonal(self) -> np.ndarray:
        """``(n_bonds, 4)`` diagonal weights indexed by ``s_left + 2 * s_right``."""
        return np.stack([self.w12, self.w13, self.w14, self.w11], axis=1)

    def leg_weights(self) -> np.ndarray:
        """``(n_bonds, 16)`` weight of every four-leg spin pattern.

        Leg bits: 0 lower-left, 1 lower-right, 2 upper-left, 3 upper-right
        (lower = before the operator in imaginary time).  Patterns that are not
        matrix elements of any bond operator get weight zero.
        """
        out = np.zeros((self.n_bonds, 16))
        diag = self.diagonal()
        for q in range(4):
            out[:, q | (q << 2)] = diag[:, q]
        out[:, 1 | (2 << 2)] = self.w3  # up-down -> down-up
        out[:, 2 | (1 << 2)] = self.w2  # down-up -> up-down
        return out


def build_vertex_table(params: ChainParams) -> VertexTable:
    if not sign_free(params):
        raise ValueError(f"parameters are not sign-problem free: {params}")
    diag = _diagonal_weights(params)
    t = params.stagger()
    return VertexTable(
        w11=diag[:, 3].copy(),
        w12=diag[:, 0].copy(),
        w13=diag[:, 1].copy(),
        w14=diag[:, 2].copy(),
        w2=0.5 * (t - params.delta),
        w3=0.5 * (t + params.delta),
    )


def fermion_boundary(n_sites: int, n_fermions: int, spin_boundary: "Boundary | str") -> Boundary:
    """Boundary condition of the Jordan-Wigner fermions for a closed spin ring.

    The hop across the ring picks up ``-(-1)^n_fermions`` relative to the bulk.
    """
    spin_boundary = Boundary.parse(spin_boundary)
    if spin_boundary is Boundary.OBC:
        return Boundary.OBC
    periodic = n_fermions % 2 == 1
    if spin_boundary is Boundary.APBC:
        periodic = not periodic
    return Boundary.PBC if periodic else Boundary.APBC


@dataclass(frozen=True)
class SingleParticleHam:
    """Hopping matrix with ``matrix[i, j]`` the coefficient of ``c_i^dag c_j``."""

    dim: int
    matrix: np.ndarray
    boundary: Boundary


def jordan_wigner_hamiltonian(params: ChainParams, fermion_bc: "Boundary | str | None" = None,
                              flux: float = 0.0) -> SingleParticleHam:
    """Single-particle image of the ``Jz = 0`` chain.

    Hopping to the right across bond b is ``-(1 - (-1)^b dJ + delta) / 2``,
    to the left ``-(1 - (-1)^b dJ - delta) / 2``; the on-site term is ``-mu``.
    The many-body energies equal sums of eigenvalues plus ``mu * N / 2``.

    ``fermion_bc`` defaults to the half-filling image of ``params.boundary``.
    ``flux`` multiplies the rightward hop across the ring by ``exp(i flux)``.
    """
    if params.jz != 0:
        raise ValueError("the Jordan-Wigner image is quadratic only for jz == 0")
    n = params.n_sites
    if fermion_bc is None:
        fermion_bc = fermion_boundary(n, n // 2, params.boundary)
    fermion_bc = Boundary.parse(fermion_bc)
    k = np.arange(n)
    t = 1.0 + params.dj * np.where(k % 2 == 0, 1.0, -1.0)
    right = -0.5 * (t + params.delta)
    left = -0.5 * (t - params.delta)
    dtype = complex if (flux or fermion_bc is not Boundary.OBC) else float
    h = np.zeros((n, n), dtype=dtype)
    h[k, k] = -params.mu
    h[k[1:], k[:-1]] = right[:-1]
    h[k[:-1], k[1:]] = left[:-1]
    if fermion_bc is not Boundary.OBC:
        phase = (1.0 if fermion_bc is Boundary.PBC else -1.0) * np.exp(1j * flux)
        h[0, n - 1] += right[-1] * phase
        h[n - 1, 0] += left[-1] * np.conj(phase)
    if np.iscomplexobj(h) and not np.any(h.imag):
        h = h.real.copy()
    return SingleParticleHam(dim=n, matrix=h, boundary=fermion_bc)


# -- flat key-value configuration ---------------------------------------------------------

_PARAM_KEYS = ("n_sites", "jz", "dj", "delta", "eps", "mu", "beta", "boundary", "seed")


def parse_kv_text(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in out:
            raise ValueError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def params_to_text(params: ChainParams) -> str:
    lines = []
    for key in _PARAM_KEYS:
        value = getattr(params, key)
        if isinstance(value, float):
            value = repr(value)
        elif isinstance(value, Boundary):
            value = value.value
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def params_from_mapping(kv: dict[str, str]) -> ChainParams:
    if "n_sites" not in kv:
        raise ValueError("config is missing n_sites")
    kwargs = {}
    for key in _PARAM_KEYS:
        if key not in kv:
            continue
        value = kv[key]
        if key in ("n_sites", "seed"):
            kwargs[key] = int(value)
        elif key == "boundary":
            kwargs[key] = Boundary.parse(value)
        else:
            kwargs[key] = float(value)
    return ChainParams(**kwargs)


def params_from_text(text: str) -> ChainParams:
    kv = parse_kv_text(text)
    unknown = set(kv) - set(_PARAM_KEYS)
    if unknown:
        raise ValueError(f"unknown parameter keys: {sorted(unknown)}")
    return params_from_mapping(kv)

