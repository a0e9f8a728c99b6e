"""Spectral winding numbers and flux-driven spectrum flow."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from ..model import Boundary, ChainParams
from .ed import _pieces

__all__ = [
    "SpectrumCollisionError",
    "SpectrumFlow",
    "bloch_matrix",
    "bloch_winding",
    "flux_hamiltonian",
    "many_body_winding",
    "spectrum_flow",
    "track_ground_state",
    "ground_state_returns",
    "critical_delta",
]

COLLISION_TOL = 1e-8
MAX_POINTS = 1 << 16


class SpectrumCollisionError(ValueError):
    """The reference energy lies on (or too close to) the spectrum."""


def bloch_matrix(params: ChainParams, k: np.ndarray) -> np.ndarray:
    """``(len(k), 2, 2)`` Bloch Hamiltonians of the two-site unit cell at ``Jz = 0``.

    Sites ``2c`` and ``2c+1`` form cell ``c``; the intra-cell bond has
    staggering ``1 + dJ`` and the inter-cell bond ``1 - dJ``.
    """
    k = np.atleast_1d(np.asarray(k, float))
    t1, t2, d = 1 + params.dj, 1 - params.dj, params.delta
    h = np.empty((len(k), 2, 2), complex)
    h[:, 0, 0] = h[:, 1, 1] = -params.mu
    h[:, 0, 1] = -0.5 * (t1 - d) - 0.5 * (t2 + d) * np.exp(-1j * k)
    h[:, 1, 0] = -0.5 * (t1 + d) - 0.5 * (t2 - d) * np.exp(1j * k)
    return h


def _winding_of_values(vals: np.ndarray) -> float:
    """Total phase change of a closed sampled curve, in units of 2 pi."""
    ratios = vals[np.r_[1:len(vals), 0]] / vals
    return float(np.angle(ratios).sum() / (2 * np.pi))


def _converged_winding(sample, n0: int, what: str) -> int:
    """Double the grid until two successive integer windings agree."""
    if n0 < 4:
        raise ValueError("need at least 4 grid points")
    prev = None
    n = n0
    while n <= MAX_POINTS:
        vals = sample(n)
        w = _winding_of_values(vals)
        wi = int(round(w))
        if abs(w - wi) < 1e-6 and wi == prev:
            return wi
        prev = wi if abs(w - wi) < 1e-6 else None
        n *= 2
    raise RuntimeError(f"{what} winding did not converge up to {MAX_POINTS} points")


def bloch_winding(params: ChainParams, e_p: complex = 0.0, n_k: int = 64) -> int:
    """Winding of ``det[H(k) - E_P]`` around the origin as k runs over the Brillouin zone."""
    if params.jz != 0:
        raise ValueError("the Bloch winding needs jz == 0")

    def sample(n):
        k = 2 * np.pi * np.arange(n) / n
        h = bloch_matrix(params, k)
        det = (h[:, 0, 0] - e_p) * (h[:, 1, 1] - e_p) - h[:, 0, 1] * h[:, 1, 0]
        # |det| = prod |E_band - E_P|, so the distance to the band is at least |det| / (2 max |h|)
        gap = np.min(np.abs(det))
        if gap < COLLISION_TOL:
            kk = float(k[np.argmin(np.abs(det))])
            raise SpectrumCollisionError(f"E_P = {e_p} lies on the Bloch spectrum near k = {kk:.6g}")
        return det

    return _converged_winding(sample, n_k, "Bloch")


def flux_hamiltonian(params: ChainParams, sector: int = 0):
    """Return ``phi -> H(phi)`` for the ring, reusing the flux-independent parts."""
    if not params.periodic:
        raise ValueError("flux insertion needs a ring")
    diag, bulk, er, el = _pieces(params, sector)
    base = bulk + np.diag(diag)
    shift = np.pi if params.boundary is Boundary.APBC else 0.0

    def h(phi: float) -> np.ndarray:
        return base + np.exp(1j * (phi + shift)) * er + np.exp(-1j * (phi + shift)) * el

    return h


def many_body_winding(params: ChainParams, e_ref: complex = 0.0, n_flux: int = 32,
                      sector: int = 0) -> int:
    """Winding of ``det[H(phi) - E]`` as the boundary flux runs from 0 to 2 pi.

    Raises :class:`SpectrumCollisionError` naming the flux where an
    eigenvalue comes within ``1e-8`` of ``e_ref``.
    """
    h_of = flux_hamiltonian(params, sector)
    cache: dict[float, np.ndarray] = {}

    def eig(phi):
        if phi not in cache:
            cache[phi] = np.linalg.eigvals(h_of(phi))
        return cache[phi]

    def sample(n):
        out = np.empty(n, complex)
        for m in range(n):
            phi = 2 * np.pi * m / n
            d = eig(phi) - e_ref
            if np.min(np.abs(d)) < COLLISION_TOL:
                raise SpectrumCollisionError(f"E = {e_ref} collides with the spectrum at phi = {phi:.6g}")
            out[m] = np.prod(d / np.abs(d))
        return out

    return _converged_winding(sample, n_flux, "many-body")


@dataclass(frozen=True)
class SpectrumFlow:
    """Eigenvalue tracks ``energies[k, i]`` at flux ``phis[k]``.

    ``ambiguous`` lists grid indices where two candidates for a track were
    within ``1e-6`` of each other.
    """

    phis: np.ndarray
    energies: np.ndarray
    ambiguous: tuple[int, ...]

    def to_rows(self) -> list[tuple[float, int, float, float]]:
        return [(float(p), i, float(e.real), float(e.imag))
                for p, row in zip(self.phis, self.energies) for i, e in enumerate(row)]


def spectrum_flow(params: ChainParams, n_flux: int = 64, sector: int = 0) -> SpectrumFlow:
    """Eigenvalues over ``phi in [0, 2 pi)`` matched by nearest-neighbour continuation."""
    h_of = flux_hamiltonian(params, sector)
    phis = 2 * np.pi * np.arange(n_flux) / n_flux
    prev = np.sort_complex(np.linalg.eigvals(h_of(0.0)))
    rows = [prev]
    ambiguous = []
    for k in range(1, n_flux):
        cur = np.linalg.eigvals(h_of(phis[k]))
        cost = np.abs(prev[:, None] - cur[None, :])
        r, c = linear_sum_assignment(cost)
        matched = cur[c[np.argsort(r)]]
        srt = np.sort(cost, axis=1)
        if srt.shape[1] > 1 and np.any(srt[:, 1] - srt[:, 0] < 1e-6):
            ambiguous.append(k)
        rows.append(matched)
        prev = matched
    return SpectrumFlow(phis, np.array(rows), tuple(ambiguous))


def track_ground_state(params: ChainParams, sector: int = 0, dphi0: float = 0.05,
                       min_dphi: float = 1e-6) -> tuple[complex, complex, int]:
    """Follow the lowest-real-part eigenvalue of ``H(0)`` continuously to ``phi = 2 pi``.

    The step shrinks whenever the nearest candidate is not clearly closer
    than the runner-up relative to the distance travelled.  Returns
    ``(E(0), E(2 pi), steps)``.
    """
    h_of = flux_hamiltonian(params, sector)
    ev = np.linalg.eigvals(h_of(0.0))
    e0 = ev[np.argmin(ev.real)]
    phi, e, slope = 0.0, e0, 0.0 + 0.0j
    dphi = dphi0
    steps = 0
    while phi < 2 * np.pi - 1e-15:
        step = min(dphi, 2 * np.pi - phi)
        cand = np.linalg.eigvals(h_of(phi + step))
        guess = e + slope * step
        dist = np.abs(cand - guess)
        order = np.argsort(dist)
        best, second = dist[order[0]], dist[order[1]] if len(cand) > 1 else np.inf
        moved = abs(cand[order[0]] - e)
        if second < 1e-12 and best < 1e-12:
            raise RuntimeError(f"exact degeneracy on the tracked level at phi = {phi + step:.6g}")
        if (best > 0.25 * second or best > 0.5 * max(moved, 1e-3)) and step > min_dphi:
            dphi = step / 2
            continue
        new = cand[order[0]]
        slope = (new - e) / step
        e, phi = new, phi + step
        steps += 1
        dphi = min(dphi0, step * 1.5)
    return complex(e0), complex(e), steps


def ground_state_returns(params: ChainParams, sector: int = 0, tol: float = 1e-7) -> bool:
    """True when the flux-tracked ground state comes back to itself after one flux quantum."""
    e0, e1, _ = track_ground_state(params, sector)
    return abs(e1 - e0) < tol * max(1.0, abs(e0))


def critical_delta(params: ChainParams, lo: float = 0.0, hi: float | None = None,
                   resolution: float = 5e-3, sector: int = 0) -> float:
    """Smallest ``delta`` at which the tracked ground state stops returning to itself.

    Bisects between ``lo`` (must return) and ``hi`` (must not); ``hi``
    defaults to the largest sign-free value ``1 - |dJ|``.
    """
    hi = 1 - abs(params.dj) - 1e-9 if hi is None else hi
    if not ground_state_returns(params.replace(delta=lo), sector):
        raise ValueError(f"ground state does not return at the lower bracket delta = {lo}")
    if ground_state_returns(params.replace(delta=hi), sector):
        raise ValueError(f"ground state still returns at the upper bracket delta = {hi}")
    while hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        if ground_state_returns(params.replace(delta=mid), sector):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
