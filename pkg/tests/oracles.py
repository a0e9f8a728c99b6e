"""Independent reference implementations used to freeze expected values.

Nothing here imports the package's solvers; only ``ChainParams`` for the
parameter container.
"""

from __future__ import annotations

from functools import reduce

import numpy as np

SP = np.array([[0.0, 1.0], [0.0, 0.0]])  # S+ in the (up, down) basis
SM = SP.T
SZ = np.diag([0.5, -0.5])
ID = np.eye(2)


def site_op(op, i, n):
    return reduce(np.kron, [op if k == i else ID for k in range(n)])


def kron_hamiltonian(n, jz, dj, delta, mu=0.0, boundary="OBC", flux=0.0):
    """Full 2^n Hamiltonian from Kronecker products of spin operators.

    Bond b (1-based) joins sites b and b+1; hop coefficients
    1/2 [1 - (-1)^b dJ -+ delta] on S+_b S-_{b+1} and S-_b S+_{b+1}.
    """
    dim = 2 ** n
    h = np.zeros((dim, dim), complex)
    nb = n - 1 if boundary == "OBC" else n
    for b in range(1, nb + 1):
        i, j = b - 1, b % n
        t = 1 - (-1) ** b * dj
        phase = 1.0
        if b == n:
            phase = np.exp(1j * (flux + (np.pi if boundary == "APBC" else 0.0)))
        h += jz * site_op(SZ, i, n) @ site_op(SZ, j, n)
        h += 0.5 * (t - delta) * np.conj(phase) * site_op(SP, i, n) @ site_op(SM, j, n)
        h += 0.5 * (t + delta) * phase * site_op(SM, i, n) @ site_op(SP, j, n)
    for i in range(n):
        h -= mu * site_op(SZ, i, n)
    return h


def sector_block(h, n, sz_total):
    mags = np.diag(sum(site_op(SZ, i, n) for i in range(n))).real
    idx = np.nonzero(np.isclose(mags, sz_total))[0]
    return h[np.ix_(idx, idx)]


def kron_spectrum(n, jz, dj, delta, mu=0.0, boundary="OBC", sector=0, flux=0.0):
    blk = sector_block(kron_hamiltonian(n, jz, dj, delta, mu, boundary, flux), n, sector)
    return np.sort_complex(np.linalg.eigvals(blk))


def kron_thermal_energy(n, jz, dj, delta, beta, boundary="PBC", mu=0.0, sector=0):
    e = kron_spectrum(n, jz, dj, delta, mu, boundary, sector)
    w = np.exp(-beta * (e - e.real.min()))
    return float(((e * w).sum() / w.sum()).real)


def xx_open_chain_energy(n):
    """Ground energy of the Hermitian open XX chain at half filling: -sum cos(pi m/(n+1))."""
    k = np.pi * np.arange(1, n + 1) / (n + 1)
    eps = -np.cos(k)
    return float(np.sort(eps)[: n // 2].sum())


def xx_ring_correlation(n, antiperiodic):
    """Plane-wave correlation matrix of the half-filled Hermitian XX ring (closed shell)."""
    shift = 0.5 if antiperiodic else 0.0
    ks = 2 * np.pi * (np.arange(n) + shift) / n
    e = -np.cos(ks)
    occ = ks[np.argsort(e, kind="stable")[: n // 2]]
    i = np.arange(n)
    return np.exp(-1j * np.outer(i, occ)) @ np.exp(1j * np.outer(i, occ)).T / n


def renyi2_direct(c, region):
    sub = c[np.ix_(region, region)]
    xi = np.linalg.eigvalsh(0.5 * (sub + sub.conj().T))
    return float(-np.log(xi ** 2 + (1 - xi) ** 2).sum())


def hand_bounce_w3_lower_left(jz, dj_term, delta, eps):
    """Bounce probability of a right-hop vertex entered on its lower-left leg.

    After flipping the entrance spin the lower state is down-down.  Exiting
    lower-left restores W3, lower-right gives the diagonal down-up vertex,
    upper-right gives down-down on both sides and upper-left has no vertex.
    """
    w3 = 0.5 * (1 - dj_term + delta)
    w14 = eps + jz / 2
    w12 = eps
    return w3 / (w3 + w14 + w12)


def winding_by_unwrap(values):
    ph = np.unwrap(np.angle(np.append(values, values[0])))
    return int(round((ph[-1] - ph[0]) / (2 * np.pi)))


def kron_thermal_bond_observables(n, jz, dj, delta, beta, boundary="PBC", sector=0):
    """Per-bond ``<Sz Sz>``, ``<S+_b S-_{b+1}>`` and ``<S-_b S+_{b+1}>`` in the canonical sector ensemble."""
    h = kron_hamiltonian(n, jz, dj, delta, 0.0, boundary)
    mags = np.diag(sum(site_op(SZ, i, n) for i in range(n))).real
    idx = np.nonzero(np.isclose(mags, sector))[0]
    hs = h[np.ix_(idx, idx)]
    e, r = np.linalg.eig(hs)
    l = np.linalg.inv(r)
    w = np.exp(-beta * (e - e.real.min()))
    rho = (r * w) @ l / w.sum()
    nb = n - 1 if boundary == "OBC" else n
    out = np.zeros((3, nb))
    for b in range(nb):
        i, j = b, (b + 1) % n
        for row, (a, c) in enumerate([(SZ, SZ), (SP, SM), (SM, SP)]):
            op = (site_op(a, i, n) @ site_op(c, j, n))[np.ix_(idx, idx)]
            out[row, b] = float(np.trace(op @ rho).real)
    return out
