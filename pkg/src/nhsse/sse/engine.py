"""SSE Monte Carlo for the non-Hermitian chain: configurations, updates, chain driver."""

from __future__ import annotations

import json
import logging
import struct
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..model import Boundary, ChainParams, VertexTable, build_vertex_table, params_from_text, params_to_text
from . import kernels
from .record import ChainTally, MeasurementRecord

log = logging.getLogger(__name__)

__all__ = [
    "SseConfig",
    "Schedule",
    "LoopStats",
    "CorruptionError",
    "init_config",
    "diagonal_update",
    "directed_loop_update",
    "adjust_truncation",
    "measure_winding",
    "run_sweeps",
    "run_chain",
    "save_checkpoint",
    "load_checkpoint",
]


class CorruptionError(RuntimeError):
    """The SSE configuration violates one of its structural invariants."""


_ERRORS = {
    kernels.ERR_PROPAGATION: "off-diagonal operator inconsistent with the propagated state",
    kernels.ERR_PERIODICITY: "propagated state is not periodic in imaginary time",
    kernels.ERR_WINDING: "winding current is not a multiple of N",
}


def _check(code: int) -> int:
    if code < 0:
        raise CorruptionError(_ERRORS.get(code, f"kernel error {code}"))
    return code


class _Tables:
    """Per-parameter-set arrays the kernels need."""

    def __init__(self, params: ChainParams):
        self.vertex_table: VertexTable = build_vertex_table(params)
        self.bond_sites = params.bond_sites().astype(np.int64)
        self.diag_w = self.vertex_table.diagonal()
        self.leg_w = self.vertex_table.leg_weights()
        self.cum = kernels.exit_probabilities(self.leg_w)
        site_bonds = np.full((params.n_sites, 2), -1, np.int64)
        fill = np.zeros(params.n_sites, np.int64)
        for b, (i, j) in enumerate(self.bond_sites):
            for s in (i, j):
                site_bonds[s, fill[s]] = b
                fill[s] += 1
        self.site_bonds = site_bonds


@dataclass
class SseConfig:
    """Spin state at imaginary time zero plus a fixed-length operator string."""

    params: ChainParams
    alpha: np.ndarray    # int8[N], 1 = up
    op_type: np.ndarray  # int8[M]
    op_bond: np.ndarray  # int64[M]
    rng: np.random.Generator
    sector: int = 0
    loops_per_sweep: int = 1
    max_loop_factor: int = 100
    _tables: _Tables | None = field(default=None, repr=False, compare=False)

    @property
    def tables(self) -> _Tables:
        if self._tables is None:
            self._tables = _Tables(self.params)
        return self._tables

    @property
    def m(self) -> int:
        return len(self.op_type)

    @property
    def n(self) -> int:
        return int(np.count_nonzero(self.op_type))

    @property
    def max_loop_len(self) -> int:
        return max(self.max_loop_factor * self.m, 64)

    def propagated_states(self) -> np.ndarray:
        """``(M + 1, N)`` array of |alpha_p>, p = 0..M (debug helper, O(M N))."""
        out = np.empty((self.m + 1, len(self.alpha)), np.int8)
        state = self.alpha.copy()
        out[0] = state
        bonds = self.tables.bond_sites
        for p in range(self.m):
            if self.op_type[p] >= 2:
                i, j = bonds[self.op_bond[p]]
                state[i] ^= 1
                state[j] ^= 1
            out[p + 1] = state
        return out

    def copy(self) -> "SseConfig":
        rng = np.random.default_rng()
        rng.bit_generator.state = self.rng.bit_generator.state
        return SseConfig(self.params, self.alpha.copy(), self.op_type.copy(), self.op_bond.copy(),
                         rng, self.sector, self.loops_per_sweep, self.max_loop_factor, self._tables)


@dataclass(frozen=True)
class LoopStats:
    length: int
    bounces: int
    winding_change: int
    aborted: bool
    sector_rejected: bool


@dataclass(frozen=True)
class Schedule:
    therm_sweeps: int = 2000
    sample_sweeps: int = 20000
    loops_per_sweep: int | None = None  # None: adapt during thermalization
    sector: int = 0
    initial_winding: int = 0
    m_initial: int = 64


def init_config(params: ChainParams, m_initial: int = 64, seed: int | None = None,
                sector: int = 0, initial_winding: int = 0) -> SseConfig:
    """Random state in the ``Sz_total = sector`` sector with an all-identity string.

    ``initial_winding != 0`` starts from a Neel state carrying ``|w| N``
    off-diagonal operators that wind the worldlines ``w`` times around the ring.
    """
    if m_initial < 1:
        raise ValueError("m_initial must be at least 1")
    if params.boundary is Boundary.APBC:
        raise ValueError("SSE runs support OBC and PBC only")
    n = params.n_sites
    n_up = n // 2 + sector
    if not 0 <= n_up <= n:
        raise ValueError(f"sector {sector} impossible for N = {n}")
    rng = np.random.default_rng(params.seed if seed is None else seed)
    alpha = np.zeros(n, np.int8)
    alpha[:n_up] = 1
    alpha = rng.permutation(alpha).astype(np.int8)
    op_type = np.zeros(m_initial, np.int8)
    op_bond = np.zeros(m_initial, np.int64)
    cfg = SseConfig(params, alpha, op_type, op_bond, rng, sector)
    cfg.tables  # validates sign-freeness eagerly
    if initial_winding:
        _prewind(cfg, initial_winding)
    return cfg


def _prewind(cfg: SseConfig, w: int) -> None:
    params = cfg.params
    if not params.periodic or cfg.sector != 0:
        raise ValueError("a pre-wound start needs PBC and the Sz = 0 sector")
    n = params.n_sites
    cfg.alpha[:] = np.arange(n) % 2 == 0  # up spins on even sites
    # two half-steps move every up spin by two sites, i.e. a net current of N
    if w > 0:
        hop = 3
        block = list(range(0, n, 2)) + list(range(1, n, 2))
    else:
        hop = 2
        block = [(k - 1) % n for k in range(0, n, 2)] + [(k - 1) % n for k in range(1, n, 2)]
    ops = block * abs(w)
    m = max(cfg.m, 2 * len(ops))
    cfg.op_type = np.zeros(m, np.int8)
    cfg.op_bond = np.zeros(m, np.int64)
    pos = np.sort(cfg.rng.choice(m, size=len(ops), replace=False))
    cfg.op_type[pos] = hop
    cfg.op_bond[pos] = ops
    check_invariants(cfg)


def check_invariants(cfg: SseConfig) -> None:
    """Raise :class:`CorruptionError` unless the configuration is a valid SSE state.

    Checks that every off-diagonal operator acts on an allowed local state,
    that propagation is periodic, that every diagonal operator has positive
    weight and that the winding current is a multiple of N.
    """
    t = cfg.tables
    state = cfg.alpha.copy()
    for p in np.nonzero(cfg.op_type)[0]:
        b = cfg.op_bond[p]
        i, j = t.bond_sites[b]
        typ = cfg.op_type[p]
        if typ == 1:
            if t.diag_w[b, state[i] + 2 * state[j]] <= 0:
                raise CorruptionError(f"zero-weight diagonal operator at p={p}")
            continue
        need = (1, 0) if typ == 3 else (0, 1)
        if (state[i], state[j]) != need:
            raise CorruptionError(_ERRORS[kernels.ERR_PROPAGATION] + f" at p={p}")
        state[i] ^= 1
        state[j] ^= 1
    if not np.array_equal(state, cfg.alpha):
        raise CorruptionError(_ERRORS[kernels.ERR_PERIODICITY])
    measure_winding(cfg)


def _use_tables(cfg: SseConfig, vt: VertexTable | None, params: ChainParams | None) -> _Tables:
    if params is not None and params != cfg.params:
        raise ValueError("params do not match the configuration")
    t = cfg.tables
    if vt is not None and not np.array_equal(vt.leg_weights(), t.leg_w):
        raise ValueError("vertex table does not match the configuration's parameters")
    return t


def diagonal_update(cfg: SseConfig, vt: VertexTable | None = None,
                    params: ChainParams | None = None) -> SseConfig:
    """Sweep the string once, exchanging identities and diagonal operators.

    ``vt`` and ``params`` are optional; when given they must match the ones
    the configuration was built with.
    """
    t = _use_tables(cfg, vt, params)
    _check(kernels.diagonal_update(cfg.alpha, cfg.op_type, cfg.op_bond, t.bond_sites, t.diag_w,
                                   cfg.params.beta, cfg.rng))
    return cfg


def directed_loop_update(cfg: SseConfig, vt: VertexTable | None = None) -> tuple[SseConfig, LoopStats]:
    """Build the linked list and run a single directed loop."""
    if cfg.n == 0:
        raise ValueError("directed loops need at least one non-identity operator")
    t = _use_tables(cfg, vt, None)
    stats = np.zeros(8, np.int64)
    ev_w = np.zeros(1, np.int64)
    ev_dw = np.zeros(1, np.int64)
    n_ev = _check(kernels.loop_sweep(cfg.alpha, cfg.op_type, cfg.op_bond, t.bond_sites, t.cum, 1,
                                     cfg.max_loop_len, True, cfg.rng, stats, ev_w, ev_dw, 0,
                                     cfg.params.n_sites, cfg.params.periodic))
    return cfg, LoopStats(length=int(stats[1]), bounces=int(stats[2]),
                          winding_change=int(ev_dw[0]) if n_ev else 0,
                          aborted=bool(stats[4]), sector_rejected=bool(stats[5]))


def adjust_truncation(cfg: SseConfig) -> SseConfig:
    """Grow M to ceil(4n/3) when more than three quarters of the string is filled."""
    n = cfg.n
    if 4 * n <= 3 * cfg.m:
        return cfg
    m_new = -(-4 * n // 3)
    extra = m_new - cfg.m
    where = np.sort(cfg.rng.integers(0, cfg.m + 1, size=extra))
    cfg.op_type = np.insert(cfg.op_type, where, 0).astype(np.int8)
    cfg.op_bond = np.insert(cfg.op_bond, where, 0).astype(np.int64)
    return cfg


def measure_winding(cfg: SseConfig) -> int:
    """Net number of times the up-spin worldlines wrap the ring (positive = rightward)."""
    current = int(kernels.winding_current(cfg.op_type))
    if not cfg.params.periodic:
        if current != 0:
            raise CorruptionError("non-zero winding current under OBC")
        return 0
    w, rem = divmod(current, cfg.params.n_sites)
    if rem:
        raise CorruptionError(f"winding current {current} not divisible by N")
    return w


def magnetization(cfg: SseConfig) -> int:
    return int(cfg.alpha.sum()) - cfg.params.n_sites // 2


def run_sweeps(cfg: SseConfig, n_sweeps: int, tally: ChainTally | None = None) -> ChainTally | None:
    """Advance ``cfg`` by ``n_sweeps`` sweeps, measuring into ``tally`` if given."""
    t = cfg.tables
    nb = cfg.params.n_bonds
    measure = tally is not None
    n_series = np.zeros(n_sweeps if measure else 0, np.int64)
    w_series = np.zeros(n_sweeps if measure else 0, np.int64)
    counts = np.zeros((3, nb), np.int64)
    zz = np.zeros(nb)
    stats = np.zeros(8, np.int64)
    w_offset = cfg.m // cfg.params.n_sites + 2
    trans = np.zeros((2, 2 * w_offset + 1), np.int64)
    _check(kernels.run_sweeps(cfg.alpha, cfg.op_type, cfg.op_bond, t.bond_sites, t.site_bonds,
                              t.diag_w, t.cum, cfg.params.beta, n_sweeps, cfg.loops_per_sweep,
                              cfg.max_loop_len, True, cfg.params.n_sites, cfg.params.periodic,
                              cfg.rng, stats, n_series, w_series, counts, zz, trans, w_offset,
                              measure))
    if tally is None:
        return None
    tally.n_series = np.concatenate([tally.n_series, n_series])
    tally.w_series = np.concatenate([tally.w_series, w_series])
    tally.op_counts = tally.op_counts + counts
    tally.zz_sum = tally.zz_sum + zz
    tally.loops += int(stats[0])
    tally.loop_legs += int(stats[1])
    tally.bounces += int(stats[2])
    tally.exits += int(stats[3])
    tally.aborts += int(stats[4])
    tally.sector_rejects += int(stats[5])
    for row, dst in ((0, tally.trans_up), (1, tally.trans_down)):
        for idx in np.nonzero(trans[row])[0]:
            w = int(idx) - w_offset
            dst[w] = dst.get(w, 0) + int(trans[row, idx])
    tally.m_final = cfg.m
    tally.loops_per_sweep = cfg.loops_per_sweep
    return tally


def empty_tally(params: ChainParams) -> ChainTally:
    nb = params.n_bonds
    return ChainTally(n_series=np.zeros(0, np.int64), w_series=np.zeros(0, np.int64),
                      op_counts=np.zeros((3, nb), np.int64), zz_sum=np.zeros(nb))


def thermalize(cfg: SseConfig, n_sweeps: int, adapt_loops: bool = True) -> SseConfig:
    """Equilibrate while growing the string and tuning the loop count.

    The number of loops per sweep is set so that about 2 M vertex passes are
    made per sweep.
    """
    probe = empty_tally(cfg.params)
    done = 0
    block = 1
    while done < n_sweeps:
        k = min(block, n_sweeps - done)
        before = (probe.loops, probe.loop_legs)
        run_sweeps(cfg, k, probe)
        adjust_truncation(cfg)
        if adapt_loops:
            loops = probe.loops - before[0]
            legs = probe.loop_legs - before[1]
            if loops and legs:
                mean_len = legs / loops
                target = max(1, int(round(2 * cfg.m / mean_len)))
                # damp the update to avoid oscillations from noisy loop lengths
                cfg.loops_per_sweep = max(1, int(round(0.5 * cfg.loops_per_sweep + 0.5 * target)))
            elif cfg.n:
                cfg.loops_per_sweep = max(1, cfg.loops_per_sweep)
        done += k
        block = min(2 * block, 64)
    return cfg


def run_chain(params: ChainParams, schedule: Schedule = Schedule(), seed: int | None = None,
              deadline: float | None = None) -> MeasurementRecord:
    """Thermalize then sample one chain; the record is keyed by the seed.

    ``deadline`` (a ``time.monotonic()`` value) stops sampling early; the
    record is then flagged ``truncated``.
    """
    seed = params.seed if seed is None else seed
    cfg = init_config(params, schedule.m_initial, seed, schedule.sector, schedule.initial_winding)
    if schedule.loops_per_sweep:
        cfg.loops_per_sweep = schedule.loops_per_sweep
    thermalize(cfg, schedule.therm_sweeps, adapt_loops=schedule.loops_per_sweep is None)
    tally = empty_tally(params)
    block = max(1, min(schedule.sample_sweeps, 1000))
    done = 0
    while done < schedule.sample_sweeps:
        k = min(block, schedule.sample_sweeps - done)
        run_sweeps(cfg, k, tally)
        done += k
        if deadline is not None and time.monotonic() > deadline:
            tally.truncated = done < schedule.sample_sweeps
            break
    if tally.aborts:
        log.warning("chain %d: %d loops aborted at the length cap", seed, tally.aborts)
    return MeasurementRecord(params, {seed: tally})


# -- checkpoints ----------------------------------------------------------------------------

_MAGIC = b"NHSSECK"
_VERSION = 1
_HEADER = struct.Struct("<7sHI")


def save_checkpoint(cfg: SseConfig, path: str | Path) -> None:
    """Binary layout: magic, version (u16), header length (u32), JSON header, then
    alpha (int8[N]), op_type (int8[M]) and op_bond (int64[M]) in little endian."""
    header = {
        "params": params_to_text(cfg.params),
        "sector": cfg.sector,
        "loops_per_sweep": cfg.loops_per_sweep,
        "max_loop_factor": cfg.max_loop_factor,
        "m": cfg.m,
        "n": cfg.n,
        "rng": cfg.rng.bit_generator.state,
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, _VERSION, len(blob)))
        fh.write(blob)
        fh.write(cfg.alpha.astype("<i1").tobytes())
        fh.write(cfg.op_type.astype("<i1").tobytes())
        fh.write(cfg.op_bond.astype("<i8").tobytes())


def load_checkpoint(path: str | Path) -> SseConfig:
    data = Path(path).read_bytes()
    magic, version, hlen = _HEADER.unpack_from(data)
    if magic != _MAGIC:
        raise ValueError(f"{path}: not an SSE checkpoint")
    if version != _VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    off = _HEADER.size
    header = json.loads(data[off: off + hlen])
    off += hlen
    params = params_from_text(header["params"])
    n, m = params.n_sites, header["m"]
    alpha = np.frombuffer(data, "<i1", n, off).astype(np.int8)
    off += n
    op_type = np.frombuffer(data, "<i1", m, off).astype(np.int8)
    off += m
    op_bond = np.frombuffer(data, "<i8", m, off).astype(np.int64)
    rng = np.random.default_rng()
    rng.bit_generator.state = header["rng"]
    cfg = SseConfig(params, alpha, op_type, op_bond, rng, header["sector"],
                    header["loops_per_sweep"], header["max_loop_factor"])
    if cfg.n != header["n"]:
        raise CorruptionError(f"{path}: operator count mismatch")
    return cfg
