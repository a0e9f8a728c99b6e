"""Mergeable measurement records and binning error analysis."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..model import ChainParams

MIN_BINS = 10
TARGET_BINS = 32


@dataclass
class ChainTally:
    """Everything one Markov chain contributes to a measurement."""

    n_series: np.ndarray
    w_series: np.ndarray
    op_counts: np.ndarray  # (3, n_bonds) summed over samples; rows = types 1, 2, 3
    zz_sum: np.ndarray     # (n_bonds,) summed over samples
    loops: int = 0
    loop_legs: int = 0
    bounces: int = 0
    exits: int = 0
    aborts: int = 0
    sector_rejects: int = 0
    trans_up: dict[int, int] = field(default_factory=dict)
    trans_down: dict[int, int] = field(default_factory=dict)
    m_final: int = 0
    loops_per_sweep: int = 0
    truncated: bool = False

    @property
    def n_samples(self) -> int:
        return len(self.n_series)


@dataclass
class MeasurementRecord:
    """Per-chain tallies keyed by chain id (the seed).

    Merging takes the union of the chain maps, so it is associative and
    commutative; totals are always summed in sorted key order.
    """

    params: ChainParams
    chains: dict[int, ChainTally] = field(default_factory=dict)

    def merge(self, other: "MeasurementRecord") -> "MeasurementRecord":
        if other.params != self.params:
            raise ValueError("cannot merge records of different parameter sets")
        clash = set(self.chains) & set(other.chains)
        if clash:
            raise ValueError(f"chains {sorted(clash)} present in both records")
        return MeasurementRecord(self.params, {**self.chains, **other.chains})

    def _ordered(self) -> list[ChainTally]:
        return [self.chains[k] for k in sorted(self.chains)]

    @property
    def n_samples(self) -> int:
        return sum(c.n_samples for c in self._ordered())

    def _total(self, name: str) -> int:
        return sum(getattr(c, name) for c in self._ordered())

    @property
    def loops(self) -> int:
        return self._total("loops")

    @property
    def bounces(self) -> int:
        return self._total("bounces")

    @property
    def exits(self) -> int:
        return self._total("exits")

    @property
    def aborts(self) -> int:
        return self._total("aborts")

    @property
    def sector_rejects(self) -> int:
        return self._total("sector_rejects")

    @property
    def sum_n(self) -> int:
        return int(sum(int(c.n_series.sum()) for c in self._ordered()))

    @property
    def sum_n2(self) -> int:
        return int(sum(int((c.n_series.astype(np.int64) ** 2).sum()) for c in self._ordered()))

    def mean_op_counts(self) -> np.ndarray:
        """``<n_{a,b}>`` as a ``(3, n_bonds)`` array (rows: diagonal, hop left, hop right)."""
        tot = sum(c.op_counts for c in self._ordered())
        return tot / self.n_samples

    def mean_zz(self) -> np.ndarray:
        tot = sum(c.zz_sum for c in self._ordered())
        return tot / self.n_samples

    def winding_counts(self) -> dict[int, int]:
        out: dict[int, int] = {}
        for c in self._ordered():
            ws, cnt = np.unique(c.w_series, return_counts=True)
            for w, k in zip(ws.tolist(), cnt.tolist()):
                out[w] = out.get(w, 0) + k
        return dict(sorted(out.items()))

    def transitions(self) -> tuple[dict[int, int], dict[int, int]]:
        up: dict[int, int] = {}
        down: dict[int, int] = {}
        for c in self._ordered():
            for src, dst in ((c.trans_up, up), (c.trans_down, down)):
                for w, k in src.items():
                    dst[w] = dst.get(w, 0) + k
        return dict(sorted(up.items())), dict(sorted(down.items()))

    @property
    def truncated(self) -> bool:
        return any(c.truncated for c in self.chains.values())


def binning_error(series: np.ndarray) -> tuple[float, int]:
    """Standard error of the mean of a correlated series by bin-size doubling.

    The bin size doubles until the error stops growing beyond its own
    statistical uncertainty ``err / sqrt(2 (n_bins - 1))``, or until fewer
    than ``TARGET_BINS`` bins would remain; in the latter case the largest
    error seen is returned.  Also returns the number of bins used.
    """
    x = np.asarray(series, dtype=float)
    if len(x) < MIN_BINS:
        raise ValueError(f"need at least {MIN_BINS} samples for an error bar, got {len(x)}; run longer")
    levels = []
    size = 1
    while len(x) // size >= max(TARGET_BINS, 2) or size == 1:
        nbins = len(x) // size
        bins = x[: nbins * size].reshape(nbins, size).mean(axis=1)
        levels.append((float(bins.std(ddof=1) / np.sqrt(nbins)), nbins))
        if len(levels) >= 2:
            (e0, _), (e1, n1) = levels[-2], levels[-1]
            if e1 - e0 <= 2 * e1 / np.sqrt(2 * (n1 - 1)):
                return e1, n1
        size *= 2
    return max(levels)


def mean_and_error(per_chain: list[np.ndarray]) -> tuple[float, float]:
    """Pooled mean over chains with independent per-chain binning errors."""
    lengths = np.array([len(s) for s in per_chain], dtype=float)
    total = lengths.sum()
    if total == 0:
        raise ValueError("no samples recorded")
    means = np.array([np.mean(s) for s in per_chain])
    errs = np.array([binning_error(s)[0] for s in per_chain])
    mean = float((lengths * means).sum() / total)
    err = float(np.sqrt(((lengths * errs) ** 2).sum()) / total)
    return mean, err


def measure_energy(rec: MeasurementRecord, params: ChainParams | None = None) -> tuple[float, float]:
    """Energy ``N_b (eps + Jz/4) - <n>/beta`` with its binning error."""
    params = params or rec.params
    if rec.n_samples == 0:
        raise ValueError("empty measurement record")
    series = [rec.chains[k].n_series for k in sorted(rec.chains)]
    mean_n, err_n = mean_and_error(series)
    const = params.n_bonds * (params.eps + params.jz / 4)
    return const - mean_n / params.beta, err_n / params.beta
