"""Winding-number histograms, Gaussian peak fits, ergodicity telemetry and bounce estimates."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .model import ChainParams, build_vertex_table
from .sse.record import MeasurementRecord

__all__ = [
    "WindingHistogram",
    "PeakFit",
    "fit_gaussian_peak",
    "ergodicity_report",
    "vertex_bounce_probabilities",
    "estimate_bounce",
]

MIN_FIT_COUNT = 5


@dataclass(frozen=True)
class WindingHistogram:
    """Sample counts ``N_w`` per winding sector plus loop transition counts."""

    counts: dict[int, int]
    n_up: int = 0
    n_down: int = 0
    trans_up: dict[int, int] = field(default_factory=dict)
    trans_down: dict[int, int] = field(default_factory=dict)

    def __post_init__(self):
        if any(c < 0 for c in self.counts.values()) or self.n_up < 0 or self.n_down < 0:
            raise ValueError("histogram counts must be non-negative")
        object.__setattr__(self, "counts", dict(sorted((int(w), int(c)) for w, c in self.counts.items())))

    @classmethod
    def from_record(cls, rec: MeasurementRecord) -> "WindingHistogram":
        up, down = rec.transitions()
        return cls(rec.winding_counts(), sum(up.values()), sum(down.values()), up, down)

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def ratios(self) -> dict[int, float]:
        tot = self.total
        if tot == 0:
            return {}
        return {w: c / tot for w, c in self.counts.items()}

    def merge(self, other: "WindingHistogram") -> "WindingHistogram":
        def add(a, b):
            out = dict(a)
            for k, v in b.items():
                out[k] = out.get(k, 0) + v
            return out

        return WindingHistogram(add(self.counts, other.counts), self.n_up + other.n_up,
                                self.n_down + other.n_down, add(self.trans_up, other.trans_up),
                                add(self.trans_down, other.trans_down))

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["w", "N_w", "r_w"])
        for w, r in self.ratios().items():
            wr.writerow([w, self.counts[w], f"{r:.17g}"])
        return buf.getvalue()


@dataclass(frozen=True)
class PeakFit:
    """Centre and width of a Gaussian fitted to ``log r_w``.

    ``degenerate`` marks the count-weighted-mean fallback used when fewer
    than three usable bins exist, the fitted parabola is not concave, or its
    vertex lies outside the fitted bins (a one-sided histogram whose mode
    sits at the edge of the sampled range).
    """

    w_opt: float
    width: float
    residual: float
    degenerate: bool = False
    n_points: int = 0

    def to_json(self, **extra) -> str:
        return json.dumps({"w_opt": self.w_opt, "width": self.width, "residual": self.residual,
                           "degenerate": self.degenerate, **extra}, sort_keys=True)


def _weighted_mean(ws: np.ndarray, cs: np.ndarray, n: int) -> PeakFit:
    mean = float((ws * cs).sum() / cs.sum())
    var = float((cs * (ws - mean) ** 2).sum() / cs.sum())
    return PeakFit(mean, float(np.sqrt(var)), 0.0, True, n)


def fit_gaussian_peak(h: WindingHistogram, min_count: int = MIN_FIT_COUNT) -> PeakFit:
    """Fit ``log r_w = a + b w + c w^2`` over bins with ``N_w >= min_count``.

    Bins are weighted by ``sqrt(N_w)``, the inverse Poisson error of
    ``log N_w``.  ``w_opt = -b / 2c`` and ``width = sqrt(-1 / 2c)``.
    """
    if h.total == 0:
        raise ValueError("empty histogram")
    ws = np.array(list(h.counts), float)
    cs = np.array(list(h.counts.values()), float)
    keep = cs >= min_count
    if keep.sum() < 3:
        keep = cs > 0
        return _weighted_mean(ws[keep], cs[keep], int(keep.sum()))
    x, y, c = ws[keep], np.log(cs[keep] / cs.sum()), cs[keep]
    coef, res, *_ = np.polyfit(x, y, 2, w=np.sqrt(c), full=True)
    a2, a1, _ = coef
    if a2 >= 0:
        return _weighted_mean(x, c, len(x))
    w_opt = float(-a1 / (2 * a2))
    if not x.min() <= w_opt <= x.max():
        return _weighted_mean(x, c, len(x))
    width = float(np.sqrt(-1.0 / (2 * a2)))
    residual = float(res[0]) if len(res) else 0.0
    return PeakFit(w_opt, width, residual, False, len(x))


def ergodicity_report(rec: MeasurementRecord) -> dict[str, float]:
    """Fraction ``R`` of loops that changed the winding number, and the bounce rate."""
    if rec.loops == 0:
        raise ValueError("record contains no loop updates")
    up, down = rec.transitions()
    changes = sum(up.values()) + sum(down.values())
    return {
        "R": changes / rec.loops,
        "bounce": rec.bounces / rec.exits if rec.exits else 0.0,
        "loops": rec.loops,
        "N_up": sum(up.values()),
        "N_down": sum(down.values()),
    }


def vertex_bounce_probabilities(leg_w: np.ndarray) -> np.ndarray:
    """Heat-bath bounce probability of each 4-leg pattern, averaged over entrance legs.

    ``leg_w`` is the ``(16,)`` weight table of one bond; patterns with zero
    weight get ``nan``.
    """
    out = np.full(16, np.nan)
    for code in range(16):
        if leg_w[code] <= 0:
            continue
        p = 0.0
        for lin in range(4):
            tot = sum(leg_w[code if lout == lin else code ^ (1 << lin) ^ (1 << lout)] for lout in range(4))
            p += leg_w[code] / tot
        out[code] = p / 4
    return out


def estimate_bounce(params: ChainParams, zz_corr, pm_counts, split: str = "weights") -> float:
    """Abundance-weighted mean bounce probability of the directed loops.

    Parameters
    ----------
    params : ChainParams
    zz_corr : array_like
        ``<Sz_b Sz_{b+1}>`` per bond.
    pm_counts : array_like
        ``(2, n_bonds)`` mean counts ``<n_2,b>`` (hop left) and ``<n_3,b>``
        (hop right) per bond, e.g. ``MeasurementRecord.mean_op_counts()[1:]``.
    split : {"weights", "correlator"}
        How ``<n_1,b> = beta <H_1,b>`` is divided among the four diagonal
        vertices.  ``"weights"`` splits proportionally to the vertex weights;
        ``"correlator"`` uses the parallel/antiparallel probabilities
        ``1/2 +- 2 <Sz Sz>`` (exact for the pair totals).

    Returns
    -------
    float
        Weighted average over vertices of the bounce probability, with
        entrance legs weighted uniformly.
    """
    zz = np.asarray(zz_corr, float)
    pm = np.asarray(pm_counts, float)
    vt = build_vertex_table(params)
    nb = vt.n_bonds
    if zz.shape != (nb,) or pm.shape != (2, nb):
        raise ValueError(f"expected zz shape ({nb},) and pm shape (2, {nb})")
    if np.any(pm < 0):
        raise ValueError("negative off-diagonal counts")
    leg_w = vt.leg_weights()
    diag = vt.diagonal()  # columns: down-down, up-down, down-up, up-up
    num = 0.0
    den = 0.0
    for b in range(nb):
        # the field part of <H_1,b> averages out in the Sz = 0 sector and is left out
        n1 = params.beta * (params.eps + params.jz / 4 - params.jz * zz[b])
        if split == "weights":
            wsum = diag[b].sum()
            ab = n1 * diag[b] / wsum if wsum > 0 else np.zeros(4)
        elif split == "correlator":
            par, anti = 0.5 + 2 * zz[b], 0.5 - 2 * zz[b]
            ab = params.beta * 0.5 * np.array([diag[b, 0] * par, diag[b, 1] * anti,
                                               diag[b, 2] * anti, diag[b, 3] * par])
        else:
            raise ValueError(f"unknown split {split!r}")
        if np.any(ab < -1e-12):
            raise ValueError(f"negative vertex abundance on bond {b}; check the correlator input")
        pb = vertex_bounce_probabilities(leg_w[b])
        codes = [q | (q << 2) for q in range(4)]
        for q, code in enumerate(codes):
            if ab[q] > 0:
                num += ab[q] * pb[code]
                den += ab[q]
        for count, code in ((pm[0, b], 2 | (1 << 2)), (pm[1, b], 1 | (2 << 2))):
            if count > 0:
                num += count * pb[code]
                den += count
    if den == 0:
        raise ValueError("no vertices to average over")
    return num / den
