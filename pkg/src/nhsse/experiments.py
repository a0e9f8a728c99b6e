"""Config-driven experiment grids: SSE chains, exact oracles, CSV output and manifests."""

from __future__ import annotations

import csv
import hashlib
import io
import itertools
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .model import Boundary, ChainParams, parse_kv_text, params_from_mapping, sign_free
from .sse import MeasurementRecord, Schedule, measure_energy, run_chain
from .winding import WindingHistogram, ergodicity_report, estimate_bounce, fit_gaussian_peak

log = logging.getLogger(__name__)

CSV_SCHEMA_VERSION = 1
WORKERS_ENV = "NHSSE_WORKERS"
PARAM_COLUMNS = ("n_sites", "jz", "dj", "delta", "eps", "mu", "beta", "boundary")
_SCHEDULE_KEYS = ("therm_sweeps", "sample_sweeps", "loops_per_sweep", "sector", "initial_winding", "m_initial")
_SPEC_KEYS = {"experiment", "seeds", "output_dir", "budget_seconds", "n_flux", "region"} | set(_SCHEDULE_KEYS)


def fmt(x) -> str:
    """Render a value for CSV; floats at 17 significant digits."""
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    if isinstance(x, Boundary):
        return x.value
    return str(x)


def param_cols(p: ChainParams) -> dict:
    return {k: getattr(p, k) for k in PARAM_COLUMNS}


@dataclass
class PointResult:
    rows: list[dict] = field(default_factory=list)
    oracle_rows: list[dict] = field(default_factory=list)
    files: dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class Experiment:
    name: str
    description: str
    defaults: dict
    uses_sse: bool
    finish: Callable[["ExperimentSpec", ChainParams, MeasurementRecord | None], PointResult]


@dataclass(frozen=True)
class ExperimentSpec:
    experiment: str
    grid: dict[str, list[str]]
    schedule: Schedule
    seeds: tuple[int, ...]
    output_dir: Path
    budget_seconds: float | None = None
    n_flux: int = 64
    source_text: str = ""

    def points(self) -> list[ChainParams]:
        exp = EXPERIMENTS[self.experiment]
        merged = {k: [vs] if isinstance(vs, str) else list(vs) for k, vs in exp.defaults.items()}
        merged.update(self.grid)
        keys = list(merged)
        out = []
        for combo in itertools.product(*(merged[k] for k in keys)):
            out.append(params_from_mapping(dict(zip(keys, combo))))
        return out


def _split_list(value: str) -> list[str]:
    return [v.strip() for v in value.split(",") if v.strip()]


def spec_from_text(text: str, output_dir: str | Path | None = None) -> ExperimentSpec:
    """Parse an experiment config; comma-separated model values form a cartesian grid."""
    kv = parse_kv_text(text)
    name = kv.get("experiment")
    if name not in EXPERIMENTS:
        raise ValueError(f"unknown or missing experiment {name!r}; see list-experiments")
    grid = {}
    for key, value in kv.items():
        if key in _SPEC_KEYS:
            continue
        if key not in PARAM_COLUMNS + ("seed",):
            raise ValueError(f"unknown config key {key!r}")
        grid[key] = _split_list(value)
    sched_kwargs = {}
    for key in _SCHEDULE_KEYS:
        if key in kv:
            sched_kwargs[key] = int(kv[key])
    schedule = Schedule(**sched_kwargs)
    seeds = tuple(int(s) for s in _split_list(kv.get("seeds", "1")))
    if len(set(seeds)) != len(seeds):
        raise ValueError("seeds must be distinct")
    out = Path(output_dir or kv.get("output_dir", f"runs/{name}"))
    budget = float(kv["budget_seconds"]) if "budget_seconds" in kv else None
    return ExperimentSpec(name, grid, schedule, seeds, out, budget, int(kv.get("n_flux", 64)), text)


def chain_seed(seed: int, point_index: int) -> int:
    """Independent 63-bit chain seed for (user seed, grid point)."""
    return int(np.random.SeedSequence([seed, point_index]).generate_state(1, np.uint64)[0] >> np.uint64(1))


def git_blob_sha1(data: bytes) -> str:
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def code_version() -> str:
    """Hash over the package sources, so every output row is traceable to the code."""
    root = Path(__file__).parent
    h = hashlib.sha1()
    for path in sorted(root.rglob("*.py")):
        h.update(path.relative_to(root).as_posix().encode())
        h.update(git_blob_sha1(path.read_bytes()).encode())
    return h.hexdigest()


# -- experiment bodies ----------------------------------------------------------------------

def _sse_summary(rec: MeasurementRecord) -> dict:
    e, err = measure_energy(rec)
    rep = ergodicity_report(rec)
    return {"energy": e, "stderr": err, "samples": rec.n_samples, "bounce": rep["bounce"],
            "R": rep["R"], "aborts": rec.aborts, "truncated": rec.truncated}


def _energy_point(spec, p, rec) -> PointResult:
    from .exact.ed import MAX_SITES, thermal_energy

    res = PointResult(rows=[{**param_cols(p), **_sse_summary(rec)}])
    if p.n_sites <= MAX_SITES:
        res.oracle_rows.append({**param_cols(p), "energy": thermal_energy(p, spec.schedule.sector),
                                "source": "ed_thermal"})
    elif p.jz == 0:
        from .exact.freefermion import ff_ground_state

        res.oracle_rows.append({**param_cols(p), "energy": ff_ground_state(p).energy.real,
                                "source": "free_fermion"})
    return res


def _winding_point(spec, p, rec) -> PointResult:
    h = WindingHistogram.from_record(rec)
    fit = fit_gaussian_peak(h)
    row = {**param_cols(p), **_sse_summary(rec), "w_opt": fit.w_opt, "width": fit.width,
           "degenerate": fit.degenerate}
    if p.jz == 0 and p.mu == 0:
        from .exact.topology import SpectrumCollisionError, bloch_winding

        try:
            row["bloch_winding"] = bloch_winding(p, 0.0)
        except SpectrumCollisionError:
            row["bloch_winding"] = None
    tag = "_".join(f"{k}{fmt(getattr(p, k))}" for k in ("n_sites", "jz", "dj", "delta", "eps", "mu", "beta"))
    return PointResult(rows=[row], files={f"hist_{tag}.csv": h.to_csv()})


def _ergodicity_point(spec, p, rec) -> PointResult:
    h = WindingHistogram.from_record(rec)
    summary = _sse_summary(rec)
    rows = []
    for w, n_w in h.counts.items():
        rows.append({**param_cols(p), "w": w, "N_w": n_w, "N_up": h.trans_up.get(w, 0),
                     "N_down": h.trans_down.get(w, 0), "bounce": summary["bounce"], "R": summary["R"]})
    return PointResult(rows=rows)


def _bounce_point(spec, p, rec) -> PointResult:
    summary = _sse_summary(rec)
    counts = rec.mean_op_counts()
    est = estimate_bounce(p, rec.mean_zz(), counts[1:])
    return PointResult(rows=[{**param_cols(p), **summary, "bounce_estimate": est}])


def _entropy_point(spec, p, rec) -> PointResult:
    from .exact.freefermion import delta_s

    r = delta_s(p)
    apbc = r["variants"]["APBC"]
    return PointResult(rows=[{**param_cols(p), "dS_re": r["dS"].real, "dS_im": r["dS"].imag,
                              "dS_abs": r["dS_abs"], "fermion_bc": r["fermion_bc"],
                              "dS_spin_apbc_re": None if apbc is None else apbc["dS"].real,
                              "dS_spin_apbc_im": None if apbc is None else apbc["dS"].imag}])


def _flow_point(spec, p, rec) -> PointResult:
    from .exact.topology import ground_state_returns, spectrum_flow

    flow = spectrum_flow(p, spec.n_flux)
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["phi", "track", "re_E", "im_E"])
    for phi, i, re, im in flow.to_rows():
        wr.writerow([fmt(phi), i, fmt(re), fmt(im)])
    tag = "_".join(f"{k}{fmt(getattr(p, k))}" for k in ("n_sites", "jz", "dj", "delta"))
    row = {**param_cols(p), "gs_returns": ground_state_returns(p), "ambiguous_steps": len(flow.ambiguous)}
    return PointResult(rows=[row], files={f"flow_{tag}.csv": buf.getvalue()})


def _toy_point(spec, p, rec) -> PointResult:
    from .exact.toy import toy_argmax, toy_weight

    # alpha is carried in the delta column: the toy ring's imaginary flux per unit time
    alpha = p.delta
    best = toy_argmax(alpha, p.beta)
    ws = range(best - 10, best + 11)
    rows = [{**param_cols(p), "alpha": alpha, "w": w, "weight": toy_weight(alpha, p.beta, w),
             "argmax": best} for w in ws]
    return PointResult(rows=rows)


_SSE_WINDING = dict(n_sites="32", jz="0", dj="0", eps="0.5", beta="100", boundary="PBC")

EXPERIMENTS: dict[str, Experiment] = {e.name: e for e in [
    Experiment("obc_energy", "OBC energies vs ED over (delta, dJ)",
               dict(n_sites="12", jz="0.5", dj=["0", "0.3"], delta=["0.1", "0.2", "0.3", "0.4", "0.5"],
                    eps="0.5", beta="100", boundary="OBC"), True, _energy_point),
    Experiment("pbc_energy", "PBC energies vs ED over (delta, dJ, eps)",
               dict(n_sites="12", jz="1", dj=["0", "0.3"], delta=["0.1", "0.2", "0.3", "0.4", "0.5"],
                    eps=["0", "0.5"], beta="100", boundary="PBC"), True, _energy_point),
    Experiment("ergodicity_table", "winding histograms and transition counts at eps = 0 and 0.5",
               dict(n_sites="10", jz="0.1", dj="0", delta="0.3", eps=["0", "0.5"], beta="100",
                    boundary="PBC"), True, _ergodicity_point),
    Experiment("bounce_scan", "measured vs estimated bounce probability over eps",
               dict(n_sites="12", jz="0.5", dj="0.1", delta="0.2", eps=["0", "0.25", "0.5", "1"],
                    beta="100", boundary="PBC"), True, _bounce_point),
    Experiment("wopt_vs_delta", "dominant winding vs delta",
               {**_SSE_WINDING, "delta": ["0.1", "0.2", "0.3", "0.4", "0.5"]}, True, _winding_point),
    Experiment("wopt_vs_dj", "dominant winding vs delta at dJ = 0.3",
               {**_SSE_WINDING, "dj": "0.3", "delta": ["0.1", "0.2", "0.3", "0.4", "0.5"]}, True,
               _winding_point),
    Experiment("wopt_vs_mu", "dominant winding vs field mu",
               {**_SSE_WINDING, "delta": "0.3", "mu": ["0", "0.2", "0.4", "0.6"]}, True, _winding_point),
    Experiment("wopt_vs_N", "dominant winding vs system size",
               {**_SSE_WINDING, "delta": "0.3", "n_sites": ["8", "16", "24", "32"]}, True, _winding_point),
    Experiment("wopt_vs_beta", "dominant winding vs inverse temperature",
               {**_SSE_WINDING, "delta": "0.3", "beta": ["25", "50", "75", "100"]}, True, _winding_point),
    Experiment("wopt_vs_jz", "dominant winding vs Ising coupling",
               {**_SSE_WINDING, "delta": "0.3", "jz": ["0", "0.5", "1"]}, True, _winding_point),
    Experiment("entropy_scan", "Renyi-2 ring-minus-open difference over (delta, dJ)",
               dict(n_sites="64", dj=["0.1", "0.2", "0.3"],
                    delta=[f"{d:.2f}" for d in np.arange(-0.55, 0.56, 0.1)], boundary="PBC"),
               False, _entropy_point),
    Experiment("entropy_scaling", "Renyi-2 difference vs N",
               dict(n_sites=["16", "32", "64", "128"], dj="0.3", delta=["0.1", "0.5"], boundary="PBC"),
               False, _entropy_point),
    Experiment("spectrum_flow", "many-body spectrum under boundary flux",
               dict(n_sites="10", jz=["0", "1"], dj="0.3", delta=["0.25", "0.35"], boundary="PBC"),
               False, _flow_point),
    Experiment("toy_check", "analytic toy-model winding weights (delta column = alpha)",
               dict(n_sites="2", delta=["0.2", "0.6283185307179586"], beta="100", boundary="PBC"),
               False, _toy_point),
]}


# -- running --------------------------------------------------------------------------------

def _run_chain_task(args):
    params, schedule, seed, budget = args
    t0 = time.monotonic()
    deadline = t0 + budget if budget else None
    rec = run_chain(params, schedule, seed=seed, deadline=deadline)
    return rec, time.monotonic() - t0


def _workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ValueError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None


def _write_csv(path: Path, rows: list[dict]) -> str:
    cols: list[str] = []
    for r in rows:
        for k in r:
            if k not in cols:
                cols.append(k)
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(cols)
    for r in rows:
        wr.writerow([fmt(r.get(c)) for c in cols])
    data = buf.getvalue()
    path.write_text(data)
    return git_blob_sha1(data.encode())


def run_experiment(spec: ExperimentSpec) -> dict:
    """Execute every grid point and write ``results.csv``, ``oracle.csv`` and ``manifest.json``.

    Chains run in a process pool sized by ``NHSSE_WORKERS``; results are
    assembled in grid and seed order, so the CSV bytes do not depend on the
    worker count.
    """
    exp = EXPERIMENTS[spec.experiment]
    points = spec.points()
    out = spec.output_dir
    out.mkdir(parents=True, exist_ok=True)
    manifest_points = []
    tasks, task_keys = [], []
    statuses: dict[int, dict] = {}
    for idx, p in enumerate(points):
        statuses[idx] = {"index": idx, "params": {k: fmt(v) for k, v in param_cols(p).items()},
                         "status": "ok", "error": None, "runtime_s": 0.0, "chain_seeds": []}
        if exp.uses_sse:
            if not sign_free(p):
                statuses[idx].update(status="failed", error="parameters are not sign-problem free")
                continue
            for s in spec.seeds:
                cs = chain_seed(s, idx)
                statuses[idx]["chain_seeds"].append(cs)
                tasks.append((p, spec.schedule, cs, spec.budget_seconds))
                task_keys.append(idx)
    records: dict[int, MeasurementRecord] = {}
    failures: dict[int, str] = {}

    def collect(idx, outcome):
        if isinstance(outcome, BaseException):
            failures[idx] = f"{type(outcome).__name__}: {outcome}"
            return
        rec, dt = outcome
        statuses[idx]["runtime_s"] += dt
        records[idx] = rec if idx not in records else records[idx].merge(rec)

    n_workers = _workers()
    if n_workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(n_workers) as pool:
            futures = [pool.submit(_run_chain_task, t) for t in tasks]
            for idx, fut in zip(task_keys, futures):
                try:
                    collect(idx, fut.result())
                except Exception as exc:  # recorded per point, never fatal for the grid
                    collect(idx, exc)
    else:
        for idx, t in zip(task_keys, tasks):
            try:
                collect(idx, _run_chain_task(t))
            except Exception as exc:
                collect(idx, exc)

    rows, oracle_rows = [], []
    for idx, p in enumerate(points):
        st = statuses[idx]
        if st["status"] == "failed":
            continue
        if idx in failures:
            st.update(status="failed", error=failures[idx])
            continue
        t0 = time.monotonic()
        try:
            res = exp.finish(spec, p, records.get(idx))
        except Exception as exc:
            st.update(status="failed", error=f"{type(exc).__name__}: {exc}")
            log.warning("point %d failed: %s", idx, exc)
            continue
        st["runtime_s"] += time.monotonic() - t0
        if idx in records and records[idx].truncated:
            st["status"] = "truncated"
        rows.extend({"experiment": spec.experiment, "point": idx, **r} for r in res.rows)
        oracle_rows.extend({"experiment": spec.experiment, "point": idx, **r} for r in res.oracle_rows)
        for name, text in res.files.items():
            (out / name).write_text(text)
        manifest_points.append(st)
    failed = [s for s in statuses.values() if s["status"] == "failed"]
    hashes = {"results.csv": _write_csv(out / "results.csv", rows)}
    if oracle_rows:
        hashes["oracle.csv"] = _write_csv(out / "oracle.csv", oracle_rows)
    manifest = {
        "experiment": spec.experiment,
        "csv_schema_version": CSV_SCHEMA_VERSION,
        "config_sha1": git_blob_sha1(spec.source_text.encode()),
        "config": spec.source_text,
        "code_version": code_version(),
        "seeds": list(spec.seeds),
        "schedule": {k: getattr(spec.schedule, k) for k in _SCHEDULE_KEYS},
        "budget_seconds": spec.budget_seconds,
        "workers": n_workers,
        "points": [statuses[i] for i in sorted(statuses)],
        "outputs": hashes,
        "n_failed": len(failed),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


# -- comparison -----------------------------------------------------------------------------

KEY_COLUMNS = ("experiment",) + PARAM_COLUMNS


class CompareError(ValueError):
    pass


def _read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _key(row: dict, cols) -> tuple:
    out = []
    for c in cols:
        v = row[c]
        try:
            out.append(float(v))
        except ValueError:
            out.append(v)
    return tuple(out)


def compare_runs(qmc_csv, oracle_csv, sigma_mult: float = 3.0) -> dict:
    """Pass/fail per grid point: ``|E_qmc - E_oracle| <= sigma_mult * stderr``.

    Rows are matched on the experiment name and the model-parameter columns.
    Rows without a partner in the other file raise :class:`CompareError`.
    """
    qrows, orows = _read_csv(qmc_csv), _read_csv(oracle_csv)
    if not qrows:
        raise CompareError(f"{qmc_csv}: no rows")
    cols = [c for c in KEY_COLUMNS if c in qrows[0] and (not orows or c in orows[0])]
    if "energy" not in qrows[0] or (orows and "energy" not in orows[0]):
        raise CompareError("both files need an 'energy' column")
    if "stderr" not in qrows[0]:
        raise CompareError(f"{qmc_csv}: missing 'stderr' column")
    qmap = {_key(r, cols): r for r in qrows}
    omap = {_key(r, cols): r for r in orows}
    if len(qmap) != len(qrows) or len(omap) != len(orows):
        raise CompareError("duplicate grid keys")
    orphans = sorted(set(qmap) ^ set(omap), key=str)
    if orphans:
        lines = [("qmc only: " if k in qmap else "oracle only: ") + str(dict(zip(cols, k))) for k in orphans]
        raise CompareError("unmatched rows:\n" + "\n".join(lines))
    verdicts = []
    for k in sorted(qmap, key=str):
        q, o = qmap[k], omap[k]
        e, err, eo = float(q["energy"]), float(q["stderr"]), float(o["energy"])
        dev = abs(e - eo)
        verdicts.append({**dict(zip(cols, k)), "energy": e, "stderr": err, "oracle": eo,
                         "sigmas": dev / err if err > 0 else float("inf") if dev else 0.0,
                         "pass": dev <= sigma_mult * err})
    n_pass = sum(v["pass"] for v in verdicts)
    return {"points": verdicts, "n_pass": n_pass, "n_fail": len(verdicts) - n_pass,
            "sigma_mult": sigma_mult}
