"""Staged run pipeline: simulate, decompose, energy, rates.

Each stage reads only what earlier stages persisted under the run
directory, so any stage can be re-run on its own and reproduces its
outputs exactly.
"""

from __future__ import annotations

import csv
import json
import math
import os
import tempfile
import time
import warnings
from pathlib import Path

import numpy as np

from . import analysis, config
from .decompose import Decomposition, alpha_ode_residual, split
from .dynamics import BlowUp, InitialData, PhysicalSolver, PhysicalState, ScaledState, to_scaled
from .energy import (IDENTITIES, EnergyConfig, energy_series, e5_threshold, equivalence_check,
                     l4_lower_bound)
from .fields import load_fields, save_fields

TIMESERIES_COLUMNS = ("k", "s", "t", "B", "alpha", "dalpha", "l2_u", "l2_ut", "sup_u")


def out_root(cli_out: str | None) -> Path:
    if cli_out:
        return Path(cli_out)
    return Path(os.environ.get("DWLAB_OUT", "dwlab_out"))


def run_dir(root: Path, cfg: dict) -> Path:
    return Path(root) / "runs" / cfg["id"]


def write_atomic(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path: Path, obj) -> None:
    write_atomic(path, json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n")


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def write_csv(path: Path, columns, rows) -> None:
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(_fmt(row[c]) for c in columns))
    write_atomic(path, "\n".join(lines) + "\n")


def read_csv(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(fh)]


def load_run_config(rdir: Path) -> dict:
    return config.normalize(json.loads((Path(rdir) / "config.json").read_text()))


# --------------------------------------------------------------------------- simulate

def simulate(cfg: dict, rdir: Path) -> dict:
    """Integrate the physical problem, writing snapshots and the time series."""
    rdir = Path(rdir)
    snap_dir = rdir / "snapshots"
    snap_dir.mkdir(parents=True, exist_ok=True)
    write_json(rdir / "config.json", cfg)
    gx, _ = config.grids(cfg)
    model = config.build_model(cfg)
    damping = model.damping
    data = cfg["data"]
    init = InitialData(family=data["family"], epsilon=float(data["epsilon"]), seed=int(data["seed"]),
                       width=float(data["width"]), u1_scale=float(data["u1_scale"]),
                       center=float(data["center"]))
    u0, u1 = init.generate(gx)
    tm = cfg["time"]
    count = int(round(tm["s_end"] / tm["ds_out"]))
    s_out = [k * tm["ds_out"] for k in range(count + 1)]
    t_out = [float(damping.t_of_s(s)) for s in s_out]
    solver = PhysicalSolver(gx, model, cfl=float(tm["cfl"]), dt_max=float(tm["dt_max"]),
                            ceiling=float(tm["ceiling"]))
    rows = []

    def record(k: int, st: PhysicalState) -> None:
        s = s_out[k]
        B = float(damping.B(st.t))
        # dalpha/ds = int w dy = b e^{s} int u_t dx
        log_fac = float(damping.log_b_of_s(s)) + s
        rows.append({"k": k, "s": s, "t": st.t, "B": B, "alpha": gx.integrate(st.u),
                     "dalpha": math.exp(log_fac) * gx.integrate(st.p),
                     "l2_u": gx.l2(st.u), "l2_ut": gx.l2(st.p), "sup_u": float(np.max(np.abs(st.u)))})
        save_fields(snap_dir / f"{k:05d}", gx, {"u": st.u, "p": st.p}, t=st.t, s=s, k=k, kind="physical")

    outcome, blow = "completed", None
    try:
        solver.run(PhysicalState(0.0, u0, u1), t_out, record)
    except BlowUp as exc:
        outcome, blow = "blowup", {"t": exc.t, "sup": exc.sup}
    write_csv(rdir / "timeseries.csv", TIMESERIES_COLUMNS, rows)
    return {"outcome": outcome, "blowup": blow, "snapshots": len(rows), "steps": solver.steps}


def _snapshot_stems(directory: Path) -> list[Path]:
    return sorted(p.with_suffix("") for p in Path(directory).glob("*.json"))


# --------------------------------------------------------------------------- decompose

DECOMP_COLUMNS = ("k", "s", "alpha", "dalpha", "eps", "drag", "underflow", "mean_f", "mean_g", "mean_h",
                  "l2_f", "l2_g", "l2_r", "l2_h", "alpha_ode_residual")


def decompose_stage(rdir: Path) -> dict:
    rdir = Path(rdir)
    cfg = load_run_config(rdir)
    gx, gy = config.grids(cfg)
    model = config.build_model(cfg)
    out_dir = rdir / "decomp"
    out_dir.mkdir(exist_ok=True)
    decs: list[Decomposition] = []
    ks = []
    resample_warnings = 0
    for stem in _snapshot_stems(rdir / "snapshots"):
        _, arrays, meta = load_fields(stem)
        st = PhysicalState(meta["t"], arrays["u"], arrays["p"])
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", RuntimeWarning)
            sst = to_scaled(st, gx, gy, model.damping)
        resample_warnings += len(caught)
        sst = ScaledState(meta["s"], sst.v, sst.w)
        dec = split(gy, model, sst)
        decs.append(dec)
        ks.append(meta["k"])
        arrays_out = {"f": dec.f, "g": dec.g, "r": dec.r, "h": dec.h}
        if dec.nl_part is not None:
            arrays_out["nl"] = dec.nl_part
        save_fields(out_dir / f"{meta['k']:05d}", gy, arrays_out, s=dec.s, k=meta["k"], kind="decomposition",
                    alpha=dec.alpha, dalpha=dec.dalpha, eps=dec.eps, drag=dec.drag, underflow=dec.underflow)
    ode = np.full(len(decs), np.nan)
    if len(decs) >= 3:
        ode[1:-1] = alpha_ode_residual(gy, decs)
    rows = []
    for k, dec, res in zip(ks, decs, ode):
        rows.append({"k": k, "s": dec.s, "alpha": dec.alpha, "dalpha": dec.dalpha, "eps": dec.eps,
                     "drag": dec.drag, "underflow": dec.underflow,
                     "mean_f": gy.integrate(dec.f), "mean_g": gy.integrate(dec.g), "mean_h": gy.integrate(dec.h),
                     "l2_f": gy.l2(dec.f), "l2_g": gy.l2(dec.g), "l2_r": gy.l2(dec.r), "l2_h": gy.l2(dec.h),
                     "alpha_ode_residual": res})
    write_csv(rdir / "decomp.csv", DECOMP_COLUMNS, rows)
    underflow = any(d.underflow for d in decs)
    return {"snapshots": len(decs), "resampling_warnings": resample_warnings, "underflow": underflow}


def load_decompositions(rdir: Path) -> tuple[list[Decomposition], object]:
    decs = []
    grid = None
    for stem in _snapshot_stems(Path(rdir) / "decomp"):
        grid, arrays, meta = load_fields(stem)
        decs.append(Decomposition(s=meta["s"], alpha=meta["alpha"], dalpha=meta["dalpha"], f=arrays["f"],
                                  g=arrays["g"], r=arrays["r"], h=arrays["h"], eps=meta["eps"],
                                  drag=meta["drag"], underflow=meta["underflow"], nl_part=arrays.get("nl")))
    return decs, grid


# --------------------------------------------------------------------------- energy

def energy_config(cfg: dict) -> EnergyConfig:
    an = cfg["analysis"]
    rates = config.rates_for(cfg)
    return EnergyConfig(n=cfg["n"], m=float(cfg["data"]["m"]), lam=rates.lam, delta=float(an["delta"]),
                        C0=float(an["C0"]), C1=float(an["C1"]), eta_e2=an["eta_e2"],
                        eta_tilde=float(an["eta_tilde"]))


def energy_stage(rdir: Path) -> dict:
    rdir = Path(rdir)
    cfg = load_run_config(rdir)
    decs, gy = load_decompositions(rdir)
    ecfg = energy_config(cfg)
    reports = energy_series(gy, decs, ecfg)
    rows = [r.as_row() for r in reports]
    columns = list(rows[0].keys()) if rows else []
    write_csv(rdir / "energy.csv", columns, rows)

    max_res = {}
    for name in IDENTITIES:
        vals = [abs(r.identity_residuals.get(name, math.nan)) for r in reports]
        vals = [v for v in vals if math.isfinite(v)]
        max_res[name] = max(vals) if vals else None
    s2 = e5_threshold(reports)
    equiv = equivalence_check(ecfg, reports)
    l4 = l4_lower_bound(reports, s2 if s2 is not None else (reports[-1].s if reports else 0.0))
    monitor = analysis.apriori_monitor([r.s for r in reports], [r.E5 for r in reports], s2)
    summary = {"lambda": ecfg.lam, "delta": ecfg.delta, "C0": ecfg.C0, "C1": ecfg.C1,
               "eta_e2": ecfg.eta2 if ecfg.n >= 2 else None, "eta_tilde": ecfg.eta_tilde,
               "ds": cfg["time"]["ds_out"], "max_identity_residual": max_res,
               "s1": equiv["s1"], "s2": s2, "equivalence": equiv, "L4_lower_bound": l4,
               "apriori": monitor}
    write_json(rdir / "energy_summary.json", summary)
    return summary


# --------------------------------------------------------------------------- rates

def rates_stage(rdir: Path) -> dict:
    rdir = Path(rdir)
    cfg = load_run_config(rdir)
    gx, _ = config.grids(cfg)
    model = config.build_model(cfg)
    rates = config.rates_for(cfg)
    ts = read_csv(rdir / "timeseries.csv")
    s = [row["s"] for row in ts]
    alpha = [row["alpha"] for row in ts]
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", analysis.TailWarning)
        try:
            astar = analysis.alpha_star(s, alpha)
        except analysis.FitError as exc:
            # too short for a tail fit: fall back to the last value
            astar = analysis.AlphaStar(float(alpha[-1]), None, math.nan, False)
            warnings.warn(str(exc), analysis.TailWarning)
    tail_warning = [str(w.message) for w in caught]

    tau, errs = [], []
    for stem in _snapshot_stems(rdir / "snapshots"):
        _, arrays, meta = load_fields(stem)
        B = float(model.damping.B(meta["t"]))
        tau.append(B + 1.0)
        errs.append(analysis.profile_error(gx, arrays["u"], B, astar.alpha_star))
    window = tuple(cfg["analysis"]["fit_window"])
    try:
        fit = analysis.fit_decay(errs, tau, window, rates.exponent, alpha_star_value=astar.alpha_star,
                                 alpha_tail_rate=astar.tail_rate).as_dict()
    except analysis.FitError as exc:
        fit = {"error": str(exc), "pass": False, "alpha_star": astar.alpha_star,
               "alpha_tail_rate": astar.tail_rate, "predicted_exponent": rates.exponent}

    envelopes = None
    energy_csv = rdir / "energy.csv"
    if energy_csv.exists():
        rows = read_csv(energy_csv)
        env = analysis.remainder_envelopes(rows, cfg["n"], rates, model.nl)
        write_json(rdir / "envelopes.json", env)
        envelopes = {k: {kk: vv for kk, vv in v.items() if kk != "ratio"} for k, v in env.items() if k != "s"}

    result = {"rates": rates.as_dict(), "fit": fit, "alpha_tail_fit": {
        "alpha_star": astar.alpha_star, "tail_rate": astar.tail_rate, "residual": astar.residual,
        "converged": astar.converged, "warnings": tail_warning},
        "profile": {"B_plus_1": tau, "error": errs}, "envelopes": envelopes}
    write_json(rdir / "ratefit.json", result)
    return result


# --------------------------------------------------------------------------- full run

def execute(cfg: dict, root: Path) -> tuple[dict, int]:
    """Simulate and post-process one validated configuration; returns (summary, exit code)."""
    rdir = run_dir(root, cfg)
    rdir.mkdir(parents=True, exist_ok=True)
    summary_path = rdir / "summary.json"
    if summary_path.exists():
        summary_path.unlink()
    start = time.perf_counter()
    sim = simulate(cfg, rdir)
    summary = {"config": cfg, "outcome": sim["outcome"], "blowup": sim["blowup"],
               "steps": sim["steps"], "snapshots": sim["snapshots"]}
    if sim["outcome"] == "blowup":
        summary["wall_time"] = time.perf_counter() - start
        summary["artifacts"] = {"timeseries": "timeseries.csv", "snapshots": "snapshots/"}
        write_json(summary_path, summary)
        return summary, 3
    dec = decompose_stage(rdir)
    en = energy_stage(rdir)
    rf = rates_stage(rdir)
    if dec["underflow"]:
        summary["outcome"] = "underflow-capped"
    res = [v for v in en["max_identity_residual"].values() if v is not None]
    summary.update({
        "alpha_star": rf["fit"].get("alpha_star"),
        "slope": rf["fit"].get("slope"),
        "predicted_exponent": rf["rates"]["exponent"],
        "pass": rf["fit"].get("pass"),
        "sup_E5": en["apriori"]["sup_E5"],
        "apriori_bounded": en["apriori"]["bounded"],
        "max_identity_residual": max(res) if res else None,
        "resampling_warnings": dec["resampling_warnings"],
        "artifacts": {"config": "config.json", "timeseries": "timeseries.csv", "snapshots": "snapshots/",
                      "decomp": "decomp/", "decomp_csv": "decomp.csv", "energy": "energy.csv",
                      "energy_summary": "energy_summary.json", "ratefit": "ratefit.json",
                      "envelopes": "envelopes.json"},
        "wall_time": time.perf_counter() - start,
    })
    write_json(summary_path, summary)
    return summary, 0
