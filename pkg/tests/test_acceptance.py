"""Acceptance criteria 1-12, each reported as one PASS/FAIL line in the terminal summary."""

import csv
import json
import math
import shutil
import time

import numpy as np
import pytest

from dwlab import cli, config, pipeline
from dwlab.analysis import scaling_check
from dwlab.coeffs import DampingModel, PerturbationModel, predict_rates
from dwlab.decompose import split
from dwlab.dynamics import InitialData, PhysicalSolver, PhysicalState, to_scaled
from dwlab.energy import EnergyConfig, IDENTITIES, PolarQuadrature, energy_series, hardy2, hardy_1d
from dwlab.fields import Grid, gaussian_phi0, psi0
from dwlab.model import Model

pytestmark = pytest.mark.slow


class Runs:
    """Executes scenario configs once per session through the CLI and caches outcomes."""

    def __init__(self, root, config_dir):
        self.root = root
        self.config_dir = config_dir
        self.cache = {}

    def get(self, name):
        if name not in self.cache:
            path = self.config_dir / f"{name}.json"
            start = time.perf_counter()
            code = cli.main(["run", "--config", str(path), "--out", str(self.root)])
            elapsed = time.perf_counter() - start
            rdir = pipeline.run_dir(self.root, config.load(path))
            self.cache[name] = (code, rdir, elapsed)
        return self.cache[name]


@pytest.fixture(scope="session")
def runs(tmp_path_factory, config_dir):
    return Runs(tmp_path_factory.mktemp("acceptance"), config_dir)


def _json(path):
    return json.loads(path.read_text())


# ---------------------------------------------------------------------------- 1

def test_criterion_01_per_mode_oracle(criterion_log):
    start = time.perf_counter()
    g = Grid(1, 20.0, 512)
    u0 = np.exp(-g.x**2)
    u1 = g.x * np.exp(-g.x**2 / 2)
    solver = PhysicalSolver(g, Model(1, DampingModel(0.0)), dt_max=1e-3, cfl=1e3)
    cu, _ = solver.advance(0.0, g.fft(u0), g.fft(u1), 10.0)
    # exact roots (-1 +- sqrt(1 - 4 xi^2))/2 of each mode
    a, b = g.fft(u0), g.fft(u1)
    disc = np.sqrt((1.0 - 4.0 * g.xi_sq).astype(complex))
    lp, lm = 0.5 * (-1 + disc), 0.5 * (-1 - disc)
    c1 = (b - lm * a) / (lp - lm)
    exact = c1 * np.exp(10.0 * lp) + (a - c1) * np.exp(10.0 * lm)
    rel = g.parseval_norm(cu - exact) / g.parseval_norm(exact)
    elapsed = time.perf_counter() - start
    ok = rel <= 1e-6 and elapsed <= 30 and abs(solver.steps - 10000) <= 1
    criterion_log(1, ok, f"relative L2 error {rel:.2e} (<= 1e-6), {elapsed:.1f} s")
    assert ok


# ---------------------------------------------------------------------------- 2

def test_criterion_02_gaussian_structure(criterion_log):
    start = time.perf_counter()
    gy = Grid(1, config.SCALED_GRID_DEFAULTS[1]["L"], config.SCALED_GRID_DEFAULTS[1]["N"])
    phi = gaussian_phi0(gy)
    mass_err = abs(gy.integrate(phi) - 1.0)
    resid = np.max(np.abs(gy.laplacian(phi) + 0.5 * gy.x * gy.gradient(phi)[0] + 0.5 * phi))
    elapsed = time.perf_counter() - start
    ok = mass_err <= 1e-10 and resid <= 1e-8 and elapsed <= 1
    criterion_log(2, ok, f"mass error {mass_err:.1e}, eigen residual {resid:.1e}, {elapsed:.2f} s")
    assert ok


# ---------------------------------------------------------------------------- 3

def test_criterion_03_hardy_suite(criterion_log):
    start = time.perf_counter()
    g = Grid(1, 20.0, 512)
    y = g.x
    phi = gaussian_phi0(g)
    rng = np.random.default_rng(2024)
    failures = 0
    for _ in range(200):
        width = rng.uniform(0.4, 2.5)
        f = np.polyval(rng.standard_normal(6), y - rng.uniform(-3, 3)) * np.exp(-y**2 / (2 * width**2))
        f -= g.integrate(f) * phi
        failures += not hardy_1d(g, f, slack=1e-2)["ok"]
    analytic = hardy_1d(g, y * np.exp(-y**2 / 2))
    ratio = analytic["lhs"] / analytic["rhs"]

    g2 = Grid(2, 16.0, 64)
    quad = PolarQuadrature(g2, 0.5)
    phi2 = gaussian_phi0(g2)
    y1, y2 = g2.coords
    ratios = []
    for _ in range(100):
        c = rng.standard_normal(6)
        width = rng.uniform(0.6, 2.0)
        f = (c[0] + c[1] * y1 + c[2] * y2 + c[3] * y1 * y2 + c[4] * y1**2 + c[5] * y2**2)
        f = f * np.exp(-(g2.radius**2) / (2 * width**2))
        f -= g2.integrate(f) * phi2
        ratios.append(hardy2(g2, f, 3.0, 0.5, quad)["ratio"])
    elapsed = time.perf_counter() - start
    ok = (failures == 0 and abs(ratio - 1 / 3) <= 1e-6 and all(math.isfinite(r) and r > 0 for r in ratios)
          and elapsed <= 30)
    criterion_log(3, ok, f"1D failures {failures}/200, analytic ratio {ratio:.9f}, "
                         f"2D constant max {max(ratios):.3g} over 100 fields, {elapsed:.1f} s")
    assert ok


# ---------------------------------------------------------------------------- 4

def _identity_errors(n, ds):
    damping = DampingModel(0.0)
    model = Model(n, damping)
    if n == 1:
        gx, gy, m, dt_max = Grid(1, 64.0, 1024), Grid(1, 20.0, 512), 1, 0.01
        data = InitialData(epsilon=1.0, u1_scale=1.0)
    else:
        gx, gy, m, dt_max = Grid(2, 32.0, 128), Grid(2, 16.0, 128), 3, 0.05
        data = InitialData(epsilon=1.0, u1_scale=1.0, width=1.5)
    rates = predict_rates(n, m, damping, PerturbationModel(), model.nl)
    ecfg = EnergyConfig(n=n, m=m, lam=rates.lam)
    u0, u1 = data.generate(gx)
    s_out = np.arange(0.0, 2.0 + 1e-9, ds)
    decs = []
    PhysicalSolver(gx, model, dt_max=dt_max).run(
        PhysicalState(0.0, u0, u1), damping.t_of_s(s_out),
        lambda k, st: decs.append(split(gy, model, to_scaled(st, gx, gy, damping))))
    reps = energy_series(gy, decs, ecfg)
    common = [int(round(s / ds)) for s in np.arange(0.4, 1.61, 0.2)]
    return {name: max(abs(reps[i].identity_residuals[name]) for i in common) for name in IDENTITIES}


def test_criterion_04_identity_convergence(criterion_log):
    start = time.perf_counter()
    orders = {}
    for n in (1, 2):
        errs = {ds: _identity_errors(n, ds) for ds in (0.2, 0.1, 0.05)}
        for name in IDENTITIES:
            orders[f"{name}(n={n})"] = min(math.log2(errs[0.2][name] / errs[0.1][name]),
                                           math.log2(errs[0.1][name] / errs[0.05][name]))
    elapsed = time.perf_counter() - start
    worst = min(orders, key=orders.get)
    ok = all(o >= 1.8 for o in orders.values()) and elapsed <= 300
    criterion_log(4, ok, f"min order {orders[worst]:.2f} at {worst} (>= 1.8), {elapsed:.0f} s")
    print(json.dumps({k: round(v, 3) for k, v in orders.items()}))
    assert ok


# ---------------------------------------------------------------------------- 5

def test_criterion_05_rate_1d_linear(runs, criterion_log):
    code, rdir, elapsed = runs.get("linear_1d")
    fit = _json(rdir / "ratefit.json")["fit"]
    ok = code == 0 and fit["slope"] <= -0.45 and tuple(fit["window"]) == (20.0, 500.0) and elapsed <= 180
    criterion_log(5, ok, f"slope {fit['slope']:.3f} (<= -0.45), {elapsed:.0f} s")
    assert ok


def test_linear_alpha_tail_rate(runs):
    # companion of criterion 5: |alpha - alpha*| decays at least like e^{-(lambda - 0.05) s}
    _, rdir, _ = runs.get("linear_1d")
    rf = _json(rdir / "ratefit.json")
    assert rf["alpha_tail_fit"]["tail_rate"] is None or rf["alpha_tail_fit"]["tail_rate"] >= rf["rates"]["lambda"] - 0.05


# ---------------------------------------------------------------------------- 6

def test_criterion_06_beta_sweep(tmp_path_factory, config_dir, criterion_log):
    root = tmp_path_factory.mktemp("sweep")
    start = time.perf_counter()
    code = cli.main(["sweep", "--config", str(config_dir / "beta_sweep_1d.json"), "--out", str(root),
                     "--jobs", "3"])
    elapsed = time.perf_counter() - start
    with open(root / "sweeps" / "beta-sweep-1d" / "sweep.csv") as fh:
        rows = list(csv.DictReader(fh))
    slopes = {float(r["beta"]): float(r["fitted_slope"]) for r in rows}
    ok = (code == 0 and len(rows) == 3 and all(r["pass"] == "True" for r in rows)
          and all(s <= -0.42 for s in slopes.values()) and elapsed <= 600)
    detail = ", ".join(f"beta={b:+.1f}: {s:.3f}" for b, s in sorted(slopes.items()))
    criterion_log(6, ok, f"{detail} (<= -0.42), {elapsed:.0f} s")
    assert ok


# ---------------------------------------------------------------------------- 7

def test_criterion_07_rate_2d(runs, criterion_log):
    code, rdir, elapsed = runs.get("linear_2d")
    rf = _json(rdir / "ratefit.json")
    fit = rf["fit"]
    predicted = rf["rates"]["exponent"]
    ok = (code == 0 and fit["slope"] <= -0.73 and abs(predicted - (0.5 + 1 / 3 - 0.01)) < 1e-12
          and tuple(fit["window"]) == (10.0, 100.0) and elapsed <= 900)
    criterion_log(7, ok, f"slope {fit['slope']:.3f} (<= -0.73), predicted exponent {predicted:.4f}, "
                         f"{elapsed:.0f} s")
    assert ok


# ---------------------------------------------------------------------------- 8

def test_criterion_08_nonlinear_1d(runs, criterion_log):
    code, rdir, elapsed = runs.get("defocusing_1d")
    summary = _json(rdir / "summary.json")
    rf = _json(rdir / "ratefit.json")
    en = _json(rdir / "energy_summary.json")
    lam = rf["rates"]["lambda"]
    tail = rf["alpha_tail_fit"]["tail_rate"]
    slope = rf["fit"]["slope"]
    ok = (code == 0 and summary["outcome"] == "completed" and en["apriori"]["bounded"]
          and tail is not None and tail >= lam - 0.05 and slope <= -0.42 and elapsed <= 300)
    criterion_log(8, ok, f"completed, apriori bounded={en['apriori']['bounded']}, alpha tail rate "
                         f"{tail:.3f} (>= {lam - 0.05:.2f}), slope {slope:.3f} (<= -0.42), {elapsed:.0f} s")
    assert ok


# ---------------------------------------------------------------------------- 9

def test_criterion_09_epsilon_scaling(runs, criterion_log):
    code_a, rdir_a, t_a = runs.get("defocusing_1d")
    code_b, rdir_b, t_b = runs.get("defocusing_1d_half")
    sup_a = _json(rdir_a / "summary.json")["sup_E5"]
    sup_b = _json(rdir_b / "summary.json")["sup_E5"]
    check = scaling_check(sup_a, sup_b)
    ok = code_a == 0 and code_b == 0 and check["ok"] and t_a + t_b <= 600
    criterion_log(9, ok, f"sup E5 {sup_a:.5g} vs {sup_b:.5g}, ratio {check['ratio']:.3f} (in [3, 5])")
    assert ok


# ---------------------------------------------------------------------------- 10

def test_criterion_10_blowup_contrast(runs, criterion_log):
    code_f, rdir_f, _ = runs.get("focusing_1d")
    code_d, rdir_d, _ = runs.get("defocusing_1d")
    sf = _json(rdir_f / "summary.json")
    sd = _json(rdir_d / "summary.json")
    t_blow = (sf.get("blowup") or {}).get("t", math.inf)
    ok = code_f == 3 and sf["outcome"] == "blowup" and t_blow < 100 and code_d == 0 and sd["outcome"] == "completed"
    criterion_log(10, ok, f"focusing: exit {code_f}, blow-up at t={t_blow:.2f}; defocusing: exit {code_d}, "
                          f"{sd['outcome']}")
    assert ok


# ---------------------------------------------------------------------------- 11

def test_criterion_11_remainder_envelopes(runs, criterion_log):
    details, ok = [], True
    for name in ("linear_1d", "defocusing_1d"):
        _, rdir, _ = runs.get(name)
        env = _json(rdir / "envelopes.json")
        for key in ("r", "h"):
            e = env[key]
            ok &= e["finite"] and e["stable"]
            spread = e["tail_sup"] / e["tail_median"] if e["tail_median"] else 0.0
            details.append(f"{name}/{key}: sup {e['tail_sup']:.3g}, sup/median {spread:.2f}")
    criterion_log(11, ok, "; ".join(details) + " (sup/median <= 10)")
    assert ok


# ---------------------------------------------------------------------------- 12

def test_criterion_12_determinism(runs, tmp_path_factory, criterion_log):
    code, rdir, _ = runs.get("linear_1d")
    other = tmp_path_factory.mktemp("repeat")
    path = runs.config_dir / "linear_1d.json"
    code2 = cli.main(["run", "--config", str(path), "--out", str(other)])
    rdir2 = pipeline.run_dir(other, config.load(path))
    same_ts = (rdir / "timeseries.csv").read_bytes() == (rdir2 / "timeseries.csv").read_bytes()
    snaps = sorted((rdir / "snapshots").glob("*.bin"))
    same_snaps = all(p.read_bytes() == (rdir2 / "snapshots" / p.name).read_bytes() for p in snaps)

    # staged post-processing from persisted snapshots only
    staged = tmp_path_factory.mktemp("staged") / "run"
    shutil.copytree(rdir2, staged)
    for name in ("decomp", "decomp.csv", "energy.csv", "energy_summary.json", "ratefit.json", "envelopes.json"):
        target = staged / name
        if target.is_dir():
            shutil.rmtree(target)
        elif target.exists():
            target.unlink()
    for stage in ("decompose", "energy", "rates"):
        assert cli.main([stage, "--run", str(staged)]) == 0
    same_fit = (staged / "ratefit.json").read_bytes() == (rdir / "ratefit.json").read_bytes()
    same_energy = (staged / "energy.csv").read_bytes() == (rdir / "energy.csv").read_bytes()
    ok = code == 0 and code2 == 0 and same_ts and same_snaps and same_fit and same_energy
    criterion_log(12, ok, f"timeseries identical={same_ts}, snapshots identical={same_snaps}, "
                          f"staged ratefit identical={same_fit}, energy identical={same_energy}")
    assert ok
