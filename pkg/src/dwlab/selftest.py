"""Fast invariant suite behind ``dwlab selftest``."""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from .analysis import fit_decay
from .coeffs import DampingModel, PerturbationModel, predict_rates
from .decompose import split
from .dynamics import InitialData, PhysicalSolver, PhysicalState, to_scaled
from .energy import EnergyConfig, energy_series, hardy_1d, hardy2
from .fields import Grid, gaussian_phi0, psi0
from .model import Model


def _parseval() -> tuple[bool, str]:
    g = Grid(1, 20.0, 512)
    f = np.random.default_rng(1).standard_normal(g.shape)
    err = abs(g.l2(f) - g.parseval_norm(g.fft(f))) / g.l2(f)
    return err < 1e-12, f"relative mismatch {err:.2e}"


def _gaussian() -> tuple[bool, str]:
    g = Grid(1, 20.0, 512)
    phi = gaussian_phi0(g)
    mass = abs(g.integrate(phi) - 1.0)
    y = g.x
    resid = np.max(np.abs(g.laplacian(phi) + 0.5 * y * g.gradient(phi)[0] + 0.5 * phi))
    psi_err = np.max(np.abs(g.laplacian(phi) - psi0(g)))
    return mass < 1e-10 and resid < 1e-8 and psi_err < 1e-8, f"mass err {mass:.1e}, eigen residual {resid:.1e}"


def _hardy() -> tuple[bool, str]:
    g = Grid(1, 20.0, 512)
    y = g.x
    out = hardy_1d(g, y * np.exp(-y**2 / 2))
    ratio = out["lhs"] / out["rhs"]
    rng = np.random.default_rng(7)
    ok = True
    for _ in range(20):
        c = rng.standard_normal(4)
        f = sum(ci * y**i for i, ci in enumerate(c)) * np.exp(-y**2 / 2)
        f -= g.integrate(f) * gaussian_phi0(g)
        ok &= hardy_1d(g, f)["ok"]
    g2 = Grid(2, 16.0, 64)
    f2 = g2.coords[0] * np.exp(-(g2.radius**2) / 2)
    h2 = hardy2(g2, f2, 3.0, 0.5)
    return bool(ok and abs(ratio - 1 / 3) < 1e-6 and math.isfinite(h2["ratio"])), \
        f"analytic ratio {ratio:.8f}, fractional constant {h2['ratio']:.3g}"


def _mode_oracle() -> tuple[bool, str]:
    g = Grid(1, 20.0, 256)
    k = np.pi * 3 / g.L
    u0 = np.sin(k * (g.x + g.L))
    model = Model(1, DampingModel(0.0))
    solver = PhysicalSolver(g, model, dt_max=1e-2)
    cu, cp = solver.advance(0.0, g.fft(u0), g.fft(np.zeros_like(u0)), 5.0)
    disc = np.sqrt(complex(0.25 - k * k))
    lp, lm = -0.5 + disc, -0.5 - disc
    amp = ((lm * np.exp(lp * 5.0) - lp * np.exp(lm * 5.0)) / (lm - lp)).real
    err = np.max(np.abs(g.ifft(cu) - amp * u0))
    return err < 1e-9, f"max error {err:.2e}"


def _identities() -> tuple[bool, str]:
    gx, gy = Grid(1, 40.0, 512), Grid(1, 16.0, 256)
    damping = DampingModel(0.0)
    model = Model(1, damping)
    rates = predict_rates(1, 1, damping, PerturbationModel(), model.nl)
    cfg = EnergyConfig(n=1, m=1, lam=rates.lam)
    u0, u1 = InitialData(epsilon=1.0, u1_scale=1.0).generate(gx)
    worst = {}
    for ds in (0.1, 0.05):
        s_out = np.arange(0.0, 1.0 + 1e-9, ds)
        decs = []
        PhysicalSolver(gx, model, dt_max=0.01).run(
            PhysicalState(0.0, u0, u1), damping.t_of_s(s_out),
            lambda k, st: decs.append(split(gy, model, to_scaled(st, gx, gy, damping))))
        reps = energy_series(gy, decs, cfg)
        pick = [int(round(s / ds)) for s in (0.4, 0.6)]
        worst[ds] = max(abs(reps[i].identity_residuals[nm]) for i in pick for nm in reps[i].identity_residuals)
    order = math.log2(worst[0.1] / worst[0.05])
    return order >= 1.8, f"observed order {order:.2f}"


def _manufactured_fit() -> tuple[bool, str]:
    tau = np.geomspace(20, 500, 40)
    fit = fit_decay(tau**-0.75, tau, (20, 500), 0.5)
    return abs(fit.slope + 0.75) < 1e-10, f"slope {fit.slope:.12f}"


CHECKS: list[tuple[str, Callable[[], tuple[bool, str]]]] = [
    ("parseval", _parseval),
    ("gaussian structure", _gaussian),
    ("hardy inequalities", _hardy),
    ("per-mode oracle", _mode_oracle),
    ("energy identities", _identities),
    ("manufactured power law", _manufactured_fit),
]


def run_all(echo: Callable[[str], None] = print) -> bool:
    all_ok = True
    for name, check in CHECKS:
        try:
            ok, detail = check()
        except Exception as exc:  # a crashing check is a failing check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        all_ok &= ok
        echo(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    return all_ok
