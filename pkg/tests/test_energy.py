import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dwlab.coeffs import DampingModel, PerturbationModel, predict_rates, scaled_weights
from dwlab.decompose import Decomposition, split
from dwlab.dynamics import InitialData, PhysicalSolver, PhysicalState, to_scaled
from dwlab.energy import (EnergyConfig, MeanError, PolarQuadrature, convergence_order, e5_threshold,
                          energies, energy_series, equivalence_check, fractional_primitive, hardy2,
                          hardy_1d, identity_residuals, l4_lower_bound, low_mode_interpolation,
                          positivity_threshold, primitive_1d, unitary_lattice_transform)
from dwlab.fields import Grid, gaussian_phi0, psi0
from dwlab.model import Model

G1 = Grid(1, 20.0, 512)
G2 = Grid(2, 16.0, 64)
CFG1 = EnergyConfig(n=1, m=1, lam=0.24)
CFG2 = EnergyConfig(n=2, m=3, lam=0.3)


def test_primitive_examples():
    y = G1.x
    F = primitive_1d(G1, y * np.exp(-y**2 / 2))
    assert np.max(np.abs(F + np.exp(-y**2 / 2))) < 1e-12
    assert not primitive_1d(G1, np.zeros(G1.shape)).any()
    f = (y**2 - 1) * np.exp(-y**2 / 2)
    F = primitive_1d(G1, f)
    assert np.max(np.abs(G1.gradient(F)[0] - f)) < 1e-6
    trap = primitive_1d(G1, f, method="trapezoid")
    assert np.max(np.abs(trap - F)) < 1e-3 and abs(trap[-1]) < 1e-8 * G1.l2(f) + 1e-8


def test_primitive_rejects_mean():
    with pytest.raises(MeanError):
        primitive_1d(G1, gaussian_phi0(G1))
    with pytest.raises(ValueError):
        primitive_1d(G1, np.zeros(G1.shape), method="simpson")


def test_hardy_analytic():
    y = G1.x
    out = hardy_1d(G1, y * np.exp(-y**2 / 2))
    assert out["lhs"] == pytest.approx(math.sqrt(math.pi), rel=1e-10)
    assert out["rhs"] == pytest.approx(3 * math.sqrt(math.pi), rel=1e-10)
    zero = hardy_1d(G1, np.zeros(G1.shape))
    assert zero["lhs"] == 0 and zero["rhs"] == 0 and zero["ok"]


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_hardy_random_zero_mean(seed):
    rng = np.random.default_rng(seed)
    y = G1.x
    width = rng.uniform(0.5, 2.0)
    f = np.polyval(rng.standard_normal(5), y - rng.uniform(-2, 2)) * np.exp(-y**2 / (2 * width**2))
    f -= G1.integrate(f) * gaussian_phi0(G1)
    assert hardy_1d(G1, f)["ok"]


def test_unitary_transform_of_gaussian():
    phi = gaussian_phi0(G2)
    fhat = unitary_lattice_transform(G2, phi)
    # phi0 has unitary transform e^{-|xi|^2}/(2 pi)
    assert np.max(np.abs(fhat - np.exp(-G2.xi_sq) / (2 * np.pi))) < 1e-12


@pytest.mark.parametrize("delta", [0.25, 0.5, 0.75])
def test_polar_quadrature_analytic(delta):
    # f = y1 exp(-|y|^2/2): int |xi|^{-2-2delta} |f_hat|^2 = pi Gamma(1-delta)/2
    y1 = G2.coords[0]
    f = y1 * np.exp(-(G2.radius**2) / 2)
    quad = PolarQuadrature(G2, delta)
    (a,) = quad.reduced([f])
    assert quad.integral(a, a) == pytest.approx(math.pi * math.gamma(1 - delta) / 2, rel=1e-8)
    assert quad.integral(a, a, 1) == pytest.approx(math.pi * math.gamma(2 - delta) / 2, rel=1e-8)


def test_fractional_primitive_basics():
    z = np.zeros(G2.shape)
    assert not fractional_primitive(G2, z, 0.5).any()
    F = fractional_primitive(G2, psi0(G2), 0.5)
    assert F[0, 0] == 0 and np.all(np.isfinite(F))
    for bad in (0.0, 1.0):
        with pytest.raises(ValueError):
            fractional_primitive(G2, z, bad)
    with pytest.raises(ValueError):
        fractional_primitive(G1, np.zeros(G1.shape), 0.5)
    out = hardy2(G2, psi0(G2), 3.0, 0.5)
    assert out["ratio"] > 0 and math.isfinite(out["ratio"])


def test_fractional_low_high_split():
    # f_hat(0) = 0 gives |f_hat(xi)| <= |xi| ||y f||_{L1} / (2 pi), which controls |xi| <= 1;
    # above 1 the multiplier is at most 1
    delta = 0.5
    f = psi0(G2)
    Fh = fractional_primitive(G2, f, delta)
    rho = np.sqrt(G2.xi_sq)
    dxi = (np.pi / G2.L) ** 2
    inner = (rho > 0) & (rho <= 1)
    low = np.sum(np.abs(Fh[inner]) ** 2) * dxi
    high = np.sum(np.abs(Fh[rho > 1]) ** 2) * dxi
    moment = G2.integrate(G2.radius * np.abs(f))
    low_bound = (moment / (2 * np.pi)) ** 2 * np.sum(rho[inner] ** (-2 * delta)) * dxi
    assert 0 < low <= low_bound
    assert 0 < high <= G2.l2(f) ** 2 * (1 + 1e-10)


@pytest.mark.parametrize("eta", [1e-1, 1e-2, 1e-3])
def test_low_mode_interpolation_holds(eta):
    rng = np.random.default_rng(int(1 / eta))
    for _ in range(10):
        f = np.polyval(rng.standard_normal(3), G2.coords[0]) * np.exp(-(G2.radius**2) / 2)
        f -= G2.integrate(f) * gaussian_phi0(G2)
        assert low_mode_interpolation(G2, f, 0.5, eta)["ok"]


def test_low_mode_interpolation_single_modes():
    k = np.pi / G2.L
    high = low_mode_interpolation(G2, np.cos(20 * k * G2.coords[0]), 0.5, 0.1)
    assert high["high"] > high["low"]
    low = low_mode_interpolation(G2, np.cos(k * G2.coords[0]), 0.5, 0.1)
    assert low["low"] > low["high"]


def _dec(grid, s, alpha, dalpha, f, g, r=None, h=None, eps=None):
    z = np.zeros(grid.shape)
    eps = math.exp(-s) if eps is None else eps
    return Decomposition(s=s, alpha=alpha, dalpha=dalpha, f=f, g=g, r=z if r is None else r,
                         h=z if h is None else h, eps=eps, drag=0.0)


@pytest.mark.parametrize("grid,cfg", [(G1, CFG1), (G2, CFG2)])
def test_zero_decomposition_gives_zero(grid, cfg):
    z = np.zeros(grid.shape)
    rep = energies(grid, _dec(grid, 1.0, 0.0, 0.0, z, z), cfg)
    for name in ("E0", "E1", "E2", "E3", "E4", "E5", "L0", "L1", "L2", "L4", "R0", "R1", "R2", "R3", "R4", "R5"):
        assert getattr(rep, name) == 0.0


def test_e3_only_alpha_part():
    z = np.zeros(G1.shape)
    rep = energies(G1, _dec(G1, 1.0, 2.0, 0.0, z, z), CFG1)
    assert rep.E0 == rep.E1 == rep.E2 == 0.0
    assert rep.E3 == pytest.approx(math.exp(-2 * 0.24) * 4.0)


def test_e1_of_minus_psi0():
    z = np.zeros(G1.shape)
    eps = math.exp(-1.5)
    rep = energies(G1, _dec(G1, 1.5, 0.0, 0.0, z, -psi0(G1), eps=eps), CFG1)
    psi_sq = 3 / (32 * math.sqrt(2 * math.pi))  # ||psi0||^2 in closed form
    assert G1.l2(psi0(G1)) ** 2 == pytest.approx(psi_sq, rel=1e-12)
    assert rep.E1 == pytest.approx(0.5 * eps * psi_sq, rel=1e-12)


def test_eps_derivative_bookkeeping():
    # d eps/ds = -eps - 2 drag links the E5 and E4 identities
    for beta in (-0.5, 0.3):
        m = DampingModel(beta)
        s, h = 1.1, 1e-4
        d = (scaled_weights(m, s + h).eps - scaled_weights(m, s - h).eps) / (2 * h)
        w = scaled_weights(m, s)
        assert d == pytest.approx(-w.eps - 2 * w.drag, rel=1e-7)


def test_rates_per_identity():
    assert CFG1.rate("e0") == CFG1.rate("e2") == 0.5
    assert CFG2.rate("e0") == 0.5 and CFG2.delta_tilde == 2.0
    assert CFG2.rate("e2") == pytest.approx(2.0 - 1.0)
    assert CFG1.rate("e4") == pytest.approx(0.48)


def test_stationary_zero_series_has_zero_residuals():
    z = np.zeros(G1.shape)
    reps = [energies(G1, _dec(G1, 0.1 * k, 0.0, 0.0, z, z), CFG1) for k in range(5)]
    res = identity_residuals(reps, CFG1)
    for series in res.values():
        assert np.isnan(series[0]) and np.isnan(series[-1])
        assert np.all(series[1:-1] == 0.0)


def test_convergence_order_helper():
    assert convergence_order(4.0, 1.0) == pytest.approx(2.0)
    assert convergence_order(1.0, 0.0) == math.inf


@pytest.fixture(scope="module")
def linear_series():
    gx, gy = Grid(1, 64.0, 1024), Grid(1, 20.0, 512)
    damping = DampingModel(0.0)
    model = Model(1, damping)
    rates = predict_rates(1, 1, damping, PerturbationModel(), model.nl)
    cfg = EnergyConfig(n=1, m=1, lam=rates.lam)
    u0, u1 = InitialData(epsilon=1.0, u1_scale=1.0).generate(gx)
    s_out = np.arange(0.0, 3.0 + 1e-9, 0.05)
    decs = []
    PhysicalSolver(gx, model, dt_max=0.01).run(
        PhysicalState(0.0, u0, u1), damping.t_of_s(s_out),
        lambda k, st_: decs.append(split(gy, model, to_scaled(st_, gx, gy, damping))))
    return cfg, energy_series(gy, decs, cfg)


def test_series_is_finite_and_residuals_small(linear_series):
    cfg, reps = linear_series
    for rep in reps:
        for k, v in rep.as_row().items():
            if not k.startswith("res_"):
                assert math.isfinite(v), k
    interior = reps[1:-1]
    for name in ("e0", "e1", "e2", "e3", "e4", "e5"):
        scale = max(abs(r.E4) for r in reps)
        assert max(abs(r.identity_residuals[name]) for r in interior) < 1e-2 * scale


def test_thresholds_and_equivalence(linear_series):
    cfg, reps = linear_series
    s1 = positivity_threshold(cfg, reps)
    assert s1 == pytest.approx(0.7, abs=1e-9)  # first grid point with e^{-s} < 1/2
    eq = equivalence_check(cfg, reps)
    assert eq["ok"] and 0 < eq["min_ratio"] <= eq["max_ratio"] < math.inf
    for rep in reps:
        if rep.s >= s1:
            assert rep.E1 >= 0 and rep.E2 >= 0
    s2 = e5_threshold(reps)
    assert s2 is not None
    for rep in reps:
        if rep.s >= s2:
            assert rep.E5 >= 0.5 * rep.E4 + 0.25 * rep.alpha**2 - 1e-14


def test_l4_lower_bound_positive(linear_series):
    _, reps = linear_series
    out = l4_lower_bound(reps, s_from=1.0)
    assert out["ok"] and out["c"] > 0
