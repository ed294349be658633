"""Primitives, Hardy-type inequalities and the energy ladder E0..E5 with its identities.

Every identity has the shape ``dE/ds + c E + L = R``.  The residual
reported for a snapshot series is the central-difference derivative of
``E`` plus ``c E + L - R``; on a resolved run it is ``O(ds^2)``.

For ``n = 1`` the lowest energy uses the primitives ``F, G, H`` of
``f, g, h``.  For ``n = 2`` it uses ``F_hat = |xi|^{-n/2-delta} f_hat``
(unitary transform); those xi-integrals are computed by a polar
quadrature whose radial rule absorbs the ``|xi|^{1-2 delta}`` weight, so
the singular multiplier never meets a lattice point near the origin.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.special import roots_jacobi

from .decompose import Decomposition, uniform_spacing
from .fields import Grid

IDENTITIES = ("e0", "e1", "e2", "e3", "e4", "e5")


class MeanError(ValueError):
    """Input to a primitive does not have zero mean."""


# --------------------------------------------------------------------------- primitives

def primitive_1d(grid: Grid, f: np.ndarray, method: str = "spectral", tol: float = 1e-8) -> np.ndarray:
    """``F(y) = int_{-L}^{y} f``.

    ``spectral`` divides the Fourier coefficients by ``i xi`` and fixes the
    constant so that ``F(-L) = 0``; it is exact for band-limited ``f`` and is
    what the energies use.  ``trapezoid`` is the cumulative trapezoid rule.
    """
    if grid.n != 1:
        raise ValueError("primitive_1d needs a 1D grid")
    mass = grid.integrate(f)
    scale = grid.l2(f)
    if abs(mass) > tol * (scale + 1.0):
        raise MeanError(f"primitive of a field with mean {mass:.3e}")
    if method == "trapezoid":
        return cumulative_trapezoid(f, dx=grid.h, initial=0.0)
    if method != "spectral":
        raise ValueError(f"unknown primitive method {method!r}")
    c = grid.fft(f)
    k = grid.xi_deriv[0]
    safe = np.where(k == 0, 1.0, k)
    cF = np.where(k == 0, 0.0, c / (1j * safe))
    F = grid.ifft(cF)
    return F - F[0]


def hardy_1d(grid: Grid, f: np.ndarray, slack: float = 1e-2) -> dict:
    """``int F^2 <= 4 int y^2 f^2`` for zero-mean ``f``."""
    F = primitive_1d(grid, f)
    y = grid.x
    lhs = grid.integrate(F**2)
    rhs = 4.0 * grid.integrate(y**2 * f**2)
    return {"lhs": lhs, "rhs": rhs, "ok": bool(lhs <= rhs * (1.0 + slack))}


def _check_delta(delta: float) -> None:
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")


def unitary_lattice_transform(grid: Grid, f: np.ndarray) -> np.ndarray:
    """Samples of the unitary Fourier transform ``(2 pi)^{-n/2} int f e^{-i xi y} dy`` on the lattice."""
    c = grid.fft(f)
    phase = np.exp(-1j * grid.L * sum(grid.xi))  # grid starts at -L
    return (2.0 * grid.L) ** grid.n * c / (2.0 * np.pi) ** (grid.n / 2) * np.conj(phase)


def fractional_primitive(grid: Grid, f: np.ndarray, delta: float) -> np.ndarray:
    """``F_hat = |xi|^{-n/2-delta} f_hat`` on the lattice, with the zero mode set to 0."""
    if grid.n < 2:
        raise ValueError("fractional_primitive is the n >= 2 construction")
    _check_delta(delta)
    fhat = unitary_lattice_transform(grid, f)
    rho = np.sqrt(grid.xi_sq)
    safe = np.where(rho == 0, 1.0, rho)
    return np.where(rho == 0, 0.0, safe ** (-grid.n / 2 - delta) * fhat)


def lattice_l2(grid: Grid, fhat: np.ndarray) -> float:
    """Riemann sum of ``int |fhat|^2 dxi`` over the lattice."""
    return float(np.sqrt(np.sum(np.abs(fhat) ** 2) * (np.pi / grid.L) ** grid.n))


def low_mode_interpolation(grid: Grid, f: np.ndarray, delta: float, eta: float) -> dict:
    """Both sides of ``int|f_hat|^2 <= eta int|xi|^2|f_hat|^2 + eta^{(2-n-2delta)/2} int|xi|^2|F_hat|^2``."""
    if grid.n < 2:
        raise ValueError("low_mode_interpolation is the n >= 2 construction")
    if eta <= 0:
        raise ValueError("eta must be positive")
    fhat = unitary_lattice_transform(grid, f)
    Fhat = fractional_primitive(grid, f, delta)
    dxi = (np.pi / grid.L) ** grid.n
    lhs = float(np.sum(np.abs(fhat) ** 2) * dxi)
    high = eta * float(np.sum(grid.xi_sq * np.abs(fhat) ** 2) * dxi)
    low = eta ** ((2 - grid.n - 2 * delta) / 2) * float(np.sum(grid.xi_sq * np.abs(Fhat) ** 2) * dxi)
    return {"lhs": lhs, "rhs": high + low, "high": high, "low": low, "ok": bool(lhs <= (high + low) * (1 + 1e-12))}


class PolarQuadrature:
    """Quadrature for ``int_{R^2} q(xi) |xi|^{-2-2delta} dxi`` with ``q`` quadratic in transforms.

    Nodes are Gauss-Jacobi in radius (weight ``rho^{1-2delta}`` on
    ``[0, rho_max]``) times the trapezoid rule in angle.  ``reduced``
    returns ``f_hat(node)/rho``, so ``F_hat = rho^{-delta} * reduced`` and
    ``int |F_hat|^2 dxi = sum wt * |reduced|^2``.
    """

    def __init__(self, grid: Grid, delta: float, n_rad: int = 64, n_ang: int = 96,
                 rho_max: float | None = None):
        if grid.n != 2:
            raise ValueError("polar quadrature is implemented for n = 2")
        _check_delta(delta)
        self.grid = grid
        self.delta = delta
        self.rho_max = rho_max if rho_max is not None else math.pi / grid.h
        x, w = roots_jacobi(n_rad, 0.0, 1.0 - 2.0 * delta)
        half = 0.5 * self.rho_max
        rho = half * (1.0 + x)
        w_rad = w * half ** (2.0 - 2.0 * delta)
        theta = 2.0 * np.pi * np.arange(n_ang) / n_ang
        self.rho = np.repeat(rho, n_ang)
        self.weights = np.repeat(w_rad, n_ang) * (2.0 * np.pi / n_ang)
        th = np.tile(theta, n_rad)
        xi1 = self.rho * np.cos(th)
        xi2 = self.rho * np.sin(th)
        y = grid.x
        self._e1 = np.exp(-1j * np.outer(xi1, y))
        self._e2 = np.exp(-1j * np.outer(xi2, y))
        self._norm = grid.h**2 / (2.0 * np.pi)

    def transform(self, fields: Sequence[np.ndarray]) -> list[np.ndarray]:
        """Unitary transforms of each field at the nodes (nonuniform DFT of the samples)."""
        N = self.grid.N
        stacked = np.concatenate([np.asarray(f, dtype=float) for f in fields], axis=1)
        partial = self._e1 @ stacked
        out = []
        for i in range(len(fields)):
            block = partial[:, i * N:(i + 1) * N]
            out.append(self._norm * np.sum(block * self._e2, axis=1))
        return out

    def reduced(self, fields: Sequence[np.ndarray]) -> list[np.ndarray]:
        return [t / self.rho for t in self.transform(fields)]

    def integral(self, a: np.ndarray, b: np.ndarray, power: int = 0) -> float:
        """``Re int |xi|^{2 power} A conj(B) dxi`` for fractional primitives given by reduced values."""
        return float(np.real(np.sum(self.weights * self.rho ** (2 * power) * a * np.conj(b))))


def hardy2(grid: Grid, f: np.ndarray, m: float, delta: float, quad: PolarQuadrature | None = None) -> dict:
    """``||F_hat||_{L^2}`` against ``||f||_{H^{0,m}}``; the ratio is the empirical constant."""
    quad = quad or PolarQuadrature(grid, delta)
    (a,) = quad.reduced([f])
    norm_F = math.sqrt(max(quad.integral(a, a), 0.0))
    norm_f = grid.weighted_norm(f, 0, m)
    return {"norm_F": norm_F, "norm_f": norm_f, "ratio": norm_F / norm_f if norm_f else 0.0}


# --------------------------------------------------------------------------- energies

@dataclass(frozen=True)
class EnergyConfig:
    """Knobs of the ladder: ``lam`` for E3/E4, ``C0``/``C1`` weights, ``delta`` and the E2 parameter."""

    n: int
    m: float
    lam: float
    delta: float = 0.5
    C0: float = 64.0
    C1: float = 16.0
    eta_e2: float | None = None
    eta_tilde: float = 0.1

    @property
    def delta_tilde(self) -> float:
        return self.m - self.n / 2.0

    @property
    def eta2(self) -> float:
        return self.eta_e2 if self.eta_e2 is not None else 0.5 * self.delta_tilde

    def rate(self, name: str) -> float:
        """Coefficient ``c`` of ``E`` in the identity ``dE/ds + c E + L = R``."""
        if name in ("e0", "e1"):
            return 0.5 if self.n == 1 else self.delta
        if name == "e2":
            return 0.5 if self.n == 1 else self.delta_tilde - self.eta2
        return 2.0 * self.lam


@dataclass
class EnergyReport:
    s: float
    alpha: float
    dalpha: float
    eps: float
    drag: float
    E0: float
    E1: float
    E2: float
    E3: float
    E4: float
    E5: float
    L0: float
    L1: float
    L2: float
    L4: float
    R0: float
    R1: float
    R2: float
    R3: float
    R4: float
    R5: float
    delta: float
    eta_tilde: float
    norm_f_H1m: float = 0.0
    norm_g_H0m: float = 0.0
    norm_r_H0m: float = 0.0
    norm_h_H0m: float = 0.0
    norm_N_H0m: float = 0.0
    norm_H: float = 0.0
    equiv_form: float = 0.0
    identity_residuals: dict = field(default_factory=dict)

    def as_row(self) -> dict:
        row = asdict(self)
        res = row.pop("identity_residuals")
        for name in IDENTITIES:
            row[f"res_{name}"] = res.get(name, float("nan"))
        return row


def _energies_1d(grid: Grid, dec: Decomposition, cfg: EnergyConfig) -> dict:
    f, g, h = dec.f, dec.g, dec.h
    eps, drag = dec.eps, dec.drag
    I = grid.integrate
    y = grid.x
    F = primitive_1d(grid, f)
    G = primitive_1d(grid, g)
    H = primitive_1d(grid, h)
    fy = grid.gradient(f)[0]
    out = {}
    out["E0"] = I(0.5 * (f**2 + eps * G**2) + 0.5 * F**2 + eps * F * G)
    out["L0"] = I(0.5 * f**2 + G**2)
    out["R0"] = 1.5 * eps * I(G**2) - drag * I(G**2 + 2 * F * G) + I((F + G) * H)
    out["E1"] = I(0.5 * (fy**2 + eps * g**2) + f**2 + 2 * eps * f * g)
    out["L1"] = I(fy**2 + g**2) - I(f**2)
    out["R1"] = 3 * eps * I(g**2) + 2 * eps * I(f * g) - drag * I(g**2 + 4 * f * g) + I((2 * f + g) * h)
    y2 = y**2
    out["E2"] = I(y2 * (0.5 * (fy**2 + eps * g**2) + 0.5 * f**2 + eps * f * g))
    out["L2"] = I(y2 * (0.5 * fy**2 + g**2)) + 2 * I(y * fy * (f + g))
    out["R2"] = 1.5 * eps * I(y2 * g**2) - drag * I(y2 * (2 * f + g) * g) + I(y2 * (f + g) * h)
    out["norm_H"] = grid.l2(H)
    out["equiv_form"] = I(fy**2 + eps * g**2 + f**2)
    return out


def _energies_2d(grid: Grid, dec: Decomposition, cfg: EnergyConfig, quad: PolarQuadrature) -> dict:
    f, g, h = dec.f, dec.g, dec.h
    eps, drag = dec.eps, dec.drag
    n, m, delta = grid.n, cfg.m, cfg.delta
    I = grid.integrate
    a_f, a_g, a_h = quad.reduced([f, g, h])
    Q = quad.integral
    out = {}
    out["E0"] = (0.5 * (Q(a_f, a_f, 1) + eps * Q(a_g, a_g)) + 0.5 * Q(a_f, a_f) + eps * Q(a_f, a_g))
    out["L0"] = 0.5 * Q(a_f, a_f, 1) + Q(a_g, a_g)
    out["R0"] = (1.5 * eps * Q(a_g, a_g) - drag * (2 * Q(a_f, a_g) + Q(a_g, a_g))
                 + Q(a_f, a_h) + Q(a_g, a_h))

    grad_f = grid.gradient(f)
    grad_sq = sum(d**2 for d in grad_f)
    k = n / 4.0 + 1.0
    out["E1"] = I(0.5 * (grad_sq + eps * g**2) + k * (0.5 * f**2 + eps * f * g))
    out["L1"] = 0.5 * (1 - delta) * I(grad_sq) + I(g**2) - (n / 4.0 + delta / 2.0) * k * I(f**2)
    out["R1"] = ((n / 2.0 + delta) * k * eps * I(f * g) + 0.5 * (n + 3 + delta) * eps * I(g**2)
                 - drag * I((2 * k * f + g) * g) + I((k * f + g) * h))

    eta = cfg.eta2
    r2 = grid.radius**2
    wgt = r2**m
    wgt_low = r2 ** (m - 1)
    y_dot_grad = sum(y * d for y, d in zip(grid.coords, grad_f))
    out["E2"] = I(wgt * (0.5 * (grad_sq + eps * g**2) + 0.5 * f**2 + eps * f * g))
    out["L2"] = (0.5 * eta * I(wgt * f**2) + 0.5 * (eta + 1) * I(wgt * grad_sq) + I(wgt * g**2)
                 + 2 * m * I(wgt_low * y_dot_grad * (f + g)))
    out["R2"] = (-eta * eps * I(wgt * f * g) - 0.5 * (eta - 3) * eps * I(wgt * g**2)
                 - drag * I(wgt * (2 * f + g) * g) + I(wgt * (f + g) * h))
    out["norm_H"] = math.sqrt(max(Q(a_h, a_h), 0.0))
    out["equiv_form"] = I(grad_sq + eps * g**2 + f**2)
    return out


def energies(grid: Grid, dec: Decomposition, cfg: EnergyConfig, quad: PolarQuadrature | None = None) -> EnergyReport:
    """Evaluate every functional of the ladder at one snapshot."""
    if grid.n != cfg.n:
        raise ValueError("energy config dimension does not match the grid")
    if grid.n == 1:
        base = _energies_1d(grid, dec, cfg)
    else:
        quad = quad or PolarQuadrature(grid, cfg.delta)
        base = _energies_2d(grid, dec, cfg, quad)

    s, alpha, dalpha, eps, drag = dec.s, dec.alpha, dec.dalpha, dec.eps, dec.drag
    lam = cfg.lam
    decay = math.exp(-2.0 * lam * s)
    int_r = grid.integrate(dec.r)
    E3 = 0.5 * eps * dalpha**2 + decay * alpha**2
    R3 = (0.5 * (2 * lam + 1) * eps * dalpha**2 - drag * dalpha**2 + dalpha * int_r
          + 2 * decay * alpha * dalpha)
    C0, C1 = cfg.C0, cfg.C1
    E0, E1, E2 = base["E0"], base["E1"], base["E2"]
    E4 = C0 * E0 + C1 * E1 + E2 + E3
    L_sum = C0 * base["L0"] + C1 * base["L1"] + base["L2"] + dalpha**2
    L4 = ((cfg.rate("e0") - 2 * lam) * C0 * E0 + (cfg.rate("e1") - 2 * lam) * C1 * E1
          + (cfg.rate("e2") - 2 * lam) * E2 + L_sum)
    R4 = C0 * base["R0"] + C1 * base["R1"] + base["R2"] + R3
    E5 = E4 + 0.5 * alpha**2 + eps * alpha * dalpha
    R5 = R4 + eps * dalpha**2 - 2 * drag * alpha * dalpha + alpha * int_r

    m = cfg.m
    return EnergyReport(
        s=s, alpha=alpha, dalpha=dalpha, eps=eps, drag=drag,
        E0=E0, E1=E1, E2=E2, E3=E3, E4=E4, E5=E5,
        L0=base["L0"], L1=base["L1"], L2=base["L2"], L4=L4,
        R0=base["R0"], R1=base["R1"], R2=base["R2"], R3=R3, R4=R4, R5=R5,
        delta=cfg.delta, eta_tilde=cfg.eta_tilde,
        norm_f_H1m=grid.weighted_norm(dec.f, 1, m), norm_g_H0m=grid.weighted_norm(dec.g, 0, m),
        norm_r_H0m=grid.weighted_norm(dec.r, 0, m), norm_h_H0m=grid.weighted_norm(dec.h, 0, m),
        norm_N_H0m=0.0 if dec.nl_part is None else grid.weighted_norm(dec.nl_part, 0, m),
        norm_H=base["norm_H"], equiv_form=base["equiv_form"])


def energy_series(grid: Grid, decs: Sequence[Decomposition], cfg: EnergyConfig) -> list[EnergyReport]:
    quad = PolarQuadrature(grid, cfg.delta) if grid.n == 2 else None
    reports = [energies(grid, d, cfg, quad) for d in decs]
    if len(reports) >= 3:
        res = identity_residuals(reports, cfg)
        for k, rep in enumerate(reports):
            rep.identity_residuals = {name: float(series[k]) for name, series in res.items()}
    return reports


def _identity_terms(rep: EnergyReport, cfg: EnergyConfig) -> dict:
    """``(E, c E + L - R)`` for each identity."""
    return {
        "e0": (rep.E0, cfg.rate("e0") * rep.E0 + rep.L0 - rep.R0),
        "e1": (rep.E1, cfg.rate("e1") * rep.E1 + rep.L1 - rep.R1),
        "e2": (rep.E2, cfg.rate("e2") * rep.E2 + rep.L2 - rep.R2),
        "e3": (rep.E3, 2 * cfg.lam * rep.E3 + rep.dalpha**2 - rep.R3),
        "e4": (rep.E4, 2 * cfg.lam * rep.E4 + rep.L4 - rep.R4),
        "e5": (rep.E5, 2 * cfg.lam * rep.E4 + rep.L4 - rep.R5),
    }


def identity_residuals(reports: Sequence[EnergyReport], cfg: EnergyConfig) -> dict[str, np.ndarray]:
    """Residual series per identity; end points (no central difference) are NaN."""
    ds = uniform_spacing([r.s for r in reports])
    terms = [_identity_terms(r, cfg) for r in reports]
    out = {}
    for name in IDENTITIES:
        E = np.array([t[name][0] for t in terms])
        rest = np.array([t[name][1] for t in terms])
        res = np.full(len(reports), np.nan)
        res[1:-1] = (E[2:] - E[:-2]) / (2 * ds) + rest[1:-1]
        out[name] = res
    return out


def convergence_order(coarse: float, fine: float, ratio: float = 2.0) -> float:
    if fine == 0.0:
        return math.inf if coarse != 0.0 else math.nan
    return math.log(abs(coarse) / abs(fine)) / math.log(ratio)


# --------------------------------------------------------------------------- thresholds and checks

def positivity_threshold(cfg: EnergyConfig, reports: Sequence[EnergyReport]) -> float | None:
    """First s at which ``eps_s`` makes the E1 quadratic form positive definite.

    n = 1: ``1/2 (f^2 eps... )`` is definite iff ``eps < 1/2``;
    n >= 2: iff ``eps < 1/(n/4+1)``.
    """
    bound = 0.5 if cfg.n == 1 else 1.0 / (cfg.n / 4.0 + 1.0)
    for rep in reports:
        if rep.eps < bound:
            return rep.s
    return None


def e5_threshold(reports: Sequence[EnergyReport]) -> float | None:
    """First s from which ``E5 >= E4/2 + alpha^2/4`` holds at every later snapshot."""
    ok = [r.E5 >= 0.5 * r.E4 + 0.25 * r.alpha**2 - 1e-14 * (abs(r.E5) + 1e-300) for r in reports]
    start = None
    for k in range(len(ok) - 1, -1, -1):
        if not ok[k]:
            break
        start = k
    return None if start is None else reports[start].s


def equivalence_check(cfg: EnergyConfig, reports: Sequence[EnergyReport]) -> dict:
    """Ratio ``E1 / int(|grad f|^2 + eps g^2 + f^2)`` past the positivity threshold."""
    s1 = positivity_threshold(cfg, reports)
    if s1 is None:
        return {"s1": None, "ok": False, "min_ratio": None, "max_ratio": None}
    ratios = [r.E1 / r.equiv_form for r in reports if r.s >= s1 and r.equiv_form > 0]
    if not ratios:
        return {"s1": s1, "ok": True, "min_ratio": None, "max_ratio": None}
    lo, hi = min(ratios), max(ratios)
    return {"s1": s1, "ok": bool(lo > 0 and math.isfinite(hi)), "min_ratio": lo, "max_ratio": hi}


def l4_lower_bound(reports: Sequence[EnergyReport], s_from: float) -> dict:
    """Fitted ``c`` in ``L4 >= c (||f||^2_{H^{1,m}} + ||g||^2_{H^{0,m}} + dalpha^2)`` over the tail."""
    vals = []
    for r in reports:
        if r.s < s_from:
            continue
        denom = r.norm_f_H1m**2 + r.norm_g_H0m**2 + r.dalpha**2
        if denom > 0:
            vals.append(r.L4 / denom)
    if not vals:
        return {"c": None, "ok": False}
    c = min(vals)
    return {"c": c, "ok": bool(c > 0)}
