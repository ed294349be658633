"""Time integration in the physical frame, frame changes, and the optional scaled-frame solver.

The physical solver keeps ``(u_hat, p_hat)`` with ``p = u_t`` and advances
it with an integrating-factor (Lawson) fourth-order Runge-Kutta scheme.
Each Fourier mode's damped-wave block ``[[0, 1], [-|xi|^2, -b]]`` is
propagated exactly with ``b`` frozen at a reference value; the drift of
``b(t)`` away from that value, the lower-order terms and the dealiased
nonlinearity are treated explicitly.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from .coeffs import DampingModel, scaled_weights
from .fields import Grid, gaussian_phi0
from .model import Model
from .nonlinearity import eval_physical

log = logging.getLogger(__name__)

STIFFNESS_FLOOR = 1.0e-8


class BlowUp(RuntimeError):
    """The solution left the configured sup-norm ceiling (finite-time blow-up)."""

    def __init__(self, t: float, sup: float):
        super().__init__(f"blow-up detected at t={t:.6g} (sup|u|={sup:.3g})")
        self.t = t
        self.sup = sup


class NonFiniteField(FloatingPointError):
    pass


@dataclass
class PhysicalState:
    t: float
    u: np.ndarray
    p: np.ndarray


@dataclass
class ScaledState:
    s: float
    v: np.ndarray
    w: np.ndarray


@dataclass(frozen=True)
class InitialData:
    """Named families of initial data, scaled by ``epsilon``.

    gaussian  u0 = exp(-|x|^2/(2 width^2)), u1 = u1_scale * u0
    offcenter same profile centred at (center, 0, ...)
    random    band-limited random field (seeded) under a Gaussian envelope
    dipole    u0 = x_1 exp(-|x|^2/(2 width^2)); zero mass, u1 = u1_scale * u0
    """

    family: str = "gaussian"
    epsilon: float = 0.1
    seed: int = 0
    width: float = 1.0
    u1_scale: float = 0.0
    center: float = 3.0

    FAMILIES = ("gaussian", "offcenter", "random", "dipole")

    def generate(self, grid: Grid) -> tuple[np.ndarray, np.ndarray]:
        r2 = grid.radius**2
        env = np.exp(-r2 / (2.0 * self.width**2))
        if self.family == "gaussian":
            u0 = env
        elif self.family == "offcenter":
            shifted = r2 - grid.coords[0] ** 2 + (grid.coords[0] - self.center) ** 2
            u0 = np.exp(-shifted / (2.0 * self.width**2))
        elif self.family == "dipole":
            u0 = grid.coords[0] * env
        elif self.family == "random":
            rng = np.random.default_rng(self.seed)
            noise = rng.standard_normal(grid.shape)
            smooth = grid.ifft(grid.fft(noise) * np.exp(-grid.xi_sq * self.width**2))
            smooth /= np.max(np.abs(smooth))
            u0 = (1.0 + smooth) * env
            u1 = grid.ifft(grid.fft(rng.standard_normal(grid.shape)) * np.exp(-grid.xi_sq * self.width**2))
            u1 = self.u1_scale * u1 / np.max(np.abs(u1)) * env
            return self.epsilon * u0, self.epsilon * u1
        else:
            raise ValueError(f"unknown data family {self.family!r}; expected one of {self.FAMILIES}")
        return self.epsilon * u0, self.epsilon * self.u1_scale * u0


def rhs_physical(state: PhysicalState, model: Model, grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    """``(u_t, p_t)`` of the first-order system, nonlinear product dealiased by the 2/3 rule."""
    if not (np.all(np.isfinite(state.u)) and np.all(np.isfinite(state.p))):
        raise NonFiniteField(f"non-finite field at t={state.t}")
    t = state.t
    cu = grid.fft(state.u)
    dp_hat = -grid.xi_sq * cu
    if model.pert.has_c:
        for ci, k in zip(model.pert.c(t), grid.xi_deriv):
            dp_hat = dp_hat + ci * 1j * k * cu
    if model.pert.has_d:
        dp_hat = dp_hat + model.pert.d(t) * cu
    dp = grid.ifft(dp_hat) - float(model.damping.b(t)) * state.p
    if not model.is_linear:
        dp = dp + grid.ifft(_nonlinear_hat(model, grid, cu, grid.fft(state.p)))
    return state.p.copy(), dp


def _nonlinear_hat(model: Model, grid: Grid, cu: np.ndarray, cp: np.ndarray) -> np.ndarray:
    mask = grid.dealias_mask
    cu = cu * mask
    u = grid.ifft(cu)
    ux = [grid.ifft(1j * grid.xi_deriv[0] * cu)] if model.nl.uses_gradient else None
    ut = grid.ifft(cp * mask) if model.nl.uses_velocity else None
    return grid.fft(eval_physical(model.nl, u, ux, ut)) * mask


def damped_wave_propagator(xi_sq: np.ndarray, b: float, tau: float):
    """Entries of ``exp(tau [[0, 1], [-xi^2, -b]])`` per mode, as (a11, a12, a21, a22)."""
    disc = np.sqrt((0.25 * b * b - xi_sq).astype(complex))
    lam_p = -xi_sq / (0.5 * b + disc)
    lam_m = -0.5 * b - disc
    ep = np.exp(lam_p * tau)
    em = np.exp(lam_m * tau)
    x = 2.0 * disc * tau
    large = np.abs(x) > 0.5
    safe_disc = np.where(large, disc, 1.0)
    safe_x = np.where(large, 1.0, x)
    phi = np.where(safe_x == 0, 1.0, np.expm1(safe_x) / np.where(safe_x == 0, 1.0, safe_x))
    sinh_part = np.where(large, (ep - em) / (2.0 * safe_disc), em * tau * phi)
    cosh_part = 0.5 * (ep + em)
    a11 = np.where(large, (-lam_m * ep + lam_p * em) / (2.0 * safe_disc), cosh_part + 0.5 * b * sinh_part)
    a22 = np.where(large, (lam_p * ep - lam_m * em) / (2.0 * safe_disc), cosh_part - 0.5 * b * sinh_part)
    return a11.real, sinh_part.real, (-xi_sq * sinh_part).real, a22.real


def _apply(prop, u, p):
    a11, a12, a21, a22 = prop
    return a11 * u + a12 * p, a21 * u + a22 * p


class PhysicalSolver:
    """Lawson-RK4 integrator for the damped wave equation on a periodic grid."""

    def __init__(self, grid: Grid, model: Model, *, cfl: float = 0.4, dt_max: float = 0.1,
                 ceiling: float = 1.0e6, nl_safety: float = 0.2, refresh_tol: float = 0.05):
        self.grid = grid
        self.model = model
        self.cfl = cfl
        self.dt_max = dt_max
        self.ceiling = ceiling
        self.nl_safety = nl_safety
        self.refresh_tol = refresh_tol
        self._cache = None
        self.steps = 0

    def base_dt(self) -> float:
        return min(self.cfl * self.grid.h, self.dt_max)

    def _propagators(self, t: float, dt: float):
        b_mid = float(self.model.damping.b(t + 0.5 * dt))
        if self._cache is not None:
            tau, b_ref, full, half = self._cache
            if tau == dt and abs(b_mid - b_ref) * dt <= self.refresh_tol:
                return b_ref, full, half
        full = damped_wave_propagator(self.grid.xi_sq, b_mid, dt)
        half = damped_wave_propagator(self.grid.xi_sq, b_mid, 0.5 * dt)
        self._cache = (dt, b_mid, full, half)
        return b_mid, full, half

    def _remainder(self, t: float, b_ref: float, cu: np.ndarray, cp: np.ndarray) -> np.ndarray:
        model = self.model
        rp = (b_ref - float(model.damping.b(t))) * cp
        if model.pert.has_c:
            for ci, k in zip(model.pert.c(t), self.grid.xi_deriv):
                rp = rp + ci * 1j * k * cu
        if model.pert.has_d:
            rp = rp + model.pert.d(t) * cu
        if not model.is_linear:
            rp = rp + _nonlinear_hat(model, self.grid, cu, cp)
        return rp

    def step(self, t: float, cu: np.ndarray, cp: np.ndarray, dt: float):
        """One Lawson-RK4 step; the remainder only acts on the velocity component."""
        b_ref, full, half = self._propagators(t, dt)
        a11h, a12h, a21h, a22h = half
        a11, a12, a21, a22 = full

        k1 = self._remainder(t, b_ref, cu, cp)
        u2, p2 = _apply(half, cu, cp + 0.5 * dt * k1)
        k2 = self._remainder(t + 0.5 * dt, b_ref, u2, p2)
        uh, ph = _apply(half, cu, cp)
        u3, p3 = uh, ph + 0.5 * dt * k2
        k3 = self._remainder(t + 0.5 * dt, b_ref, u3, p3)
        uf, pf = _apply(full, cu, cp)
        u4 = uf + dt * a12h * k3
        p4 = pf + dt * a22h * k3
        k4 = self._remainder(t + dt, b_ref, u4, p4)

        mid = k2 + k3
        u_new = uf + dt / 6.0 * (a12 * k1 + 2.0 * a12h * mid)
        p_new = pf + dt / 6.0 * (a22 * k1 + 2.0 * a22h * mid + k4)
        self.steps += 1
        return u_new, p_new

    def _nonlinear_rate(self, cu: np.ndarray, cp: np.ndarray) -> tuple[float, float]:
        u = self.grid.ifft(cu)
        sup = float(np.max(np.abs(u)))
        if not np.isfinite(sup):
            return math.inf, sup
        rate = 0.0
        for term in self.model.nl.terms:
            # |dN/du| scale for a monomial: |coeff| p1 |u|^(p1-1) (other factors bounded by sup of derivatives)
            rate += abs(term.coeff) * term.p1 * sup ** (term.p1 - 1.0)
        if self.model.nl.uses_gradient or self.model.nl.uses_velocity:
            ux = self.grid.ifft(1j * self.grid.xi_deriv[0] * cu)
            ut = self.grid.ifft(cp)
            extra = max(float(np.max(np.abs(ux))), float(np.max(np.abs(ut))), 1.0)
            rate *= extra
        return rate, sup

    def advance(self, t: float, cu: np.ndarray, cp: np.ndarray, t_target: float):
        """Step from ``t`` to exactly ``t_target``."""
        base = self.base_dt()
        while t < t_target:
            dt = base
            if not self.model.is_linear:
                rate, sup = self._nonlinear_rate(cu, cp)
                if not np.isfinite(sup) or sup > self.ceiling:
                    raise BlowUp(t, sup)
                if rate > 0:
                    dt = min(dt, self.nl_safety / rate)
                if dt < 1e-12 * max(1.0, t):
                    raise BlowUp(t, sup)
            remaining = t_target - t
            if dt >= remaining * (1.0 - 1e-12):
                dt = remaining
            elif dt > 0.5 * remaining:
                dt = 0.5 * remaining
            cu, cp = self.step(t, cu, cp, dt)
            t = t_target if dt == remaining else t + dt
        u = self.grid.ifft(cu)
        sup = float(np.max(np.abs(u)))
        if not np.isfinite(sup) or sup > self.ceiling:
            raise BlowUp(t, sup)
        return cu, cp

    def run(self, state: PhysicalState, t_outputs: Iterable[float],
            callback: Callable[[int, PhysicalState], None]) -> PhysicalState:
        """Integrate through increasing output times, calling ``callback(k, state)`` at each."""
        grid = self.grid
        t = state.t
        cu, cp = grid.fft(state.u), grid.fft(state.p)
        for k, t_out in enumerate(t_outputs):
            if t_out < t:
                raise ValueError(f"output times must be nondecreasing ({t_out} < {t})")
            if t_out > t:
                cu, cp = self.advance(t, cu, cp, t_out)
                t = t_out
            callback(k, PhysicalState(t, grid.ifft(cu), grid.ifft(cp)))
        return PhysicalState(t, grid.ifft(cu), grid.ifft(cp))


def _axis_mask(points: np.ndarray, half_width: float) -> np.ndarray:
    return (points >= -half_width) & (points < half_width)


def _resample(src: Grid, values: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Trigonometric interpolation of ``values`` at a tensor grid; zero outside the source box."""
    out = src.evaluate(src.fft(values), points)
    inside = _axis_mask(points, src.L)
    if src.n == 1:
        return np.where(inside, out, 0.0)
    return out * np.multiply.outer(inside, inside)


def _check_bandwidth(src: Grid, values: np.ndarray, spacing: float, tol: float = 1e-10) -> None:
    cutoff = np.pi / spacing
    c = src.fft(values)
    total = np.sum(np.abs(c) ** 2)
    if total == 0:
        return
    high = np.sum(np.abs(c[np.sqrt(src.xi_sq) > cutoff]) ** 2)
    if high > tol * total:
        warnings.warn(f"resampling loses {high / total:.2e} of the spectral energy "
                      f"(target spacing {spacing:.3g})", RuntimeWarning, stacklevel=3)


def to_scaled(state: PhysicalState, grid_x: Grid, grid_y: Grid, damping: DampingModel) -> ScaledState:
    """``v = e^{ns/2} u(t, e^{s/2} y)`` and ``w = b e^{(n+2)s/2} u_t(t, e^{s/2} y)``."""
    n = grid_x.n
    s = float(damping.s_of_t(state.t))
    scale = math.exp(0.5 * s)
    points = scale * grid_y.x
    _check_bandwidth(grid_x, state.u, scale * grid_y.h)
    v = math.exp(0.5 * n * s) * _resample(grid_x, state.u, points)
    log_wfac = float(damping.log_b_of_s(s)) + 0.5 * (n + 2) * s
    w = math.exp(log_wfac) * _resample(grid_x, state.p, points)
    return ScaledState(s, v, w)


def from_scaled(sstate: ScaledState, grid_y: Grid, grid_x: Grid, damping: DampingModel) -> PhysicalState:
    n = grid_y.n
    s = sstate.s
    t = float(damping.t_of_s(s))
    points = math.exp(-0.5 * s) * grid_x.x
    u = math.exp(-0.5 * n * s) * _resample(grid_y, sstate.v, points)
    log_pfac = -(float(damping.log_b_of_s(s)) + 0.5 * (n + 2) * s)
    p = math.exp(log_pfac) * _resample(grid_y, sstate.w, points)
    return PhysicalState(t, u, p)


def _dilation(grid: Grid, f: np.ndarray) -> np.ndarray:
    """``(y/2) . grad f``."""
    return 0.5 * sum(y * d for y, d in zip(grid.coords, grid.gradient(f)))


def rhs_scaled(sstate: ScaledState, grid: Grid, model: Model):
    """Right-hand side of the scaled system.

    Returns ``(dv, dw, parabolic)``.  Once ``eps_s`` drops below the
    stiffness floor the velocity equation is replaced by its parabolic
    limit ``w = lap v + r``; then ``dw`` is ``None`` and ``parabolic`` is True.
    """
    from .decompose import source_r

    n = grid.n
    s, v, w = sstate.s, sstate.v, sstate.w
    weights = scaled_weights(model.damping, s)
    lap_v = grid.laplacian(v)
    r = source_r(grid, model, s, v, w, weights)
    if weights.eps < STIFFNESS_FLOOR:
        w_lim = lap_v + r
        dv = _dilation(grid, v) + 0.5 * n * v + w_lim
        return dv, None, True
    dv = _dilation(grid, v) + 0.5 * n * v + w
    dw = (lap_v + r - w) / weights.eps + _dilation(grid, w) + (0.5 * n + 1.0) * w
    return dv, dw, False


class ScaledSolver:
    """Classical RK4 on the scaled system with a stiffness-aware step."""

    def __init__(self, grid: Grid, model: Model, *, ds_max: float = 0.01, safety: float = 0.5):
        self.grid = grid
        self.model = model
        self.ds_max = ds_max
        self.safety = safety
        self.switched = False

    def stable_ds(self, s: float) -> float:
        grid = self.grid
        kmax = float(np.sqrt(np.max(grid.xi_sq)))
        transport = 0.5 * grid.L * np.sqrt(grid.n) * kmax
        eps = scaled_weights(self.model.damping, s).eps
        bound = 2.7 / transport
        if eps < STIFFNESS_FLOOR:
            bound = min(bound, 2.7 / (kmax**2 + transport))
        else:
            bound = min(bound, 2.7 * eps, 2.7 * math.sqrt(eps) / kmax)
        return min(self.ds_max, self.safety * bound)

    def _rhs(self, s, v, w):
        dv, dw, parabolic = rhs_scaled(ScaledState(s, v, w), self.grid, self.model)
        if parabolic and not self.switched:
            log.info("scaled solver: eps_s below %.1e at s=%.4g, switching to parabolic limit",
                     STIFFNESS_FLOOR, s)
            self.switched = True
        return dv, (np.zeros_like(w) if dw is None else dw)

    def advance(self, sstate: ScaledState, s_target: float) -> ScaledState:
        s, v, w = sstate.s, sstate.v.copy(), sstate.w.copy()
        while s < s_target:
            ds = min(self.stable_ds(s), s_target - s)
            k1 = self._rhs(s, v, w)
            k2 = self._rhs(s + ds / 2, v + ds / 2 * k1[0], w + ds / 2 * k1[1])
            k3 = self._rhs(s + ds / 2, v + ds / 2 * k2[0], w + ds / 2 * k2[1])
            k4 = self._rhs(s + ds, v + ds * k3[0], w + ds * k3[1])
            v = v + ds / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
            w = w + ds / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
            s = s_target if ds == s_target - s else s + ds
            if self.switched:
                from .decompose import source_r
                w = self.grid.laplacian(v) + source_r(self.grid, self.model, s, v, w,
                                                      scaled_weights(self.model.damping, s))
        return ScaledState(s, v, w)


def mass(grid: Grid, f: np.ndarray) -> float:
    return grid.integrate(f)


def gaussian_profile_state(grid_x: Grid, damping: DampingModel, t: float, amplitude: float = 1.0) -> PhysicalState:
    """``u = amplitude * G(B(t)+1, x)`` with a zero velocity; useful as a frame-change probe."""
    tau = float(damping.B(t)) + 1.0
    scale = tau**-0.5
    u = amplitude * scale**grid_x.n * gaussian_phi0(Grid(grid_x.n, grid_x.L * scale, grid_x.N))
    return PhysicalState(t, u, np.zeros_like(u))
