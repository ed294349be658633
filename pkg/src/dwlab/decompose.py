"""Gaussian-mode decomposition of a scaled state and the source terms r, h."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .coeffs import ScaledWeights, scaled_weights
from .dynamics import ScaledState
from .fields import Grid, gaussian_phi0, grad_psi0, psi0
from .model import Model
from .nonlinearity import eval_scaled

log = logging.getLogger(__name__)


@dataclass
class Decomposition:
    """``v = alpha phi0 + f``, ``w = dalpha phi0 + alpha psi0 + g`` together with ``r`` and ``h``."""

    s: float
    alpha: float
    dalpha: float
    f: np.ndarray
    g: np.ndarray
    r: np.ndarray
    h: np.ndarray
    eps: float
    drag: float
    underflow: bool = False
    nl_part: np.ndarray | None = None
    mean_corrections: dict = field(default_factory=dict)


def alpha_of(grid: Grid, v: np.ndarray) -> float:
    return grid.integrate(v)


def dalpha_of(grid: Grid, w: np.ndarray) -> float:
    return grid.integrate(w)


def source_r(grid: Grid, model: Model, s: float, v: np.ndarray, w: np.ndarray,
             weights: ScaledWeights | None = None, parts: dict | None = None) -> np.ndarray:
    """Right-hand side forcing of the scaled velocity equation.

    ``r = drag w + e^{s/2} c . grad v + e^{s} d v + e^{(n+2)s/2} N(...)``.
    """
    weights = weights or scaled_weights(model.damping, s)
    r = weights.drag * w if weights.drag != 0.0 else np.zeros_like(v)
    pert = model.pert
    need_grad = pert.has_c or model.nl.uses_gradient
    grad_v = grid.gradient(v) if need_grad else None
    if pert.has_c or pert.has_d:
        t = float(model.damping.t_of_s(s))
        if pert.has_c:
            # (1+t)^-gamma e^{s/2} in log form to stay finite for huge t
            for amp, dv in zip(pert.c_amp, grad_v):
                log_fac = 0.5 * s - pert.gamma * math.log1p(t)
                if amp and log_fac > -745.0:
                    r = r + amp * math.exp(log_fac) * dv
        if pert.has_d:
            log_fac = s - pert.nu * math.log1p(t)
            if log_fac > -745.0:
                r = r + pert.d_amp * math.exp(log_fac) * v
    if not model.is_linear:
        nl_part = eval_scaled(model.nl, model.damping, s, v, grad_v, w)
        if parts is not None:
            parts["nl"] = nl_part
        r = r + nl_part
    return r


def _remove_mean(grid: Grid, field_: np.ndarray, phi: np.ndarray, phi_mass: float) -> tuple[np.ndarray, float]:
    # quadrature leftovers are removed along phi0, which keeps the correction localized
    mean = grid.integrate(field_)
    if mean == 0.0:
        return field_, 0.0
    return field_ - (mean / phi_mass) * phi, mean


def split(grid: Grid, model: Model, sstate: ScaledState, *, enforce_zero_mean: bool = True) -> Decomposition:
    n = grid.n
    s, v, w = sstate.s, sstate.v, sstate.w
    weights = scaled_weights(model.damping, s)
    phi = gaussian_phi0(grid)
    psi = psi0(grid)
    phi_mass = grid.integrate(phi)

    alpha = alpha_of(grid, v)
    dalpha = dalpha_of(grid, w)
    f = v - alpha * phi
    g = w - dalpha * phi - alpha * psi
    parts = {}
    r = source_r(grid, model, s, v, w, weights, parts)

    dilation_psi = 0.5 * sum(y * d for y, d in zip(grid.coords, grad_psi0(grid)))
    h = (weights.eps * (-2.0 * dalpha * psi + alpha * (dilation_psi + (0.5 * n + 1.0) * psi))
         + r - grid.integrate(r) * phi)

    corrections = {}
    if enforce_zero_mean:
        f, corrections["f"] = _remove_mean(grid, f, phi, phi_mass)
        g, corrections["g"] = _remove_mean(grid, g, phi, phi_mass)
        h, corrections["h"] = _remove_mean(grid, h, phi, phi_mass)
        worst = max(abs(c) for c in corrections.values())
        if worst > 1e-8 * (grid.l2(f) + 1.0):
            log.warning("zero-mean correction %.3e at s=%.4g exceeds quadrature tolerance", worst, s)
    return Decomposition(s=s, alpha=alpha, dalpha=dalpha, f=f, g=g, r=r, h=h,
                         eps=weights.eps, drag=weights.drag, underflow=weights.underflow,
                         nl_part=parts.get("nl"), mean_corrections=corrections)


def uniform_spacing(s_values: Sequence[float], rtol: float = 1e-8) -> float:
    s = np.asarray(s_values, dtype=float)
    if s.size < 3:
        raise ValueError("need at least 3 snapshots")
    ds = np.diff(s)
    if np.any(np.abs(ds - ds[0]) > rtol * max(abs(ds[0]), 1e-300)):
        raise ValueError("snapshot spacing in s is not uniform")
    return float(ds[0])


def alpha_ode_residual(grid: Grid, decs: Sequence[Decomposition]) -> np.ndarray:
    """Residual of ``eps alpha'' - eps alpha' + alpha' - int r`` at interior snapshots.

    ``alpha''`` is the second central difference of ``alpha``; ``alpha'`` is
    ``int w``.  The residual is ``O(ds^2)``.
    """
    ds = uniform_spacing([d.s for d in decs])
    alpha = np.array([d.alpha for d in decs])
    out = np.empty(len(decs) - 2)
    for k in range(1, len(decs) - 1):
        d = decs[k]
        second = (alpha[k + 1] - 2.0 * alpha[k] + alpha[k - 1]) / ds**2
        out[k - 1] = d.eps * second - d.eps * d.dalpha + d.dalpha - grid.integrate(d.r)
    return out
