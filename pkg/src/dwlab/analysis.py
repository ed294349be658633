"""Limit mass, profile error, decay-rate fits, a priori monitor and remainder envelopes."""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import curve_fit

from .coeffs import RateSet
from .fields import Grid, heat_gaussian
from .nonlinearity import NonlinearityModel

SLOPE_TOLERANCE = 0.08
DEFAULT_WINDOWS = {1: (20.0, 500.0), 2: (10.0, 100.0)}


class FitError(ValueError):
    """Degenerate least-squares problem."""


class TailWarning(RuntimeWarning):
    """The exponential tail model does not describe the alpha series."""


@dataclass
class AlphaStar:
    alpha_star: float
    tail_rate: float | None
    residual: float
    converged: bool


def alpha_star(s: Sequence[float], alpha: Sequence[float], min_tail: int = 20) -> AlphaStar:
    """Fit ``alpha(s) = alpha* + A exp(-rho s)`` on the tail of the series.

    The tail is the second half of the series (at least ``min_tail``
    points).  A series flat to round-off returns its last value with an
    undefined rate.
    """
    s = np.asarray(s, dtype=float)
    a = np.asarray(alpha, dtype=float)
    if s.size < min_tail:
        raise FitError(f"need at least {min_tail} points for the tail fit, got {s.size}")
    k0 = min(s.size // 2, s.size - min_tail)
    ts, ta = s[k0:], a[k0:]
    spread = float(np.max(ta) - np.min(ta))
    scale = max(float(np.max(np.abs(ta))), 1e-300)
    if spread <= 1e-13 * scale:
        return AlphaStar(float(ta[-1]), None, 0.0, True)

    # start from the slope of log|increments|; increments at round-off level carry no rate information
    diffs = np.abs(np.diff(ta))
    keep = diffs > 1e-13 * scale
    if np.count_nonzero(keep) >= 3:
        mid = 0.5 * (ts[1:] + ts[:-1])
        rho0 = max(-np.polyfit(mid[keep], np.log(diffs[keep]), 1)[0], 1e-3)
    else:
        rho0 = 1.0
    x = ts - ts[0]
    a0 = float(ta[-1])
    amp0 = float(ta[0] - ta[-1]) or spread

    def model(x, astar, amp, rho):
        return astar + amp * np.exp(-rho * x)

    try:
        (astar, amp, rho), _ = curve_fit(model, x, ta, p0=(a0, amp0, rho0), maxfev=20000)
        resid = float(np.sqrt(np.mean((model(x, astar, amp, rho) - ta) ** 2)))
    except (RuntimeError, ValueError):
        astar, rho, resid = a0, rho0, math.inf
    converged = resid <= 0.1 * spread and rho > 0
    if not converged:
        warnings.warn(f"alpha tail fit residual {resid:.3e} exceeds 10% of tail variation {spread:.3e}",
                      TailWarning, stacklevel=2)
        if not (math.isfinite(astar) and rho > 0):
            astar = a0
    return AlphaStar(float(astar), float(rho), resid, bool(converged))


def profile_error(grid: Grid, u: np.ndarray, B: float, alpha_star_value: float) -> float:
    """``||u - alpha* G(B+1, .)||_{L^2}`` on the physical grid."""
    return grid.l2(u - alpha_star_value * heat_gaussian(grid, B + 1.0))


@dataclass
class RateFit:
    alpha_star: float
    alpha_tail_rate: float | None
    slope: float
    intercept: float
    predicted_exponent: float
    window: tuple[float, float]
    margin: float
    passed: bool
    residual: float
    n_points: int
    tolerance: float = SLOPE_TOLERANCE

    def as_dict(self) -> dict:
        d = asdict(self)
        d["window"] = list(self.window)
        d["pass"] = d.pop("passed")
        return d


def fit_decay(errors: Sequence[float], B_plus_1: Sequence[float], window: tuple[float, float],
              predicted_exponent: float, *, alpha_star_value: float = 0.0,
              alpha_tail_rate: float | None = None, tolerance: float = SLOPE_TOLERANCE,
              min_points: int = 10) -> RateFit:
    """Least-squares slope of ``log err`` against ``log(B+1)`` inside ``window``.

    Passes when the slope is at most ``-predicted + tolerance``; faster
    decay always passes.
    """
    err = np.asarray(errors, dtype=float)
    tau = np.asarray(B_plus_1, dtype=float)
    lo, hi = window
    sel = (tau >= lo * (1 - 1e-12)) & (tau <= hi * (1 + 1e-12)) & (err > 0)
    if np.count_nonzero(sel) < min_points:
        raise FitError(f"window [{lo}, {hi}] holds {np.count_nonzero(sel)} points, need {min_points}")
    x, y = np.log(tau[sel]), np.log(err[sel])
    if np.ptp(x) == 0:
        raise FitError("zero variance in log(B+1)")
    slope, intercept = np.polyfit(x, y, 1)
    resid = float(np.sqrt(np.mean((slope * x + intercept - y) ** 2)))
    margin = float(slope + predicted_exponent)
    return RateFit(alpha_star=alpha_star_value, alpha_tail_rate=alpha_tail_rate, slope=float(slope),
                   intercept=float(intercept), predicted_exponent=predicted_exponent,
                   window=(float(lo), float(hi)), margin=margin,
                   passed=bool(slope <= -predicted_exponent + tolerance), residual=resid,
                   n_points=int(np.count_nonzero(sel)), tolerance=tolerance)


def apriori_monitor(s: Sequence[float], E5: Sequence[float], s0: float | None = None) -> dict:
    """Running sup ``M`` of E5 from ``s0`` on; bounded iff ``M(s_end) <= 4 E5(s0)``."""
    s = np.asarray(s, dtype=float)
    E5 = np.asarray(E5, dtype=float)
    if s.size == 0:
        return {"sup_E5": None, "bounded": False, "s0": s0, "E5_s0": None}
    k0 = 0 if s0 is None else int(np.searchsorted(s, s0 - 1e-12))
    k0 = min(k0, s.size - 1)
    tail = E5[k0:]
    if not np.all(np.isfinite(tail)):
        return {"sup_E5": math.inf, "bounded": False, "s0": float(s[k0]), "E5_s0": float(E5[k0])}
    sup = float(np.max(tail))
    return {"sup_E5": sup, "bounded": bool(sup <= 4.0 * E5[k0]), "s0": float(s[k0]), "E5_s0": float(E5[k0])}


def scaling_check(sup_eps: float, sup_half_eps: float) -> dict:
    """``sup E5`` at eps over the same at eps/2; quadratic scaling gives 4."""
    ratio = sup_eps / sup_half_eps if sup_half_eps > 0 else math.inf
    return {"ratio": ratio, "ok": bool(3.0 <= ratio <= 5.0)}


def _decay(rate: float, s: float) -> float:
    x = -2.0 * rate * s
    return math.exp(x) if x > -745.0 else 0.0


def remainder_rhs(row: dict, s: float, n: int, rates: RateSet, nl: NonlinearityModel) -> tuple[float, float]:
    """``(linear part, nonlinear part)`` of the common right-hand side, constant set to 1.

    ``row`` carries ``norm_f_H1m, norm_g_H0m, alpha, dalpha``.
    """
    nf, ng = row["norm_f_H1m"], row["norm_g_H0m"]
    a, da = abs(row["alpha"]), abs(row["dalpha"])
    lin = _decay(rates.lambda0, s) * (nf**2 + ng**2 + a**2 + da**2)
    nonlin = 0.0
    if nl.terms:
        fac = _decay(rates.lambda1, s)
        if n == 1:
            for t in nl.terms:
                nonlin += fac * (nf + a) ** (2 * (t.p1 + t.p2)) * (ng + a + da) ** (2 * t.p3)
        else:
            nonlin = fac * (nf + a) ** (2 * nl.terms[0].p1)
    return lin, nonlin


def _ratio(lhs: float, rhs: float) -> float:
    if rhs > 0:
        return lhs / rhs
    return 0.0 if lhs == 0 else math.inf


def remainder_envelopes(rows: Sequence[dict], n: int, rates: RateSet, nl: NonlinearityModel,
                        s_from: float = 2.0) -> dict:
    """Measured norm over the remainder-lemma right-hand side, per snapshot.

    ``r`` and ``h`` use ``||.||^2_{H^{0,m}}``; ``H`` uses the primitive
    (n = 1) or fractional primitive (n = 2) in L2; ``N`` compares the
    scaled nonlinearity with the nonlinear part alone.
    """
    series = {"r": [], "h": [], "H": [], "N": []}
    s_vals = []
    for row in rows:
        s = row["s"]
        lin, nonlin = remainder_rhs(row, s, n, rates, nl)
        s_vals.append(s)
        series["r"].append(_ratio(row["norm_r_H0m"] ** 2, lin + nonlin))
        series["h"].append(_ratio(row["norm_h_H0m"] ** 2, lin + nonlin))
        series["H"].append(_ratio(row["norm_H"] ** 2, lin + nonlin))
        series["N"].append(_ratio(row.get("norm_N_H0m", 0.0) ** 2, nonlin))
    s_arr = np.asarray(s_vals)
    out = {"s": s_vals}
    for key, vals in series.items():
        vals = np.asarray(vals, dtype=float)
        tail = vals[s_arr >= s_from]
        finite = bool(np.all(np.isfinite(tail))) if tail.size else True
        sup = float(np.max(tail)) if tail.size else 0.0
        med = float(np.median(tail)) if tail.size else 0.0
        stable = finite and sup <= 10.0 * med if med > 0 else finite and sup == 0.0
        out[key] = {"ratio": vals.tolist(), "tail_sup": sup, "tail_median": med,
                    "finite": finite, "stable": bool(stable)}
    return out
