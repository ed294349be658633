"""Time-dependent coefficients, the parabolic clock B(t) and the decay-rate constants."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, optimize

CAP_VALUE = 1.0e6
DEFAULT_ETA = 0.01


class DomainError(ValueError):
    """Raised for evaluations outside t >= 0 or s >= 0."""


class AssumptionError(ValueError):
    """Raised when model parameters violate the admissibility assumptions."""


@dataclass(frozen=True)
class DampingModel:
    """Power-law damping ``b(t) = mu (1+t)^(-beta)`` with ``beta`` in [-1, 1)."""

    beta: float
    mu: float = 1.0

    def __post_init__(self):
        if not -1.0 <= self.beta < 1.0:
            raise AssumptionError(f"beta must lie in [-1, 1), got {self.beta}")
        if self.mu <= 0:
            raise AssumptionError(f"mu must be positive, got {self.mu}")

    @property
    def critical(self) -> bool:
        """True for the beta = -1 (exponentially growing clock inverse) case."""
        return self.beta == -1.0

    def b(self, t):
        _check_time(t)
        return self.mu * (1.0 + np.asarray(t, dtype=float)) ** (-self.beta)

    def db(self, t):
        _check_time(t)
        t = np.asarray(t, dtype=float)
        return -self.beta * self.mu * (1.0 + t) ** (-self.beta - 1.0)

    def B(self, t):
        """``int_0^t dtau / b(tau)`` in closed form."""
        _check_time(t)
        t = np.asarray(t, dtype=float)
        if self.critical:
            return np.log1p(t) / self.mu
        a = 1.0 + self.beta
        return np.expm1(a * np.log1p(t)) / (self.mu * a)

    def s_of_t(self, t):
        return np.log1p(self.B(t))

    def t_of_s(self, s):
        """Unique t with ``B(t) + 1 = e^s``."""
        if np.any(np.asarray(s) < 0):
            raise DomainError(f"scaled time must be nonnegative, got {s}")
        s = np.asarray(s, dtype=float)
        clock = np.expm1(s)
        with np.errstate(over="ignore"):  # t itself may exceed double range; s stays usable
            if self.critical:
                return np.expm1(self.mu * clock)
            a = 1.0 + self.beta
            return np.expm1(np.log1p(self.mu * a * clock) / a)

    def log_b_of_s(self, s):
        """``log b(t(s))``, finite even when b itself overflows (beta = -1)."""
        s = np.asarray(s, dtype=float)
        if self.critical:
            return math.log(self.mu) + self.mu * np.expm1(s)
        a = 1.0 + self.beta
        log1pt = np.log1p(self.mu * a * np.expm1(s)) / a
        return math.log(self.mu) - self.beta * log1pt


def _check_time(t):
    if np.any(np.asarray(t) < 0):
        raise DomainError(f"time must be nonnegative, got {t}")


@dataclass(frozen=True)
class ScaledWeights:
    """Coefficients of the scaled system at one s.

    ``eps`` is ``e^{-s}/b(t(s))^2`` and ``drag`` is ``b'(t(s))/b(t(s))^2``.
    ``underflow`` marks values that are below double-precision relevance.
    """

    eps: float
    drag: float
    underflow: bool


UNDERFLOW_LEVEL = 1.0e-15


def scaled_weights(model: DampingModel, s: float) -> ScaledWeights:
    if s < 0:
        raise DomainError(f"scaled time must be nonnegative, got {s}")
    log_b = float(model.log_b_of_s(s))
    log_eps = -s - 2.0 * log_b
    eps = math.exp(log_eps) if log_eps > -745.0 else 0.0
    if model.critical:
        # b'/b^2 = 1/(mu (1+t)^2) = mu / b^2
        log_drag = math.log(model.mu) - 2.0 * log_b
        drag = math.exp(log_drag) if log_drag > -745.0 else 0.0
    else:
        t = float(model.t_of_s(s))
        drag = float(model.db(t)) * math.exp(-2.0 * log_b)
    return ScaledWeights(eps=eps, drag=drag, underflow=eps < UNDERFLOW_LEVEL)


def clock_numeric(b: Callable[[float], float], t: float, rtol: float = 1e-10) -> float:
    """``int_0^t dtau/b(tau)`` for a general positive damping function."""
    if t < 0:
        raise DomainError(f"time must be nonnegative, got {t}")
    val, _ = integrate.quad(lambda tau: 1.0 / b(tau), 0.0, t, epsrel=rtol, epsabs=0.0, limit=200)
    return val


def invert_clock(b: Callable[[float], float], s: float, rtol: float = 1e-12) -> float:
    """Solve ``B(t) + 1 = e^s`` by bracketing and bisection for a general damping function."""
    if s < 0:
        raise DomainError(f"scaled time must be nonnegative, got {s}")
    target = math.expm1(s)
    if target == 0.0:
        return 0.0
    hi = 1.0
    while clock_numeric(b, hi) < target:
        hi *= 2.0
    return optimize.bisect(lambda t: clock_numeric(b, t) - target, 0.0, hi, rtol=rtol, xtol=1e-300)


@dataclass(frozen=True)
class PerturbationModel:
    """Lower-order coefficients ``c(t) = c_amp (1+t)^-gamma`` and ``d(t) = d_amp (1+t)^-nu``."""

    c_amp: tuple[float, ...] = ()
    gamma: float = 1.0
    d_amp: float = 0.0
    nu: float = 2.0

    @property
    def has_c(self) -> bool:
        return any(a != 0.0 for a in self.c_amp)

    @property
    def has_d(self) -> bool:
        return self.d_amp != 0.0

    def c(self, t: float) -> np.ndarray:
        return np.asarray(self.c_amp, dtype=float) * (1.0 + t) ** (-self.gamma)

    def d(self, t: float) -> float:
        return self.d_amp * (1.0 + t) ** (-self.nu)

    def validate(self, damping: DampingModel) -> list[str]:
        """Names of violated decay conditions (empty when admissible)."""
        problems = []
        if self.has_c and not self.gamma > (1.0 + damping.beta) / 2.0:
            problems.append(f"gamma > (1+beta)/2 violated: gamma={self.gamma}")
        if self.has_d and not self.nu > 1.0 + damping.beta:
            problems.append(f"nu > 1+beta violated: nu={self.nu}")
        return problems


@dataclass(frozen=True)
class RateSet:
    lambda0: float
    lambda1: float
    lam: float
    eta: float
    exponent: float
    cap_value: float = field(default=CAP_VALUE)

    def as_dict(self) -> dict:
        return {"lambda0": self.lambda0, "lambda1": self.lambda1,
                "lambda": self.lam, "exponent": self.exponent}


def rate_lambda0(damping: DampingModel, pert: PerturbationModel, cap_value: float = CAP_VALUE) -> float:
    if damping.critical:
        return cap_value
    a = 1.0 + damping.beta
    terms = [(1.0 - damping.beta) / a]
    if pert.has_c:
        terms.append(pert.gamma / a - 0.5)
    if pert.has_d:
        terms.append(pert.nu / a - 1.0)
    return min(terms)


def rate_lambda1(n: int, nl, beta: float, cap_value: float = CAP_VALUE) -> float:
    """Nonlinear contribution; ``cap_value`` when there is no nonlinearity."""
    if not nl.terms:
        return cap_value
    if n >= 2:
        p = nl.terms[0].p1
        return 0.5 * n * (p - 1.0 - 2.0 / n)
    values = []
    for term in nl.terms:
        if term.p3 != 0 and beta == -1.0:
            values.append(cap_value)
            continue
        weight3 = 3.0 - 2.0 * beta / (1.0 + beta) if term.p3 != 0 else 0.0
        values.append(term.p1 + 2.0 * term.p2 + weight3 * term.p3 - 3.0)
    return 0.5 * min(values) if min(values) < cap_value else cap_value


def check_weight_exponent(n: int, m: float) -> None:
    if n == 1 and m != 1:
        raise AssumptionError(f"m=1 (n=1) required, got m={m}")
    if n >= 2 and not m > n / 2 + 1:
        raise AssumptionError(f"m > n/2+1 (n>=2) required, got m={m}")


def rate_lambda(n: int, m: float, eta: float, lambda0: float, lambda1: float,
                cap_value: float = CAP_VALUE) -> RateSet:
    """Extra decay exponent ``min{1/2, m/2 - n/4, lambda0, lambda1} - eta`` and the L2 exponent."""
    check_weight_exponent(n, m)
    if eta <= 0:
        raise AssumptionError(f"eta must be positive, got {eta}")
    lam = min(0.5, m / 2.0 - n / 4.0, lambda0, lambda1) - eta
    return RateSet(lambda0=lambda0, lambda1=lambda1, lam=lam, eta=eta,
                   exponent=n / 4.0 + lam, cap_value=cap_value)


def predict_rates(n: int, m: float, damping: DampingModel, pert: PerturbationModel, nl,
                  eta: float = DEFAULT_ETA, cap_value: float = CAP_VALUE) -> RateSet:
    return rate_lambda(n, m, eta,
                       rate_lambda0(damping, pert, cap_value),
                       rate_lambda1(n, nl, damping.beta, cap_value),
                       cap_value)
