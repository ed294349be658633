"""Monomial nonlinearities N(u, grad u, u_t) and their admissibility checks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .coeffs import CAP_VALUE, DampingModel


@dataclass(frozen=True)
class Monomial:
    """``coeff * U(u) * |u_x|^p2 * |u_t|^p3``.

    ``U(u)`` is ``|u|^(p1-1) u`` when ``odd`` else ``|u|^p1``.  With
    ``signed_derivs`` the derivative factors keep their sign
    (``|z|^(p-1) z``); the default magnitude form is the canonical
    representative of the growth bound.
    """

    coeff: float
    p1: float
    p2: float = 0.0
    p3: float = 0.0
    odd: bool = True
    signed_derivs: bool = False

    def _power(self, z: np.ndarray, p: float, signed: bool) -> np.ndarray:
        if p == 0:
            return np.ones_like(z)
        mag = np.abs(z)
        if signed:
            return mag ** (p - 1.0) * z
        return mag**p

    def __call__(self, u, ux, ut) -> np.ndarray:
        val = self.coeff * self._power(u, self.p1, self.odd)
        if self.p2:
            val = val * self._power(ux, self.p2, self.signed_derivs)
        if self.p3:
            val = val * self._power(ut, self.p3, self.signed_derivs)
        return val


@dataclass(frozen=True)
class NonlinearityModel:
    n: int
    terms: tuple[Monomial, ...] = ()

    @property
    def is_linear(self) -> bool:
        return not self.terms

    @property
    def uses_gradient(self) -> bool:
        return any(t.p2 for t in self.terms)

    @property
    def uses_velocity(self) -> bool:
        return any(t.p3 for t in self.terms)

    @classmethod
    def from_config(cls, n: int, block: Sequence[dict] | None) -> "NonlinearityModel":
        terms = []
        for entry in block or []:
            if n == 1:
                terms.append(Monomial(
                    coeff=float(entry["coeff"]), p1=float(entry["p1"]),
                    p2=float(entry.get("p2", 0.0)), p3=float(entry.get("p3", 0.0)),
                    odd=bool(entry.get("odd", True)),
                    signed_derivs=bool(entry.get("signed_derivs", False))))
            else:
                terms.append(Monomial(coeff=float(entry["coeff"]), p1=float(entry["p"]),
                                      odd=bool(entry.get("odd", True))))
        return cls(n=n, terms=tuple(terms))


@dataclass
class Check:
    name: str
    ok: bool
    detail: str = ""
    margin: float | None = None


@dataclass
class ValidationReport:
    checks: list[Check] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks)

    @property
    def failures(self) -> list[Check]:
        return [c for c in self.checks if not c.ok]

    def add(self, name: str, ok: bool, detail: str = "", margin: float | None = None) -> None:
        self.checks.append(Check(name, bool(ok), detail, margin))


def _exponent_ok(p: float) -> bool:
    return p == 0 or p >= 1


def validate(nl: NonlinearityModel, damping: DampingModel, n: int, m: float) -> ValidationReport:
    """Check each monomial against the admissibility conditions for dimension ``n``."""
    report = ValidationReport()
    if nl.n != n:
        report.add("dimension", False, f"nonlinearity built for n={nl.n}, run has n={n}")
        return report
    beta = damping.beta
    for i, t in enumerate(nl.terms):
        tag = f"term[{i}]"
        if n == 1:
            report.add(f"{tag}: p1 > 1", t.p1 > 1, f"p1={t.p1}")
            report.add(f"{tag}: p2 + p3 <= 1", t.p2 + t.p3 <= 1, f"p2+p3={t.p2 + t.p3}")
            report.add(f"{tag}: exponents >= 1 or = 0",
                       all(_exponent_ok(p) for p in (t.p1, t.p2, t.p3)),
                       f"(p1,p2,p3)=({t.p1},{t.p2},{t.p3})")
            if t.p3 != 0 and beta == -1.0:
                report.add(f"{tag}: p1 + 2p2 + (3 - 2beta/(1+beta))p3 > 3", True,
                           "beta=-1 with p3 != 0", margin=CAP_VALUE)
            else:
                w3 = 3.0 - 2.0 * beta / (1.0 + beta) if t.p3 else 0.0
                margin = t.p1 + 2.0 * t.p2 + w3 * t.p3 - 3.0
                report.add(f"{tag}: p1 + 2p2 + (3 - 2beta/(1+beta))p3 > 3", margin > 0,
                           f"margin={margin:g}", margin=margin)
        else:
            if i > 0:
                report.add(f"{tag}: single power term (n>=2)", False, "only one term allowed")
            report.add(f"{tag}: no gradient/velocity dependence (n>=2)", t.p2 == 0 and t.p3 == 0)
            p = t.p1
            if n == 2:
                report.add(f"{tag}: 2 < p < inf (n=2)", 2 < p < math.inf, f"p={p}", margin=p - 2)
            else:
                ok = 1 + 2 / n < p <= n / (n - 2)
                report.add(f"{tag}: 1+2/n < p <= n/(n-2)", ok, f"p={p}", margin=p - 1 - 2 / n)
    return report


def _check_shapes(u, *others):
    for o in others:
        if o is not None and np.shape(o) != np.shape(u):
            raise ValueError(f"grid mismatch: {np.shape(o)} vs {np.shape(u)}")


def eval_physical(nl: NonlinearityModel, u: np.ndarray, grad_u: Sequence[np.ndarray] | None,
                  u_t: np.ndarray | None) -> np.ndarray:
    """Pointwise N(u, grad u, u_t).  The gradient enters only through its first component (n = 1)."""
    ux = None if grad_u is None else grad_u[0]
    _check_shapes(u, ux, u_t)
    out = np.zeros_like(u, dtype=float)
    for term in nl.terms:
        out += term(u, ux, u_t)
    return out


def eval_scaled(nl: NonlinearityModel, damping: DampingModel, s: float, v: np.ndarray,
                grad_v: Sequence[np.ndarray] | None, w: np.ndarray | None) -> np.ndarray:
    """``e^{(n+2)s/2} N(e^{-ns/2} v, e^{-(n+1)s/2} grad v, e^{-(n+2)s/2} w / b(t(s)))``.

    Evaluated term by term with the exponential factors collected in log
    form, so the beta = -1 velocity factor underflows cleanly to zero.
    """
    n = nl.n
    vx = None if grad_v is None else grad_v[0]
    _check_shapes(v, vx, w)
    out = np.zeros_like(v, dtype=float)
    if not nl.terms:
        return out
    log_b = float(damping.log_b_of_s(s)) if nl.uses_velocity else 0.0
    for term in nl.terms:
        log_scale = (n + 2) * s / 2 - term.p1 * n * s / 2
        log_scale -= term.p2 * (n + 1) * s / 2
        log_scale -= term.p3 * ((n + 2) * s / 2 + log_b)
        if log_scale < -745.0:
            continue
        out += math.exp(log_scale) * term(v, vx, w)
    return out
