import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dwlab.coeffs import DampingModel
from dwlab.nonlinearity import Monomial, NonlinearityModel, eval_physical, eval_scaled, validate

D0 = DampingModel(0.0)


def _one(n, **kw):
    return NonlinearityModel(n, (Monomial(**kw),))


def test_validate_examples():
    rep = validate(_one(1, coeff=1.0, p1=4.0), D0, 1, 1)
    assert rep.ok
    assert rep.checks[-1].margin == pytest.approx(1.0)
    bad = validate(_one(1, coeff=1.0, p1=1.0, p2=1.0), D0, 1, 1)
    assert not bad.ok and any("p1 > 1" in c.name for c in bad.failures)
    assert validate(_one(2, coeff=1.0, p1=3.0), D0, 2, 3).ok


@pytest.mark.parametrize("term,fragment", [
    (dict(coeff=1.0, p1=2.0, p2=1.0, p3=1.0), "p2 + p3 <= 1"),
    (dict(coeff=1.0, p1=2.0, p2=0.5), ">= 1 or = 0"),
    (dict(coeff=1.0, p1=2.0), "> 3"),
])
def test_validate_failures_named(term, fragment):
    rep = validate(_one(1, **term), D0, 1, 1)
    assert any(fragment in c.name for c in rep.failures)


def test_velocity_term_autopasses_at_critical_beta():
    rep = validate(_one(1, coeff=1.0, p1=1.5, p3=1.0), DampingModel(-1.0), 1, 1)
    assert rep.ok


def test_validate_2d_range_and_dimension_mismatch():
    assert not validate(_one(2, coeff=1.0, p1=2.0), D0, 2, 3).ok
    assert not validate(_one(1, coeff=1.0, p1=4.0), D0, 2, 3).ok


def test_eval_physical_examples():
    u = np.full(16, 2.0)
    assert np.all(eval_physical(_one(1, coeff=-1.0, p1=3.0), u, None, None) == -8.0)
    assert np.all(eval_physical(_one(1, coeff=1.0, p1=4.0), np.zeros(16), None, None) == 0.0)
    y = np.linspace(-np.pi, np.pi, 4096, endpoint=False)
    nl = _one(1, coeff=1.0, p1=2.0, p2=1.0, odd=False, signed_derivs=True)
    out = eval_physical(nl, np.sin(y), [np.cos(y)], None)
    assert np.max(np.abs(out - np.sin(y) ** 2 * np.cos(y))) < 1e-15
    assert np.max(np.abs(out)) == pytest.approx(2 / (3 * math.sqrt(3)), rel=1e-5)


def test_eval_physical_grid_mismatch():
    with pytest.raises(ValueError):
        eval_physical(_one(1, coeff=1.0, p1=2.0, p2=1.0), np.zeros(8), [np.zeros(9)], None)


def test_eval_scaled_examples():
    one = np.ones(8)
    assert np.allclose(eval_scaled(_one(2, coeff=1.5, p1=3.0), D0, 0.0, one, None, None), 1.5)
    out = eval_scaled(_one(1, coeff=2.0, p1=4.0), D0, 2.0, one, None, None)
    assert np.allclose(out, 2.0 * math.exp(-1.0), rtol=1e-14)
    full = NonlinearityModel(1, (Monomial(1.0, 4.0), Monomial(1.0, 2.0, p2=1.0), Monomial(1.0, 2.0, p3=1.0)))
    z = np.zeros(8)
    assert np.all(eval_scaled(full, D0, 1.0, z, [z], z) == 0.0)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.0, 4.0), st.sampled_from([-0.5, 0.0, 0.5]))
def test_frame_consistency(seed, s, beta):
    rng = np.random.default_rng(seed)
    damping = DampingModel(beta)
    nl = NonlinearityModel(1, (Monomial(-1.0, 4.0), Monomial(0.5, 2.0, p2=1.0, odd=False),
                               Monomial(0.3, 3.0, p3=1.0, signed_derivs=True)))
    v, vy, w = rng.standard_normal((3, 64))
    b = float(damping.b(damping.t_of_s(s)))
    u, ux, ut = math.exp(-s / 2) * v, math.exp(-s) * vy, math.exp(-1.5 * s) * w / b
    expected = math.exp(1.5 * s) * eval_physical(nl, u, [ux], ut)
    got = eval_scaled(nl, damping, s, v, [vy], w)
    assert np.allclose(got, expected, rtol=1e-12, atol=1e-12 * np.max(np.abs(expected)))


def test_scaled_envelope_decays_at_lambda1_rate():
    # pure power term: factor e^{(n+2-np)s/2} = e^{-lambda1 s}, lambda1 = (p-3)/2 for n=1
    nl = _one(1, coeff=1.0, p1=4.0)
    v = np.linspace(-1, 1, 33)
    s = np.linspace(0, 6, 13)
    sup = [np.max(np.abs(eval_scaled(nl, D0, x, v, None, None))) for x in s]
    slope = np.polyfit(s, np.log(sup), 1)[0]
    assert slope <= -0.5 + 1e-12


def test_local_lipschitz_constant_finite():
    rng = np.random.default_rng(5)
    nl = NonlinearityModel(1, (Monomial(1.0, 3.0), Monomial(1.0, 2.0, p2=1.0, signed_derivs=True)))
    z = rng.uniform(-2, 2, (3, 1000))
    w = rng.uniform(-2, 2, (3, 1000))
    diff = np.abs(eval_physical(nl, z[0], [z[1]], z[2]) - eval_physical(nl, w[0], [w[1]], w[2]))
    dist = np.abs(z - w).sum(axis=0)
    ratio = diff / dist
    assert np.all(np.isfinite(ratio)) and ratio.max() < 50
