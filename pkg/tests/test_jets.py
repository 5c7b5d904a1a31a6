import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ewlab.jets import Jet, det3, inv3, stack

P = np.array([[0.3, 0.7, -0.2]])

# sympy oracle values at P for
# exp(x) sin(y) + x^3 z/(1+y^2) + atan(x z) - sqrt(2+y) cos(z)
F0 = -0.8043631147026158
F1 = [0.6340787256735133, 0.7376094524048139, -0.009402342460197166]
F_XY, F_ZZ = 1.0664814830684113, 1.6211363755191144
F_XYZ, F_YYY = -0.17026260078374847, -1.0724975515055049


def _f(X):
    x, y, z = X[0], X[1], X[2]
    return x.exp() * y.sin() + x**3 * z / (y * y + 1.0) + (x * z).arctan() - (y + 2.0).sqrt() * z.cos()


def test_transcendental_jet_matches_oracle():
    J = _f(Jet.coordinates(P, 3))
    assert J.value[0] == pytest.approx(F0, abs=1e-14)
    np.testing.assert_allclose(J.parts[1][0], F1, atol=1e-14)
    assert J.parts[2][0, 0, 1] == pytest.approx(F_XY, abs=1e-13)
    assert J.parts[2][0, 2, 2] == pytest.approx(F_ZZ, abs=1e-13)
    assert J.parts[3][0, 0, 1, 2] == pytest.approx(F_XYZ, abs=1e-12)
    assert J.parts[3][0, 1, 1, 1] == pytest.approx(F_YYY, abs=1e-12)


def test_oracle_recomputes_frozen_jet():
    sp = pytest.importorskip("sympy")
    x, y, z = sp.symbols("x y z")
    f = sp.exp(x) * sp.sin(y) + x**3 * z / (1 + y**2) + sp.atan(x * z) - sp.sqrt(2 + y) * sp.cos(z)
    at = {x: 0.3, y: 0.7, z: -0.2}
    assert float(sp.diff(f, x, y, z).subs(at)) == pytest.approx(F_XYZ, rel=1e-14)


def test_higher_parts_are_symmetric():
    J = _f(Jet.coordinates(np.random.default_rng(1).uniform(-0.5, 0.5, (4, 3)), 3))
    H, T = J.parts[2], J.parts[3]
    np.testing.assert_allclose(H, np.swapaxes(H, 1, 2), atol=1e-14)
    for perm in [(0, 2, 1, 3), (0, 1, 3, 2), (0, 3, 2, 1)]:
        np.testing.assert_allclose(T, np.transpose(T, perm), atol=1e-13)


def test_d_shifts_orders():
    J = _f(Jet.coordinates(P, 3))
    D = J.d()
    assert D.order == 2
    np.testing.assert_allclose(D.value, J.parts[1])
    np.testing.assert_allclose(D.parts[1], J.parts[2])


def test_inv3_and_det3_of_matrix_jet():
    X = Jet.coordinates(P, 2)
    x, y, z = X[0], X[1], X[2]
    one = x * 0 + 1.0
    M = stack([one + x * x, y, x * 0, y, one + z * z, x * z, x * 0, x * z, one.scale(2.0)], (3, 3))
    I = Jet.einsum("ab,bc->ac", M, inv3(M))
    np.testing.assert_allclose(I.value[0], np.eye(3), atol=1e-14)
    np.testing.assert_allclose(I.parts[1][0], 0.0, atol=1e-13)
    np.testing.assert_allclose(I.parts[2][0], 0.0, atol=1e-12)
    assert det3(M).value[0] == pytest.approx(np.linalg.det(M.value[0]), rel=1e-14)


def test_order_cap():
    with pytest.raises(ValueError):
        Jet([np.zeros(1)] * 5)


small = st.floats(-0.8, 0.8)


@given(small, small, small)
def test_product_rule(a, b, c):
    X = Jet.coordinates(np.array([[a, b, c]]), 2)
    u, v = X[0].sin() + X[1], X[2].exp() * X[0]
    lhs = (u * v).parts[1][0]
    rhs = u.parts[1][0] * v.value[0] + u.value[0] * v.parts[1][0]
    np.testing.assert_allclose(lhs, rhs, atol=1e-13)


@given(small, small, small)
def test_exp_log_roundtrip(a, b, c):
    X = Jet.coordinates(np.array([[a, b, c]]), 3)
    u = X[0] * X[1] + X[2] * X[2] + 2.0
    w = u.log().exp()
    for k in range(4):
        np.testing.assert_allclose(w.parts[k], u.parts[k], atol=1e-11)


@given(st.floats(0.2, 3.0), st.sampled_from([-2.0, -1.5, -0.5, 0.5, 1.5, 3.0]))
def test_power_matches_exp_log(t, p):
    X = Jet.coordinates(np.array([[t, 0.1, 0.2]]), 3)
    u = X[0] + X[1] * X[2]
    a = u**p
    b = (u.log().scale(p)).exp()
    for k in range(4):
        np.testing.assert_allclose(a.parts[k], b.parts[k], rtol=1e-11, atol=1e-11)
