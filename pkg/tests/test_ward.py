import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ewlab import catalog as cat
from ewlab.charts import parse_expression, sample_points
from ewlab.ward import (
    WARD_CHART,
    DegenerateProfile,
    eguchi_hanson_profile,
    eigenfunction_residual,
    harmonic_residual,
    harmonic_residual_from_V,
    height_loop_defect,
    joyce_consistency,
    linear_eta,
    log_rho,
    lw_gauge,
    lw_height,
    monopole,
    point_source,
    profile_from_field,
    taubnut_profile,
    ward_build,
)
from ewlab.weylgeom import ew_residual

PROFILES = {
    "log(rho)": log_rho(),
    "eta": linear_eta(1.0),
    "1/r": point_source(1.0),
    "monopole": monopole(0.7, 0.3),
    "taubnut": taubnut_profile(1, 1, 1),
    "taubnut(2,-1,0.5)": taubnut_profile(2, -1, 0.5),
    "eh1": eguchi_hanson_profile(-1, 0, 1, 1),
    "eh1(1,2,1)": eguchi_hanson_profile(-1, 1, 2, 1),
    "eh2": eguchi_hanson_profile(1, 1, 1, 1),
    "eh2(0,1,3)": eguchi_hanson_profile(1, 0, 1, 3),
}


def _probes(P, n=100, seed=0):
    return sample_points(P.chart, n, seed)


# -- harmonicity and Ward's construction ----------------------------------------------


@pytest.mark.parametrize("name", PROFILES)
def test_profiles_harmonic(name):
    P = PROFILES[name]
    p = _probes(P, 200)
    assert np.max(np.abs(harmonic_residual(P, p))) < 1e-8
    assert np.max(np.abs(harmonic_residual_from_V(P.field("V"), p))) < 1e-8


@pytest.mark.parametrize("name", PROFILES)
def test_partials_consistent_with_V(name):
    # Vr, Ve are supplied separately; they must be the partials of V
    P = PROFILES[name]
    p = _probes(P, 30, 3)
    J = P.field("V").jet(p, 1)
    Vr, Ve = P.jets(p, 0)
    np.testing.assert_allclose(J.parts[1][:, 0], Vr.value, atol=1e-12)
    np.testing.assert_allclose(J.parts[1][:, 1], Ve.value, atol=1e-12)


@pytest.mark.parametrize("name", PROFILES)
def test_ward_structures_einstein_weyl(name):
    P = PROFILES[name]
    W = ward_build(P)
    assert np.max(np.abs(ew_residual(W, _probes(P)))) < 1e-6


def test_logrho_ward_structure():
    W = ward_build(log_rho())
    p = _probes(log_rho(), 20)
    g, om = W.jets(p, 1)
    rho = p[:, 0]
    np.testing.assert_allclose(g.value[:, 0, 0], rho**-2)
    np.testing.assert_allclose(g.value[:, 2, 2], 1.0)
    np.testing.assert_allclose(om.value[:, 0], 1 / rho)
    np.testing.assert_allclose(om.value[:, 1:], 0.0)
    assert np.max(np.abs(ew_residual(W, p))) < 1e-9


def test_constant_profile_rejected():
    with pytest.raises(DegenerateProfile):
        ward_build(profile_from_field(parse_expression("3", WARD_CHART, method="ad")))


@given(
    st.sampled_from(sorted(PROFILES)),
    st.sampled_from(sorted(PROFILES)),
    st.floats(-2, 2),
    st.floats(-2, 2),
)
def test_superposition(n1, n2, s, t):
    P1, P2 = PROFILES[n1], PROFILES[n2]
    if P1.chart is not P2.chart and P2.chart.domain != WARD_CHART.domain:
        P1, P2 = P2, P1
    P = P1.scaled(s) + P2.scaled(t)
    p = sample_points(P.chart, 20, 1)
    assert np.max(np.abs(harmonic_residual(P, p))) < 1e-8
    grad = np.hypot(*(j.value for j in P.jets(p, 0)))
    if np.min(grad) > 0.1:
        assert np.max(np.abs(ew_residual(ward_build(P), p))) < 1e-6


def test_log_rho_freedom():
    P = taubnut_profile(1, 1, 1).add_log_rho(0.5)
    assert np.max(np.abs(ew_residual(ward_build(P), _probes(P, 20)))) < 1e-6


def test_user_profile_fd_and_exact():
    text = "log(rho) + eta"
    for method, tol in ((None, 1e-6), ("ad", 1e-12)):
        P = profile_from_field(parse_expression(text, WARD_CHART, method=method))
        p = _probes(P, 20)
        assert np.max(np.abs(ew_residual(ward_build(P), p))) < tol


def test_point_source_fd_oracle():
    # independent oracle: 4th order finite differences of 1/sqrt(rho^2+eta^2)
    V = lambda r, e: 1 / math.hypot(r, e)  # noqa: E731
    h = 1e-3
    r, e = 0.7, -0.4
    d = lambda f, a, b: (-f(a + 2 * h, b) + 8 * f(a + h, b) - 8 * f(a - h, b) + f(a - 2 * h, b)) / (12 * h)  # noqa: E731
    Vr = d(V, r, e)
    Vrr = d(lambda a, b: d(V, a, b), r, e)
    Ve_swap = lambda e_, r_: V(r_, e_)  # noqa: E731
    Vee = d(lambda a, b: d(Ve_swap, a, b), e, r)
    assert abs(Vr + r * Vrr + r * Vee) < 1e-8
    assert abs(harmonic_residual(point_source(1.0), [[r, e, 0]])[0]) < 1e-14


# -- LeBrun-Ward gauge and height ---------------------------------------------------------


def test_taubnut_height():
    # z = -a r sin(th) + b r^2 cos(th)^2 / 2 + c r  with rho = r cos th, eta = r sin th
    a, b, c = 1.0, 1.0, 1.0
    P = taubnut_profile(a, b, c)

    def z(rho, eta):
        r, th = math.hypot(rho, eta), math.atan2(eta, rho)
        return -a * r * math.sin(th) + 0.5 * b * r**2 * math.cos(th) ** 2 + c * r

    start, end = np.array([0.5, -0.3, 0]), np.array([1.6, 0.8, 0])
    path = np.array([start, [1.0, 0.6, 0], end])
    assert lw_height(P, path) == pytest.approx(z(1.6, 0.8) - z(0.5, -0.3), abs=1e-12)


def test_logrho_height():
    path = np.array([[0.5, -0.5, 0], [1.5, 0.2, 0], [1.0, 0.7, 0]])
    assert lw_height(log_rho(), path) == pytest.approx(-1.2, abs=1e-13)


@given(st.sampled_from(sorted(PROFILES)), st.integers(0, 500))
def test_height_path_independent(name, seed):
    P = PROFILES[name]
    lo_r, hi_r = P.chart.domain[0]
    lo_e, hi_e = P.chart.domain[1]
    rng = np.random.default_rng(seed)
    w, h = rng.uniform(0.05, 0.4, 2)
    corner = [rng.uniform(lo_r + 0.1, hi_r - w - 0.05), rng.uniform(lo_e + 0.05, hi_e - h - 0.05), 0.0]
    assert abs(height_loop_defect(P, corner, (w, h))) < 1e-9 * 2 * (w + h)


def test_lw_gauge_metric():
    P = taubnut_profile(1, 1, 1)
    p = _probes(P, 10)
    g = lw_gauge(ward_build(P)).jets(p, 1)[0].value
    Vr, Ve = (j.value for j in P.jets(p, 0))
    rho = p[:, 0]
    np.testing.assert_allclose(g[:, 0, 0], rho**2 * (Vr**2 + Ve**2), rtol=1e-13)
    np.testing.assert_allclose(g[:, 2, 2], rho**2, rtol=1e-13)


# -- hyperbolic eigenfunction and Joyce form -------------------------------------------------


@pytest.mark.parametrize("name", PROFILES)
def test_eigenfunction(name):
    P = PROFILES[name]
    assert np.max(np.abs(eigenfunction_residual(P, _probes(P)))) < 1e-8


def test_eigenfunction_negative_control():
    P = profile_from_field(parse_expression("rho", WARD_CHART, method="ad"))
    assert np.min(np.abs(eigenfunction_residual(P, _probes(P, 10)))) > 0.1


@pytest.mark.parametrize("name", ["log(rho)", "taubnut", "eh1", "eh2"])
def test_joyce(name):
    P = PROFILES[name]
    gm, om = joyce_consistency(P, _probes(P, 50))
    assert np.max(gm) < 1e-12
    assert np.max(om) < 1e-10


# -- catalog ----------------------------------------------------------------------------


def test_taubnut_adapted_partials():
    a, b, c = 2.0, 1.5, 0.7
    P = taubnut_profile(a, b, c)
    r, th = 1.2, 0.4
    Vr, Ve = (j.value[0] for j in P.jets([[r * math.cos(th), r * math.sin(th), 0]], 0))
    rho = r * math.cos(th)
    assert rho * Ve == pytest.approx((b * r + c) * math.cos(th), abs=1e-13)
    assert rho * Vr == pytest.approx(a - c * math.sin(th), abs=1e-13)


@pytest.mark.parametrize("eps2", [-1, 1])
def test_eguchi_hanson_adapted_partials(eps2):
    a, b, c = 0.6, 1.3, 0.8
    P = eguchi_hanson_profile(eps2, a, b, c)
    R, th = 1.6, 1.1
    s, co = math.sin(th), math.cos(th)
    rho, eta = math.sqrt(R * R - eps2) * s, R * co
    Vr, Ve = (j.value[0] for j in P.jets([[rho, eta, 0]], 0))
    den = R * R - eps2 * co * co
    assert rho * Ve == pytest.approx((b * R + c * co) * math.sqrt(R * R - eps2) * s / den, abs=1e-12)
    num = a * den - b * (R * R - eps2) * co + c * R * s * s
    assert rho * Vr == pytest.approx(num / den, abs=1e-12)


def test_taubnut_lw_coefficient():
    W = cat.taubnut_closed_form(0, 1, 0)
    r, th = 1.3, 0.5
    g = W.jets(np.array([[r, th, 0.0]]), 1)[0].value[0]
    assert g[0, 0] == pytest.approx((r * math.cos(th)) ** 2, rel=1e-14)
    assert g[1, 1] == pytest.approx(r**4 * math.cos(th) ** 2, rel=1e-14)


def test_eguchi_hanson_lw_coefficient():
    W = cat.eguchi_hanson_closed_form(1, 1, 1, 1)
    g = W.jets(np.array([[2.0, math.pi / 4, 0.0]]), 1)[0].value[0]
    assert g[1, 1] == pytest.approx(3 * (math.sqrt(2) / 2 - 1) ** 2 + 4.5, rel=1e-14)
    assert g[0, 0] == pytest.approx(g[1, 1] / 3, rel=1e-14)


def test_eguchi_hanson_omega_lw():
    a, b, c = 1.0, 1.0, 1.0
    W = cat.eguchi_hanson_closed_form(1, a, b, c)
    R, th = 2.0, 0.9
    om = W.jets(np.array([[R, th, 0.0]]), 1)[1].value[0]
    B = (a * math.cos(th) - b) ** 2 * (R * R - 1) + (a * R + c) ** 2 * math.sin(th) ** 2
    k = -2 * (b * R + c * math.cos(th)) / B
    dh = [-a * math.cos(th) + b, (a * R + c) * math.sin(th), 0.0]
    np.testing.assert_allclose(om, [k * v for v in dh], atol=1e-14)


def test_s2h2_psi_coefficient():
    W = cat.s2h2_quotient(1.0, 1.0)
    g = W.jets(np.array([[1.0, math.pi / 4, 0.0]]), 1)[0].value[0]
    assert g[2, 2] == pytest.approx(0.4, rel=1e-14)


@pytest.mark.parametrize("label", ["taubnut", "eguchi-hanson-1", "eguchi-hanson-2"])
def test_closed_form_crosscheck(label):
    e = cat.catalog(label)
    assert np.max(cat.closed_form_crosscheck(e, sample_points(e.closed_form.chart, 50, 2))) < 1e-8


def test_taubnut_010_crosscheck_point():
    e = cat.catalog("taubnut", {"a": 0, "b": 1, "c": 0})
    assert cat.closed_form_crosscheck(e, [[1.0, math.pi / 6, 0.0]])[0] < 1e-9


def test_s2h2_quotient_check():
    conf, om = cat.s2h2_quotient_check(1.0, 1.0, sample_points(cat.s2h2_quotient(1, 1).chart, 50, 4))
    assert np.max(conf) < 1e-7 and np.max(om) < 1e-7


def test_catalog_registry():
    assert set(cat.LABELS) >= {"flat", "berger", "taubnut", "eguchi-hanson-1", "s2h2-quotient"}
    with pytest.raises(cat.CatalogError, match="unknown space"):
        cat.catalog("nope")
    with pytest.raises(cat.CatalogError, match="unknown parameters"):
        cat.catalog("taubnut", {"q": 1})
    with pytest.raises(cat.CatalogError, match="R > 1"):
        cat.catalog("eguchi-hanson-2", {"Rmin": 1.01})
    with pytest.raises(cat.CatalogError):
        cat.catalog("eguchi-hanson-1", {"eps2": 1})
    assert cat.parse_params("a=1, b=2.5") == {"a": 1.0, "b": 2.5}
    assert "local check only" in " ".join(cat.catalog("s2h2-quotient", {"b": 0}).notes)


def test_berger_lambda_oracle():
    # Einstein-Weyl Berger spheres: lambda^2 = a^2 (1 - a^2) for a < 1
    for a in (0.5, 0.7, 0.9):
        lam, res = cat.berger_lambda(a)
        assert lam == pytest.approx(a * math.sqrt(1 - a * a), abs=1e-6)
        assert res < 1e-6
    lam, res = cat.berger_lambda(1.5)
    assert res > 0.1
