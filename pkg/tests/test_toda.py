import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ewlab import catalog as cat
from ewlab.charts import parse_expression, sample_points
from ewlab.jets import stack
from ewlab.toda import (
    TODA_CHART,
    NotTodaCongruence,
    TodaStructureField,
    axial_symmetry_checks,
    build_toda,
    congruence_decompose,
    delinearize,
    dstar_flatness,
    k_invariance,
    linearize,
    obstruction_cy,
    obstruction_orth,
    structure_values,
    toda_residual,
    toda_structure_count,
    toda_system_curvature,
    transport,
    wronskian,
)
from ewlab.weylgeom import GateError, faraday

FLAT = cat.flat_cartesian()


def u_of(text):
    return parse_expression(text, TODA_CHART, method="ad")


def ez(X):
    return stack([X[0] * 0, X[0] * 0, X[0] * 0 + 1])


def radial(X):
    r = (X[0] * X[0] + X[1] * X[1] + X[2] * X[2]).sqrt()
    return stack([X[0] / r, X[1] / r, X[2] / r])


@pytest.fixture(scope="module")
def taubnut():
    W = cat.catalog("taubnut").structure
    return W, toda_structure_count(W)


# -- Toda equation and Ansatz -----------------------------------------------------


def test_toda_residual_examples():
    p = sample_points(TODA_CHART, 20, 1)
    assert np.max(np.abs(toda_residual(u_of("0"), p))) == 0
    assert abs(toda_residual(u_of("log(z+2)"), [[0.0, 0.0, 1.0]])[0]) < 1e-14
    np.testing.assert_allclose(toda_residual(u_of("x^2"), p), 2.0, atol=1e-13)


def test_build_toda_components():
    W = build_toda(u_of("2"))
    g, om = W.jets(np.array([[0.1, 0.2, 0.3]]), 1)
    np.testing.assert_allclose(g.value[0], np.diag([np.e**2, np.e**2, 1.0]))
    np.testing.assert_allclose(om.value[0], 0.0)
    W = build_toda(u_of("log(3*z+2)"))
    _, om = W.jets(np.array([[0.1, 0.2, 0.5]]), 1)
    np.testing.assert_allclose(om.value[0], [0, 0, -3 / 3.5], atol=1e-15)


@given(st.sampled_from(["0", "log(1+z)", "log(2*z+1)", "x+y", "x*y", "exp(x)*cos(y)"]), st.integers(0, 99))
def test_toda_solutions_are_einstein_weyl(u, seed):
    W = build_toda(u_of(u))
    p = sample_points(TODA_CHART, 5, seed)
    assert np.max(np.abs(toda_residual(u_of(u), p))) < 1e-8
    assert np.max(np.abs(W.geometry(p).EW.value)) < 1e-6


@given(st.integers(0, 99))
def test_x_squared_is_not(seed):
    p = sample_points(TODA_CHART, 100, seed)
    assert np.min(toda_residual(u_of("x^2"), p)) >= 0.5
    assert np.max(np.abs(build_toda(u_of("x^2")).geometry(p).EW.value)) > 1e-2


# -- congruences and linearization ----------------------------------------------------


def test_toda_ansatz_congruence():
    u = u_of("log(1+z) + x*z")
    W = build_toda(u)
    p = sample_points(TODA_CHART, 10, 2)
    rep = congruence_decompose(W, ez, p)
    assert rep.max_defect() < 1e-12
    uz = u.jet(p, 1).parts[1][:, 2]
    np.testing.assert_allclose(rep.tau, -0.5 * uz, atol=1e-12)
    X, sigma = linearize(W, ez, p)
    np.testing.assert_allclose(X, np.tile([0, 0, 1.0], (10, 1)), atol=1e-12)
    np.testing.assert_allclose(sigma, -0.5 * uz, atol=1e-12)


def test_flat_radial_congruence():
    p = np.array([[0.3, 0.4, 0.5], [0.6, 0.2, 0.1], [0.2, 0.7, 0.4]])
    rep = congruence_decompose(FLAT, radial, p)
    assert rep.max_defect() < 1e-12
    np.testing.assert_allclose(rep.tau, 1 / np.linalg.norm(p, axis=1), rtol=1e-12)
    X, sigma = linearize(FLAT, radial, p)
    rb = np.linalg.norm(p[0])
    # X = r d_r and sigma = 1, up to the homothety constant fixed at the base
    np.testing.assert_allclose(X * rb, p, atol=1e-12)
    np.testing.assert_allclose(sigma * rb, 1.0, atol=1e-12)
    chi, mu, tau = delinearize(X, sigma, np.eye(3))
    np.testing.assert_allclose(chi, p / np.linalg.norm(p, axis=1)[:, None], atol=1e-12)
    np.testing.assert_allclose(tau * np.sqrt(mu), sigma, atol=1e-12)


def test_flat_ez_structure():
    X, sigma = linearize(FLAT, ez, sample_points(FLAT.chart, 4))
    np.testing.assert_allclose(X, np.tile([0, 0, 1.0], (4, 1)))
    np.testing.assert_allclose(sigma, 0.0)


def test_non_toda_congruence_rejected():
    def twisted(X):
        n = (1 + X[0] * X[0] + X[1] * X[1]).sqrt()
        return stack([-X[1] / n, X[0] / n, n.reciprocal()])

    with pytest.raises(NotTodaCongruence):
        linearize(FLAT, twisted, [[0.3, 0.2, 0.1], [0.5, 0.1, 0.2]])
    with pytest.raises(ValueError, match="not unit"):
        congruence_decompose(FLAT, lambda X: stack([X[0] * 0 + 2, X[0] * 0, X[0] * 0]), [[0.1, 0.1, 0.1]])


# -- rank-4 system ----------------------------------------------------------------


def test_transport_flat():
    e = np.array([0, 0, 1.0, 0])
    path = np.array([[0, 0, 0], [0.5, 0.1, 0], [0.2, 0.6, -0.3]])
    np.testing.assert_allclose(transport(FLAT, path, e), e, atol=1e-13)
    p = np.array([0.4, -0.3, 0.2])
    out = transport(FLAT, np.array([[0, 0, 0], p]), [0, 0, 0, 1.0])
    np.testing.assert_allclose(out, np.append(p, 1.0), atol=1e-12)


@pytest.mark.parametrize("method", ["plaquette", "jet"])
def test_system_curvature_vanishes_when_f_is_zero(method):
    for W in (FLAT, cat.catalog("hyperbolic").structure):
        Om = toda_system_curvature(W, sample_points(W.chart, 3, 5), method=method)
        assert np.max(np.abs(Om)) < 1e-6


def test_system_curvature_gate():
    with pytest.raises(GateError, match="not Einstein-Weyl"):
        toda_system_curvature(build_toda(u_of("x^2")), [[0.1, 0.1, 1.0]])


def test_taubnut_kernel_dimension_two(taubnut):
    W, _ = taubnut
    Om = toda_system_curvature(W, sample_points(W.chart, 4, 1), method="jet")
    for ops in Om:  # common kernel at each point
        sv = np.linalg.svd(ops.reshape(-1, 4), compute_uv=False)
        assert sv[1] > 1e-3 * sv[0] and sv[2] < 1e-9 * sv[0]


def test_counts(taubnut):
    flat = toda_structure_count(FLAT)
    assert (flat.upper_bound, flat.confirmed) == (4, 4)
    _, tn = taubnut
    assert (tn.upper_bound, tn.confirmed) == (2, 2)
    assert tn.gap >= 1e5 and tn.loop_residual < 1e-6
    d = tn.as_dict()
    assert d["confirmed"] <= d["upper_bound"] <= 4


def test_kernel_seed_returns_around_loop(taubnut):
    W, sc = taubnut
    b = sc.base
    loop = np.array([b, b + [0.15, 0, 0], b + [0.15, 0.2, 0], b + [0, 0.2, 0.1], b])
    for s in sc.basis:
        out = transport(W, loop, s.seed)
        assert np.linalg.norm(out - s.seed) < 1e-6 * np.linalg.norm(s.seed)


# -- obstructions -------------------------------------------------------------------


def test_orth_on_toda_ansatz():
    W = build_toda(u_of("x*z + log(1+z)"))
    p = sample_points(TODA_CHART, 5, 3)
    ez_rep = np.tile([0, 0, 1.0], (5, 1))
    assert np.max(np.abs(obstruction_orth(W, ez_rep, p))) < 1e-12
    ex = np.tile([1.0, 0, 0], (5, 1))
    assert np.min(np.abs(obstruction_orth(W, ex, p)) + np.abs(obstruction_orth(W, [[0, 1.0, 0]] * 5, p))) > 1e-3


def test_orth_zero_when_f_zero():
    W = cat.catalog("hyperbolic").structure
    p = sample_points(W.chart, 5)
    assert np.max(np.abs(faraday(W, p))) < 1e-12
    assert np.max(np.abs(obstruction_orth(W, np.random.default_rng(0).normal(size=(5, 3)), p))) < 1e-12


def test_confirmed_structures_satisfy_obstructions(taubnut):
    W, sc = taubnut
    p = sample_points(W.chart, 10, 7)
    Psi = structure_values(W, sc.basis, p)
    for k in range(sc.confirmed):
        X, s = Psi[:, k, :3], Psi[:, k, 3]
        assert np.max(np.abs(obstruction_orth(W, X, p))) < 1e-6
        res, null = obstruction_cy(W, X, s, p)
        assert np.max(np.abs(res)) < 1e-5 and np.max(np.abs(null)) < 1e-5


def test_logrho_structures_satisfy_cy():
    W = cat.catalog("ward-logrho").structure
    sc = toda_structure_count(W)
    p = sample_points(W.chart, 6, 2)
    Psi = structure_values(W, sc.basis, p)
    for k in range(sc.confirmed):
        res, _ = obstruction_cy(W, Psi[:, k, :3], Psi[:, k, 3], p)
        assert np.max(np.abs(res)) < 1e-5


def test_berger_trial_structure_not_null():
    W = cat.catalog("berger", {"a": 0.7}).structure
    p = sample_points(W.chart, 5, 1)
    g = W.geometry(p).g
    sig2 = np.stack([np.cos(p[:, 2]), np.sin(p[:, 0]) * np.sin(p[:, 2]), 0 * p[:, 0]], axis=1)
    X = np.linalg.solve(g, sig2[..., None])[..., 0]
    _, null = obstruction_cy(W, X, 0.0, p)
    assert np.min(np.abs(null)) > 1e-3


def test_berger_count_zero():
    W = cat.catalog("berger", {"a": 0.7}).structure
    sc = toda_structure_count(W)
    assert sc.confirmed == 0


# -- symmetries -------------------------------------------------------------------


def test_flat_wronskian_is_rotation():
    b = np.array([0.1, 0.2, 0.3])
    S1 = TodaStructureField(np.array([0, 0, 1.0]), 0.0, b)
    S2 = TodaStructureField(b.copy(), 1.0, b)
    K = wronskian(FLAT, S1, S2)
    p = sample_points(FLAT.chart, 6, 4)
    k = K.jet(p, 0).value
    rot = np.stack([-p[:, 1], p[:, 0], 0 * p[:, 0]], axis=1)
    sign = np.sign(np.sum(k * rot))
    np.testing.assert_allclose(k, sign * rot, atol=1e-10)
    ax = axial_symmetry_checks(FLAT, K, p)
    assert max(ax.divergence, ax.twist, ax.conformal, ax.lie_D) < 1e-9


def test_parallel_pair_degenerate():
    b = np.array([0.1, 0.2, 0.3])
    S = TodaStructureField(np.array([0, 0, 1.0]), 0.0, b)
    with pytest.raises(ValueError, match="degenerate"):
        wronskian(FLAT, S, S)


def test_taubnut_wronskian_axial(taubnut):
    W, sc = taubnut
    K = wronskian(W, *sc.basis)
    p = sample_points(W.chart, 6, 8)
    k = K.jet(p, 0).value
    assert np.max(np.abs(k[:, :2])) < 1e-8 * np.min(k[:, 2])
    ax = axial_symmetry_checks(W, K, p)
    assert max(ax.divergence, ax.twist, ax.conformal, ax.lie_D) < 1e-5
    for s in sc.basis:
        assert np.max(k_invariance(W, K, s, p)) < 1e-5
    res, defect = dstar_flatness(W, K, p[:3])
    assert np.max(res) < 1e-6 and np.max(defect) < 1e-6


def test_dstar_flat_rotation():
    rot = lambda X: stack([-X[1], X[0], X[0] * 0])  # noqa: E731
    res, _ = dstar_flatness(FLAT, rot, [[0.4, 0.3, 0.1], [-0.5, 0.2, 0.6]])
    assert np.max(res) < 1e-10


def test_dstar_logrho_psi():
    W = cat.catalog("ward-logrho").structure
    dpsi = lambda X: stack([X[0] * 0, X[0] * 0, X[0] * 0 + 1])  # noqa: E731
    res, _ = dstar_flatness(W, dpsi, sample_points(W.chart, 3))
    assert np.max(res) < 1e-6
