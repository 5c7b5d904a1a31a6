"""Catalog of explicit Weyl structures and closed-form crosschecks.

Labels: ``flat``, ``hyperbolic``, ``round-sphere``, ``berger``, ``ward-logrho``,
``taubnut``, ``eguchi-hanson-1``, ``eguchi-hanson-2``, ``s2h2-quotient``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import minimize_scalar

from .charts import AnalyticField, Chart, builtin_field, sample_points
from .jets import Jet, stack
from .toda import TODA_CHART, build_toda
from .ward import (
    WARD_CHART,
    HarmonicProfile,
    eguchi_hanson_profile,
    log_rho,
    lw_gauge,
    taubnut_profile,
    ward_build,
)
from .weylgeom import WeylStructure

__all__ = [
    "CatalogEntry",
    "CatalogError",
    "LABELS",
    "catalog",
    "parse_params",
    "closed_form_crosscheck",
    "pullback",
    "taubnut_closed_form",
    "eguchi_hanson_closed_form",
    "s2h2_quotient",
    "s2h2_quotient_check",
    "berger_structure",
    "berger_lambda",
    "flat_cartesian",
]

PI = math.pi


class CatalogError(ValueError):
    pass


@dataclass
class CatalogEntry:
    label: str
    params: dict
    structure: WeylStructure
    profile: Optional[HarmonicProfile] = None
    closed_form: Optional[WeylStructure] = None
    chart_map: Optional[Callable] = None
    notes: list = dc_field(default_factory=list)
    toda_u: Optional[object] = None  # the potential u when the entry is a Toda Ansatz


def _analytic_pair(chart, g_fn, om_fn, provenance, params, om_needs_extra=True):
    """Weyl structure from jet functions; ``om_fn`` may differentiate once."""

    def omega(X):
        X1 = Jet.coordinates(X.value, X.order + 1) if om_needs_extra else X
        return om_fn(X1).truncate(X.order)

    g = AnalyticField(g_fn, (3, 3), label=f"{provenance} g")
    om = AnalyticField(omega, (3,), max_order=2 if om_needs_extra else 3, label=f"{provenance} omega")
    return WeylStructure(chart, g, om, provenance=provenance, params=params)


def _diag(a, b, c):
    z = a * 0
    return stack([a, z, z, z, b, z, z, z, c], (3, 3))


# -- simple spaces -----------------------------------------------------------------

CARTESIAN = Chart("cartesian", ("x", "y", "z"), ((-1.0, 1.0), (-1.0, 1.0), (-1.0, 1.0)))


def flat_cartesian(chart=CARTESIAN):
    return _analytic_pair(
        chart,
        lambda X: _diag(X[0] * 0 + 1, X[0] * 0 + 1, X[0] * 0 + 1),
        lambda X: stack([X[0] * 0, X[0] * 0, X[0] * 0]),
        "flat",
        {},
        om_needs_extra=False,
    )


CYLINDRICAL = WARD_CHART


def _flat_cylindrical():
    # LeBrun-Ward gauge of V = log(rho): drho^2 + deta^2 + rho^2 dpsi^2, omega = 0
    return _analytic_pair(
        CYLINDRICAL,
        lambda X: _diag(X[0] * 0 + 1, X[0] * 0 + 1, X[0] * X[0]),
        lambda X: stack([X[0] * 0, X[0] * 0, X[0] * 0]),
        "flat-cylindrical",
        {},
        om_needs_extra=False,
    )


# -- Berger spheres ------------------------------------------------------------------

EULER_CHART = Chart(
    "euler",
    ("theta", "phi", "psi"),
    ((0.3, 2.8), (-PI, PI), (-PI, PI)),
    singular_loci=(lambda P: np.sin(P[:, 0]),),
    locus_names=("sin(theta)",),
)


def _sigma(X):
    """Rows: left-invariant coframe sigma_k in (dtheta, dphi, dpsi)."""
    th, ps = X[0], X[2]
    z = th * 0
    one = z + 1
    return [
        [ps.sin(), -(th.sin() * ps.cos()), z],
        [ps.cos(), th.sin() * ps.sin(), z],
        [z, th.cos(), one],
    ]


def berger_structure(a=1.5, lam=0.0):
    """``g = a^2 sigma1^2 + sigma2^2 + sigma3^2``, ``omega = lam sigma1``."""
    w = (a * a, 1.0, 1.0)

    def g_fn(X):
        S = _sigma(X)
        comps = []
        for i in range(3):
            for j in range(3):
                acc = None
                for k in range(3):
                    t = (S[k][i] * S[k][j]).scale(w[k])
                    acc = t if acc is None else acc + t
                comps.append(acc)
        return stack(comps, (3, 3))

    def om_fn(X):
        S = _sigma(X)
        return stack([S[0][i].scale(lam) for i in range(3)])

    return _analytic_pair(
        EULER_CHART, g_fn, om_fn, f"berger({a:g})", {"a": a, "lambda": lam}, om_needs_extra=False
    )


def berger_lambda(a, n_probes=24, seed=0, bound=4.0):
    """Weyl form coefficient minimising the sampled Einstein-Weyl residual.

    Returns ``(lam, residual)``.
    """
    pts = sample_points(EULER_CHART, n_probes, seed=seed)

    def cost(lam):
        W = berger_structure(a, lam)
        return float(np.sqrt(np.mean(W.geometry(pts, order=2).EW.value ** 2)))

    res = minimize_scalar(cost, bounds=(0.0, bound), method="bounded", options={"xatol": 1e-12})
    return float(res.x), float(res.fun)


# -- closed-form LeBrun-Ward structures ------------------------------------------------

TAUBNUT_CHART = Chart(
    "taubnut-polar",
    ("r", "theta", "psi"),
    ((0.4, 2.0), (-1.2, 1.2), (-PI, PI)),
    singular_loci=(lambda P: P[:, 0], lambda P: np.cos(P[:, 1])),
    locus_names=("r", "cos(theta)"),
)


def taubnut_closed_form(a, b, c):
    def A(X):
        r, th = X[0], X[1]
        return ((r.scale(b) + c) * th.cos()) ** 2 + (a - th.sin().scale(c)) ** 2

    def g_fn(X):
        r, th = X[0], X[1]
        return _diag(A(X), A(X) * r * r, (r * th.cos()) ** 2)

    def om_fn(X):
        r, th = X[0], X[1]
        h = -(r * th.sin()).scale(a) + ((r * th.cos()) ** 2).scale(0.5 * b) + r.scale(c)
        k = (r.scale(b) + c).scale(-2.0) / (r * A(X))
        dh = h.d()
        k = k.truncate(dh.order)
        return stack([k * dh[0], k * dh[1], k * dh[2]])

    return _analytic_pair(TAUBNUT_CHART, g_fn, om_fn, f"taubnut-LW({a:g},{b:g},{c:g})", {"a": a, "b": b, "c": c})


def _taubnut_map(X):
    r, th = X[0], X[1]
    return stack([r * th.cos(), r * th.sin(), X[2]])


def _eh_chart(eps2, Rmin=None, Rmax=None):
    if eps2 == 1:
        lo = 1.3 if Rmin is None else Rmin
        margin = 0.05
        if lo <= 1.0 + margin:
            raise CatalogError(f"eguchi-hanson-2 needs R > 1 + margin (got R_min = {lo})")
        dom = ((lo, 3.0 if Rmax is None else Rmax), (0.3, 2.8), (-PI, PI))
        loci = (lambda P: P[:, 0] - 1.0, lambda P: np.sin(P[:, 1]))
        names = ("R - 1", "sin(theta)")
    else:
        dom = ((0.3 if Rmin is None else Rmin, 2.0 if Rmax is None else Rmax), (0.3, 2.8), (-PI, PI))
        loci = (lambda P: P[:, 0], lambda P: np.sin(P[:, 1]))
        names = ("R", "sin(theta)")
    return Chart(f"eh{'2' if eps2 == 1 else '1'}-adapted", ("R", "theta", "psi"), dom, 0.05, loci, names)


def eguchi_hanson_closed_form(eps2, a, b, c, chart=None):
    chart = chart or _eh_chart(eps2)

    def B(X):
        R, th = X[0], X[1]
        return (th.cos().scale(a) - b) ** 2 * (R * R - eps2) + (R.scale(a) + c) ** 2 * th.sin() ** 2

    def g_fn(X):
        R, th = X[0], X[1]
        return _diag(B(X) / (R * R - eps2), B(X), (R * R - eps2) * th.sin() ** 2)

    def om_fn(X):
        R, th = X[0], X[1]
        h = -(R * th.cos()).scale(a) + R.scale(b) - th.cos().scale(c)
        k = (R.scale(b) + th.cos().scale(c)).scale(-2.0) / B(X)
        dh = h.d()
        k = k.truncate(dh.order)
        return stack([k * dh[0], k * dh[1], k * dh[2]])

    n = 2 if eps2 == 1 else 1
    return _analytic_pair(chart, g_fn, om_fn, f"eguchi-hanson-{n}-LW({a:g},{b:g},{c:g})", {"a": a, "b": b, "c": c, "eps2": eps2})


def _eh_map(eps2):
    def fn(X):
        R, th = X[0], X[1]
        return stack([(R * R - eps2).sqrt() * th.sin(), R * th.cos(), X[2]])

    return fn


# -- S^2 x H^2 quotient ----------------------------------------------------------------


def s2h2_quotient(b, c, chart=None):
    """Quotient of ``dR^2/(R^2+1) + (R^2+1) ds^2 + dtheta^2 + sin^2 dphi^2`` by ``b d_s + c d_phi``.

    The Weyl form is the Jones-Tod form ``2 |K|^-2 *(K^ dK)`` of the gauge
    ``G/|K|^2``, carried to the displayed quotient metric; with
    ``Q = |K|^2 = b^2 (R^2+1) + c^2 sin^2`` this is
    ``-2 b c (cos dR + R sin dtheta) / Q - 1/2 d log Q``.
    """
    if b == 0 and c == 0:
        raise CatalogError("b = c = 0: K vanishes")
    chart = chart or _eh_chart(-1)

    def Q(X):
        R, th = X[0], X[1]
        return (R * R + 1.0).scale(b * b) + (th.sin() ** 2).scale(c * c)

    def g_fn(X):
        R, th = X[0], X[1]
        one = R * 0 + 1
        return _diag((R * R + 1.0).reciprocal(), one, (R * R + 1.0) * th.sin() ** 2 / Q(X))

    def om_fn(X):
        R, th = X[0], X[1]
        q = Q(X)
        dlogQ = q.log().d()
        q = q.truncate(dlogQ.order).reciprocal().scale(-2.0 * b * c)
        # *(K^dK) = -2bc (cos dR + R sin dtheta)
        t_R = q * th.cos().truncate(dlogQ.order)
        t_th = q * (R * th.sin()).truncate(dlogQ.order)
        return stack([t_R - dlogQ[0].scale(0.5), t_th - dlogQ[1].scale(0.5), -dlogQ[2].scale(0.5)])

    return _analytic_pair(chart, g_fn, om_fn, f"s2h2-quotient({b:g},{c:g})", {"b": b, "c": c})


def s2h2_quotient_check(b, c, p):
    """Compare the quotient with the Eguchi-Hanson I (a=0) LeBrun-Ward structure.

    Returns ``(conformal, omega)`` mismatches per point: the spread of the
    gradients of ``log(g_LW / g_q)`` over the diagonal components, and
    ``|omega_LW - (omega_q - df)|`` with ``f = 1/2 log(g_LW / g_q)``.
    """
    Wq = s2h2_quotient(b, c)
    Wl = eguchi_hanson_closed_form(-1, 0.0, b, c)
    pts = Wq.chart.check(np.atleast_2d(np.asarray(p, dtype=float)))
    gq, oq = Wq.jets(pts, 1)
    gl, ol = Wl.jets(pts, 1)
    logs = [(gl[i, i] / gq[i, i]).log() for i in range(3)]
    grads = np.stack([L.d().value for L in logs], axis=1)  # (n, 3 comps, 3)
    vals = np.stack([L.value for L in logs], axis=1)
    conformal = np.max(np.abs(grads - grads[:, :1]), axis=(1, 2)) + np.max(np.abs(vals - vals[:, :1]), axis=1)
    offdiag = np.max(np.abs(gl.value - np.einsum("nii->ni", gl.value)[:, :, None] * np.eye(3)), axis=(1, 2))
    df = 0.5 * grads[:, 1]
    omega = np.max(np.abs(ol.value - (oq.value - df)), axis=1)
    return conformal + offdiag, omega


# -- crosscheck ------------------------------------------------------------------------


def pullback(W, chart_map, q):
    """``(g, omega)`` of ``W`` pulled back along ``chart_map`` at points ``q``."""
    q = np.atleast_2d(np.asarray(q, dtype=float))
    m = chart_map(Jet.coordinates(q, 1))
    J = m.d().value  # J[n, i, a] = d phi^i / d q^a
    if np.any(np.abs(np.linalg.det(J)) < 1e-12):
        raise CatalogError("chart map Jacobian is singular")
    x = m.value
    g, om = W.jets(x, 1)
    gv = np.einsum("nia,nij,njb->nab", J, g.value, J)
    ov = np.einsum("nia,ni->na", J, om.value)
    return gv, ov


def closed_form_crosscheck(entry, p):
    """Max deviation between the pulled-back LW gauge of ``ward_build`` and the closed form."""
    if entry.profile is None or entry.closed_form is None:
        raise CatalogError(f"{entry.label} lacks a profile or a closed form")
    q = entry.closed_form.chart.check(np.atleast_2d(np.asarray(p, dtype=float)))
    W = lw_gauge(ward_build(entry.profile))
    g1, o1 = pullback(W, entry.chart_map, q)
    g2, o2 = entry.closed_form.jets(q, 1)
    return np.maximum(
        np.max(np.abs(g1 - g2.value), axis=(1, 2)), np.max(np.abs(o1 - o2.value), axis=1)
    )


# -- registry ---------------------------------------------------------------------------

_DEFAULTS = {
    "flat": {},
    "hyperbolic": {},
    "round-sphere": {},
    "berger": {"a": 1.5},
    "ward-logrho": {"k": 0.0},
    "taubnut": {"a": 1.0, "b": 1.0, "c": 1.0},
    "eguchi-hanson-1": {"a": 0.0, "b": 1.0, "c": 1.0},
    "eguchi-hanson-2": {"a": 1.0, "b": 1.0, "c": 1.0},
    "s2h2-quotient": {"b": 1.0, "c": 1.0},
}

LABELS = tuple(_DEFAULTS)

_DESCRIPTIONS = {
    "flat": "Euclidean R^3 (cartesian); profile log(rho) as the Ward form",
    "hyperbolic": "Toda Ansatz with u = log z (hyperbolic space in the Einstein gauge)",
    "round-sphere": "round S^3 in Euler angles, omega = 0",
    "berger": "Berger sphere a^2 s1^2 + s2^2 + s3^2 with omega = lambda s1 (lambda fitted)",
    "ward-logrho": "Ward space of V = log(rho) (+ k log(rho))",
    "taubnut": "Ward space of a log rho + b eta + c log((eta + r)/rho)",
    "eguchi-hanson-1": "Ward space of the ring-of-charge potential (eps^2 = -1)",
    "eguchi-hanson-2": "Ward space of two point sources (eps^2 = +1)",
    "s2h2-quotient": "quotient of S^2 x H^2 by b d_s + c d_phi",
}


def describe(label):
    return _DESCRIPTIONS[label]


def parse_params(text):
    """``"a=1,b=2"`` -> ``{"a": 1.0, "b": 2.0}``."""
    out = {}
    if not text:
        return out
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        if "=" not in item:
            raise CatalogError(f"bad parameter {item!r}: expected name=value")
        k, v = item.split("=", 1)
        try:
            out[k.strip()] = float(v)
        except ValueError:
            raise CatalogError(f"bad value for {k.strip()!r}: {v!r}") from None
    return out


def catalog(label, params=None):
    """Build a catalog entry; unknown parameter names are rejected."""
    if label not in _DEFAULTS:
        raise CatalogError(f"unknown space {label!r}; choose from {', '.join(LABELS)}")
    given = dict(params or {})
    allowed = set(_DEFAULTS[label])
    if label.startswith("eguchi-hanson"):
        allowed |= {"eps2", "Rmin", "Rmax"}
    if label == "berger":
        allowed |= {"lambda"}
    extra = set(given) - allowed
    if extra:
        raise CatalogError(f"unknown parameters for {label}: {sorted(extra)}")
    prm = {**_DEFAULTS[label], **given}

    if label == "flat":
        return CatalogEntry(label, prm, flat_cartesian(), log_rho(), _flat_cylindrical(), lambda X: X)
    if label == "hyperbolic":
        u = builtin_field("log(z)", TODA_CHART.coords, lambda X: X[2].log())
        return CatalogEntry(label, prm, build_toda(u), toda_u=u)
    if label == "round-sphere":
        return CatalogEntry(label, prm, berger_structure(1.0, 0.0))
    if label == "berger":
        a = prm["a"]
        if a <= 0:
            raise CatalogError("berger needs a > 0")
        if "lambda" in prm:
            lam, res = prm["lambda"], float("nan")
        else:
            lam, res = berger_lambda(a)
        entry = CatalogEntry(label, {**prm, "lambda": lam}, berger_structure(a, lam))
        entry.notes.append(f"lambda fitted to {lam:.12g} (sampled residual {res:.3g})")
        if res > 1e-6:
            entry.notes.append("no Einstein-Weyl form lambda*sigma1 for this a (needs a < 1)")
        return entry
    if label == "ward-logrho":
        P = log_rho().add_log_rho(prm["k"]) if prm["k"] else log_rho()
        return CatalogEntry(label, prm, ward_build(P), P)
    if label == "taubnut":
        a, b, c = prm["a"], prm["b"], prm["c"]
        P = taubnut_profile(a, b, c)
        return CatalogEntry(label, prm, ward_build(P), P, taubnut_closed_form(a, b, c), _taubnut_map)
    if label.startswith("eguchi-hanson"):
        eps2 = 1 if label.endswith("2") else -1
        if "eps2" in prm and prm["eps2"] != eps2:
            raise CatalogError(f"{label} requires eps2 = {eps2}")
        a, b, c = prm["a"], prm["b"], prm["c"]
        chart = _eh_chart(eps2, prm.get("Rmin"), prm.get("Rmax"))
        P = eguchi_hanson_profile(eps2, a, b, c)
        return CatalogEntry(
            label, prm, ward_build(P), P, eguchi_hanson_closed_form(eps2, a, b, c, chart), _eh_map(eps2)
        )
    b, c = prm["b"], prm["c"]
    entry = CatalogEntry(label, prm, s2h2_quotient(b, c))
    if b == 0:
        entry.notes.append("b = 0: local check only")
    return entry
