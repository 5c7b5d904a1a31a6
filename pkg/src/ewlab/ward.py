r"""Ward's Einstein-Weyl spaces from axially symmetric harmonic functions.

For ``V(rho, eta)`` with ``(rho V_rho)_rho + rho V_etaeta = 0``

    g = (V_rho^2 + V_eta^2)(drho^2 + deta^2) + dpsi^2,
    omega = (2 V_rho V_eta deta + (V_rho^2 - V_eta^2) drho) / (rho (V_rho^2 + V_eta^2)).

Profiles carry ``V``, ``V_rho`` and ``V_eta`` as functions of the coordinate
jet so that the metric has exact partials to order 3.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Callable

import numpy as np

from .charts import AnalyticField, Chart, builtin_field
from .jets import Jet, stack
from .weylgeom import WeylStructure, gauge_transform

__all__ = [
    "WARD_CHART",
    "HarmonicProfile",
    "DegenerateProfile",
    "log_rho",
    "linear_eta",
    "monopole",
    "point_source",
    "taubnut_profile",
    "eguchi_hanson_profile",
    "harmonic_residual",
    "harmonic_residual_from_V",
    "ward_build",
    "lw_gauge",
    "lw_height",
    "height_loop_defect",
    "eigenfunction_residual",
    "profile_from_field",
    "joyce_consistency",
]

WARD_CHART = Chart(
    "ward",
    ("rho", "eta", "psi"),
    ((0.3, 2.0), (-1.0, 1.0), (-math.pi, math.pi)),
    singular_loci=(lambda P: P[:, 0],),
    locus_names=("rho",),
)


class DegenerateProfile(ValueError):
    """``V_rho^2 + V_eta^2`` vanishes: the Ward metric degenerates."""


@dataclass(frozen=True)
class HarmonicProfile:
    """Axially symmetric harmonic function with exact first partials.

    ``V``, ``Vr``, ``Ve`` map the coordinate jet ``X`` (components
    ``rho, eta, psi``) to scalar jets.
    """

    label: str
    V: Callable
    Vr: Callable
    Ve: Callable
    params: dict = dc_field(default_factory=dict)
    chart: Chart = WARD_CHART

    def field(self, which="V"):
        fn = {"V": self.V, "Vr": self.Vr, "Ve": self.Ve}[which]
        return builtin_field(f"{self.label}:{which}", WARD_CHART.coords, fn)

    def jets(self, points, order):
        X = Jet.coordinates(np.atleast_2d(points), order)
        return _as_jet(self.Vr(X), X), _as_jet(self.Ve(X), X)

    def __add__(self, other):
        return HarmonicProfile(
            f"{self.label}+{other.label}",
            lambda X: self.V(X) + other.V(X),
            lambda X: self.Vr(X) + other.Vr(X),
            lambda X: self.Ve(X) + other.Ve(X),
            {**self.params, **other.params},
            self.chart,
        )

    def scaled(self, s):
        s = float(s)
        return HarmonicProfile(
            f"{s:g}*{self.label}",
            lambda X: _as_jet(self.V(X), X).scale(s),
            lambda X: _as_jet(self.Vr(X), X).scale(s),
            lambda X: _as_jet(self.Ve(X), X).scale(s),
            dict(self.params),
            self.chart,
        )

    def add_log_rho(self, k):
        """``V + k log(rho)``: the freedom in the choice of integral of ``V_eta``."""
        return self + log_rho().scaled(k)


def _as_jet(v, X):
    return v if isinstance(v, Jet) else X[0] * 0 + v


# -- catalog profiles ----------------------------------------------------------------


def log_rho():
    return HarmonicProfile("log(rho)", lambda X: X[0].log(), lambda X: X[0].reciprocal(), lambda X: X[0] * 0)


def linear_eta(b=1.0):
    return HarmonicProfile(
        f"{b:g}*eta", lambda X: X[1].scale(b), lambda X: X[0] * 0, lambda X: X[0] * 0 + b, {"b": b}
    )


def _r(X):
    return (X[0] * X[0] + X[1] * X[1]).sqrt()


def monopole(c=1.0, center=0.0):
    """``V = c log((eta - e + r)/rho)`` with ``V_eta = c/r`` (``r`` from ``(0, e)``)."""

    def r(X):
        s = X[1] - center
        return (X[0] * X[0] + s * s).sqrt()

    return HarmonicProfile(
        f"monopole({c:g},{center:g})",
        lambda X: ((X[1] - center + r(X)) / X[0]).log().scale(c),
        lambda X: ((X[1] - center) / (X[0] * r(X))).scale(-c),
        lambda X: r(X).reciprocal().scale(c),
        {"c": c},
    )


def point_source(c=1.0):
    """``V = c / sqrt(rho^2 + eta^2)``."""
    return HarmonicProfile(
        f"{c:g}/r",
        lambda X: _r(X).reciprocal().scale(c),
        lambda X: (X[0] / _r(X) ** 3).scale(-c),
        lambda X: (X[1] / _r(X) ** 3).scale(-c),
        {"c": c},
    )


def taubnut_profile(a=1.0, b=1.0, c=1.0):
    """``a log(rho) + b eta + c log((eta + r)/rho)``."""
    p = log_rho().scaled(a) + linear_eta(b) + monopole(c)
    return HarmonicProfile(f"taubnut({a:g},{b:g},{c:g})", p.V, p.Vr, p.Ve, {"a": a, "b": b, "c": c})


def profile_from_field(V, label=None):
    """Profile from a scalar field on the (rho, eta, psi) chart.

    The partials ``V_rho`` and ``V_eta`` are read off the jet of ``V`` one
    order higher, so finite-difference fields supply them to order 2.
    """

    def part(k):
        def fn(X):
            pts = np.stack([X[i].value for i in range(3)], axis=1)
            if k is None:
                return V.jet(pts, X.order)
            return V.jet(pts, X.order + 1).d()[k]

        return fn

    return HarmonicProfile(label or getattr(V, "label", "V"), part(None), part(0), part(1))


def _eh1_R(X):
    # R^2 = ((rho^2 + eta^2 - 1) + sqrt((rho^2 + eta^2 - 1)^2 + 4 eta^2)) / 2
    s = X[0] * X[0] + X[1] * X[1] - 1.0
    return ((s + (s * s + X[1] * X[1] * 4.0).sqrt()).scale(0.5)).sqrt()


def eguchi_hanson_profile(eps2, a=0.0, b=1.0, c=1.0):
    """Eguchi-Hanson profile; ``eps2 = -1`` (circle of charge) or ``+1`` (two sources)."""
    if eps2 == 1:
        p = log_rho().scaled(a) + monopole(0.5 * (b + c), 1.0) + monopole(0.5 * (b - c), -1.0)
        return HarmonicProfile(
            f"eguchi-hanson-2({a:g},{b:g},{c:g})", p.V, p.Vr, p.Ve, {"a": a, "b": b, "c": c, "eps2": 1}
        )
    if eps2 != -1:
        raise ValueError("eps2 must be +1 or -1")

    # with rho = sqrt(R^2+1) sin(t), eta = R cos(t):
    # V = a log rho + b log((1 + cos t)/sin t) - c atan(1/R)
    def V(X):
        R = _eh1_R(X)
        cos = X[1] / R
        sin = X[0] / (R * R + 1.0).sqrt()
        return X[0].log().scale(a) + ((cos + 1.0) / sin).log().scale(b) - R.reciprocal().arctan().scale(c)

    def Ve(X):
        R = _eh1_R(X)
        cos = X[1] / R
        return (R.scale(b) + cos.scale(c)) / (R * R + cos * cos)

    def Vr(X):
        R = _eh1_R(X)
        cos = X[1] / R
        sin2 = 1.0 - cos * cos
        num = (R * R + cos * cos).scale(a) - ((R * R + 1.0) * cos).scale(b) + (R * sin2).scale(c)
        return num / ((R * R + cos * cos) * X[0])

    # R vanishes on the disc spanning the ring (eta = 0, rho < 1): stay above it
    chart = WARD_CHART.with_domain(eta=(0.2, 1.5))
    return HarmonicProfile(
        f"eguchi-hanson-1({a:g},{b:g},{c:g})", V, Vr, Ve, {"a": a, "b": b, "c": c, "eps2": -1}, chart
    )


# -- operations ----------------------------------------------------------------------


def _pts(p):
    return np.atleast_2d(np.asarray(p, dtype=float))


def harmonic_residual(P, p):
    """``(rho V_rho)_rho + rho V_etaeta`` from the first partials."""
    pts = _pts(p)
    Vr, Ve = P.jets(pts, 1)
    rho = pts[:, 0]
    return Vr.value + rho * Vr.parts[1][:, 0] + rho * Ve.parts[1][:, 1]


def harmonic_residual_from_V(V, p):
    """Same residual from the jet of ``V`` itself (any scalar field)."""
    pts = _pts(p)
    J = V.jet(pts, 2)
    rho = pts[:, 0]
    return J.parts[1][:, 0] + rho * (J.parts[2][:, 0, 0] + J.parts[2][:, 1, 1])


def ward_build(P, chart=None, min_grad=None):
    """Ward's Weyl structure for the profile ``P`` on the (rho, eta, psi) chart."""
    chart = P.chart if chart is None else chart
    min_grad = chart.singular_margin if min_grad is None else min_grad

    def grad_norm(points):
        Vr, Ve = P.jets(points, 0)
        return np.sqrt(Vr.value**2 + Ve.value**2)

    def metric(X):
        Vr, Ve = _as_jet(P.Vr(X), X), _as_jet(P.Ve(X), X)
        Q = Vr * Vr + Ve * Ve
        one = Q.like_constant(np.ones(()))
        zero = Q.like_constant(np.zeros(()))
        return stack([Q, zero, zero, zero, Q, zero, zero, zero, one], (3, 3))

    def omega(X):
        Vr, Ve = _as_jet(P.Vr(X), X), _as_jet(P.Ve(X), X)
        den = (Vr * Vr + Ve * Ve) * X[0]
        w_rho = (Vr * Vr - Ve * Ve) / den
        w_eta = (Vr * Ve).scale(2.0) / den
        return stack([w_rho, w_eta, X[0] * 0])

    probe = np.array([[0.5 * sum(chart.domain[0]), 0.5 * sum(chart.domain[1]), 0.0]])
    if np.all(grad_norm(probe) == 0):
        raise DegenerateProfile(f"{P.label}: V_rho = V_eta = 0 (constant profile)")
    loci = chart.singular_loci + (grad_norm,)
    names = tuple(chart.locus_names) + ("|grad V|",)
    ch = Chart(chart.name, chart.coords, chart.domain, chart.singular_margin, loci, names, chart.orientation)
    return WeylStructure(
        ch,
        AnalyticField(metric, (3, 3), label=f"ward g[{P.label}]"),
        AnalyticField(omega, (3,), label=f"ward omega[{P.label}]"),
        provenance=f"ward:{P.label}",
        params=P.params,
    )


def lw_gauge(W):
    """Rescale a Ward structure by ``rho^2`` (``f = log rho``)."""
    f = builtin_field("log(rho)", W.chart.coords, lambda X: X[0].log())
    out = gauge_transform(W, f)
    out.provenance = W.provenance + "|LW"
    return out


def _height_form(P, pts):
    Vr, Ve = P.jets(pts, 0)
    rho = pts[:, 0]
    return np.stack([rho * Ve.value, -rho * Vr.value, np.zeros(len(pts))], axis=1)


def lw_height(P, path, nodes=24):
    """Integral of ``rho V_eta drho - rho V_rho deta`` along a polyline.

    The additive constant is fixed by ``z(path[0]) = 0``.
    """
    path = np.atleast_2d(np.asarray(path, dtype=float))
    s, w = np.polynomial.legendre.leggauss(nodes)
    s = 0.5 * (s + 1)
    w = 0.5 * w
    total = 0.0
    for a, b in zip(path[:-1], path[1:]):
        q = a + s[:, None] * (b - a)
        total += float(np.sum(w * (_height_form(P, q) @ (b - a))))
    return total


def height_loop_defect(P, corner, sides):
    """Height integral around a rectangle in the (rho, eta) plane."""
    c = np.asarray(corner, dtype=float)
    dr = np.array([sides[0], 0, 0])
    de = np.array([0, sides[1], 0])
    return lw_height(P, np.array([c, c + dr, c + dr + de, c + de, c]))


def eigenfunction_residual(P, p):
    """``v_rr + v_ee + v / (4 rho^2)`` with ``v = rho^{1/2} V``."""
    pts = _pts(p)
    X = Jet.coordinates(pts, 2)
    v = X[0].sqrt() * _as_jet(P.V(X), X)
    H = v.parts[2]
    return H[:, 0, 0] + H[:, 1, 1] + 0.25 * v.value / pts[:, 0] ** 2


def joyce_consistency(P, p, min_phi=1e-8):
    """Residuals of the Joyce form ``g = |Phi|^2 g_H + dpsi^2`` and its Weyl form.

    ``phi1 = rho V_eta``, ``phi2 = -rho V_rho``; the Weyl form is
    ``-((phi1^2 - phi2^2) drho + 2 phi1 phi2 deta) / (rho (phi1^2 + phi2^2))``.
    """
    pts = _pts(p)
    Vr, Ve = P.jets(pts, 0)
    rho = pts[:, 0]
    p1 = rho * Ve.value
    p2 = -rho * Vr.value
    n2 = p1**2 + p2**2
    if np.any(n2 < min_phi**2):
        raise DegenerateProfile("|Phi| below margin")
    W = ward_build(P)
    geo = W.geometry(pts, order=1, check=False)
    g_j = np.zeros_like(geo.g)
    g_j[:, 0, 0] = g_j[:, 1, 1] = n2 / rho**2
    g_j[:, 2, 2] = 1.0
    om_j = np.stack([-(p1**2 - p2**2), -2 * p1 * p2, np.zeros(len(pts))], axis=1) / (rho * n2)[:, None]
    return (
        np.max(np.abs(geo.g - g_j), axis=(1, 2)),
        np.max(np.abs(geo.omega - om_j), axis=1),
    )
