r"""Weyl structures ``(g, omega)`` on a chart and their curvature invariants.

Conventions
-----------
* ``Dg = -2 omega (x) g``; the Weyl connection coefficients are
  ``Gamma^k_ij = LC^k_ij + d^k_i w_j + d^k_j w_i - g_ij w^k``.
* A density of weight ``w`` is stored as its representative in the chart
  gauge ``mu_g``; ``D(s mu_g^w) = (ds + w s omega) mu_g^w``.  Vector fields of
  weight ``w`` are sections of ``L^{w-1} TM``, 1-forms of weight ``w`` are
  sections of ``L^{w+1} T*M``.
* Curvature ``R(X, Y) = [D_X, D_Y] - D_[X,Y]``; components ``R[l, k, i, j]``
  act as ``R(d_i, d_j) d_k = R[l, k, i, j] d_l``.  ``Ric_jk = R[i, k, i, j]``.
* ``F = d omega`` is the curvature of ``D`` on ``L^1``.
* The Hodge star is the Riemannian one for ``g`` and the chart orientation;
  on 1-forms ``** = 1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np

from .charts import DerivedField, Field, JetOrderError
from .jets import Jet, det3, inv3

__all__ = [
    "WeylStructure",
    "WeightedField",
    "Geometry",
    "CurvatureReport",
    "NotPositiveDefinite",
    "GateError",
    "LEVI_CIVITA",
    "weyl_connection",
    "ew_residual",
    "faraday",
    "star_faraday",
    "scal_weyl",
    "weighted_curvature",
    "ewcurv_rhs",
    "ewcurv_check",
    "cotton_york",
    "curvature_report",
    "gauge_transform",
    "killing_residual",
    "killing_gauge_checks",
    "hodge_star_1form",
    "hodge_star_2form",
    "dg_identity_residual",
]

LEVI_CIVITA = np.zeros((3, 3, 3))
for _i, _j, _k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
    LEVI_CIVITA[_i, _j, _k] = 1.0
    LEVI_CIVITA[_i, _k, _j] = -1.0


class NotPositiveDefinite(ValueError):
    """The metric fails to be positive definite at a probe."""


class GateError(RuntimeError):
    """A precondition check (Einstein-Weyl, Killing, ...) failed."""


# -- weighted fields ------------------------------------------------------------

_KIND_OFFSET = {"scalar": 0, "vector": -1, "one-form": 1, "two-form": 2, "sym2-tensor": 2}


@dataclass(frozen=True)
class WeightedField:
    """Gauge representative of a weighted quantity.

    ``weight2`` is twice the conformal weight.  Under ``g -> e^{2f} g`` the
    representative of a weight ``w`` section of ``L^{w+k} E`` (``k`` the
    tensor-type offset of ``kind``) is multiplied by ``e^{(w+k) f}``.
    """

    weight2: int
    kind: str
    components: object

    def __post_init__(self):
        if self.kind not in _KIND_OFFSET:
            raise ValueError(f"unknown kind {self.kind!r}")

    @property
    def weight(self):
        return self.weight2 / 2

    def scaling_exponent(self):
        return self.weight + _KIND_OFFSET[self.kind]

    def regauge(self, f_value):
        """Representative in the gauge ``e^{2f} g`` given ``f`` at the same point."""
        factor = np.exp(self.scaling_exponent() * np.asarray(f_value))
        comp = np.asarray(self.components)
        factor = factor.reshape(factor.shape + (1,) * (comp.ndim - factor.ndim))
        return WeightedField(self.weight2, self.kind, comp * factor)

    def tensor(self, other, kind):
        """Tensor product: weights add."""
        return WeightedField(self.weight2 + other.weight2, kind, None)


# -- Weyl structures ------------------------------------------------------------


class WeylStructure:
    """A metric ``g`` (shape (3, 3) field) and Weyl 1-form ``omega`` on a chart."""

    def __init__(self, chart, g, omega, provenance="user", params=None):
        if g.shape != (3, 3) or omega.shape != (3,):
            raise ValueError("g must be a (3, 3) field and omega a (3,) field")
        self.chart = chart
        self.g = g
        self.omega = omega
        self.provenance = provenance
        self.params = dict(params or {})

    @property
    def max_order(self):
        """Highest metric jet order available (omega is needed one order lower)."""
        return min(self.g.max_order, self.omega.max_order + 1)

    def jets(self, points, order):
        if order > self.max_order:
            raise JetOrderError(
                f"{self.provenance}: metric derivatives of order {order} unavailable "
                f"(max {self.max_order})"
            )
        points = np.atleast_2d(np.asarray(points, dtype=float))
        return self.g.jet(points, order), self.omega.jet(points, order - 1)

    def geometry(self, points, order=2, check=True):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if check:
            self.chart.check(points)
        return Geometry(self, points, order)

    def __repr__(self):
        return f"WeylStructure({self.provenance!r}, chart={self.chart.name!r})"


class Geometry:
    """Curvature quantities of a Weyl structure at a batch of points.

    ``order`` is the metric jet order: 2 gives curvature values, 3 adds one
    derivative of curvature (needed for Cotton-York and connection curvature).
    """

    def __init__(self, W, points, order=2):
        self.W = W
        self.points = points
        self.order = order
        G, Om = W.jets(points, order)
        self.G = G
        self.Om = Om
        eig = np.linalg.eigvalsh(G.value)
        if not np.all(eig[:, 0] > 0):
            bad = int(np.argmin(eig[:, 0]))
            raise NotPositiveDefinite(
                f"metric not positive definite at {points[bad].tolist()} "
                f"(smallest eigenvalue {eig[bad, 0]:.3g})"
            )
        self.orientation = W.chart.orientation
        self._cache = {}

    def _memo(key):  # noqa: N805
        def deco(fn):
            def wrapper(self):
                if key not in self._cache:
                    self._cache[key] = fn(self)
                return self._cache[key]

            wrapper.__name__ = fn.__name__
            wrapper.__doc__ = fn.__doc__
            return property(wrapper)

        return deco

    @property
    def n(self):
        return self.points.shape[0]

    @property
    def g(self):
        return self.G.value

    @property
    def omega(self):
        return self.Om.value

    @_memo("ginv")
    def Ginv(self):
        return inv3(self.G)

    @property
    def ginv(self):
        return self.Ginv.value

    @_memo("sqrtdet")
    def SqrtDet(self):
        return det3(self.G).sqrt()

    @_memo("eps")
    def Eps(self):
        """Volume form ``eps_ijk`` as a jet."""
        return self.SqrtDet * self.G.like_constant(self.orientation * LEVI_CIVITA)

    @property
    def eps(self):
        return self.Eps.value

    @_memo("omega_up")
    def OmUp(self):
        return Jet.einsum("ij,j->i", self.Ginv, self.Om)

    @_memo("lc")
    def LC(self):
        """Levi-Civita coefficients ``LC[k, i, j]``."""
        dG = self.G.d()  # dG[a, b, c] = d_c g_ab
        lower = (dG.transpose(0, 2, 1) + dG - dG.transpose(2, 0, 1)).scale(0.5)
        # lower[l, i, j] = 1/2 (d_i g_lj + d_j g_li - d_l g_ij)
        return Jet.einsum("kl,lij->kij", self.Ginv, lower)

    @_memo("gamma")
    def Gamma(self):
        """Weyl connection coefficients ``Gamma[k, i, j]``."""
        lc = self.LC
        Om = self.Om.truncate(lc.order)
        delta = lc.like_constant(np.eye(3))
        t1 = Jet.einsum("ki,j->kij", delta, Om)
        t2 = Jet.einsum("kj,i->kij", delta, Om)
        t3 = Jet.einsum("ij,k->kij", self.G, self.OmUp)
        return lc + t1 + t2 - t3

    @_memo("riemann")
    def Riemann(self):
        """``R[l, k, i, j]`` of the Weyl connection on ``TM``."""
        Gm = self.Gamma
        dG = Gm.d()  # dG[l, a, b, c] = d_c Gamma^l_ab
        r = dG.transpose(0, 2, 3, 1) - dG.transpose(0, 2, 1, 3)
        r = r + Jet.einsum("lim,mjk->lkij", Gm, Gm) - Jet.einsum("ljm,mik->lkij", Gm, Gm)
        return r

    @_memo("ricci")
    def Ricci(self):
        R = self.Riemann
        return Jet.einsum("lkij,li->jk", R, R.like_constant(np.eye(3)))

    @_memo("scal")
    def Scal(self):
        """Gauge representative of scal^D (weight -2)."""
        return Jet.einsum("jk,jk->", self.Ginv, self.Ricci)

    @_memo("faraday")
    def F(self):
        """``F[i, j] = d_i w_j - d_j w_i``."""
        dOm = self.Om.d()  # dOm[j, i] = d_i w_j
        return dOm.transpose(1, 0) - dOm

    @_memo("ew")
    def EW(self):
        Ric = self.Ricci
        sym = (Ric + Ric.transpose(1, 0)).scale(0.5)
        tr = Jet.einsum("jk,jk->", self.Ginv, sym)
        return sym - self.G * tr.scale(1.0 / 3.0)

    @_memo("star_f")
    def StarF(self):
        """``(*F)_k = 1/2 eps_ab^k... `` the Hodge dual 1-form of ``F``."""
        return hodge_star_2form_jet(self.Ginv, self.Eps, self.F)

    @_memo("dscal")
    def DScal(self):
        """Weyl derivative of scal^D: ``d S - 2 S omega`` (representative)."""
        S = self.Scal
        dS = S.d()
        return dS - self.Om.truncate(dS.order) * S.truncate(dS.order).scale(2.0)

    def covariant_dF(self, gamma=None):
        """``DF[a, b, c] = (D_a F)_bc`` using ``gamma`` (Weyl by default)."""
        gamma = self.Gamma if gamma is None else gamma
        F = self.F
        dF = F.d()  # dF[b, c, a] = d_a F_bc
        Gv = gamma.value
        Fv = F.value
        out = np.transpose(dF.value, (0, 3, 1, 2))
        out = out - np.einsum("nmab,nmc->nabc", Gv, Fv) - np.einsum("nmac,nbm->nabc", Gv, Fv)
        return out

    @_memo("cotton_raw")
    def CottonC(self):
        """``C[a, b, c] = C_{d_a, d_b} d_c`` (values only)."""
        if self.order < 3:
            raise JetOrderError("Cotton-York needs third metric derivatives")
        DF = self.covariant_dF()
        dS = self.DScal.value
        g = self.g
        C = DF - np.transpose(DF, (0, 2, 1, 3))
        C = C + (np.einsum("nac,nb->nabc", g, dS) - np.einsum("nbc,na->nabc", g, dS)) / 6.0
        return C

    @_memo("cotton_york")
    def CY(self):
        """Raw (un-projected) Cotton-York tensor ``Y[u, v]``."""
        E = eps_up_up_down(self.ginv, self.eps)  # E[a, b, d] = eps^{ab}_d
        return 0.5 * np.einsum("nabu,nabv->nuv", self.CottonC, E)


def eps_up_up_down(ginv, eps):
    return np.einsum("nai,nbj,nijd->nabd", ginv, ginv, eps)


def hodge_star_2form_jet(Ginv, Eps, F):
    E = Jet.einsum("ai,ijd->ajd", Ginv, Eps)
    E = Jet.einsum("bj,ajd->abd", Ginv, E)
    return Jet.einsum("ab,abd->d", F, E).scale(0.5)


def hodge_star_1form(g, alpha, orientation=1):
    """Star of a 1-form: ``(*a)_ij = eps_ijk a^k`` (arrays, batched)."""
    g = np.atleast_3d(g) if np.ndim(g) == 3 else np.asarray(g)[None]
    alpha = np.atleast_2d(alpha)
    ginv = np.linalg.inv(g)
    eps = orientation * np.sqrt(np.linalg.det(g))[:, None, None, None] * LEVI_CIVITA
    return np.einsum("nijk,nkl,nl->nij", eps, ginv, alpha)


def hodge_star_2form(g, beta, orientation=1):
    """Star of a 2-form: ``(*b)_k = 1/2 eps^{ij}_k b_ij``."""
    g = np.asarray(g)
    if g.ndim == 2:
        g = g[None]
    beta = np.asarray(beta)
    if beta.ndim == 2:
        beta = beta[None]
    ginv = np.linalg.inv(g)
    eps = orientation * np.sqrt(np.linalg.det(g))[:, None, None, None] * LEVI_CIVITA
    return 0.5 * np.einsum("nij,nijk->nk", beta, eps_up_up_down(ginv, eps))


def sym_tracefree(T, g, ginv):
    S = 0.5 * (T + np.swapaxes(T, -1, -2))
    tr = np.einsum("nij,nij->n", ginv, S)
    return S - g * tr[:, None, None] / 3.0


# -- operations ------------------------------------------------------------------


def _pts(p):
    return np.atleast_2d(np.asarray(p, dtype=float))


def weyl_connection(W, p):
    """Weyl connection coefficients ``Gamma[n, k, i, j]`` at points ``p``."""
    return W.geometry(_pts(p), order=1).Gamma.value


def dg_identity_residual(W, p):
    """Max of ``|D_i g_jk + 2 w_i g_jk|`` reassembled from the coefficients."""
    geo = W.geometry(_pts(p), order=1)
    dg = np.transpose(geo.G.parts[1], (0, 3, 1, 2))  # dg[i, j, k] = d_i g_jk
    Gm = geo.Gamma.value
    g = geo.g
    Dg = dg - np.einsum("nlij,nlk->nijk", Gm, g) - np.einsum("nlik,njl->nijk", Gm, g)
    return np.max(np.abs(Dg + 2 * geo.omega[:, :, None, None] * g[:, None]), axis=(1, 2, 3))


def ew_residual(W, p):
    """Symmetric trace-free part of Ric^D at points ``p``, shape ``(n, 3, 3)``."""
    return W.geometry(_pts(p), order=2).EW.value


def faraday(W, p):
    return W.geometry(_pts(p), order=2).F.value


def star_faraday(W, p):
    """``*F`` as a weighted vector (weight -2): components ``g^{ab} (*F)_b``."""
    geo = W.geometry(_pts(p), order=2)
    star = geo.StarF.value
    return WeightedField(-4, "vector", np.einsum("nab,nb->na", geo.ginv, star))


def scal_weyl(W, p):
    return W.geometry(_pts(p), order=2).Scal.value


def weighted_curvature(W, p, w):
    """Curvature of D on weight ``w`` vector fields: ``R[n, l, k, i, j]``."""
    geo = W.geometry(_pts(p), order=2)
    R = geo.Riemann.value
    F = geo.F.value
    return R + (w - 1.0) * np.einsum("nij,lk->nlkij", F, np.eye(3))


def ewcurv_rhs(geo):
    """Right side of the Einstein-Weyl curvature decomposition on weight 1/2 vectors.

    ``-S/6 <X,.>^Y + 1/2 F(X,.)^Y - 1/2 F(Y,.)^X + 1/2 F(X,Y) id`` with
    ``(a ^ X)(Z) = a(Z) X - <X, Z> a#``; returned as ``[n, l, k, i, j]`` for
    ``X = d_i, Y = d_j, Z = d_k``.
    """
    g, ginv = geo.g, geo.ginv
    S = geo.Scal.value
    F = geo.F.value
    d = np.eye(3)
    # <X,.> ^ Y with X=d_i, Y=d_j applied to d_k, l-th component:
    # g_ik d^l_j - g_jk d^l_i
    wedge_g = np.einsum("nik,lj->nlkij", g, d) - np.einsum("njk,li->nlkij", g, d)
    # F(X,.) ^ Y: F_ik d^l_j - g_jk F_i^l
    Fup = np.einsum("nia,nal->nil", F, ginv)  # F_i^l
    fx_y = np.einsum("nik,lj->nlkij", F, d) - np.einsum("njk,nil->nlkij", g, Fup)
    fy_x = np.einsum("njk,li->nlkij", F, d) - np.einsum("nik,njl->nlkij", g, Fup)
    ident = np.einsum("nij,lk->nlkij", F, d)
    return (-S[:, None, None, None, None] / 6.0) * wedge_g + 0.5 * fx_y - 0.5 * fy_x + 0.5 * ident


def ewcurv_check(W, p, ew_tol=1e-6):
    """Max residual between R^{D,1/2} and the Einstein-Weyl decomposition.

    Raises :class:`GateError` ("inapplicable") when the Einstein-Weyl
    residual exceeds ``ew_tol``.
    """
    geo = W.geometry(_pts(p), order=2)
    ew = np.max(np.abs(geo.EW.value), axis=(1, 2))
    if np.any(ew > ew_tol):
        raise GateError(f"ewcurv check inapplicable: ew_residual {ew.max():.3g} > {ew_tol}")
    R = geo.Riemann.value - 0.5 * np.einsum("nij,lk->nlkij", geo.F.value, np.eye(3))
    return np.max(np.abs(R - ewcurv_rhs(geo)), axis=(1, 2, 3, 4))


def cotton_york(W, p, project=True):
    """Cotton-York tensor (gauge representative), symmetric trace-free."""
    geo = W.geometry(_pts(p), order=3)
    Y = geo.CY
    return sym_tracefree(Y, geo.g, geo.ginv) if project else Y


@dataclass
class CurvatureReport:
    point: np.ndarray
    ew_residual: np.ndarray
    faraday: np.ndarray
    scal: float
    cotton_york: Optional[np.ndarray]


def curvature_report(W, p):
    pts = _pts(p)
    order = 3 if W.max_order >= 3 else 2
    geo = W.geometry(pts, order=order)
    cy = sym_tracefree(geo.CY, geo.g, geo.ginv) if order == 3 else None
    return [
        CurvatureReport(
            pts[i],
            geo.EW.value[i],
            geo.F.value[i],
            float(geo.Scal.value[i]),
            None if cy is None else cy[i],
        )
        for i in range(pts.shape[0])
    ]


# -- gauge ------------------------------------------------------------------------


def gauge_transform(W, f, chart=None):
    """``g' = e^{2f} g``, ``omega' = omega - df`` for a scalar field ``f``."""
    g2 = DerivedField(
        lambda X, G, fj: G * (fj.scale(2.0)).exp(),
        [W.g, f],
        shape=(3, 3),
        label="gauge g",
    )
    om2 = DerivedField(
        lambda X, Om, fj: Om - fj.d(),
        [W.omega, f],
        shape=(3,),
        shifts=(0, 1),
        label="gauge omega",
    )
    return WeylStructure(chart or W.chart, g2, om2, provenance=f"{W.provenance}|gauge", params=W.params)


# -- Killing-gauge identities ---------------------------------------------------------


def _vector_jet(K, points, order):
    if isinstance(K, Field):
        return K.jet(points, order)
    if callable(K):
        return K(Jet.coordinates(points, order))
    raise TypeError("K must be a Field or a function of the coordinate jet")


def killing_residual(W, K, p):
    """Max |L_K g| at points ``p``; ``K`` a (3,) vector field."""
    pts = W.chart.check(_pts(p))
    geo = W.geometry(pts, order=1)
    Kj = _vector_jet(K, pts, 1)
    Kflat = Jet.einsum("ab,b->a", geo.G, Kj)
    dK = Kflat.d().value  # dK[a, c] = d_c K_a
    LC = geo.LC.value
    cov = np.transpose(dK, (0, 2, 1)) - np.einsum("nkij,nk->nij", LC, Kflat.value)
    # cov[i, j] = nabla_i K_j
    lie = cov + np.transpose(cov, (0, 2, 1))
    return np.max(np.abs(lie), axis=(1, 2))


def omega_dual(W):
    """The vector field ``g^{-1} omega`` as a field."""
    return DerivedField(
        lambda X, G, Om: Jet.einsum("ab,b->a", inv3(G), Om),
        [W.g, W.omega],
        shape=(3,),
        label="omega#",
    )


@dataclass
class KillingGaugeReport:
    status: str
    killing_residual: float
    identity_i: float = 0.0
    identity_ii: float = 0.0
    omega_dot_starF: float = 0.0
    axial: Optional[dict] = None
    notes: list = dc_field(default_factory=list)


def killing_gauge_checks(W, probes, gate_tol=1e-6, zero_tol=1e-6):
    """Identities holding when ``omega`` is dual to a Killing field of ``g``.

    (i) ``nabla^g_X F = 1/3 scal omega ^ <X, .>``;
    (ii) closed-form Cotton-York against the direct computation;
    (iii) ``<omega, *F>``;
    (iv) when (iii) vanishes, the field ``g^{-1} *F`` is checked to be a
    divergence-free, twist-free conformal field preserving D.
    """
    pts = W.chart.check(_pts(probes))
    kr = float(np.max(killing_residual(W, omega_dual(W), pts)))
    if kr > gate_tol:
        raise GateError(
            f"precondition failed: omega not Killing-dual (residual {kr:.3g} > {gate_tol})"
        )
    geo = W.geometry(pts, order=3)
    F = geo.F.value
    om = geo.omega
    if np.max(np.abs(F)) < zero_tol and np.max(np.abs(om)) < zero_tol:
        return KillingGaugeReport("degenerate", kr, notes=["omega = 0: identities are 0 = 0"])
    S = geo.Scal.value
    g = geo.g
    # (i)
    nablaF = geo.covariant_dF(gamma=geo.LC)
    rhs = (np.einsum("nb,nac->nabc", om, g) - np.einsum("nc,nab->nabc", om, g)) * (S / 3.0)[:, None, None, None]
    res_i = float(np.max(np.abs(nablaF - rhs)))
    # (ii)
    starF = geo.StarF.value
    dot = np.einsum("na,nab,nb->n", om, geo.ginv, starF)
    Yform = 1.5 * (np.einsum("na,nb->nab", om, starF) + np.einsum("nb,na->nab", om, starF))
    Yform = Yform - dot[:, None, None] * g
    Ydirect = sym_tracefree(geo.CY, g, geo.ginv)
    res_ii = float(np.max(np.abs(Ydirect - Yform)))
    report = KillingGaugeReport(
        "ok", kr, res_i, res_ii, float(np.max(np.abs(dot)))
    )
    if np.max(np.abs(F)) < zero_tol:
        report.status = "vacuous"
        report.notes.append("F = 0: all checks vacuous")
        return report
    if report.omega_dot_starF < zero_tol:
        from .toda import axial_symmetry_checks

        orient = W.chart.orientation
        K = DerivedField(
            lambda X, G, Om: _star_f_vector(G, Om, orient),
            [W.g, W.omega],
            shape=(3,),
            shifts=(0, 1),
            label="K = (*F)#",
        )
        report.axial = axial_symmetry_checks(W, K, pts)
    else:
        report.notes.append("<omega, *F> != 0: no Toda structure (Killing-gauge obstruction)")
    return report


def _star_f_vector(G, Om, orientation=1):
    Ginv = inv3(G)
    Eps = det3(G).sqrt() * G.like_constant(orientation * LEVI_CIVITA)
    dOm = Om.d()
    F = dOm.transpose(1, 0) - dOm
    star = hodge_star_2form_jet(Ginv.truncate(F.order), Eps.truncate(F.order), F)
    return Jet.einsum("ab,b->a", Ginv, star)
