r"""Toda structures: the Toda Ansatz, congruences, and the rank-4 linear system.

A Toda structure is stored through its parallel section ``Psi = (X, s)`` of
the rank-4 system

    D X = s id,        D s = -1/2 F(X, .) - 1/6 scal <X, .>,

with ``X`` a weight 1/2 vector and ``s`` a weight -1/2 density, both as
representatives in the chart gauge.  In coordinates this reads
``d_i Psi = M_i Psi`` with

    M_i[k, j] = -Gamma^k_ij + 1/2 w_i d^k_j,     M_i[k, 3] = d^k_i,
    M_i[3, j] = -1/2 F_ji - 1/6 S g_ij,          M_i[3, 3] = 1/2 w_i.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np

from .charts import Chart, DerivedField, Field, JetOrderError
from .jets import Jet, stack
from .transport import (
    PLANES,
    jet_curvature,
    loop_holonomy,
    plaquette_curvature,
    rectangle_loop,
    transport_propagator,
)
from .weylgeom import GateError, WeylStructure, sym_tracefree

__all__ = [
    "TODA_CHART",
    "TodaStructureField",
    "CongruenceReport",
    "StructureCount",
    "AxialReport",
    "NotTodaCongruence",
    "toda_residual",
    "build_toda",
    "congruence_decompose",
    "linearize",
    "delinearize",
    "toda_connection",
    "system_matrices",
    "toda_system_curvature",
    "toda_structure_count",
    "transport",
    "structure_values",
    "obstruction_orth",
    "obstruction_cy",
    "wronskian",
    "WronskianField",
    "axial_symmetry_checks",
    "k_invariance",
    "dstar_flatness",
]

TODA_CHART = Chart(
    "toda",
    ("x", "y", "z"),
    ((-1.0, 1.0), (-1.0, 1.0), (0.1, 2.0)),
    singular_loci=(lambda P: P[:, 2],),
    locus_names=("z",),
)


class NotTodaCongruence(ValueError):
    pass


def _pts(p):
    return np.atleast_2d(np.asarray(p, dtype=float))


# -- Toda Ansatz ------------------------------------------------------------------


def toda_residual(u, p):
    """``u_xx + u_yy + (e^u)_zz`` at points ``p`` for a scalar field ``u``."""
    J = u.jet(_pts(p), 2)
    H = J.parts[2]
    uz = J.parts[1][:, 2]
    return H[:, 0, 0] + H[:, 1, 1] + np.exp(J.value) * (H[:, 2, 2] + uz**2)


def build_toda(u, chart=TODA_CHART):
    """``g = e^u (dx^2 + dy^2) + dz^2``, ``omega = -u_z dz``."""

    def metric(X, U):
        e = U.exp()
        one = e.like_constant(np.ones(()))
        zero = e.like_constant(np.zeros(()))
        return stack([e, zero, zero, zero, e, zero, zero, zero, one], (3, 3))

    def omega(X, U):
        uz = U.d()[2]
        zero = uz.like_constant(np.zeros(()))
        return stack([zero, zero, -uz])

    label = getattr(u, "label", "") or "u"
    g = DerivedField(metric, [u], shape=(3, 3), label=f"toda g[{label}]")
    om = DerivedField(omega, [u], shape=(3,), shifts=(1,), label=f"toda omega[{label}]")
    return WeylStructure(chart, g, om, provenance=f"toda:{label}")


# -- congruences -----------------------------------------------------------------


@dataclass
class CongruenceReport:
    divergence: np.ndarray
    shear_norm: np.ndarray
    twist_norm: np.ndarray
    acceleration_norm: np.ndarray
    tau: np.ndarray

    def max_defect(self):
        return float(
            np.max(np.concatenate([self.shear_norm, self.twist_norm, self.acceleration_norm]))
        )


def _field_jet(F, points, order):
    if isinstance(F, Field):
        return F.jet(points, order)
    return F(Jet.coordinates(points, order))


def _norm2(T, ginv):
    return np.sqrt(np.abs(np.einsum("nab,ncd,nac,nbd->n", T, T, ginv, ginv)))


def congruence_decompose(W, chi, p, unit_tol=1e-8):
    """Split ``D chi`` for a unit weightless field ``chi``.

    ``chi`` is a (3,) field or a function of the coordinate jet.
    """
    pts = W.chart.check(_pts(p))
    geo = W.geometry(pts, order=1)
    C = _field_jet(chi, pts, 1)
    c = C.value
    g, ginv = geo.g, geo.ginv
    norm = np.einsum("na,nab,nb->n", c, g, c)
    if np.max(np.abs(norm - 1)) > unit_tol:
        raise ValueError(f"chi is not unit: |<chi,chi> - 1| = {np.max(np.abs(norm - 1)):.3g}")
    # A[k, i] = D_i chi^k for a weight 0 vector
    A = C.d().value + np.einsum("nkij,nj->nki", geo.Gamma.value, c) - np.einsum("ni,nk->nki", geo.omega, c)
    B = np.einsum("njk,nki->nji", g, A)  # B[j, i] = <D_i chi, d_j>
    cflat = np.einsum("nab,nb->na", g, c)
    P = np.eye(3)[None] - np.einsum("nk,nj->nkj", c, cflat)  # projector onto chi-perp
    Bp = np.einsum("naj,nab,nbi->nji", P, B, P)
    gp = np.einsum("naj,nab,nbi->nji", P, g, P)
    div = np.einsum("nkk->n", A)
    accel = np.einsum("nki,ni->nk", A, c)
    sym = 0.5 * (Bp + np.swapaxes(Bp, 1, 2))
    tr = np.einsum("nij,nij->n", ginv, sym)
    shear = sym - 0.5 * tr[:, None, None] * gp
    twist = 0.5 * (Bp - np.swapaxes(Bp, 1, 2))
    return CongruenceReport(
        divergence=div,
        shear_norm=_norm2(shear, ginv),
        twist_norm=_norm2(twist, ginv),
        acceleration_norm=np.sqrt(np.einsum("na,nab,nb->n", accel, g, accel)),
        tau=div / 2,
    )


@dataclass
class TodaStructureField:
    """A Toda structure ``(X, sigma)`` (representatives) at ``point``."""

    X: np.ndarray
    sigma: float
    point: Optional[np.ndarray] = None
    label: str = ""

    @property
    def seed(self):
        return np.concatenate([np.asarray(self.X, dtype=float), [float(self.sigma)]])

    @classmethod
    def from_seed(cls, seed, point=None, label=""):
        seed = np.asarray(seed, dtype=float)
        return cls(seed[:3].copy(), float(seed[3]), None if point is None else np.asarray(point, float), label)


def linearize(W, chi, p, base=None, tol=1e-6, nodes=24):
    """``(X, sigma)`` from a Toda congruence ``chi``, normalised by ``f(base) = 0``.

    The LeBrun-Ward gauge is ``e^{2f} g`` with ``df = omega - 2 tau chi``;
    ``X = e^{-f/2} chi`` and ``sigma = e^{-f/2} tau``.  Returns arrays
    ``X (n, 3)``, ``sigma (n,)``.
    """
    pts = W.chart.check(_pts(p))
    base = pts[0] if base is None else np.asarray(base, dtype=float)
    rep = congruence_decompose(W, chi, pts)
    if rep.max_defect() > tol:
        raise NotTodaCongruence(
            f"not a Toda congruence: shear/twist/acceleration {rep.max_defect():.3g} > {tol}"
        )
    s, wts = np.polynomial.legendre.leggauss(nodes)
    s = 0.5 * (s + 1)
    wts = 0.5 * wts
    f = np.zeros(len(pts))
    for n, q in enumerate(pts):
        d = q - base
        if not np.any(d):
            continue
        line = base + s[:, None] * d
        geo = W.geometry(line, order=1)
        c = _field_jet(chi, line, 0).value
        tau = congruence_decompose(W, chi, line).tau
        cflat = np.einsum("nab,nb->na", geo.g, c)
        df = geo.omega - 2 * tau[:, None] * cflat
        f[n] = np.sum(wts * (df @ d))
    c = _field_jet(chi, pts, 0).value
    scale = np.exp(-f / 2)
    return c * scale[:, None], rep.tau * scale


def delinearize(X, sigma, g):
    """``(chi, mu, tau)`` from representatives; ``g`` the metric at the same points."""
    X = np.atleast_2d(X)
    g = np.asarray(g)
    if g.ndim == 2:
        g = g[None]
    mu = np.einsum("na,nab,nb->n", X, g, X)
    if np.any(mu <= 0):
        raise ValueError("X vanishes")
    r = np.sqrt(mu)
    return X / r[:, None], mu, np.asarray(sigma) / r


# -- the rank-4 system ------------------------------------------------------------


def _assemble(Gamma, om, F, Sg, const=True):
    """``M[n, i, a, b]`` from coefficient arrays (linear in its inputs)."""
    n = Gamma.shape[0]
    M = np.zeros((n, 3, 4, 4))
    M[:, :, :3, :3] = -np.transpose(Gamma, (0, 2, 1, 3)) + 0.5 * om[:, :, None, None] * np.eye(3)
    if const:
        M[:, :, :3, 3] = np.eye(3)[None]
    M[:, :, 3, :3] = -0.5 * np.transpose(F, (0, 2, 1)) - Sg / 6.0
    M[:, :, 3, 3] = 0.5 * om
    return M


def system_matrices(W, points, geo=None):
    geo = geo or W.geometry(_pts(points), order=2, check=False)
    Sg = geo.g * geo.Scal.value[:, None, None]
    return _assemble(geo.Gamma.value, geo.omega, geo.F.value, Sg)


def _system_jet(W, points):
    """Values ``M[n, i]`` and derivatives ``dM[n, j, i] = d_j M_i``."""
    geo = W.geometry(points, order=3, check=False)
    Gm = geo.Gamma
    Om = geo.Om.truncate(1)
    F = geo.F.truncate(1)
    Sg = geo.G.truncate(1) * geo.Scal.truncate(1)
    M = _assemble(Gm.value, Om.value, F.value, Sg.value)
    n = len(points)

    def flat(part):  # (n, ..., 3) -> (3n, ...)
        return np.moveaxis(part, -1, 1).reshape((3 * n,) + part.shape[1:-1])

    dM = _assemble(flat(Gm.parts[1]), flat(Om.parts[1]), flat(F.parts[1]), flat(Sg.parts[1]), const=False)
    return M, dM.reshape(n, 3, 3, 4, 4), geo


def toda_connection(W):
    """Callable ``points -> M`` for the transport engine."""

    def conn(points):
        return system_matrices(W, points)

    return conn


def _gate_ew(W, pts, ew_tol):
    ew = np.max(np.abs(W.geometry(pts, order=2).EW.value))
    if ew > ew_tol:
        raise GateError(f"not Einstein-Weyl: ew_residual {ew:.3g} > {ew_tol}")
    return ew


def toda_system_curvature(W, p, h_loop=1e-2, method="plaquette", ew_tol=1e-6):
    """Curvature ``Omega[n, plane]`` (4x4) for the planes (xy, xz, yz).

    ``method="plaquette"`` uses loop holonomy, ``"jet"`` differentiates the
    coefficient matrices directly.
    """
    pts = W.chart.check(_pts(p))
    if ew_tol is not None:
        _gate_ew(W, pts, ew_tol)
    if method == "jet":
        M, dM, _ = _system_jet(W, pts)
        return jet_curvature(M, dM)
    return plaquette_curvature(toda_connection(W), pts, h_loop)


def transport(W, path, seed, rtol=1e-12, atol=1e-14):
    """Parallel transport of ``seed = (X, s)`` along a polyline."""
    path = np.asarray(path, dtype=float)
    W.chart.check(path)
    P = transport_propagator(toda_connection(W), path[None], rtol, atol)[0]
    return P @ np.asarray(seed, dtype=float)


def _straight_propagators(W, base, points, rtol=1e-12, atol=1e-14):
    points = _pts(points)
    paths = np.stack([np.broadcast_to(base, points.shape), points], axis=1)
    return transport_propagator(toda_connection(W), paths, rtol, atol)


def structure_values(W, structures, points):
    """Transport structures (seeded at a common base point) to ``points``.

    Returns ``Psi[n, k, 4]`` for structure ``k``.
    """
    base = structures[0].point
    seeds = np.stack([s.seed for s in structures], axis=1)  # (4, k)
    P = _straight_propagators(W, base, points)
    return np.transpose(P @ seeds, (0, 2, 1))


@dataclass
class StructureCount:
    upper_bound: int
    confirmed: int
    basis: list
    loop_residual: float
    singular_values: np.ndarray = dc_field(default_factory=lambda: np.zeros(0))
    gap: float = float("inf")
    threshold: float = 0.0
    homothety: list = dc_field(default_factory=list)
    base: Optional[np.ndarray] = None

    def as_dict(self):
        return {
            "upper_bound": int(self.upper_bound),
            "confirmed": int(self.confirmed),
            "loop_residual": float(self.loop_residual),
            "gap": float(self.gap),
            "singular_values": [float(s) for s in self.singular_values],
            "homothety": [float(m) for m in self.homothety],
            "threshold": float(self.threshold),
            "base": [] if self.base is None else [float(v) for v in self.base],
            "basis": [[float(v) for v in b.seed] for b in self.basis],
        }


def default_base(chart):
    """A point well inside the chart: the domain centre, nudged off symmetric values."""
    lo = np.array([a for a, _ in chart.domain])
    hi = np.array([b for _, b in chart.domain])
    return lo + (hi - lo) * np.array([0.45, 0.55, 0.5])


def default_probes(chart, base, radius=0.2):
    offs = radius * np.vstack([np.eye(3), -np.eye(3), [[1, 1, 1], [-1, 1, -1]] / np.sqrt(3)])
    pts = base + offs
    keep = chart.safe_mask(pts, margin=2 * chart.singular_margin)
    return pts[keep]


def _loop_family(chart, base, scales):
    loops = []
    for plane in PLANES:
        for s in scales:
            for sign in (1, -1):
                a = b = sign * s
                loop = rectangle_loop(base, plane, a, b)
                if not chart.safe_mask(loop).all():
                    loop = rectangle_loop(base, plane, -a, -b)
                loops.append(loop)
    return np.array(loops)


NOISE_FLOOR = 1e-10


def toda_structure_count(
    W,
    base=None,
    probes=None,
    h_loop=1e-2,
    kernel_rtol=1e-7,
    loop_tol=1e-6,
    loop_scales=(0.1, 0.2),
    ew_tol=1e-6,
):
    """Count Toda structures through the holonomy of the rank-4 system.

    A singular value of the stacked curvature operators counts as zero when
    it is below ``kernel_rtol`` times the reference scale
    ``max(sigma_max, max_i |M_i(base)|^2)``.
    """
    chart = W.chart
    base = default_base(chart) if base is None else np.asarray(base, dtype=float)
    probes = default_probes(chart, base) if probes is None else _pts(probes)
    pts = chart.check(np.vstack([base, probes]))
    _gate_ew(W, pts, ew_tol)
    conn = toda_connection(W)
    Om = plaquette_curvature(conn, pts, h_loop)  # (n, 3, 4, 4)
    P = _straight_propagators(W, base, pts)
    Pinv = np.linalg.inv(P)
    ops = np.einsum("nab,nqbc,ncd->nqad", Pinv, Om, P).reshape(-1, 4)
    _, sv, Vh = np.linalg.svd(ops)
    M0 = conn(base[None])[0]
    natural = max(np.linalg.norm(M0[i], 2) ** 2 for i in range(3))
    ref = max(sv[0], natural)
    rank = int(np.sum(sv >= kernel_rtol * ref))
    upper = 4 - rank
    ext = np.concatenate([[ref], sv, [0.0]])
    gap = ext[rank] / max(ext[rank + 1], NOISE_FLOOR * ref)
    kernel = Vh[rank:].T  # (4, upper)

    confirmed_basis = np.zeros((4, 0))
    loop_res = 0.0
    if upper:
        loops = _loop_family(chart, base, loop_scales)
        Hol = loop_holonomy(conn, loops)
        A = np.einsum("lab,bk->lak", Hol - np.eye(4), kernel).reshape(-1, upper)
        _, s2, V2 = np.linalg.svd(A, full_matrices=True)
        s2 = np.concatenate([s2, np.zeros(upper - len(s2))])
        ok = s2 < loop_tol
        confirmed_basis = kernel @ V2.T[:, ok]
        if ok.any():
            loop_res = float(np.max(s2[ok]))
    g0 = W.geometry(base[None], order=1).g[0]
    basis = [
        TodaStructureField.from_seed(v, base, label=f"structure {k}")
        for k, v in enumerate(confirmed_basis.T)
    ]
    homothety = [float(b.X @ g0 @ b.X) for b in basis]
    return StructureCount(
        upper_bound=upper,
        confirmed=len(basis),
        basis=basis,
        loop_residual=loop_res,
        singular_values=sv,
        gap=float(gap),
        threshold=kernel_rtol * ref,
        homothety=homothety,
        base=base,
    )


# -- obstructions ------------------------------------------------------------------


def obstruction_orth(W, X, p):
    """``<X, *F>`` (representative) for vector components ``X`` at points ``p``."""
    pts = W.chart.check(_pts(p))
    geo = W.geometry(pts, order=2)
    return np.einsum("na,na->n", np.atleast_2d(X), geo.StarF.value)


def obstruction_cy(W, X, sigma, p):
    """Cotton-York identity residual for a Toda structure at points ``p``.

    Returns ``(residual, null)`` with ``residual_b = Y(X, d_b) - 1/6 (*DS)(X, d_b)
    - sigma (*F)_b`` and ``null = Y(X, X)``.
    """
    pts = W.chart.check(_pts(p))
    geo = W.geometry(pts, order=3)
    X = np.atleast_2d(X)
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), (len(pts),))
    Y = sym_tracefree(geo.CY, geo.g, geo.ginv)
    dS_up = np.einsum("nab,nb->na", geo.ginv, geo.DScal.value)
    star_dS = np.einsum("nabc,nc->nab", geo.eps, dS_up)
    res = (
        np.einsum("na,nab->nb", X, Y)
        - np.einsum("na,nab->nb", X, star_dS) / 6.0
        - sigma[:, None] * geo.StarF.value
    )
    null = np.einsum("na,nab,nb->n", X, Y, X)
    return res, null


# -- symmetries ------------------------------------------------------------------


def _psi_jets(W, base, seeds, points):
    """Jets (order 2) of parallel sections through ``seeds`` at ``points``.

    Returns a list of (4,) jets, one per seed column.
    """
    points = _pts(points)
    P = _straight_propagators(W, base, points)
    M, dM, geo = _system_jet(W, points)
    out = []
    for k in range(seeds.shape[1]):
        psi = P @ seeds[:, k]  # (n, 4)
        d1 = np.einsum("niab,nb->nai", M, psi)
        MM = np.einsum("niab,njbc->nijac", M, M)
        d2 = np.einsum("njiab,nb->naij", dM, psi) + np.einsum("nijac,nc->naij", MM, psi)
        d2 = 0.5 * (d2 + np.swapaxes(d2, 2, 3))
        out.append(Jet([psi, d1, d2]))
    return out, geo


class WronskianField(Field):
    """``K = *(X1 ^ X2)`` as a vector field, with jets to order 2."""

    shape = (3,)
    max_order = 2

    def __init__(self, W, S1, S2, sign=1.0):
        self.W = W
        self.base = np.asarray(S1.point, dtype=float)
        self.seeds = np.stack([S1.seed, S2.seed], axis=1)
        self.sign = sign
        self.label = "wronskian"

    def jet(self, points, order=2):
        if order > 2:
            raise JetOrderError("the Wronskian field supplies order <= 2")
        (J1, J2), geo = _psi_jets(self.W, self.base, self.seeds, points)
        X1 = stack([J1[0], J1[1], J1[2]])
        X2 = stack([J2[0], J2[1], J2[2]])
        Eps = geo.Eps.truncate(2)
        Ginv = geo.Ginv.truncate(2)
        cross = Jet.einsum("abd,a->bd", Eps, X1)
        cross = Jet.einsum("bd,b->d", cross, X2)
        K = Jet.einsum("cd,d->c", Ginv, cross)
        return K.scale(self.sign).truncate(order)


def wronskian(W, S1, S2, degenerate_tol=1e-10):
    """``K = *(X1 ^ X2)``; oriented so its largest component at the base is positive."""
    K = WronskianField(W, S1, S2)
    k0 = K.jet(np.asarray(S1.point)[None], 0).value[0]
    if np.max(np.abs(k0)) < degenerate_tol:
        raise ValueError("degenerate pair: X1 and X2 are parallel")
    if k0[np.argmax(np.abs(k0))] < 0:
        K.sign = -1.0
    return K


@dataclass
class AxialReport:
    divergence: float
    twist: float
    conformal: float
    lie_D: float
    k_norm_min: float

    def as_dict(self):
        return {k: float(v) for k, v in self.__dict__.items()}


def axial_symmetry_checks(W, K, p):
    """Residuals for ``K`` being divergence-free, twist-free, conformal and preserving D.

    ``divergence = tr DK``; ``twist = |*(K^ dK)| / |K|^2``; ``conformal`` is
    the symmetric trace-free part of ``nabla K``; ``lie_D = d tr DK + F(K, .)``.
    """
    pts = W.chart.check(_pts(p))
    geo = W.geometry(pts, order=2)
    Kj = _field_jet(K, pts, 2)
    Gm = geo.Gamma.truncate(1)
    DK = Kj.d().truncate(1) + Jet.einsum("kij,j->ki", Gm, Kj.truncate(1))
    tr = Jet.einsum("ki,ki->", DK, DK.like_constant(np.eye(3)))
    k = Kj.value
    g, ginv = geo.g, geo.ginv
    kflat_j = Jet.einsum("ab,b->a", geo.G.truncate(2), Kj)
    dk = kflat_j.d().value  # dk[a, c] = d_c K_a
    kflat = kflat_j.value
    knorm2 = np.einsum("na,na->n", k, kflat)
    eps_up = geo.Eps.value / (geo.SqrtDet.value**2)[:, None, None, None]
    twist = np.einsum("nabc,na,ncb->n", eps_up, kflat, dk) / knorm2
    # nabla_i K_j
    cov = np.transpose(dk, (0, 2, 1)) - np.einsum("nkij,nk->nij", geo.LC.value, kflat)
    conf = sym_tracefree(cov, g, ginv)
    lie = tr.d().value + np.einsum("na,nab->nb", k, geo.F.value)
    return AxialReport(
        divergence=float(np.max(np.abs(tr.value))),
        twist=float(np.max(np.abs(twist))),
        conformal=float(np.max(np.abs(conf))),
        lie_D=float(np.max(np.abs(lie))),
        k_norm_min=float(np.sqrt(np.min(knorm2))),
    )


def k_invariance(W, K, structure, p):
    """``|L_K X|`` for a Toda structure, ``L_K X = [K, X] - 1/2 lambda X`` with
    ``L_K g = 2 lambda g``."""
    pts = W.chart.check(_pts(p))
    (J,), geo = _psi_jets(W, structure.point, structure.seed[:, None], pts)
    X = J.value[:, :3]
    dX = J.parts[1][:, :3]  # dX[k, i]
    Kj = _field_jet(K, pts, 1)
    k = Kj.value
    dk = Kj.d().value  # dk[k, i] = d_i K^k
    LC = geo.LC.value
    div = np.einsum("nii->n", dk) + np.einsum("niij,nj->n", LC, k)
    lam = div / 3.0
    br = np.einsum("ni,nki->nk", k, dX) - np.einsum("ni,nki->nk", X, dk)
    return np.max(np.abs(br - 0.5 * lam[:, None] * X), axis=1)


def _alpha(geo, Kj):
    k = Kj.value
    DK = Kj.d().value + np.einsum("nkij,nj->nki", geo.Gamma.value, k)
    kflat = np.einsum("nab,nb->na", geo.g, k)
    n2 = np.einsum("na,na->n", k, kflat)
    alpha = np.einsum("nk,nki->ni", kflat, DK) / n2[:, None]
    # alpha ^ K (Y) = alpha(Y) K - <K, Y> alpha#
    alpha_up = np.einsum("nab,nb->na", geo.ginv, alpha)
    form = np.einsum("ni,nk->nki", alpha, k) - np.einsum("ni,nk->nki", kflat, alpha_up)
    return alpha, DK, form


def dstar_flatness(W, K, p, form_tol=1e-6):
    """Curvature of ``D*_X Y = D_X Y - alpha(Y) X`` on weight 1/2 fields orthogonal to K.

    The connection matrices ``M*_i[k, j] = -Gamma^k_ij + 1/2 w_i d^k_j + d^k_i alpha_j``
    are built as order-1 jets from the order-2 jet of ``K``.
    Returns ``(residual, form_defect)`` per point, where ``form_defect`` is
    ``|DK - alpha ^ K|``.
    """
    pts = W.chart.check(_pts(p))
    geo = W.geometry(pts, order=2)
    Kj = _field_jet(K, pts, 2)
    Gm = geo.Gamma.truncate(1)
    DK = Kj.d().truncate(1) + Jet.einsum("kij,j->ki", Gm, Kj.truncate(1))
    kflat = Jet.einsum("ab,b->a", geo.G.truncate(1), Kj.truncate(1))
    n2 = Jet.einsum("a,a->", kflat, Kj.truncate(1))
    alpha = Jet.einsum("k,ki->i", kflat, DK)
    alpha = Jet.einsum("i,->i", alpha, n2.reciprocal())
    eye = Gm.like_constant(np.eye(3))
    Ms = (
        -Gm.transpose(1, 0, 2)
        + Jet.einsum("i,kj->ikj", geo.Om.truncate(1), eye).scale(0.5)
        + Jet.einsum("ik,j->ikj", eye, alpha)
    )
    dM = np.transpose(Ms.d().value, (0, 4, 1, 2, 3))  # dM[n, j, i] = d_j M_i
    Om = jet_curvature(Ms.value, dM)

    _, DKv, form = _alpha(geo, Kj.truncate(1))
    defect = np.max(np.abs(DKv - form), axis=(1, 2))
    if np.max(defect) > form_tol:
        raise ValueError(f"DK is not of the form alpha ^ K (defect {np.max(defect):.3g})")
    res = np.zeros(len(pts))
    for n in range(len(pts)):
        # orthonormal basis of K-perp (with respect to the Euclidean product in the chart)
        Q, _ = np.linalg.qr(np.column_stack([geo.g[n] @ Kj.value[n], np.eye(3)]))
        perp = np.linalg.solve(geo.g[n], Q[:, 1:3])
        res[n] = np.max(np.abs(np.einsum("pab,bk->pak", Om[n], perp)))
    return res, defect
