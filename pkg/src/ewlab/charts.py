"""Coordinate charts, field evaluation and the finite-difference jet engine.

Fields come in two flavours:

* analytic fields are python functions of a coordinate :class:`~ewlab.jets.Jet`
  and therefore carry exact partials (all built-in catalog fields);
* numeric fields are plain functions of an ``(N, 3)`` point array; their jets
  are produced by :func:`fd_jet` (4th-order central differences).

Both expose ``field.jet(points, order)`` returning a :class:`Jet`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import expr as _expr
from .jets import Jet, sym_axes

__all__ = [
    "DomainError",
    "JetOrderError",
    "Chart",
    "Field",
    "AnalyticField",
    "NumericField",
    "DerivedField",
    "builtin_field",
    "ScalarFieldSpec",
    "parse_expression",
    "eval_jet",
    "fd_jet",
    "convergence_order",
    "ConvergenceEstimate",
    "sample_points",
    "DEFAULT_STEP",
    "DEFAULT_MARGIN",
]

DEFAULT_STEP = 1e-3
DEFAULT_MARGIN = 0.05

# 5-point first-derivative stencil: offsets and weights (divide by 12 h)
_D1_OFFSETS = (-2, -1, 1, 2)
_D1_WEIGHTS = (1.0, -8.0, 8.0, -1.0)
# 5-point second-derivative stencil (divide by 12 h^2)
_D2_OFFSETS = (-2, -1, 0, 1, 2)
_D2_WEIGHTS = (-1.0, 16.0, -30.0, 16.0, -1.0)


class DomainError(ValueError):
    """A point lies outside the chart domain or inside a singular margin."""


class JetOrderError(ValueError):
    """A field cannot supply derivatives of the requested order."""


@dataclass(frozen=True)
class Chart:
    """Named coordinate system on a closed box with singular-locus predicates.

    ``singular_loci`` are functions of an ``(N, 3)`` array returning an
    ``(N,)`` distance-like quantity; a point is safe when every predicate is
    at least ``singular_margin``.
    """

    name: str
    coords: tuple
    domain: tuple
    singular_margin: float = DEFAULT_MARGIN
    singular_loci: tuple = ()
    locus_names: tuple = ()
    orientation: int = 1

    def __post_init__(self):
        if len(self.coords) != 3 or len(self.domain) != 3:
            raise ValueError("charts are three dimensional")
        for lo, hi in self.domain:
            if not lo < hi:
                raise ValueError(f"empty domain interval [{lo}, {hi}]")
        if not self.singular_margin > 0:
            raise ValueError("singular_margin must be positive")
        if self.orientation not in (1, -1):
            raise ValueError("orientation must be +1 or -1")

    def with_domain(self, **intervals):
        dom = list(self.domain)
        for name, iv in intervals.items():
            dom[self.coords.index(name)] = tuple(float(v) for v in iv)
        return Chart(
            self.name,
            self.coords,
            tuple(dom),
            self.singular_margin,
            self.singular_loci,
            self.locus_names,
            self.orientation,
        )

    def locus_values(self, points):
        points = np.atleast_2d(points)
        with np.errstate(all="ignore"):
            vals = [np.asarray(f(points), dtype=float) for f in self.singular_loci]
        # a locus that cannot be evaluated counts as violated
        return [np.where(np.isfinite(v), v, -np.inf) for v in vals]

    def safe_mask(self, points, margin=None):
        margin = self.singular_margin if margin is None else margin
        points = np.atleast_2d(np.asarray(points, dtype=float))
        ok = np.ones(points.shape[0], dtype=bool)
        for i, (lo, hi) in enumerate(self.domain):
            ok &= (points[:, i] >= lo) & (points[:, i] <= hi)
        for vals in self.locus_values(points):
            ok &= vals >= margin
        return ok

    def check(self, points):
        """Raise :class:`DomainError` unless every point is margin-safe."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        for i, (lo, hi) in enumerate(self.domain):
            bad = (points[:, i] < lo) | (points[:, i] > hi)
            if bad.any():
                p = points[np.argmax(bad)]
                raise DomainError(
                    f"point {p.tolist()} outside {self.name} domain: "
                    f"{self.coords[i]} not in [{lo}, {hi}]"
                )
        for name, vals in zip(self._locus_labels(), self.locus_values(points)):
            bad = vals < self.singular_margin
            if bad.any():
                p = points[np.argmax(bad)]
                raise DomainError(
                    f"point {p.tolist()} within margin {self.singular_margin} of "
                    f"singular locus {name} = 0 (value {vals[np.argmax(bad)]:.3g})"
                )
        return points

    def _locus_labels(self):
        labels = list(self.locus_names)
        labels += [f"locus{i}" for i in range(len(labels), len(self.singular_loci))]
        return labels


def sample_points(chart, n, seed=0, margin=None):
    """Uniform probes in the margin-shrunk domain box that avoid singular loci.

    Uses numpy's PCG64 generator seeded with ``seed``; identical arguments
    give identical probe sets on every platform.
    """
    if n < 1:
        raise ValueError("probe count must be at least 1")
    margin = chart.singular_margin if margin is None else margin
    rng = np.random.Generator(np.random.PCG64(seed))
    lo = np.array([a + margin for a, _ in chart.domain])
    hi = np.array([b - margin for _, b in chart.domain])
    if np.any(hi <= lo):
        raise DomainError(f"domain of {chart.name} is narrower than twice the margin")
    out = []
    tries = 0
    while sum(len(b) for b in out) < n:
        batch = lo + (hi - lo) * rng.random((max(n, 16), 3))
        keep = batch[chart.safe_mask(batch, margin=2 * chart.singular_margin)]
        out.append(keep)
        tries += 1
        if tries > 1000:
            raise DomainError(f"could not sample safe points in {chart.name}")
    return np.concatenate(out)[:n]


# -- fields -------------------------------------------------------------------


class Field:
    """Tensor field on a chart; subclasses implement :meth:`jet`."""

    shape: tuple = ()
    max_order: int = 3

    def jet(self, points, order=3):
        raise NotImplementedError

    def __call__(self, points):
        return self.jet(np.atleast_2d(points), 0).value


class AnalyticField(Field):
    """Field given by a function of the coordinate jet (exact partials)."""

    def __init__(self, fn, shape=(), max_order=3, label=None):
        self.fn = fn
        self.shape = tuple(shape)
        self.max_order = max_order
        self.label = label

    def jet(self, points, order=3):
        if order > self.max_order:
            raise JetOrderError(f"{self.label or 'field'} supplies order <= {self.max_order}")
        X = Jet.coordinates(np.atleast_2d(points), order)
        out = self.fn(X)
        if not isinstance(out, Jet):
            out = X.like_constant(np.broadcast_to(out, self.shape))
        return out.truncate(order)


class NumericField(Field):
    """Field given by a numpy function of points; partials by finite differences."""

    def __init__(self, fn, shape=(), step=DEFAULT_STEP, label=None):
        self.fn = fn
        self.shape = tuple(shape)
        self.step = step
        self.label = label

    def jet(self, points, order=3):
        if order > self.max_order:
            raise JetOrderError(f"finite differences supply order <= {self.max_order}")
        return fd_jet(self.fn, np.atleast_2d(points), order, self.step)


class DerivedField(Field):
    """Field computed from other fields' jets by jet arithmetic.

    ``fn`` receives the coordinate jet followed by the source jets; source
    ``s`` is requested at order ``order + shifts[s]`` (a shift of 1 is needed
    when ``fn`` differentiates that source).
    """

    def __init__(self, fn, sources, shape=(), shifts=None, label=None):
        self.fn = fn
        self.sources = tuple(sources)
        self.shape = tuple(shape)
        self.shifts = tuple(shifts) if shifts is not None else (0,) * len(self.sources)
        self.max_order = min([3] + [s.max_order - k for s, k in zip(self.sources, self.shifts)])
        self.label = label

    def jet(self, points, order=3):
        if order > self.max_order:
            raise JetOrderError(
                f"{self.label or 'derived field'} supplies order <= {self.max_order}"
            )
        points = np.atleast_2d(points)
        src = [s.jet(points, order + k) for s, k in zip(self.sources, self.shifts)]
        X = Jet.coordinates(points, order)
        out = self.fn(X, *src)
        if not isinstance(out, Jet):
            out = X.like_constant(np.broadcast_to(out, self.shape))
        return out.truncate(order)


@dataclass(frozen=True)
class ScalarFieldSpec(Field):
    """Scalar field: a built-in name with analytic partials, or a parsed tree.

    Parsed trees use finite differences unless ``analytic`` is supplied.
    """

    source: object
    coords: tuple
    analytic: Optional[Callable] = None
    step: float = DEFAULT_STEP
    label: str = ""
    method: Optional[str] = None  # default jet method: "analytic", "fd" or "ad"

    shape = ()

    @property
    def max_order(self):
        return 3

    @property
    def is_analytic(self):
        return self.analytic is not None

    def _numeric(self, points):
        env = {c: points[:, i] for i, c in enumerate(self.coords)}
        if isinstance(self.source, str):
            raise TypeError("built-in fields are evaluated through their jets")
        val = self.source.evaluate(env)
        return np.broadcast_to(np.asarray(val, dtype=float), points.shape[:1]).copy()

    def jet(self, points, order=3, method=None):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        method = method or self.method or ("analytic" if self.is_analytic else "fd")
        if method == "analytic":
            if self.analytic is None:
                raise JetOrderError("no analytic partials for this field")
            X = Jet.coordinates(points, order)
            out = self.analytic(X)
            if not isinstance(out, Jet):
                out = X.like_constant(np.broadcast_to(out, ()))
            return out.truncate(order)
        if method == "ad":
            X = Jet.coordinates(points, order)
            env = {c: X[i] for i, c in enumerate(self.coords)}
            out = self.source.evaluate(env)
            if not isinstance(out, Jet):
                out = X.like_constant(out)
            return out
        return fd_jet(self._numeric, points, order, self.step)

    def values(self, points):
        return self.jet(points, 0).value


def builtin_field(name, coords, fn):
    """Scalar field with closed-form partials from jet arithmetic."""
    return ScalarFieldSpec(source=name, coords=tuple(coords), analytic=fn, label=name)


def parse_expression(text, chart, method=None):
    """Parse a user expression into a :class:`ScalarFieldSpec` on ``chart``.

    Jets come from finite differences unless ``method="ad"`` asks for exact
    jet arithmetic on the parsed tree.
    """
    tree = _expr.parse(text, chart.coords)
    return ScalarFieldSpec(source=tree, coords=tuple(chart.coords), label=text, method=method)


# -- finite differences -----------------------------------------------------


def _steps(points, step):
    return step * np.maximum(1.0, np.abs(points))


def _fd_grad(fn, points, h):
    f0 = np.asarray(fn(points))
    grads = []
    for i in range(3):
        acc = 0.0
        for off, w in zip(_D1_OFFSETS, _D1_WEIGHTS):
            q = points.copy()
            q[:, i] += off * h[:, i]
            acc = acc + w * np.asarray(fn(q))
        grads.append(acc / _bshape(12.0 * h[:, i], f0))
    return f0, np.stack(grads, axis=-1)


def _bshape(v, like):
    return v.reshape(v.shape + (1,) * (like.ndim - 1))


def _fd_hess(fn, points, h):
    f0 = np.asarray(fn(points))
    H = np.zeros(f0.shape + (3, 3))
    for i in range(3):
        acc = 0.0
        for off, w in zip(_D2_OFFSETS, _D2_WEIGHTS):
            if off == 0:
                acc = acc + w * f0
                continue
            q = points.copy()
            q[:, i] += off * h[:, i]
            acc = acc + w * np.asarray(fn(q))
        H[..., i, i] = acc / _bshape(12.0 * h[:, i] ** 2, f0)
    for i in range(3):
        for j in range(i + 1, 3):
            acc = 0.0
            for oi, wi in zip(_D1_OFFSETS, _D1_WEIGHTS):
                for oj, wj in zip(_D1_OFFSETS, _D1_WEIGHTS):
                    q = points.copy()
                    q[:, i] += oi * h[:, i]
                    q[:, j] += oj * h[:, j]
                    acc = acc + wi * wj * np.asarray(fn(q))
            H[..., i, j] = H[..., j, i] = acc / _bshape(144.0 * h[:, i] * h[:, j], f0)
    return H


def fd_jet(fn, points, order=3, step=DEFAULT_STEP):
    """Jet of ``fn`` by 5-point central differences.

    First and second derivatives use the 4th-order stencils; third
    derivatives apply the first-derivative stencil to the finite-difference
    hessian. The step is ``step * max(1, |x_i|)`` per coordinate.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    h = _steps(points, step)
    f0 = np.asarray(fn(points), dtype=float)
    parts = [f0]
    if order >= 1:
        parts.append(_fd_grad(fn, points, h)[1])
    if order >= 2:
        parts.append(_fd_hess(fn, points, h))
    if order >= 3:
        thirds = []
        for k in range(3):
            acc = 0.0
            for off, w in zip(_D1_OFFSETS, _D1_WEIGHTS):
                q = points.copy()
                q[:, k] += off * h[:, k]
                acc = acc + w * _fd_hess(fn, q, h)
            thirds.append(acc / _bshape(12.0 * h[:, k], acc))
        parts.append(sym_axes(np.stack(thirds, axis=-1), 3))
    if order > 3:
        raise JetOrderError("finite differences supply order <= 3")
    for p in parts:
        if not np.all(np.isfinite(p)):
            raise DomainError("non-finite value in finite-difference jet")
    return Jet(parts)


def eval_jet(field, chart, p, method=None):
    """Value, gradient, hessian and third derivatives of a scalar field at ``p``.

    Analytic partials are used when the field has them; otherwise (or with
    ``method="fd"``) central finite differences.
    """
    pts = chart.check(np.asarray(p, dtype=float).reshape(1, 3))
    if isinstance(field, ScalarFieldSpec):
        jet = field.jet(pts, 3, method=method)
    elif method == "fd":
        jet = fd_jet(field, pts, 3)
    else:
        jet = field.jet(pts, 3)
    if not np.isfinite(jet.value).all():
        raise DomainError(f"non-finite field value at {list(p)}")
    return jet


# -- convergence ----------------------------------------------------------------


@dataclass(frozen=True)
class ConvergenceEstimate:
    status: str  # "ok" or "saturated"
    order: Optional[float]
    errors: tuple

    def __float__(self):
        if self.order is None:
            raise ValueError("convergence estimate is saturated")
        return float(self.order)


def convergence_order(field, chart, p, h=0.05, floor=1e-12):
    """Empirical order of the first-derivative stencil at ``p``.

    Errors at ``h`` and ``h/2`` are measured against analytic partials when
    available, otherwise against a Richardson-refined reference built from
    steps ``h/4`` and ``h/8``. Errors below ``floor`` (relative to the field
    scale) mean the scheme is exact there: status ``"saturated"``.
    """
    pts = chart.check(np.asarray(p, dtype=float).reshape(1, 3))
    fn = field._numeric if isinstance(field, ScalarFieldSpec) else field
    if isinstance(field, ScalarFieldSpec) and field.is_analytic:
        fn = lambda q: field.jet(q, 0).value  # noqa: E731
        ref = field.jet(pts, 1).parts[1][0]
    else:
        d4 = _fd_grad(fn, pts, np.full((1, 3), h / 4))[1][0]
        d8 = _fd_grad(fn, pts, np.full((1, 3), h / 8))[1][0]
        ref = (16 * d8 - d4) / 15
    # check the stencil footprint stays inside the safe region
    for i in range(3):
        for off in (-2, 2):
            q = pts.copy()
            q[:, i] += off * h
            chart.check(q)
    e1 = np.max(np.abs(_fd_grad(fn, pts, np.full((1, 3), h))[1][0] - ref))
    e2 = np.max(np.abs(_fd_grad(fn, pts, np.full((1, 3), h / 2))[1][0] - ref))
    scale = max(1.0, float(np.max(np.abs(ref))))
    if e2 < floor * scale or e1 < floor * scale:
        return ConvergenceEstimate("saturated", None, (float(e1), float(e2)))
    return ConvergenceEstimate("ok", math.log2(e1 / e2), (float(e1), float(e2)))
