r"""Truncated Taylor jets of tensor-valued fields in three variables.

A :class:`Jet` stores a field together with its partial derivatives up to a
fixed order, evaluated at a batch of points. Part ``k`` has shape
``(npts, *shape, 3, ..., 3)`` with ``k`` trailing derivative axes, symmetric
under permutation of those axes. Arithmetic propagates derivatives exactly
(Leibniz rule for products, Faa di Bruno for scalar functions), so a field
written in jet arithmetic carries closed-form partials for free.

Example::

    X = Jet.coordinates(np.array([[0.3, 0.7, 0.0]]), order=3)
    f = X[0].exp() * X[1].sin()
    f.parts[2]      # hessian, shape (1, 3, 3)
"""

from __future__ import annotations

import itertools
from math import comb

import numpy as np

__all__ = ["Jet", "MAX_ORDER", "stack", "inv3", "det3", "sym_axes"]

MAX_ORDER = 3

_DERIV_LETTERS = "PQRS"


def sym_axes(arr, k):
    """Average ``arr`` over all permutations of its last ``k`` axes."""
    if k <= 1:
        return arr
    n = arr.ndim
    lead = list(range(n - k))
    tail = list(range(n - k, n))
    acc = np.zeros_like(arr)
    perms = list(itertools.permutations(tail))
    for perm in perms:
        acc = acc + np.transpose(arr, lead + list(perm))
    return acc / len(perms)


def _pad_tensor(arr, ntensor, target, k):
    """Insert singleton tensor axes so ``arr`` broadcasts against ``target`` tensor rank."""
    extra = target - ntensor
    if extra == 0:
        return arr
    shape = arr.shape
    return arr.reshape(shape[:1] + (1,) * extra + shape[1:])


class Jet:
    """Batched tensor-valued jet; see module docstring."""

    __array_priority__ = 100

    def __init__(self, parts):
        self.parts = [np.asarray(p, dtype=float) for p in parts]
        if len(self.parts) - 1 > MAX_ORDER:
            raise ValueError(f"jet order above {MAX_ORDER} not supported")

    # -- construction -----------------------------------------------------
    @classmethod
    def coordinates(cls, points, order=MAX_ORDER):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        n = points.shape[0]
        parts = [points.copy()]
        if order >= 1:
            parts.append(np.broadcast_to(np.eye(3), (n, 3, 3)).copy())
        for k in range(2, order + 1):
            parts.append(np.zeros((n, 3) + (3,) * k))
        return cls(parts)

    @classmethod
    def constant(cls, value, npts, order):
        value = np.asarray(value, dtype=float)
        base = np.broadcast_to(value, (npts,) + value.shape).copy()
        parts = [base]
        for k in range(1, order + 1):
            parts.append(np.zeros(base.shape + (3,) * k))
        return cls(parts)

    def like_constant(self, value):
        return Jet.constant(value, self.npts, self.order)

    # -- structure ----------------------------------------------------------
    @property
    def order(self):
        return len(self.parts) - 1

    @property
    def npts(self):
        return self.parts[0].shape[0]

    @property
    def shape(self):
        return self.parts[0].shape[1:]

    @property
    def value(self):
        return self.parts[0]

    def truncate(self, order):
        if order > self.order:
            raise ValueError(f"cannot raise jet order {self.order} to {order}")
        return Jet(self.parts[: order + 1])

    def d(self):
        """Derivative jet; the new trailing tensor axis is the derivative index."""
        if self.order < 1:
            raise ValueError("jet of order 0 has no derivative")
        return Jet(self.parts[1:])

    def __getitem__(self, idx):
        if not isinstance(idx, tuple):
            idx = (idx,)
        return Jet([p[(slice(None),) + idx] for p in self.parts])

    def transpose(self, *axes):
        nt = len(self.shape)
        out = []
        for k, p in enumerate(self.parts):
            perm = [0] + [a + 1 for a in axes] + list(range(nt + 1, nt + 1 + k))
            out.append(np.transpose(p, perm))
        return Jet(out)

    def __repr__(self):
        return f"Jet(shape={self.shape}, order={self.order}, npts={self.npts})"

    # -- linear operations --------------------------------------------------
    def _coerce(self, other):
        if isinstance(other, Jet):
            return other
        return Jet.constant(other, self.npts, self.order)

    def __add__(self, other):
        other = self._coerce(other)
        k = min(self.order, other.order)
        nt = max(len(self.shape), len(other.shape))
        out = []
        for j in range(k + 1):
            a = _pad_tensor(self.parts[j], len(self.shape), nt, j)
            b = _pad_tensor(other.parts[j], len(other.shape), nt, j)
            out.append(a + b)
        return Jet(out)

    __radd__ = __add__

    def __neg__(self):
        return Jet([-p for p in self.parts])

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def scale(self, c):
        return Jet([c * p for p in self.parts])

    # -- products -------------------------------------------------------------
    def __mul__(self, other):
        if not isinstance(other, Jet):
            c = np.asarray(other, dtype=float)
            if c.ndim == 0:
                return self.scale(float(c))
            other = self._coerce(other)
        return _elementwise_product(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, Jet):
            c = np.asarray(other, dtype=float)
            if c.ndim == 0:
                return self.scale(1.0 / float(c))
            other = self._coerce(other)
        return self * other.reciprocal()

    def __rtruediv__(self, other):
        return self._coerce(other) * self.reciprocal()

    def __pow__(self, p):
        p = float(p)
        if p == int(p) and p >= 0:
            n = int(p)
            if n == 0:
                return self.like_constant(np.ones(self.shape))
            out = self
            for _ in range(n - 1):
                out = out * self
            return out
        if 2 * p == int(2 * p):
            # half-integer powers via sqrt composition
            root = self.sqrt()
            n = int(abs(2 * p))
            out = root ** n
            return out.reciprocal() if p < 0 else out
        u = self.value
        return self.apply(
            u ** p,
            p * u ** (p - 1),
            p * (p - 1) * u ** (p - 2),
            p * (p - 1) * (p - 2) * u ** (p - 3),
        )

    # -- scalar functions -------------------------------------------------
    def apply(self, f0, f1, f2, f3):
        """Compose an elementwise function given its derivatives at ``value``."""
        u = self.parts
        out = [np.asarray(f0, dtype=float) * np.ones_like(u[0])]
        if self.order >= 1:
            out.append(f1[..., None] * u[1])
        if self.order >= 2:
            u1 = u[1]
            out.append(
                f2[..., None, None] * u1[..., :, None] * u1[..., None, :]
                + f1[..., None, None] * u[2]
            )
        if self.order >= 3:
            u1, u2 = u[1], u[2]
            ccc = u1[..., :, None, None] * u1[..., None, :, None] * u1[..., None, None, :]
            t = u1[..., :, None, None] * u2[..., None, :, :]
            nd = t.ndim
            swap_ij = list(range(nd - 3)) + [nd - 2, nd - 3, nd - 1]
            swap_ik = list(range(nd - 3)) + [nd - 1, nd - 2, nd - 3]
            mixed = t + np.transpose(t, swap_ij) + np.transpose(t, swap_ik)
            out.append(
                f3[..., None, None, None] * ccc
                + f2[..., None, None, None] * mixed
                + f1[..., None, None, None] * u[3]
            )
        return Jet(out)

    def reciprocal(self):
        u = self.value
        return self.apply(1.0 / u, -1.0 / u**2, 2.0 / u**3, -6.0 / u**4)

    def exp(self):
        e = np.exp(self.value)
        return self.apply(e, e, e, e)

    def log(self):
        u = self.value
        return self.apply(np.log(u), 1.0 / u, -1.0 / u**2, 2.0 / u**3)

    def sqrt(self):
        u = self.value
        s = np.sqrt(u)
        return self.apply(s, 0.5 / s, -0.25 / (s * u), 0.375 / (s * u * u))

    def sin(self):
        s, c = np.sin(self.value), np.cos(self.value)
        return self.apply(s, c, -s, -c)

    def cos(self):
        s, c = np.sin(self.value), np.cos(self.value)
        return self.apply(c, -s, -c, s)

    def tan(self):
        t = np.tan(self.value)
        sec2 = 1.0 + t * t
        return self.apply(t, sec2, 2 * t * sec2, sec2 * (2 * sec2 + 4 * t * t))

    def sinh(self):
        s, c = np.sinh(self.value), np.cosh(self.value)
        return self.apply(s, c, s, c)

    def cosh(self):
        s, c = np.sinh(self.value), np.cosh(self.value)
        return self.apply(c, s, c, s)

    def arctan(self):
        u = self.value
        q = 1.0 / (1.0 + u * u)
        return self.apply(np.arctan(u), q, -2 * u * q * q, (6 * u * u - 2) * q**3)

    # -- contractions -------------------------------------------------------
    @staticmethod
    def einsum(spec, a, b):
        """Contract two jets over tensor indices, e.g. ``Jet.einsum("ij,j->i", g, w)``.

        Index letters must be lowercase; the batch and derivative axes are
        handled internally.
        """
        if not isinstance(a, Jet):
            a = b.like_constant(a)
        if not isinstance(b, Jet):
            b = a.like_constant(b)
        ins, out = spec.split("->")
        sa, sb = ins.split(",")
        k = min(a.order, b.order)
        parts = []
        for m in range(k + 1):
            acc = None
            for j in range(m + 1):
                da = _DERIV_LETTERS[:j]
                db = _DERIV_LETTERS[j:m]
                term = np.einsum(
                    f"A{sa}{da},A{sb}{db}->A{out}{_DERIV_LETTERS[:m]}",
                    a.parts[j],
                    b.parts[m - j],
                )
                term = comb(m, j) * term
                acc = term if acc is None else acc + term
            parts.append(sym_axes(acc, m))
        return Jet(parts)


def _elementwise_product(a, b):
    k = min(a.order, b.order)
    nt = max(len(a.shape), len(b.shape))
    parts = []
    for m in range(k + 1):
        acc = None
        for j in range(m + 1):
            pa = _pad_tensor(a.parts[j], len(a.shape), nt, j)
            pb = _pad_tensor(b.parts[m - j], len(b.shape), nt, m - j)
            pa = pa.reshape(pa.shape + (1,) * (m - j))
            pb = pb.reshape(pb.shape[: pb.ndim - (m - j)] + (1,) * j + pb.shape[pb.ndim - (m - j):])
            term = comb(m, j) * (pa * pb)
            acc = term if acc is None else acc + term
        parts.append(sym_axes(acc, m))
    return Jet(parts)


def stack(jets, shape=None):
    """Assemble scalar (or equal-shaped) jets into one jet along new leading tensor axes."""
    order = min(j.order for j in jets)
    parts = []
    for k in range(order + 1):
        arr = np.stack([j.parts[k] for j in jets], axis=1)
        if shape is not None:
            n = arr.shape[0]
            arr = arr.reshape((n,) + tuple(shape) + arr.shape[2:])
        parts.append(arr)
    return Jet(parts)


def inv3(G):
    """Inverse of a matrix-valued jet (shape ``(n, n)``)."""
    Gi = np.linalg.inv(G.parts[0])
    inv_parts = [Gi]
    for m in range(1, G.order + 1):
        acc = None
        for j in range(1, m + 1):
            term = np.einsum(
                f"Aik{_DERIV_LETTERS[:j]},Akj{_DERIV_LETTERS[j:m]}->Aij{_DERIV_LETTERS[:m]}",
                G.parts[j],
                inv_parts[m - j],
            )
            term = comb(m, j) * term
            acc = term if acc is None else acc + term
        acc = sym_axes(acc, m)
        inv_parts.append(-np.einsum(f"Aik,Akj{_DERIV_LETTERS[:m]}->Aij{_DERIV_LETTERS[:m]}", Gi, acc))
    return Jet(inv_parts)


def det3(G):
    """Determinant of a 3x3 matrix-valued jet."""
    g = [[G[i, j] for j in range(3)] for i in range(3)]
    return (
        g[0][0] * (g[1][1] * g[2][2] - g[1][2] * g[2][1])
        - g[0][1] * (g[1][0] * g[2][2] - g[1][2] * g[2][0])
        + g[0][2] * (g[1][0] * g[2][1] - g[1][1] * g[2][0])
    )
