"""Parallel transport for linear systems ``d_i Psi = M_i(p) Psi``.

A *connection* here is any callable ``conn(points) -> M`` with ``M`` of shape
``(N, 3, m, m)``.  Transport integrates the propagator (an ``m x m`` matrix)
along straight segments with classical RK4 and step-doubling error control;
a batch of polylines with the same number of vertices is advanced together
with a shared step.

Curvature convention: ``Omega_ij = d_i M_j - d_j M_i - [M_i, M_j]``, so a
solution satisfies ``Omega_ij Psi = 0``.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "TransportError",
    "PLANES",
    "transport_propagator",
    "transport",
    "loop_holonomy",
    "plaquette_curvature",
    "jet_curvature",
    "rectangle_loop",
]

PLANES = ((0, 1), (0, 2), (1, 2))

DEFAULT_RTOL = 1e-12
DEFAULT_ATOL = 1e-14


class TransportError(RuntimeError):
    """Step size underflow while integrating a transport system."""


def _rhs(conn, a, b, t, P):
    pts = a + t[:, None] * (b - a) if np.ndim(t) else a + t * (b - a)
    M = conn(pts)  # (B, 3, m, m)
    A = np.einsum("ni,nijk->njk", b - a, M)
    return A @ P


def _rk4(conn, a, b, t, h, P):
    k1 = _rhs(conn, a, b, t, P)
    k2 = _rhs(conn, a, b, t + h / 2, P + (h / 2) * k1)
    k3 = _rhs(conn, a, b, t + h / 2, P + (h / 2) * k2)
    k4 = _rhs(conn, a, b, t + h, P + h * k3)
    return P + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)


def _segment(conn, a, b, P, rtol, atol, h0=0.25, min_step=1e-10):
    t = 0.0
    h = h0
    while t < 1.0:
        h = min(h, 1.0 - t)
        full = _rk4(conn, a, b, t, h, P)
        half = _rk4(conn, a, b, t, h / 2, P)
        half = _rk4(conn, a, b, t + h / 2, h / 2, half)
        err = np.max(np.abs(half - full)) / 15.0
        scale = atol + rtol * max(1.0, np.max(np.abs(half)))
        if err <= scale:
            t += h
            P = half + (half - full) / 15.0
            grow = 2.0 if err == 0 else min(2.0, 0.9 * (scale / err) ** 0.2)
            h *= max(grow, 1.0)
        else:
            h *= max(0.2, 0.9 * (scale / err) ** 0.2)
            if h < min_step:
                raise TransportError(f"step size underflow (h={h:.3g}) near t={t:.6f}")
    return P


def transport_propagator(conn, paths, rtol=DEFAULT_RTOL, atol=DEFAULT_ATOL, m=None):
    """Propagators along a batch of polylines ``paths`` of shape ``(B, V, 3)``.

    Returns ``(B, m, m)`` with ``Psi(end) = P @ Psi(start)``.
    """
    paths = np.asarray(paths, dtype=float)
    if paths.ndim == 2:
        paths = paths[None]
    B = paths.shape[0]
    if m is None:
        m = conn(paths[:1, 0]).shape[-1]
    P = np.broadcast_to(np.eye(m), (B, m, m)).copy()
    for v in range(paths.shape[1] - 1):
        a, b = paths[:, v], paths[:, v + 1]
        if np.all(a == b):
            continue
        P = _segment(conn, a, b, P, rtol, atol)
    return P


def transport(conn, path, seed, rtol=DEFAULT_RTOL, atol=DEFAULT_ATOL):
    """Transport a seed vector (or a batch of seeds as columns) along one path."""
    P = transport_propagator(conn, np.asarray(path)[None], rtol, atol)[0]
    return P @ np.asarray(seed, dtype=float)


def rectangle_loop(p, plane, a, b):
    """Counterclockwise rectangle in ``plane`` with corner ``p`` and sides ``a``, ``b``."""
    i, j = plane
    ei = np.zeros(3)
    ej = np.zeros(3)
    ei[i] = a
    ej[j] = b
    p = np.asarray(p, dtype=float)
    return np.array([p, p + ei, p + ei + ej, p + ej, p])


def _centered_loop(p, plane, h):
    # center -> corner -> around the square -> corner -> center
    i, j = plane
    ei = np.zeros(3)
    ej = np.zeros(3)
    ei[i] = h / 2
    ej[j] = h / 2
    c = p - ei - ej
    return np.array([p, c, c + 2 * ei, c + 2 * ei + 2 * ej, c + 2 * ej, c, p])


def loop_holonomy(conn, loops, rtol=DEFAULT_RTOL, atol=DEFAULT_ATOL):
    return transport_propagator(conn, loops, rtol, atol)


def plaquette_curvature(conn, points, h=1e-2, rtol=DEFAULT_RTOL, atol=DEFAULT_ATOL):
    """Curvature ``Omega[n, plane]`` from holonomy of small centred squares.

    The holonomy defect of a square of side ``h`` is ``h^2 Omega + O(h^4)``;
    steps ``h`` and ``h/2`` are combined by Richardson extrapolation.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    loops = []
    for p in points:
        for plane in PLANES:
            loops.append(_centered_loop(p, plane, h))
            loops.append(_centered_loop(p, plane, h / 2))
    Hol = loop_holonomy(conn, np.array(loops), rtol, atol)
    m = Hol.shape[-1]
    Hol = Hol.reshape(points.shape[0], len(PLANES), 2, m, m)
    eye = np.eye(m)
    coarse = (Hol[:, :, 0] - eye) / h**2
    fine = (Hol[:, :, 1] - eye) / (h / 2) ** 2
    return (4 * fine - coarse) / 3


def jet_curvature(M, dM):
    """``Omega[n, plane]`` from values ``M[n, i]`` and derivatives ``dM[n, j, i] = d_j M_i``."""
    out = []
    for i, j in PLANES:
        out.append(dM[:, i, j] - dM[:, j, i] - (M[:, i] @ M[:, j] - M[:, j] @ M[:, i]))
    return np.stack(out, axis=1)
