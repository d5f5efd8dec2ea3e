"""Exact one-step propagation of 2x2 affine linear systems, x' = M x + u.

Written for stiff electrical subsystems whose eigenvalues put explicit
fixed-step schemes outside their stability regions. The update
x+ = expm(M dt) x + int_0^dt expm(M s) ds u is evaluated in closed form from
the eigenvalues of M (quadratic), with series fallbacks near confluence and
near lambda = 0. All complex primitives are spelled out with real math calls
so the compiled kernel can reproduce the identical arithmetic.
"""

from __future__ import annotations

import math

_CONFLUENT_RTOL = 1e-9
_SERIES_CUTOFF = 1e-5


def _cexp(z: complex) -> complex:
    a = math.exp(z.real)
    return complex(a * math.cos(z.imag), a * math.sin(z.imag))


def _csqrt(z: complex) -> complex:
    m = math.hypot(z.real, z.imag)
    if m == 0.0:
        return 0j
    half = 0.5 * math.atan2(z.imag, z.real)
    s = math.sqrt(m)
    return complex(s * math.cos(half), s * math.sin(half))


def _phi(lam: complex, dt: float) -> complex:
    """int_0^dt exp(lam s) ds."""
    z = lam * dt
    if abs(z) < _SERIES_CUTOFF:
        return dt * (1.0 + z / 2.0 + z * z / 6.0 + z * z * z / 24.0)
    return (_cexp(z) - 1.0) / lam


def _psi(lam: complex, dt: float) -> complex:
    """int_0^dt s exp(lam s) ds."""
    z = lam * dt
    if abs(z) < _SERIES_CUTOFF:
        return dt * dt * (0.5 + z / 3.0 + z * z / 8.0 + z * z * z / 30.0)
    e = _cexp(z)
    return (dt * e - (e - 1.0) / lam) / lam


def affine_step_c2(m11: complex, m12: complex, m21: complex, m22: complex,
                   u1: complex, u2: complex, x1: complex, x2: complex,
                   dt: float) -> tuple[complex, complex]:
    """Advance x' = M x + u by dt exactly (M, u constant over the step)."""
    tr = m11 + m22
    det = m11 * m22 - m12 * m21
    disc = _csqrt(tr * tr - 4.0 * det)
    l1 = 0.5 * (tr + disc)
    l2 = 0.5 * (tr - disc)

    if abs(l1 - l2) <= _CONFLUENT_RTOL * (abs(l1) + abs(l2) + 1e-30):
        # repeated eigenvalue: M = lam I + N with N^2 = 0 (Cayley-Hamilton)
        lam = 0.5 * tr
        e = _cexp(lam * dt)
        ph = _phi(lam, dt)
        ps = _psi(lam, dt)
        n11 = m11 - lam
        n22 = m22 - lam
        nx1 = n11 * x1 + m12 * x2
        nx2 = m21 * x1 + n22 * x2
        nu1 = n11 * u1 + m12 * u2
        nu2 = m21 * u1 + n22 * u2
        y1 = e * (x1 + dt * nx1) + ph * u1 + ps * nu1
        y2 = e * (x2 + dt * nx2) + ph * u2 + ps * nu2
        return y1, y2

    e1 = _cexp(l1 * dt)
    e2 = _cexp(l2 * dt)
    f1 = _phi(l1, dt)
    f2 = _phi(l2, dt)
    inv = 1.0 / (l1 - l2)
    # spectral projectors: P1 v = (M v - l2 v) / (l1 - l2), P2 v = v - P1 v
    mx1 = m11 * x1 + m12 * x2
    mx2 = m21 * x1 + m22 * x2
    p1x1 = (mx1 - l2 * x1) * inv
    p1x2 = (mx2 - l2 * x2) * inv
    mu1 = m11 * u1 + m12 * u2
    mu2 = m21 * u1 + m22 * u2
    p1u1 = (mu1 - l2 * u1) * inv
    p1u2 = (mu2 - l2 * u2) * inv
    y1 = e1 * p1x1 + e2 * (x1 - p1x1) + f1 * p1u1 + f2 * (u1 - p1u1)
    y2 = e1 * p1x2 + e2 * (x2 - p1x2) + f1 * p1u2 + f2 * (u2 - p1u2)
    return y1, y2


def affine_step_r2(a11: float, a12: float, a21: float, a22: float,
                   u1: float, u2: float, x1: float, x2: float,
                   dt: float) -> tuple[float, float]:
    """Real 2x2 wrapper: exact step of a real affine system."""
    y1, y2 = affine_step_c2(complex(a11), complex(a12), complex(a21), complex(a22),
                            complex(u1), complex(u2), complex(x1), complex(x2), dt)
    return y1.real, y2.real
