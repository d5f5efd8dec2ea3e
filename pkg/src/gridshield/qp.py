"""Dense convex quadratic programming.

Solves
    minimize    0.5 x' H x + f' x
    subject to  A_eq x = b_eq,  A_in x <= b_in,  lower <= x <= upper

with an over-relaxed operator-splitting (ADMM) iteration on the stacked
constraint form l <= A x <= u, Ruiz diagonal equilibration for conditioning,
and a final active-set polish that solves the reduced KKT system so optimal
solutions carry residuals at machine level rather than ADMM level. Everything
is plain dense numpy; identical inputs give bit-identical outputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import ValidationError

_SIGMA = 1e-6
_RHO = 0.1
_RHO_EQ_SCALE = 1e3
_ALPHA = 1.6
_CHECK_EVERY = 25
_RUIZ_ITERS = 10
_INF = 1e30


class QpStatus(Enum):
    OPTIMAL = "optimal"
    MAX_ITERATIONS = "max_iterations"
    INFEASIBLE = "infeasible"


@dataclass
class QuadraticProgram:
    """Dense QP data. h_matrix must be symmetric PSD; lower <= upper."""

    h_matrix: np.ndarray
    f_vector: np.ndarray
    a_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    a_in: np.ndarray | None = None
    b_in: np.ndarray | None = None
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None

    def __post_init__(self):
        self.h_matrix = np.atleast_2d(np.asarray(self.h_matrix, dtype=float))
        self.f_vector = np.asarray(self.f_vector, dtype=float).ravel()
        n = self.n
        if n == 0:
            self.h_matrix = np.zeros((0, 0))
        if self.h_matrix.shape != (n, n):
            raise ValidationError("h_matrix must be square and match f_vector")
        if n and not np.allclose(self.h_matrix, self.h_matrix.T, atol=1e-10):
            raise ValidationError("h_matrix must be symmetric within 1e-10")
        self.a_eq = _as_matrix(self.a_eq, n)
        self.b_eq = _as_vector(self.b_eq, self.a_eq.shape[0])
        self.a_in = _as_matrix(self.a_in, n)
        self.b_in = _as_vector(self.b_in, self.a_in.shape[0])
        self.lower = (np.full(n, -np.inf) if self.lower is None
                      else np.asarray(self.lower, dtype=float).ravel())
        self.upper = (np.full(n, np.inf) if self.upper is None
                      else np.asarray(self.upper, dtype=float).ravel())
        if self.lower.shape != (n,) or self.upper.shape != (n,):
            raise ValidationError("bound vectors must have length n")
        if np.any(self.lower > self.upper):
            raise ValidationError("lower bound exceeds upper bound")

    @property
    def n(self) -> int:
        return self.f_vector.shape[0]

    def objective(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float)
        return float(0.5 * x @ self.h_matrix @ x + self.f_vector @ x)


@dataclass
class QpSolution:
    x: np.ndarray
    duals_eq: np.ndarray
    duals_in: np.ndarray
    status: QpStatus
    kkt_residuals: tuple[float, float, float]
    iterations: int = 0
    duals_bounds: np.ndarray = field(default_factory=lambda: np.zeros(0))


def _as_matrix(a, n: int) -> np.ndarray:
    if a is None:
        return np.zeros((0, n))
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.size == 0:
        return np.zeros((0, n))
    if a.shape[1] != n:
        raise ValidationError("constraint matrix has wrong column count")
    return a


def _as_vector(b, m: int) -> np.ndarray:
    if b is None:
        b = np.zeros(0)
    b = np.asarray(b, dtype=float).ravel()
    if b.shape != (m,):
        raise ValidationError("constraint vector length mismatch")
    return b


def kkt_residuals(qp: QuadraticProgram, x: np.ndarray, duals_eq: np.ndarray,
                  duals_in: np.ndarray, duals_bounds: np.ndarray | None = None
                  ) -> tuple[float, float, float]:
    """(stationarity, primal feasibility, complementarity) in infinity norms.

    Bound multipliers may be passed explicitly; otherwise stationarity is
    measured on coordinates away from their bounds, which is equivalent for
    sign-correct multipliers.
    """
    n = qp.n
    if n == 0:
        return (0.0, 0.0, 0.0)
    x = np.asarray(x, dtype=float)
    grad = qp.h_matrix @ x + qp.f_vector
    if qp.a_eq.shape[0]:
        grad = grad + qp.a_eq.T @ np.asarray(duals_eq, dtype=float)
    if qp.a_in.shape[0]:
        grad = grad + qp.a_in.T @ np.asarray(duals_in, dtype=float)
    if duals_bounds is not None and np.asarray(duals_bounds).size == n:
        stationarity = float(np.max(np.abs(grad + np.asarray(duals_bounds))))
    else:
        scale = 1.0 + float(np.max(np.abs(x), initial=0.0))
        free = ~(np.isclose(x, qp.lower, atol=1e-9 * scale)
                 | np.isclose(x, qp.upper, atol=1e-9 * scale))
        stationarity = float(np.max(np.abs(grad[free]))) if np.any(free) else 0.0

    primal = 0.0
    if qp.a_eq.shape[0]:
        primal = max(primal, float(np.max(np.abs(qp.a_eq @ x - qp.b_eq))))
    if qp.a_in.shape[0]:
        primal = max(primal, float(np.max(np.maximum(qp.a_in @ x - qp.b_in, 0.0))))
    finite_l = np.isfinite(qp.lower)
    finite_u = np.isfinite(qp.upper)
    if np.any(finite_l):
        primal = max(primal, float(np.max(np.maximum(qp.lower[finite_l] - x[finite_l], 0.0))))
    if np.any(finite_u):
        primal = max(primal, float(np.max(np.maximum(x[finite_u] - qp.upper[finite_u], 0.0))))

    comp = 0.0
    if qp.a_in.shape[0]:
        comp = float(np.max(np.abs(np.asarray(duals_in) * (qp.a_in @ x - qp.b_in))))
    return (stationarity, primal, comp)


def _stack(qp: QuadraticProgram):
    """Stack all constraints as l <= A x <= u (bounds become identity rows)."""
    n = qp.n
    m_eq = qp.a_eq.shape[0]
    m_in = qp.a_in.shape[0]
    blocks, lo, hi = [], [], []
    if m_eq:
        blocks.append(qp.a_eq)
        lo.append(qp.b_eq)
        hi.append(qp.b_eq)
    if m_in:
        blocks.append(qp.a_in)
        lo.append(np.full(m_in, -_INF))
        hi.append(qp.b_in)
    blocks.append(np.eye(n))
    lo.append(np.where(np.isfinite(qp.lower), qp.lower, -_INF))
    hi.append(np.where(np.isfinite(qp.upper), qp.upper, _INF))
    return np.vstack(blocks), np.concatenate(lo), np.concatenate(hi), m_eq, m_in


def _ruiz(h: np.ndarray, a: np.ndarray, f: np.ndarray):
    """Diagonal equilibration of [[H, A'], [A, 0]] plus cost normalization."""
    n = h.shape[1]
    m = a.shape[0]
    d = np.ones(n)
    e = np.ones(m)
    c = 1.0
    for _ in range(_RUIZ_ITERS):
        kn = np.maximum(np.max(np.abs(h), axis=0, initial=0.0),
                        np.max(np.abs(a), axis=0, initial=0.0))
        km = np.max(np.abs(a), axis=1, initial=0.0)
        dn = 1.0 / np.sqrt(np.maximum(kn, 1e-12))
        dm = 1.0 / np.sqrt(np.maximum(km, 1e-12))
        h = dn[:, None] * h * dn[None, :]
        a = dm[:, None] * a * dn[None, :]
        f = dn * f
        d *= dn
        e *= dm
        gamma = 1.0 / max(float(np.mean(np.max(np.abs(h), axis=0, initial=0.0))),
                          float(np.max(np.abs(f), initial=0.0)), 1e-12)
        gamma = min(gamma, 1e6)
        h = gamma * h
        f = gamma * f
        c *= gamma
    return h, a, f, d, e, c


def _unscaled_residuals(qp, a_raw, lo_raw, hi_raw, x, y):
    """Stationarity and worst constraint violation in original units."""
    grad = qp.h_matrix @ x + qp.f_vector + a_raw.T @ y
    r_stat = float(np.max(np.abs(grad))) if grad.size else 0.0
    ax = a_raw @ x
    r_prim = 0.0
    if ax.size:
        over = np.maximum(ax - hi_raw, 0.0)
        under = np.maximum(lo_raw - ax, 0.0)
        r_prim = float(np.max(np.maximum(over, under)))
    return r_stat, r_prim


def _primal_infeasible(a_s, lo, hi, dy) -> bool:
    """Certificate: a dual direction proving the constraint set empty."""
    nrm = float(np.max(np.abs(dy), initial=0.0))
    if nrm <= 1e-12:
        return False
    v = dy / nrm
    if float(np.max(np.abs(a_s.T @ v), initial=0.0)) > 1e-8:
        return False
    if np.any((v > 1e-8) & (hi >= _INF)) or np.any((v < -1e-8) & (lo <= -_INF)):
        return False
    hi_f = np.where(hi >= _INF, 0.0, hi)
    lo_f = np.where(lo <= -_INF, 0.0, lo)
    return float(hi_f @ np.maximum(v, 0.0) + lo_f @ np.minimum(v, 0.0)) < -1e-8


def _polish(qp, a_raw, lo_raw, hi_raw, m_eq, x, y, tolerance):
    """Equality-KKT solve on the detected active set; accepted only when it
    does not regress feasibility/stationarity and multiplier signs agree."""
    n = qp.n
    ax = a_raw @ x
    span = 1.0 + float(np.max(np.abs(ax), initial=0.0))
    atol = max(1e-7, 10.0 * tolerance) * span
    act_lo = (ax - lo_raw) < atol
    act_hi = (hi_raw - ax) < atol
    ineq = np.arange(m_eq, a_raw.shape[0])
    active_ineq = ineq[act_lo[ineq] | act_hi[ineq]]
    rows = np.concatenate([np.arange(m_eq), active_ineq])
    a_act = a_raw[rows]
    b_act = np.where(act_lo[rows] & ~act_hi[rows], lo_raw[rows], hi_raw[rows])
    if m_eq:
        b_act[:m_eq] = lo_raw[:m_eq]

    k = a_act.shape[0]
    kkt = np.zeros((n + k, n + k))
    kkt[:n, :n] = qp.h_matrix + 1e-12 * np.eye(n)
    kkt[:n, n:] = a_act.T
    kkt[n:, :n] = a_act
    rhs = np.concatenate([-qp.f_vector, b_act])
    sol, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
    x_p = sol[:n]
    y_p = np.zeros_like(y)
    y_p[rows] = sol[n:]

    lo_side = act_lo[active_ineq] & ~act_hi[active_ineq]
    mults = y_p[active_ineq]
    sign_tol = 1e-7 * (1.0 + float(np.max(np.abs(mults), initial=0.0)))
    if not np.all(np.where(lo_side, mults <= sign_tol, mults >= -sign_tol)):
        return x, y, False
    old = max(_unscaled_residuals(qp, a_raw, lo_raw, hi_raw, x, y))
    new = max(_unscaled_residuals(qp, a_raw, lo_raw, hi_raw, x_p, y_p))
    if new <= max(old, tolerance):
        y_p[active_ineq] = np.where(lo_side, np.minimum(mults, 0.0), np.maximum(mults, 0.0))
        return x_p, y_p, True
    return x, y, False


def solve(qp: QuadraticProgram, tolerance: float = 1e-8,
          max_iterations: int = 20000, x0: np.ndarray | None = None) -> QpSolution:
    """Solve the QP to the requested KKT tolerance.

    Returns OPTIMAL with residuals <= tolerance, INFEASIBLE when the dual
    divergence certificate holds, or MAX_ITERATIONS with the best iterate and
    its residuals. x0 warm-starts the splitting iteration.
    """
    if tolerance <= 0.0:
        raise ValidationError("tolerance must be > 0")
    n = qp.n
    if n == 0:
        return QpSolution(np.zeros(0), np.zeros(0), np.zeros(0), QpStatus.OPTIMAL,
                          (0.0, 0.0, 0.0))

    a_raw, lo_raw, hi_raw, m_eq, m_in = _stack(qp)
    m = a_raw.shape[0]
    h_s, a_s, f_s, d, e, c = _ruiz(qp.h_matrix.copy(), a_raw.copy(), qp.f_vector.copy())
    lo = np.where(lo_raw <= -_INF, -_INF, e * lo_raw)
    hi = np.where(hi_raw >= _INF, _INF, e * hi_raw)

    rho = np.full(m, _RHO)
    rho[:m_eq] = _RHO * _RHO_EQ_SCALE
    kkt_mat = h_s + _SIGMA * np.eye(n) + a_s.T @ (rho[:, None] * a_s)
    chol = np.linalg.cholesky(kkt_mat)

    if x0 is not None and np.asarray(x0).shape == (n,):
        x = np.asarray(x0, dtype=float) / d
        z = np.clip(a_s @ x, lo, hi)
    else:
        x = np.zeros(n)
        z = np.clip(np.zeros(m), lo, hi)
    y = np.zeros(m)
    y_at_last_check = np.zeros(m)
    best_xy = None
    best_merit = np.inf
    status = QpStatus.MAX_ITERATIONS
    iterations = max_iterations

    for it in range(1, max_iterations + 1):
        rhs = _SIGMA * x - f_s + a_s.T @ (rho * z - y)
        x_t = np.linalg.solve(chol.T, np.linalg.solve(chol, rhs))
        ax_t = a_s @ x_t
        x = _ALPHA * x_t + (1.0 - _ALPHA) * x
        v = _ALPHA * ax_t + (1.0 - _ALPHA) * z + y / rho
        z_new = np.clip(v, lo, hi)
        y = y + rho * (_ALPHA * ax_t + (1.0 - _ALPHA) * z - z_new)
        z = z_new

        if it % _CHECK_EVERY == 0 or it == max_iterations:
            x_u = d * x
            y_u = (e * y) / c
            merit = max(_unscaled_residuals(qp, a_raw, lo_raw, hi_raw, x_u, y_u))
            if merit < best_merit:
                best_merit = merit
                best_xy = (x_u.copy(), y_u.copy())
            if merit <= max(tolerance, 1e-10):
                status = QpStatus.OPTIMAL
                iterations = it
                break
            if it > 200 and _primal_infeasible(a_s, lo, hi, y - y_at_last_check):
                status = QpStatus.INFEASIBLE
                iterations = it
                break
            y_at_last_check = y.copy()

    x_u = d * x
    y_u = (e * y) / c
    if status != QpStatus.INFEASIBLE:
        if best_xy is not None and max(_unscaled_residuals(
                qp, a_raw, lo_raw, hi_raw, x_u, y_u)) > best_merit:
            x_u, y_u = best_xy
        x_u, y_u, _ = _polish(qp, a_raw, lo_raw, hi_raw, m_eq, x_u, y_u, tolerance)

    duals_eq = y_u[:m_eq]
    duals_in = np.maximum(y_u[m_eq:m_eq + m_in], 0.0)
    duals_bounds = y_u[m_eq + m_in:]
    res = kkt_residuals(qp, x_u, duals_eq, duals_in, duals_bounds)
    if status != QpStatus.INFEASIBLE and max(res) <= tolerance:
        status = QpStatus.OPTIMAL
    return QpSolution(x_u, duals_eq, duals_in, status, res, iterations, duals_bounds)
