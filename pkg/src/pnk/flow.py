"""Adaptive integration of flows and variational (tangent) flows.

The stepper is an embedded explicit Runge-Kutta 5(4) pair with PI step
control (scipy's RK45), run at rtol = tol and atol = tol / 100 so the
default tol = 1e-10 lands at the (1e-10, 1e-12) pair. Monodromy spectra
downstream feed eigenvalue gaps, so integration error has to sit well
below them; tolerances are per-call arguments everywhere.

Variational matrices are integrated jointly with the state (dimension
n + n^2) rather than by differencing repeated flows: differencing a
tolerance-controlled integrator is noise limited, while the joint system
inherits the step control.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .core import Field, VectorFieldFamily, as_params, as_point, wrap_angles
from .errors import Escape, NoConvergence, NonFinite, SingularGeometry, StepFailure

DEFAULT_TOL = 1e-10
ATOL_FACTOR = 1e-2
RETURN_MAX_ITER = 25

# Below this, a requested flow time is treated as zero (no integration).
TINY_TIME = 1e-14


@dataclass(frozen=True)
class FlowResult:
    """Endpoint of an adaptive flow integration.

    ``est_error`` is the local error budget the controller enforced at the
    endpoint (atol + rtol * |endpoint|_inf); the global error is not
    observable from a single run.
    """

    endpoint: np.ndarray
    steps_taken: int
    est_error: float


@dataclass(frozen=True)
class VariationalResult:
    """Flow endpoint together with the derivative of the time-t map."""

    endpoint: np.ndarray
    tangent: np.ndarray
    steps_taken: int
    est_error: float


def _check_state(x, chart_radius):
    if not np.all(np.isfinite(x)):
        raise NonFinite("trajectory left the finite chart (inf/nan state)")
    if chart_radius is not None and np.max(np.abs(x)) > chart_radius:
        raise Escape(f"trajectory exceeded chart radius {chart_radius}")


def _run(rhs, y0, t, rtol, atol):
    sol = solve_ivp(rhs, (0.0, t), y0, method="RK45", rtol=rtol, atol=atol)
    if sol.status != 0:
        last = sol.y[:, -1] if sol.y.size else y0
        if not np.all(np.isfinite(last)):
            raise NonFinite(f"integration blew up: {sol.message}")
        raise StepFailure(f"integration failed: {sol.message}")
    return sol


def integrate_flow(field: Field, x0, eps, t: float,
                   tol: float = DEFAULT_TOL) -> FlowResult:
    """Flow x0 for time t under the field, with local error control."""
    x0 = as_point(x0, field.n)
    eps = as_params(eps, field.p)
    if tol <= 0:
        raise ValueError("tol must be positive")
    if not np.isfinite(t):
        raise ValueError("flow time must be finite")
    atol = tol * ATOL_FACTOR
    if abs(t) < TINY_TIME:
        return FlowResult(x0.copy(), 0, atol + tol * float(np.max(np.abs(x0), initial=0.0)))

    value = field.value
    radius = field.chart_radius

    def rhs(_t, y):
        _check_state(y, radius)
        return value(y, eps)

    sol = _run(rhs, x0, t, tol, atol)
    end = sol.y[:, -1].copy()
    _check_state(end, radius)
    return FlowResult(end, len(sol.t) - 1,
                      atol + tol * float(np.max(np.abs(end))))


def integrate_variational(field: Field, x0, eps, t: float,
                          tol: float = DEFAULT_TOL) -> VariationalResult:
    """Flow the state jointly with M' = DX(x(t)) M, M(0) = I.

    The returned ``tangent`` is the derivative of the time-t flow map at
    x0 (the total monodromy operator when the orbit is a closed loop).
    """
    x0 = as_point(x0, field.n)
    eps = as_params(eps, field.p)
    if tol <= 0:
        raise ValueError("tol must be positive")
    n = field.n
    atol = tol * ATOL_FACTOR
    if abs(t) < TINY_TIME:
        return VariationalResult(x0.copy(), np.eye(n), 0,
                                 atol + tol * float(np.max(np.abs(x0), initial=0.0)))

    value = field.value
    jac = field.jacobian
    radius = field.chart_radius

    def rhs(_t, y):
        x = y[:n]
        _check_state(x, radius)
        m = y[n:].reshape(n, n)
        dx = value(x, eps)
        dm = jac(x, eps) @ m
        return np.concatenate([np.asarray(dx, dtype=float).ravel(), dm.ravel()])

    y0 = np.concatenate([x0, np.eye(n).ravel()])
    sol = _run(rhs, y0, t, tol, atol)
    end = sol.y[:n, -1].copy()
    _check_state(end, radius)
    tangent = sol.y[n:, -1].reshape(n, n).copy()
    return VariationalResult(end, tangent, len(sol.t) - 1,
                             atol + tol * float(np.max(np.abs(end))))


@dataclass(frozen=True)
class ReturnSolve:
    """Result of the section-return Newton solve.

    ``times`` are the k flow times (one per generator, composed in index
    order; the order is immaterial because the flows commute),
    ``endpoint`` lies on the section within tolerance, ``variational`` is
    the derivative of the composed return flow at the start point when
    requested.
    """

    times: np.ndarray
    endpoint: np.ndarray
    iterations: int
    constraint_residual: float
    variational: np.ndarray | None = None


def _compose_legs(family, y, eps, times, tol, with_variational):
    """Flow y under the generators for the given times, composing in order."""
    z = y
    var = np.eye(family.n) if with_variational else None
    steps = 0
    for i, s in enumerate(times):
        if abs(s) < TINY_TIME:
            continue
        if with_variational:
            res = integrate_variational(family.member(i), z, eps, float(s), tol)
            var = res.tangent @ var
        else:
            res = integrate_flow(family.member(i), z, eps, float(s), tol)
        z = res.endpoint
        steps += res.steps_taken
    return z, var, steps


def solve_return_times(family: VectorFieldFamily, y, eps, section,
                       tol: float = DEFAULT_TOL,
                       max_iter: int = RETURN_MAX_ITER,
                       with_variational: bool = False,
                       trust_radius: float | None = None) -> ReturnSolve:
    """Find flow times s under X_1..X_k taking y back onto the section.

    Newton on the k section constraints; the jacobian is the pairing of
    the constraint covectors with the field values at the current point,
    which is exact because commuting flows differentiate in their own
    times by the field value. Convergence needs both the constraint norm
    and the step norm at or below tol.

    Raises :class:`NoConvergence` when y starts outside the section's
    trust radius or the iteration budget runs out, and
    :class:`SingularGeometry` when the pairing matrix degenerates (fields
    tangent to the section).
    """
    y = wrap_angles(as_point(y, family.n), section.base, section.angle_coords)
    eps = section.eps if eps is None else as_params(eps, family.p)
    radius = section.trust_radius if trust_radius is None else trust_radius
    dist = float(np.linalg.norm(y - section.base))
    if dist > radius:
        raise NoConvergence(
            f"start point at distance {dist:.3g} from the section base "
            f"exceeds the trust radius {radius:.3g}")

    constraints = section.constraints
    s = np.zeros(family.k)
    z = y
    for it in range(max_iter + 1):
        g = constraints @ (z - section.base)
        gnorm = float(np.max(np.abs(g)))
        if gnorm <= tol and it > 0 and last_step <= tol:
            break
        if gnorm <= tol and it == 0:
            break
        if it == max_iter:
            raise NoConvergence(
                f"section return did not converge in {max_iter} iterations "
                f"(constraint residual {gnorm:.3g})")
        xmat = np.column_stack([family.eval(i, z, eps) for i in range(family.k)])
        pairing = constraints @ xmat
        sv = np.linalg.svd(pairing, compute_uv=False)
        if sv[-1] <= 1e-12 * max(1.0, sv[0]):
            raise SingularGeometry(
                "constraint-field pairing matrix is singular "
                "(fields tangent to the section)")
        ds = -np.linalg.solve(pairing, g)
        last_step = float(np.max(np.abs(ds)))
        z, _, _ = _compose_legs(family, z, eps, ds, tol, False)
        s = s + ds
    var = None
    if with_variational:
        z, var, _ = _compose_legs(family, y, eps, s, tol, True)
    g = constraints @ (z - section.base)
    return ReturnSolve(s, z, it, float(np.max(np.abs(g))), var)
