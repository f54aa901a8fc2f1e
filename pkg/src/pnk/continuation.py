"""Persistence of invariant tori as an algorithm.

Fixed points of the section return map at parameter eps correspond to
invariant tori of the family at eps. The corrector solves u - P(u) = 0
per parameter slice with a full Newton iteration (the jacobian I - L is
recomputed from variational flows every step; r is small at desk scale
and robustness near marginal hyperbolicity matters more than cost). The
branch walks a user-supplied parameter grid with a secant predictor;
folds in the parameter are excluded by the hyperbolicity hypothesis, so
no pseudo-arclength reparametrization is used.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import spectra
from .core import TorusSeed, VectorFieldFamily, as_params, loop_field, wrap_angles
from .errors import (NoConvergence, OpenTorus, SingularJacobian)
from .flow import DEFAULT_TOL, integrate_flow
from .section import SectionFrame, build_section, transversal_map

DELTA_MIN_DEFAULT = 1e-6


@dataclass(frozen=True)
class HyperbolicityReport:
    """Distances of a transversal spectrum from 1 and from the unit circle.

    ``dist_from_one`` gauges invertibility of the corrector jacobian
    (its eigenvalues are 1 - lambda_i); ``dist_from_unit_circle`` gauges
    isolation of the torus among nearby invariant tori.
    """

    spectrum: np.ndarray
    dist_from_one: float
    dist_from_unit_circle: float
    B_invertible: bool
    B_condition: float
    delta: float


def hyperbolicity_report(L, delta: float = DELTA_MIN_DEFAULT) -> HyperbolicityReport:
    """Spectral margins of a transversal linearization L."""
    L = np.atleast_2d(np.asarray(L, dtype=float))
    spec = spectra.sorted_complex(np.linalg.eigvals(L))
    if spec.size == 0:
        return HyperbolicityReport(spec, np.inf, np.inf, True, 1.0, delta)
    dist_one = float(np.min(np.abs(spec - 1.0)))
    dist_circle = float(np.min(np.abs(np.abs(spec) - 1.0)))
    b = np.eye(L.shape[0]) - L
    cond = float(np.linalg.cond(b))
    return HyperbolicityReport(spec, dist_one, dist_circle,
                               dist_one >= delta, cond, delta)


def isolation_check(report: HyperbolicityReport, tol: float = 1e-9) -> bool:
    """True when no multiplier sits on the unit circle within tol.

    Then the fixed point is hyperbolic for the map, hence isolated on the
    section: no nearby invariant torus can intersect it in a second fixed
    point.
    """
    return report.dist_from_unit_circle > tol


@dataclass(frozen=True)
class NewtonResult:
    """Converged fixed point of the section return map at one parameter."""

    u: np.ndarray
    transversal: np.ndarray
    spectrum: np.ndarray
    jacobian_spectrum: np.ndarray  # eigenvalues of the corrector jacobian I - L
    iterations: int
    residual: float


def _effective_trust(frame: SectionFrame, u) -> float:
    # Newton may start outside the nominal trust radius; widen to cover it.
    reach = float(np.linalg.norm(u))
    return max(frame.trust_radius, 4.0 * reach + frame.trust_radius)


def newton_fixed_point(family: VectorFieldFamily, seed: TorusSeed, alpha,
                       frame: SectionFrame, eps, u_guess,
                       tol: float = DEFAULT_TOL,
                       max_iter: int = 20) -> NewtonResult:
    """Solve u - P(u) = 0 by full Newton from u_guess.

    The iteration count excludes the final verification, so an exact
    guess reports zero iterations. Raises :class:`SingularJacobian` when
    I - L degenerates (a transversal multiplier sits at 1) and
    :class:`NoConvergence` on budget exhaustion.
    """
    eps = as_params(eps, family.p)
    u = np.asarray(u_guess, dtype=float).reshape(-1)
    if u.size != frame.r:
        raise ValueError(f"guess has length {u.size}, expected {frame.r}")
    eye = np.eye(frame.r)
    for it in range(max_iter + 1):
        res = transversal_map(family, frame, alpha, u, eps, tol,
                              with_jacobian=True,
                              trust_radius=_effective_trust(frame, u))
        f = u - res.u
        rnorm = float(np.max(np.abs(f), initial=0.0))
        if rnorm <= tol:
            ell = res.jacobian
            return NewtonResult(
                u, ell,
                spectra.sorted_complex(np.linalg.eigvals(ell)),
                spectra.sorted_complex(np.linalg.eigvals(eye - ell)),
                it, rnorm)
        if it == max_iter:
            raise NoConvergence(
                f"fixed-point Newton stalled after {max_iter} iterations "
                f"(residual {rnorm:.3g})")
        jac = eye - res.jacobian
        sv = np.linalg.svd(jac, compute_uv=False)
        if sv[-1] <= 1e-13 * max(1.0, sv[0]):
            raise SingularJacobian(
                "corrector jacobian I - L is singular; a transversal "
                "multiplier sits at 1")
        u = u - np.linalg.solve(jac, f)


@dataclass(frozen=True)
class BranchPoint:
    """One accepted parameter slice of a continuation branch."""

    eps: np.ndarray
    u: np.ndarray
    spectrum: np.ndarray
    jacobian_spectrum: np.ndarray
    newton_iters: int
    residual: float
    dist_from_one: float
    dist_from_unit_circle: float


@dataclass(frozen=True)
class ContinuationBranch:
    points: list
    status: str  # "completed" | "stopped_at_critical" | "diverged"
    message: str
    alpha: np.ndarray
    frame: SectionFrame


@dataclass(frozen=True)
class ContinuationOptions:
    tol: float = DEFAULT_TOL
    max_iter: int = 20
    delta_min: float = DELTA_MIN_DEFAULT
    trust_radius: float | None = None
    parallel: bool = False
    n_threads: int | None = None


def _branch_point(nr: NewtonResult, eps, delta_min) -> BranchPoint:
    rep = hyperbolicity_report(nr.transversal, delta_min)
    return BranchPoint(eps, nr.u, nr.spectrum, nr.jacobian_spectrum,
                       nr.iterations, nr.residual,
                       rep.dist_from_one, rep.dist_from_unit_circle)


def continue_branch(family: VectorFieldFamily, seed: TorusSeed, alpha,
                    eps_path, opts: ContinuationOptions | None = None,
                    frame: SectionFrame | None = None) -> ContinuationBranch:
    """Continue the seed torus fixed point over a parameter grid.

    The section is built once at the seed base point and reused for every
    slice; only field evaluations see the varying parameter. The first
    path entry must equal the seed parameter, where u = 0 is the known
    fixed point. Slices are corrected in order with a secant predictor;
    the branch stops with ``stopped_at_critical`` when the margin
    min |lambda - 1| falls below ``delta_min`` and with ``diverged`` when
    a corrector fails (failures are recorded, not raised).
    """
    opts = opts or ContinuationOptions()
    path = [as_params(e, family.p) for e in eps_path]
    if not path:
        raise ValueError("parameter path is empty")
    if not np.allclose(path[0], seed.eps0, rtol=0, atol=1e-12):
        raise ValueError(
            f"path must start at the seed parameter {seed.eps0}, got {path[0]}")
    if frame is None:
        frame = build_section(family, seed,
                              trust_radius=opts.trust_radius
                              if opts.trust_radius is not None else 0.1)
    elif opts.trust_radius is not None:
        frame = replace(frame, trust_radius=opts.trust_radius)
    alpha = np.asarray(alpha).reshape(-1)

    if opts.parallel and len(path) > 2:
        return _continue_parallel(family, seed, alpha, path, opts, frame)

    points: list[BranchPoint] = []
    status, message = "completed", ""
    for idx, eps in enumerate(path):
        if idx == 0:
            guess = np.zeros(frame.r)
        elif idx == 1:
            guess = points[0].u
        else:
            d_prev = np.linalg.norm(points[-1].eps - points[-2].eps)
            ratio = (np.linalg.norm(eps - points[-1].eps) / d_prev
                     if d_prev > 0 else 1.0)
            guess = points[-1].u + ratio * (points[-1].u - points[-2].u)
        try:
            nr = newton_fixed_point(family, seed, alpha, frame, eps, guess,
                                    opts.tol, opts.max_iter)
        except (NoConvergence, SingularJacobian) as exc:
            status, message = "diverged", f"slice {idx} at eps={eps}: {exc}"
            break
        pt = _branch_point(nr, eps, opts.delta_min)
        points.append(pt)
        if pt.dist_from_one < opts.delta_min:
            status = "stopped_at_critical"
            message = (f"margin {pt.dist_from_one:.3g} below delta_min "
                       f"{opts.delta_min:.3g} at eps={eps}")
            break
    return ContinuationBranch(points, status, message, alpha, frame)


def _continue_parallel(family, seed, alpha, path, opts, frame):
    """Wave-parallel corrector: each slice is seeded from the nearest
    already completed point, waves are deterministic partitions of the
    path, so results do not depend on thread timing."""
    n_threads = opts.n_threads or 4
    results: dict[int, BranchPoint | Exception] = {}

    def solve(idx, guess):
        try:
            nr = newton_fixed_point(family, seed, alpha, frame, path[idx],
                                    guess, opts.tol, opts.max_iter)
            return _branch_point(nr, path[idx], opts.delta_min)
        except (NoConvergence, SingularJacobian) as exc:
            return exc

    results[0] = solve(0, np.zeros(frame.r))
    pending = list(range(1, len(path)))
    with ThreadPoolExecutor(max_workers=n_threads) as pool:
        while pending:
            wave, pending = pending[:n_threads], pending[n_threads:]
            done = {i: results[i] for i in results
                    if isinstance(results[i], BranchPoint)}
            guesses = {}
            for idx in wave:
                nearest = min(done, key=lambda j: np.linalg.norm(path[idx] - path[j]),
                              default=0)
                guesses[idx] = (done[nearest].u if nearest in done
                                else np.zeros(frame.r))
            futs = {idx: pool.submit(solve, idx, guesses[idx]) for idx in wave}
            for idx, fut in futs.items():
                results[idx] = fut.result()

    points: list[BranchPoint] = []
    status, message = "completed", ""
    for idx in range(len(path)):
        res = results[idx]
        if isinstance(res, Exception):
            status, message = "diverged", f"slice {idx} at eps={path[idx]}: {res}"
            break
        points.append(res)
        if res.dist_from_one < opts.delta_min:
            status = "stopped_at_critical"
            message = (f"margin {res.dist_from_one:.3g} below delta_min "
                       f"{opts.delta_min:.3g} at eps={path[idx]}")
            break
    return ContinuationBranch(points, status, message, alpha, frame)


@dataclass(frozen=True)
class TorusReconstruction:
    """A fixed point transported over the full angle grid."""

    fractions: np.ndarray          # grid fractions in [0, 1) per angle
    samples: np.ndarray            # shape (g,)*k + (n,)
    closure_defect: float
    eps: np.ndarray
    u_fixed: np.ndarray


def reconstruct_torus(family: VectorFieldFamily, seed: TorusSeed, eps,
                      u_fixed, grid_per_angle: int = 32,
                      tol: float = 1e-8, frame: SectionFrame | None = None,
                      integration_tol: float = DEFAULT_TOL) -> TorusReconstruction:
    """Sweep a verified fixed point over the torus by the generator flows.

    Grid point (t_1, ..., t_k) is the image of the fixed point under the
    composed flows of the loop-normalized generators for times t_i. The
    closure defect is measured on the periodic wrap edges: flowing the
    last grid sample of a row one more grid step must land back on the
    row's first sample (angles reduced mod 2*pi). Interior edges reproduce
    the construction and only re-measure commutation, so the wrap edges
    carry the entire closure content. Raises :class:`OpenTorus` (with the
    partial reconstruction attached) when the defect exceeds tol.
    """
    eps = as_params(eps, family.p)
    if grid_per_angle < 2:
        raise ValueError("need at least 2 grid points per angle")
    if frame is None:
        frame = build_section(family, seed)
    u_fixed = np.asarray(u_fixed, dtype=float).reshape(-1)
    x0 = frame.chart_point(u_fixed)
    k, n, g = seed.k, family.n, grid_per_angle
    dt = 1.0 / g
    generators = [loop_field(family, np.eye(k, dtype=int)[d]) for d in range(k)]

    samples = np.empty((g,) * k + (n,))
    samples[(0,) * k] = x0
    # chain transport dimension by dimension
    for d in range(k):
        lead = (0,) * (k - d - 1)
        for prefix in np.ndindex(*((g,) * d)):
            cur = samples[prefix + (0,) + lead]
            for j in range(1, g):
                cur = integrate_flow(generators[d], cur, eps, dt,
                                     integration_tol).endpoint
                samples[prefix + (j,) + lead] = cur

    defect = 0.0
    for d in range(k):
        for idx in np.ndindex(*((g,) * (k - 1))):
            full = idx[:d] + (g - 1,) + idx[d:]
            target = idx[:d] + (0,) + idx[d:]
            end = integrate_flow(generators[d], samples[full], eps, dt,
                                 integration_tol).endpoint
            end = wrap_angles(end, samples[target], seed.angle_coords)
            defect = max(defect, float(np.max(np.abs(end - samples[target]))))

    recon = TorusReconstruction(np.arange(g) * dt, samples, defect, eps, u_fixed)
    if defect > tol:
        raise OpenTorus(
            f"torus closure defect {defect:.3g} exceeds {tol:.3g}; the "
            "transported point does not generate a closed torus", recon)
    return recon
