"""Vector-field families, torus seeds, winding classes and loop fields.

Conventions used throughout the package:

* a chart point is a plain float ndarray of length ``n``; a parameter
  vector is a float ndarray of length ``p``;
* coordinates listed in a seed's ``angle_coords`` live on the circle.
  Values are stored unwrapped so winding counts survive; only comparison
  helpers (:func:`wrap_angles`) reduce them mod 2*pi;
* a family is a list of ``k`` pairwise commuting fields. Commutation is a
  hypothesis of every downstream construction and can be checked with
  :func:`verify_commuting_family`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import numdiff
from .errors import DegenerateTangent, ZeroClass

TWO_PI = 2.0 * math.pi

# Rank tolerance for "linearly independent generator directions".
RANK_TOL = 1e-10


def as_point(x, n: int | None = None) -> np.ndarray:
    """Validate and copy a chart point."""
    arr = np.array(x, dtype=float).reshape(-1)
    if n is not None and arr.size != n:
        raise ValueError(f"point has length {arr.size}, expected {n}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("point has non-finite entries")
    return arr


def as_params(eps, p: int | None = None) -> np.ndarray:
    """Validate and copy a parameter vector."""
    arr = np.array(eps, dtype=float).reshape(-1)
    if p is not None and arr.size != p:
        raise ValueError(f"parameter vector has length {arr.size}, expected {p}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("parameter vector has non-finite entries")
    return arr


def as_winding(alpha, k: int | None = None) -> np.ndarray:
    """Validate an integer winding vector (homotopy class)."""
    arr = np.asarray(alpha)
    if not np.issubdtype(arr.dtype, np.integer):
        rounded = np.rint(np.asarray(arr, dtype=float))
        if not np.allclose(arr, rounded, rtol=0, atol=0):
            raise ValueError("winding numbers must be integers")
        arr = rounded.astype(int)
    arr = arr.reshape(-1).astype(int)
    if k is not None and arr.size != k:
        raise ValueError(f"winding vector has length {arr.size}, expected {k}")
    return arr


def wrap_angles(x, ref, angle_coords: Sequence[int]) -> np.ndarray:
    """Shift the angle coordinates of x by multiples of 2*pi toward ref."""
    out = np.array(x, dtype=float)
    if angle_coords:
        ref = np.asarray(ref, dtype=float)
        for i in angle_coords:
            out[i] = ref[i] + math.remainder(out[i] - ref[i], TWO_PI)
    return out


@dataclass(frozen=True)
class Field:
    """A single vector field with spatial and parameter derivatives.

    ``value(x, eps)`` returns the field vector, ``jacobian(x, eps)`` its
    n x n spatial derivative and ``eps_jacobian(x, eps)`` the n x p
    derivative in the parameters. The callables are raw (unvalidated) so
    they can sit inside integrator inner loops.
    """

    n: int
    p: int
    value: Callable[[np.ndarray, np.ndarray], np.ndarray]
    jacobian: Callable[[np.ndarray, np.ndarray], np.ndarray]
    eps_jacobian: Callable[[np.ndarray, np.ndarray], np.ndarray]
    chart_radius: float | None = None


class VectorFieldFamily:
    """``k`` commuting parametric vector fields on an n-dimensional chart.

    Parameters
    ----------
    n, k, p:
        Chart dimension, number of fields (1 <= k <= n), parameter count.
    values:
        Sequence of k callables ``f_i(x, eps) -> (n,)``.
    jacobians:
        Optional analytic spatial jacobians ``(x, eps) -> (n, n)``. When
        absent, 4th-order central differences with step
        1e-5 * max(1, |x|_inf) are used; variational integration quality
        tracks jacobian quality, so analytic callbacks are preferred.
    eps_jacobians:
        Optional analytic parameter derivatives ``(x, eps) -> (n, p)``;
        finite differences otherwise.
    chart_radius:
        Optional bound on |x|_inf beyond which trajectories are considered
        to have escaped the chart.
    """

    def __init__(self, n: int, k: int, p: int, values,
                 jacobians=None, eps_jacobians=None,
                 name: str = "", chart_radius: float | None = None):
        if not (1 <= k <= n):
            raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
        if p < 0:
            raise ValueError("parameter dimension must be nonnegative")
        if len(values) != k:
            raise ValueError(f"expected {k} field callables, got {len(values)}")
        if jacobians is not None and len(jacobians) != k:
            raise ValueError("jacobians must match the number of fields")
        if eps_jacobians is not None and len(eps_jacobians) != k:
            raise ValueError("eps_jacobians must match the number of fields")
        self.n = int(n)
        self.k = int(k)
        self.p = int(p)
        self.name = name
        self.chart_radius = chart_radius
        self._values = tuple(values)
        self._jacobians = tuple(jacobians) if jacobians is not None else None
        self._eps_jacobians = (tuple(eps_jacobians)
                               if eps_jacobians is not None else None)

    # -- validated public evaluation ------------------------------------

    def eval(self, i: int, x, eps) -> np.ndarray:
        """Value of the i-th field at (x, eps)."""
        x = as_point(x, self.n)
        eps = as_params(eps, self.p)
        out = np.asarray(self._values[i](x, eps), dtype=float).reshape(-1)
        if out.size != self.n:
            raise ValueError(
                f"field {i} returned length {out.size}, expected {self.n}")
        return out

    def jacobian(self, i: int, x, eps) -> np.ndarray:
        """Spatial derivative of the i-th field, analytic or differenced."""
        x = as_point(x, self.n)
        eps = as_params(eps, self.p)
        if self._jacobians is not None:
            return np.asarray(self._jacobians[i](x, eps), dtype=float)
        return numdiff.jacobian(lambda z: self._values[i](z, eps), x)

    def eps_jacobian(self, i: int, x, eps) -> np.ndarray:
        """Parameter derivative of the i-th field (n x p)."""
        x = as_point(x, self.n)
        eps = as_params(eps, self.p)
        if self.p == 0:
            return np.zeros((self.n, 0))
        if self._eps_jacobians is not None:
            return np.asarray(self._eps_jacobians[i](x, eps), dtype=float)
        return numdiff.jacobian(lambda e: self._values[i](x, e), eps,
                                step=numdiff.step_for(eps))

    # -- raw field views --------------------------------------------------

    def member(self, i: int) -> Field:
        """The i-th field as a standalone :class:`Field`."""
        value = self._values[i]
        if self._jacobians is not None:
            jac = self._jacobians[i]
        else:
            def jac(x, eps, _f=value):
                return numdiff.jacobian(lambda z: _f(z, eps), x)
        if self.p == 0:
            def ejac(x, eps, _n=self.n):
                return np.zeros((_n, 0))
        elif self._eps_jacobians is not None:
            ejac = self._eps_jacobians[i]
        else:
            def ejac(x, eps, _f=value):
                return numdiff.jacobian(lambda e: _f(x, e), eps,
                                        step=numdiff.step_for(eps))
        return Field(self.n, self.p, value, jac, ejac, self.chart_radius)


@dataclass(frozen=True)
class TorusSeed:
    """A parametrized invariant k-torus of a family at parameter ``eps0``.

    ``embed(phi)`` maps k angles to a chart point and must be 2*pi periodic
    in each angle. The embedding is expected to intertwine the generators
    with unit angle translations, i.e. X_i(embed(phi)) = d embed / d phi_i,
    so that time-one loop flows of the 2*pi-scaled combinations close up.
    ``angle_coords`` lists chart coordinates that are themselves periodic
    (flow endpoints get reduced mod 2*pi toward a reference before
    comparisons).
    """

    k: int
    embed: Callable[[np.ndarray], np.ndarray]
    eps0: np.ndarray
    angle_coords: tuple[int, ...] = ()
    embed_step: float = 1e-4

    def __post_init__(self):
        object.__setattr__(self, "eps0", np.array(self.eps0, dtype=float).reshape(-1))
        object.__setattr__(self, "angle_coords", tuple(int(i) for i in self.angle_coords))

    @property
    def base_point(self) -> np.ndarray:
        return self.point(np.zeros(self.k))

    def point(self, phi) -> np.ndarray:
        phi = np.asarray(phi, dtype=float).reshape(-1)
        if phi.size != self.k:
            raise ValueError(f"expected {self.k} angles, got {phi.size}")
        return np.asarray(self.embed(phi), dtype=float).reshape(-1)

    def tangent_basis(self, phi) -> np.ndarray:
        """Columns d embed / d phi_j at phi, by 4th-order differences."""
        phi = np.asarray(phi, dtype=float).reshape(-1)
        cols = [numdiff.directional(self.embed, phi, e, self.embed_step)
                for e in np.eye(self.k)]
        return np.column_stack(cols)


def loop_field(family: VectorFieldFamily, alpha) -> Field:
    """The combination 2*pi * sum_i alpha_i X_i for a winding vector alpha.

    Its time-one orbits on the seed torus are closed loops winding alpha_i
    times around the i-th basis cycle. Purely a pointwise linear
    combination; no integration is involved.
    """
    a = as_winding(alpha, family.k)
    if not np.any(a):
        raise ZeroClass("winding vector is identically zero")
    terms = [(i, TWO_PI * float(c)) for i, c in enumerate(a) if c != 0]
    members = [(family.member(i), c) for i, c in terms]

    def value(x, eps):
        out = members[0][1] * np.asarray(members[0][0].value(x, eps), dtype=float)
        for fld, c in members[1:]:
            out = out + c * np.asarray(fld.value(x, eps), dtype=float)
        return out

    def jacobian(x, eps):
        out = members[0][1] * np.asarray(members[0][0].jacobian(x, eps), dtype=float)
        for fld, c in members[1:]:
            out = out + c * np.asarray(fld.jacobian(x, eps), dtype=float)
        return out

    def eps_jacobian(x, eps):
        out = members[0][1] * np.asarray(members[0][0].eps_jacobian(x, eps), dtype=float)
        for fld, c in members[1:]:
            out = out + c * np.asarray(fld.eps_jacobian(x, eps), dtype=float)
        return out

    return Field(family.n, family.p, value, jacobian, eps_jacobian,
                 family.chart_radius)


def lie_bracket(family: VectorFieldFamily, i: int, j: int, x, eps) -> np.ndarray:
    """[X_i, X_j](x) = (DX_j) X_i - (DX_i) X_j, using the family jacobians."""
    x = as_point(x, family.n)
    eps = as_params(eps, family.p)
    vi = family.eval(i, x, eps)
    vj = family.eval(j, x, eps)
    return family.jacobian(j, x, eps) @ vi - family.jacobian(i, x, eps) @ vj


@dataclass(frozen=True)
class CommutationReport:
    max_residual: float
    worst_pair: tuple[int, int] | None
    worst_sample: int | None
    tol: float
    passed: bool


def verify_commuting_family(family: VectorFieldFamily, sample_points,
                            tol: float = 1e-8) -> CommutationReport:
    """Check |[X_i, X_j]|_inf <= tol over all pairs and sample points.

    ``sample_points`` is a nonempty list of (x, eps) pairs. A single-field
    family passes vacuously with residual zero.
    """
    samples = list(sample_points)
    if not samples:
        raise ValueError("need at least one sample point")
    worst = 0.0
    worst_pair = None
    worst_sample = None
    for s_idx, (x, eps) in enumerate(samples):
        for i in range(family.k):
            for j in range(i + 1, family.k):
                res = float(np.max(np.abs(lie_bracket(family, i, j, x, eps))))
                if res > worst:
                    worst, worst_pair, worst_sample = res, (i, j), s_idx
    return CommutationReport(worst, worst_pair, worst_sample, tol, worst <= tol)


@dataclass(frozen=True)
class InvarianceReport:
    max_normal_residual: float
    worst_angles: np.ndarray | None
    tol: float
    passed: bool


def verify_torus_invariance(family: VectorFieldFamily, seed: TorusSeed,
                            grid: int = 8, tol: float = 1e-8,
                            eps=None) -> InvarianceReport:
    """Check that every X_i is tangent to the embedded torus.

    At each point of a uniform angle grid (at least 4 points per angle) the
    field values are decomposed against the embedding tangents; the report
    carries the largest leftover normal component. Raises
    :class:`DegenerateTangent` when the tangent frame drops rank anywhere.
    """
    if grid < 4:
        raise ValueError("need at least 4 grid points per angle")
    eps = seed.eps0 if eps is None else as_params(eps, family.p)
    ticks = np.arange(grid) * (TWO_PI / grid)
    grids = np.meshgrid(*([ticks] * seed.k), indexing="ij")
    angles = np.stack([g.ravel() for g in grids], axis=-1)
    worst = 0.0
    worst_phi = None
    for phi in angles:
        point = seed.point(phi)
        tang = seed.tangent_basis(phi)
        sv = np.linalg.svd(tang, compute_uv=False)
        if sv[-1] <= RANK_TOL * max(1.0, sv[0]):
            raise DegenerateTangent(
                f"embedding tangents rank-deficient at phi={phi}")
        for i in range(family.k):
            v = family.eval(i, point, eps)
            coeff, *_ = np.linalg.lstsq(tang, v, rcond=None)
            res = float(np.max(np.abs(v - tang @ coeff)))
            if res > worst:
                worst, worst_phi = res, phi.copy()
    return InvarianceReport(worst, worst_phi, tol, worst <= tol)
