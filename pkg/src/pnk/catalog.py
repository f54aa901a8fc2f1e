"""Analytically solvable families used as oracles and demo systems.

Every constructor returns a :class:`CatalogSystem` bundling the family,
an invariant-torus seed and an oracle with closed forms for the objects
the numerical pipeline computes (transversal multipliers, continued fixed
points, post-critical amplitudes). Seeds are normalized so the generators
act as unit angle translations on the torus, which is what makes time-one
flows of the 2*pi-scaled loop combinations close up.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm
from scipy.optimize import brentq

from .core import TWO_PI, Field, TorusSeed, VectorFieldFamily, as_params
from .errors import NonCommuting

__all__ = [
    "CatalogSystem", "StraightenedSpec", "make_straightened", "make_hopf",
    "HamiltonianPair", "hamiltonian_field", "poisson_bracket",
    "hamiltonian_family", "make_uncoupled_oscillators", "make_pitchfork",
    "make_flip", "make_neimark", "CATALOG", "build_catalog_system",
]


@dataclass(frozen=True)
class CatalogSystem:
    name: str
    family: VectorFieldFamily
    seed: TorusSeed
    oracle: object
    params: dict
    aux: object = None  # e.g. the HamiltonianPair behind a hamiltonian system


# ---------------------------------------------------------------------------
# straightened (flow-box) systems


@dataclass(frozen=True)
class StraightenedSpec:
    """k commuting generators in flow-box form on T^k x R^r.

    Fields are X_i = d/dphi_i + A_i (u + C eps + cubic * u^3) d/du with
    the cubic acting componentwise. The shared inner factor keeps the
    family exactly commuting; with cubic != 0 this requires diagonal A_i.
    The exact invariant torus solves u + C eps + cubic u^3 = 0
    componentwise (u = -C eps when cubic = 0).
    """

    A: tuple
    C: np.ndarray
    cubic: float = 0.0

    def __post_init__(self):
        mats = tuple(np.asarray(a, dtype=float) for a in self.A)
        object.__setattr__(self, "A", mats)
        c = np.asarray(self.C, dtype=float)
        if c.ndim == 1:
            c = c.reshape(-1, 1)
        object.__setattr__(self, "C", c)

    @property
    def k(self) -> int:
        return len(self.A)

    @property
    def r(self) -> int:
        return self.A[0].shape[0]

    @property
    def p(self) -> int:
        return self.C.shape[1]


class StraightenedOracle:
    """Closed forms for the straightened catalog."""

    def __init__(self, spec: StraightenedSpec):
        self.spec = spec

    def fixed_u(self, eps) -> np.ndarray:
        spec = self.spec
        b = spec.C @ as_params(eps, spec.p)
        if spec.cubic == 0.0:
            return -b
        out = np.empty(spec.r)
        for mu in range(spec.r):
            lo = -max(1.0, abs(b[mu])) - 1.0
            hi = -lo
            out[mu] = brentq(lambda v: v + spec.cubic * v ** 3 + b[mu],
                             lo, hi, xtol=1e-15, rtol=8.9e-16)
        return out

    def transversal_matrix(self, alpha, eps=None) -> np.ndarray:
        spec = self.spec
        alpha = np.asarray(alpha, dtype=float).reshape(-1)
        if spec.cubic == 0.0 or eps is None:
            gain = np.eye(spec.r)
        else:
            ustar = self.fixed_u(eps)
            gain = np.diag(1.0 + 3.0 * spec.cubic * ustar ** 2)
        gen = sum(a * m for a, m in zip(alpha, spec.A)) @ gain
        return expm(TWO_PI * gen)

    def transversal_multipliers(self, alpha, eps=None) -> np.ndarray:
        return np.sort_complex(np.linalg.eigvals(self.transversal_matrix(alpha, eps)))


def make_straightened(spec: StraightenedSpec, name: str = "straightened",
                      trust_scale: float = 1.0) -> CatalogSystem:
    """Build the flow-box family, its flat seed torus and the oracle.

    Raises :class:`NonCommuting` when the generator matrices do not
    commute (or when cubic terms are requested with non-diagonal
    matrices, which would break commutation).
    """
    mats = spec.A
    r, k, p = spec.r, spec.k, spec.p
    for a in mats:
        if a.shape != (r, r):
            raise ValueError("all generator matrices must share one size")
    for i in range(k):
        for j in range(i + 1, k):
            comm = mats[i] @ mats[j] - mats[j] @ mats[i]
            if np.max(np.abs(comm)) > 1e-12 * max(1.0, np.max(np.abs(mats[i]))):
                raise NonCommuting(
                    f"generator matrices {i} and {j} do not commute")
    if spec.cubic != 0.0:
        for idx, a in enumerate(mats):
            if np.max(np.abs(a - np.diag(np.diag(a)))) > 0:
                raise NonCommuting(
                    f"cubic terms preserve commutation only for diagonal "
                    f"matrices; matrix {idx} is not diagonal")
    n = k + r
    cubic = float(spec.cubic)
    cmat = spec.C

    def make_value(i):
        a = mats[i]

        def value(x, eps, _a=a):
            u = x[k:]
            w = u + cmat @ eps
            if cubic != 0.0:
                w = w + cubic * u ** 3
            out = np.zeros(n)
            out[i] = 1.0
            out[k:] = _a @ w
            return out
        return value

    def make_jacobian(i):
        a = mats[i]

        def jac(x, eps, _a=a):
            out = np.zeros((n, n))
            u = x[k:]
            gain = np.eye(r) if cubic == 0.0 else np.diag(1.0 + 3.0 * cubic * u ** 2)
            out[k:, k:] = _a @ gain
            return out
        return jac

    def make_epsjac(i):
        a = mats[i]

        def ejac(x, eps, _a=a):
            out = np.zeros((n, p))
            out[k:, :] = _a @ cmat
            return out
        return ejac

    family = VectorFieldFamily(
        n, k, p,
        values=[make_value(i) for i in range(k)],
        jacobians=[make_jacobian(i) for i in range(k)],
        eps_jacobians=[make_epsjac(i) for i in range(k)],
        name=name)

    def embed(phi):
        return np.concatenate([phi, np.zeros(r)])

    seed = TorusSeed(k, embed, np.zeros(p), angle_coords=tuple(range(k)))
    params = {"A": [a.tolist() for a in mats], "C": cmat.tolist(),
              "cubic": cubic}
    return CatalogSystem(name, family, seed, StraightenedOracle(spec), params)


# ---------------------------------------------------------------------------
# planar Hopf normal form (k = 1 reduction)


class HopfOracle:
    def __init__(self, omega: float, eps0: float):
        self.omega = omega
        self.eps0 = eps0

    def radius(self, eps) -> float:
        e = float(np.asarray(eps).reshape(-1)[0])
        return math.sqrt(e)

    def multiplier(self, eps) -> float:
        e = float(np.asarray(eps).reshape(-1)[0])
        return math.exp(-4.0 * math.pi * e / self.omega)

    def transversal_multipliers(self, alpha, eps=None) -> np.ndarray:
        e = self.eps0 if eps is None else eps
        a = int(np.asarray(alpha).reshape(-1)[0])
        return np.array([self.multiplier(e) ** a], dtype=complex)

    def fixed_u(self, eps) -> np.ndarray:
        e = float(np.asarray(eps).reshape(-1)[0])
        return np.array([math.sqrt(e) - math.sqrt(self.eps0)])


def make_hopf(omega: float = 1.0, eps0: float = 0.1,
              name: str = "hopf") -> CatalogSystem:
    """Planar Hopf normal form with limit cycle r = sqrt(eps).

    The vector field is (eps x - omega y - x r^2, omega x + eps y - y r^2)
    scaled by 1/omega so the cycle is traversed at unit angular speed;
    the time-one loop flow of the 2*pi combination then covers exactly
    one period and the transversal multiplier is exp(-4 pi eps / omega).
    """
    if omega == 0.0:
        raise ValueError("rotation frequency must be nonzero")
    if eps0 <= 0.0:
        raise ValueError("seed parameter must be positive (cycle exists)")
    inv = 1.0 / omega

    def value(x, eps):
        r2 = x[0] * x[0] + x[1] * x[1]
        e = eps[0]
        return np.array([
            inv * (e * x[0] - omega * x[1] - x[0] * r2),
            inv * (omega * x[0] + e * x[1] - x[1] * r2),
        ])

    def jacobian(x, eps):
        e = eps[0]
        xx, yy = x[0], x[1]
        return inv * np.array([
            [e - 3.0 * xx * xx - yy * yy, -omega - 2.0 * xx * yy],
            [omega - 2.0 * xx * yy, e - xx * xx - 3.0 * yy * yy],
        ])

    def ejac(x, eps):
        return inv * np.array([[x[0]], [x[1]]])

    family = VectorFieldFamily(2, 1, 1, [value], [jacobian], [ejac], name=name)
    root = math.sqrt(eps0)

    def embed(phi):
        return np.array([root * math.cos(phi[0]), root * math.sin(phi[0])])

    seed = TorusSeed(1, embed, np.array([eps0]))
    return CatalogSystem(name, family, seed, HopfOracle(omega, eps0),
                         {"omega": omega, "eps0": eps0})


# ---------------------------------------------------------------------------
# hamiltonian pairs


@dataclass(frozen=True)
class HamiltonianPair:
    """k commuting scalar hamiltonians on R^{2 n_dof}, chart x = (q, p).

    ``gradients`` (optional) supply analytic (dH/dq, dH/dp) stacked into a
    vector of length 2 n_dof; ``hessians`` supply the full second
    derivative. Finite differences per the family policy otherwise.
    """

    n_dof: int
    hamiltonians: tuple
    gradients: tuple | None = None
    hessians: tuple | None = None
    name: str = ""

    @property
    def k(self) -> int:
        return len(self.hamiltonians)

    def gradient(self, i: int, x, eps) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.gradients is not None:
            return np.asarray(self.gradients[i](x, eps), dtype=float)
        from . import numdiff
        return numdiff.gradient(lambda z: self.hamiltonians[i](z, eps), x)


def _symplectic(n_dof: int) -> np.ndarray:
    j = np.zeros((2 * n_dof, 2 * n_dof))
    j[:n_dof, n_dof:] = np.eye(n_dof)
    j[n_dof:, :n_dof] = -np.eye(n_dof)
    return j


def hamiltonian_field(pair: HamiltonianPair, i: int, x, eps) -> np.ndarray:
    """Symplectic gradient (dH/dp, -dH/dq) of the i-th hamiltonian."""
    g = pair.gradient(i, x, eps)
    d = pair.n_dof
    return np.concatenate([g[d:], -g[:d]])


def poisson_bracket(pair: HamiltonianPair, i: int, j: int, x, eps) -> float:
    """{H_i, H_j}(x) with the standard pairing; zero iff the fields commute."""
    gi = pair.gradient(i, x, eps)
    gj = pair.gradient(j, x, eps)
    d = pair.n_dof
    return float(gi[:d] @ gj[d:] - gi[d:] @ gj[:d])


def hamiltonian_family(pair: HamiltonianPair, p: int | None = None) -> VectorFieldFamily:
    """Wrap the symplectic gradients of a pair as a vector-field family."""
    n = 2 * pair.n_dof
    p = pair.k if p is None else p

    def make_value(i):
        def value(x, eps, _i=i):
            return hamiltonian_field(pair, _i, x, eps)
        return value

    jacobians = None
    if pair.hessians is not None:
        symp = _symplectic(pair.n_dof)

        def make_jac(i):
            def jac(x, eps, _i=i):
                return symp @ np.asarray(pair.hessians[_i](x, eps), dtype=float)
            return jac
        jacobians = [make_jac(i) for i in range(pair.k)]

    return VectorFieldFamily(n, pair.k, p,
                             [make_value(i) for i in range(pair.k)],
                             jacobians=jacobians, name=pair.name)


class UnitSpectrumOracle:
    """All multipliers of every loop class equal one."""

    def __init__(self, r: int):
        self.r = r

    def transversal_multipliers(self, alpha, eps=None) -> np.ndarray:
        return np.ones(self.r, dtype=complex)


def make_uncoupled_oscillators(radii=(1.0, 1.0),
                               name: str = "uncoupled_oscillators") -> CatalogSystem:
    """Two uncoupled harmonic oscillators, H_i = (q_i^2 + p_i^2) / 2.

    The product of circles of the given radii is an invariant 2-torus; the
    directions conjugate to the angles carry unit multipliers as well, so
    the full monodromy spectrum of either basis cycle is {1, 1, 1, 1}.
    """
    r1, r2 = float(radii[0]), float(radii[1])
    if r1 <= 0 or r2 <= 0:
        raise ValueError("both radii must be positive")

    def h1(x, eps):
        return 0.5 * (x[0] ** 2 + x[2] ** 2)

    def h2(x, eps):
        return 0.5 * (x[1] ** 2 + x[3] ** 2)

    def g1(x, eps):
        return np.array([x[0], 0.0, x[2], 0.0])

    def g2(x, eps):
        return np.array([0.0, x[1], 0.0, x[3]])

    def hess1(x, eps):
        return np.diag([1.0, 0.0, 1.0, 0.0])

    def hess2(x, eps):
        return np.diag([0.0, 1.0, 0.0, 1.0])

    pair = HamiltonianPair(2, (h1, h2), (g1, g2), (hess1, hess2), name=name)
    family = hamiltonian_family(pair)

    def embed(phi):
        return np.array([r1 * math.cos(phi[0]), r2 * math.cos(phi[1]),
                         -r1 * math.sin(phi[0]), -r2 * math.sin(phi[1])])

    seed = TorusSeed(2, embed, np.zeros(2))
    return CatalogSystem(name, family, seed, UnitSpectrumOracle(2),
                         {"radii": [r1, r2]}, aux=pair)


# ---------------------------------------------------------------------------
# controlled-crossing families on the cylinder (k = 1, scalar parameter)


class CylinderOracle:
    """Closed forms shared by the cylinder test families."""

    def __init__(self, multipliers_fn, transversality: float, extra: dict):
        self._fn = multipliers_fn
        self.transversality = transversality
        self.extra = extra

    def transversal_multipliers(self, alpha, eps) -> np.ndarray:
        a = int(np.asarray(alpha).reshape(-1)[0])
        e = float(np.asarray(eps).reshape(-1)[0])
        base = np.asarray(self._fn(e), dtype=complex)
        return base ** a


def make_pitchfork(eps0: float = -0.05, name: str = "pitchfork") -> CatalogSystem:
    """Cylinder flow phi' = 1, u' = eps u - u^3.

    The circle u = 0 is invariant for every eps with multiplier
    exp(2 pi eps), crossing +1 at eps = 0; past the crossing the map gains
    the twin fixed points u = +-sqrt(eps) (flow equilibria).
    """
    def value(x, eps):
        u = x[1]
        return np.array([1.0, eps[0] * u - u ** 3])

    def jacobian(x, eps):
        u = x[1]
        return np.array([[0.0, 0.0], [0.0, eps[0] - 3.0 * u * u]])

    def ejac(x, eps):
        return np.array([[0.0], [x[1]]])

    family = VectorFieldFamily(2, 1, 1, [value], [jacobian], [ejac], name=name)
    seed = TorusSeed(1, lambda phi: np.array([phi[0], 0.0]),
                     np.array([eps0]), angle_coords=(0,))
    oracle = CylinderOracle(lambda e: [math.exp(TWO_PI * e)], TWO_PI,
                            {"pair_amplitude": "sqrt(eps)"})
    return CatalogSystem(name, family, seed, oracle, {"eps0": eps0})


def _rot(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


_J2 = np.array([[0.0, -1.0], [1.0, 0.0]])


def make_flip(stable_exponent: float = -0.35, eps0: float = -0.05,
              name: str = "flip") -> CatalogSystem:
    """Cylinder flow whose normal transport makes a half turn per loop.

    In a frame rotating by phi/2 the transversal dynamics are diagonal,
    v1' = eps v1 - v1^3 and v2' = d v2; the half turn multiplies the
    monodromy by -I, so the multipliers are -exp(2 pi eps) and
    -exp(2 pi d). The first crosses -1 at eps = 0 and past the crossing
    the map has the 2-cycle (+-sqrt(eps), 0) on the section. The rotating
    conjugation composes with an odd map, so the field stays 2*pi
    periodic in phi.
    """
    d2 = float(stable_exponent)

    def pieces(x, eps):
        rot = _rot(0.5 * x[0])
        v = rot.T @ x[1:]
        g = np.array([eps[0] * v[0] - v[0] ** 3, d2 * v[1]])
        return rot, v, g

    def value(x, eps):
        rot, _, g = pieces(x, eps)
        u = x[1:]
        du = 0.5 * (_J2 @ u) + rot @ g
        return np.array([1.0, du[0], du[1]])

    def jacobian(x, eps):
        rot, v, g = pieces(x, eps)
        dg = np.diag([eps[0] - 3.0 * v[0] ** 2, d2])
        du_u = 0.5 * _J2 + rot @ dg @ rot.T
        du_phi = 0.5 * (_J2 @ rot @ g - rot @ dg @ _J2 @ v)
        out = np.zeros((3, 3))
        out[1:, 0] = du_phi
        out[1:, 1:] = du_u
        return out

    def ejac(x, eps):
        rot, v, _ = pieces(x, eps)
        out = np.zeros((3, 1))
        out[1:, 0] = rot @ np.array([v[0], 0.0])
        return out

    family = VectorFieldFamily(3, 1, 1, [value], [jacobian], [ejac], name=name)
    seed = TorusSeed(1, lambda phi: np.array([phi[0], 0.0, 0.0]),
                     np.array([eps0]), angle_coords=(0,))
    oracle = CylinderOracle(
        lambda e: [-math.exp(TWO_PI * e), -math.exp(TWO_PI * d2)], TWO_PI,
        {"cycle_amplitude": "sqrt(eps)", "stable_exponent": d2})
    return CatalogSystem(name, family, seed, oracle,
                         {"stable_exponent": d2, "eps0": eps0})


def make_neimark(rotation: float = 0.18, damping: float = 1.0,
                 eps0: float = -0.05, name: str = "neimark") -> CatalogSystem:
    """Cylinder flow with a rotating transversal plane and cubic damping.

    u' = (eps - c |u|^2) u + w J u gives the multiplier pair
    exp(2 pi (eps +- i w)) at u = 0, crossing the unit circle at eps = 0
    with rotation number w; past the crossing the map carries an invariant
    circle of radius sqrt(eps / c).
    """
    w = float(rotation)
    c = float(damping)

    def value(x, eps):
        u = x[1:]
        amp = eps[0] - c * (u @ u)
        du = amp * u + w * (_J2 @ u)
        return np.array([1.0, du[0], du[1]])

    def jacobian(x, eps):
        u = x[1:]
        amp = eps[0] - c * (u @ u)
        out = np.zeros((3, 3))
        out[1:, 1:] = amp * np.eye(2) + w * _J2 - 2.0 * c * np.outer(u, u)
        return out

    def ejac(x, eps):
        out = np.zeros((3, 1))
        out[1:, 0] = x[1:]
        return out

    family = VectorFieldFamily(3, 1, 1, [value], [jacobian], [ejac], name=name)
    seed = TorusSeed(1, lambda phi: np.array([phi[0], 0.0, 0.0]),
                     np.array([eps0]), angle_coords=(0,))
    oracle = CylinderOracle(
        lambda e: [np.exp(TWO_PI * (e + 1j * w)), np.exp(TWO_PI * (e - 1j * w))],
        TWO_PI, {"circle_radius": "sqrt(eps / damping)", "rotation": w,
                 "damping": c})
    return CatalogSystem(name, family, seed, oracle,
                         {"rotation": w, "damping": c, "eps0": eps0})


# ---------------------------------------------------------------------------
# registry for the CLI


def _build_straightened(params: dict) -> CatalogSystem:
    spec = StraightenedSpec(tuple(np.asarray(a, dtype=float) for a in params["A"]),
                            np.asarray(params["C"], dtype=float),
                            float(params.get("cubic", 0.0)))
    return make_straightened(spec)


CATALOG = {
    "straightened": _build_straightened,
    "hopf": lambda p: make_hopf(float(p.get("omega", 1.0)),
                                float(p.get("eps0", 0.1))),
    "uncoupled_oscillators": lambda p: make_uncoupled_oscillators(
        tuple(p.get("radii", (1.0, 1.0)))),
    "pitchfork": lambda p: make_pitchfork(float(p.get("eps0", -0.05))),
    "flip": lambda p: make_flip(float(p.get("stable_exponent", -0.35)),
                                float(p.get("eps0", -0.05))),
    "neimark": lambda p: make_neimark(float(p.get("rotation", 0.18)),
                                      float(p.get("damping", 1.0)),
                                      float(p.get("eps0", -0.05))),
}


def build_catalog_system(name: str, params: dict | None = None) -> CatalogSystem:
    if name not in CATALOG:
        raise KeyError(f"unknown catalog system {name!r}; "
                       f"known: {sorted(CATALOG)}")
    return CATALOG[name](params or {})
