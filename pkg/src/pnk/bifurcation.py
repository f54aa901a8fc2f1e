"""Loss of hyperbolicity along a branch: multiplier tracking, crossing
detection, classification at the critical parameter, and post-critical
probes of the section return map.

Classification keys on the critical multiplier value only:

* ``CaseA``: a single real multiplier at -1;
* ``CaseB``: a single real multiplier at +1;
* ``CaseC``: a complex conjugate pair on the unit circle away from the
  real axis (an invariant circle of the map appears, i.e. a torus of one
  more dimension for the flow);
* ``Degenerate``: more than one independent critical multiplier.

Conventions in the literature differ on which of the two real cases
carries the twin fixed-point branches and which the period-two points, so
probes at a real crossing always search for both object types and the
report states what was found.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import spectra
from .core import TWO_PI, TorusSeed, VectorFieldFamily, as_params
from .errors import (MatchingAmbiguityWarning, NoConvergence, NothingFound,
                     SingularJacobian)
from .flow import DEFAULT_TOL
from .section import SectionFrame, transversal_map
from .continuation import ContinuationBranch, newton_fixed_point

CASE_A = "CaseA"
CASE_B = "CaseB"
CASE_C = "CaseC"
DEGENERATE = "Degenerate"

KIND_LABELS = {
    CASE_A: ("real multiplier -1: conventionally a period-doubling (a "
             "2-cycle of the map); this label is also associated with twin "
             "fixed-point branches in part of the literature, so the probe "
             "searches for both"),
    CASE_B: ("real multiplier +1: conventionally twin fixed-point branches "
             "(pitchfork-type); this label is also associated with "
             "period-two points in part of the literature, so the probe "
             "searches for both"),
    CASE_C: ("complex pair on the unit circle: an invariant circle of the "
             "map, i.e. an invariant torus of one more dimension for the "
             "flow"),
    DEGENERATE: "more than one independent critical multiplier",
}


@dataclass(frozen=True)
class MultiplierPaths:
    """Multipliers matched into continuous paths along a branch."""

    eps_values: list
    paths: np.ndarray              # (n_points, r) complex
    ambiguous_steps: list          # indices where the matching tied


def track_multipliers(branch: ContinuationBranch,
                      tie_tol: float = 1e-9) -> MultiplierPaths:
    """Match spectra between consecutive slices by minimal distance.

    A tie between two assignments that swap genuinely distinct
    multipliers is recorded and warned about; the first assignment is
    kept.
    """
    pts = branch.points
    if len(pts) < 2:
        raise ValueError("need at least two branch points to track")
    r = len(pts[0].spectrum)
    paths = np.empty((len(pts), r), dtype=complex)
    paths[0] = spectra.sorted_complex(pts[0].spectrum)
    ambiguous = []
    for i in range(1, len(pts)):
        prev = paths[i - 1]
        cur = np.asarray(pts[i].spectrum, dtype=complex)
        cost = np.abs(prev[:, None] - cur[None, :])
        perm, _ = spectra.match(prev, cur)
        scale = 1.0 + float(np.max(np.abs(cur)))
        tied = False
        for a in range(r):
            for b in range(a + 1, r):
                if abs(cur[perm[a]] - cur[perm[b]]) <= tie_tol * scale:
                    continue  # swapping equal values is not an ambiguity
                gain = (cost[a, perm[b]] + cost[b, perm[a]]
                        - cost[a, perm[a]] - cost[b, perm[b]])
                if gain <= tie_tol * scale:
                    tied = True
        if tied:
            ambiguous.append(i)
            warnings.warn(
                f"multiplier matching ties at step {i}; first assignment kept",
                MatchingAmbiguityWarning, stacklevel=2)
        paths[i] = cur[perm]
    return MultiplierPaths([p.eps for p in pts], paths, ambiguous)


@dataclass
class CrossingBracket:
    """A bracketed |mu| = 1 crossing of one (or a conjugate pair of) path."""

    path_indices: tuple
    eps_lo: np.ndarray
    eps_hi: np.ndarray
    mu_lo: complex
    mu_hi: complex
    mu_mid: complex | None = None
    spectrum_mid: np.ndarray | None = None
    refined: bool = False

    @property
    def eps_mid(self) -> np.ndarray:
        return 0.5 * (self.eps_lo + self.eps_hi)


def detect_crossings(paths: MultiplierPaths, circle_tol: float = 1e-9,
                     refine=None, eps_tol: float = 1e-6,
                     max_bisect: int = 80) -> list[CrossingBracket]:
    """Bracket every sign change of |mu| - 1 along the matched paths.

    ``refine``, when given, is a callable eps -> spectrum re-solving the
    fixed point; brackets are then bisected to width <= eps_tol.
    Conjugate-pair crossings in the same grid segment are merged into a
    single bracket carrying both path indices. Events are returned in
    parameter order.
    """
    eps_vals = [np.asarray(e, dtype=float) for e in paths.eps_values]
    m, r = paths.paths.shape
    raw: list[CrossingBracket] = []
    for j in range(r):
        mods = np.abs(paths.paths[:, j]) - 1.0
        for i in range(m - 1):
            a, b = mods[i], mods[i + 1]
            if (a < -circle_tol and b > circle_tol) or \
               (a > circle_tol and b < -circle_tol):
                raw.append(CrossingBracket(
                    (j,), eps_vals[i], eps_vals[i + 1],
                    complex(paths.paths[i, j]), complex(paths.paths[i + 1, j])))

    merged: list[CrossingBracket] = []
    used = [False] * len(raw)
    for i, br in enumerate(raw):
        if used[i]:
            continue
        for j in range(i + 1, len(raw)):
            other = raw[j]
            if used[j]:
                continue
            same_segment = (np.array_equal(br.eps_lo, other.eps_lo)
                            and np.array_equal(br.eps_hi, other.eps_hi))
            conj = (abs(br.mu_lo - np.conj(other.mu_lo))
                    <= 1e-8 * (1.0 + abs(br.mu_lo))
                    and abs(br.mu_lo.imag) > circle_tol)
            if same_segment and conj:
                br = CrossingBracket(br.path_indices + other.path_indices,
                                     br.eps_lo, br.eps_hi,
                                     br.mu_lo if br.mu_lo.imag >= 0 else other.mu_lo,
                                     br.mu_hi if br.mu_hi.imag >= 0 else other.mu_hi)
                used[j] = True
                break
        used[i] = True
        merged.append(br)

    if refine is not None:
        merged = [_bisect_bracket(br, refine, eps_tol, max_bisect)
                  for br in merged]
    merged.sort(key=lambda b: tuple(b.eps_mid))
    return merged


def _bisect_bracket(br: CrossingBracket, refine, eps_tol, max_bisect):
    lo, hi = br.eps_lo.copy(), br.eps_hi.copy()
    mu_lo, mu_hi = br.mu_lo, br.mu_hi
    sign_lo = math.copysign(1.0, abs(mu_lo) - 1.0)
    mu_mid = None
    spec_mid = None
    for _ in range(max_bisect):
        if float(np.max(np.abs(hi - lo))) <= eps_tol:
            break
        mid = 0.5 * (lo + hi)
        spec = np.asarray(refine(mid), dtype=complex)
        target = 0.5 * (mu_lo + mu_hi)
        jj = int(np.argmin(np.abs(spec - target)))
        mu = complex(spec[jj])
        mu_mid, spec_mid = mu, spec
        if math.copysign(1.0, abs(mu) - 1.0) == sign_lo:
            lo, mu_lo = mid, mu
        else:
            hi, mu_hi = mid, mu
    return CrossingBracket(br.path_indices, lo, hi, mu_lo, mu_hi,
                           mu_mid, spec_mid, refined=True)


@dataclass(frozen=True)
class BifurcationEvent:
    """A classified loss of transversal hyperbolicity."""

    eps_critical: np.ndarray
    critical_multipliers: np.ndarray
    kind: str
    transversality: float          # d|mu|/d eps across the refined bracket
    split_margin: float            # distance of the rest of the spectrum to the circle
    angle: float                   # |arg mu| of the critical multiplier
    resonant_warning: bool
    bracket: CrossingBracket

    @property
    def label(self) -> str:
        return KIND_LABELS[self.kind]


def _resonant_angle(angle: float, angle_tol: float = 1e-3,
                    max_denominator: int = 6) -> bool:
    for q in range(1, max_denominator + 1):
        for p in range(q + 1):
            if abs(angle - TWO_PI * p / q) <= angle_tol:
                return True
    return False


def classify_event(bracket: CrossingBracket, angle_tol: float = 1e-3,
                   degenerate_tol: float = 1e-3) -> BifurcationEvent:
    """Classify a refined crossing by its critical multiplier.

    ``transversality`` is the finite-difference slope of |mu| across the
    bracket, per unit parameter arclength and signed along the path
    direction; ``split_margin`` is the smallest distance of the remaining
    multipliers to the unit circle at the crossing. A rotation number
    within 1e-3 of a rational with denominator <= 6 flags the structurally
    unstable resonant case but still classifies as CaseC.
    """
    mu = bracket.mu_mid if bracket.mu_mid is not None else \
        0.5 * (bracket.mu_lo + bracket.mu_hi)
    angle = abs(np.angle(mu))
    if abs(angle - math.pi) <= angle_tol:
        kind = CASE_A
        criticals = np.array([mu], dtype=complex)
    elif angle <= angle_tol:
        kind = CASE_B
        criticals = np.array([mu], dtype=complex)
    else:
        kind = CASE_C
        criticals = np.array([mu, np.conj(mu)], dtype=complex)

    split = math.inf
    if bracket.spectrum_mid is not None:
        spec = np.asarray(bracket.spectrum_mid, dtype=complex)
        on_circle = np.abs(np.abs(spec) - 1.0) <= degenerate_tol
        n_crit = int(np.sum(on_circle))
        if n_crit > len(criticals):
            kind = DEGENERATE
            criticals = spec[on_circle]
        rest = spec[~on_circle]
        if rest.size:
            split = float(np.min(np.abs(np.abs(rest) - 1.0)))

    d_eps = bracket.eps_hi - bracket.eps_lo
    arclen = float(np.linalg.norm(d_eps))
    if d_eps.size == 1:
        arclen = float(d_eps[0])  # keep the sign for a scalar parameter
    trans = ((abs(bracket.mu_hi) - abs(bracket.mu_lo)) / arclen
             if arclen != 0.0 else math.inf)
    resonant = kind == CASE_C and _resonant_angle(angle, 1e-3)
    return BifurcationEvent(bracket.eps_mid, criticals, kind, trans, split,
                            float(angle), resonant, bracket)


# ---------------------------------------------------------------------------
# post-critical probes


@dataclass(frozen=True)
class ProbeOptions:
    """Deterministic search star and orbit-sampling controls."""

    search_radius: float = 0.5
    tol: float = 1e-9
    n_directions: int = 8
    n_radii: int = 4
    max_iter: int = 30
    exclude_tol: float = 1e-6
    transient: int = 150
    n_samples: int = 128
    fourier_order: int = 4


@dataclass(frozen=True)
class FixedPointFinding:
    u: np.ndarray
    spectrum: np.ndarray
    residual: float


@dataclass(frozen=True)
class TwoCycleFinding:
    points: tuple
    multipliers: np.ndarray  # eigenvalues of the cycle derivative
    residual: float


@dataclass(frozen=True)
class CircleFinding:
    center: np.ndarray
    mean_radius: float
    fit_residual: float
    radii: np.ndarray
    angles: np.ndarray
    samples: np.ndarray


@dataclass(frozen=True)
class ProbeReport:
    kind: str
    eps_post: np.ndarray
    base_u: np.ndarray
    base_spectrum: np.ndarray
    fixed_points: list
    two_cycles: list
    circle: CircleFinding | None
    notes: str


def _probe_directions(r: int, count: int) -> list[np.ndarray]:
    eye = np.eye(r)
    dirs: list[np.ndarray] = []
    for i in range(r):
        dirs.append(eye[i])
        dirs.append(-eye[i])
    for i in range(r):
        for j in range(i + 1, r):
            d = (eye[i] + eye[j]) / math.sqrt(2.0)
            dirs.append(d)
            dirs.append(-d)
            d2 = (eye[i] - eye[j]) / math.sqrt(2.0)
            dirs.append(d2)
            dirs.append(-d2)
    return dirs[:count] if len(dirs) >= count else dirs


def _map_eval(family, frame, alpha, u, eps, tol, trust, with_jacobian=True):
    return transversal_map(family, frame, alpha, u, eps, tol,
                           with_jacobian=with_jacobian, trust_radius=trust)


def _newton_on_map(family, frame, alpha, eps, guess, tol, max_iter, trust,
                   double: bool = False):
    """Newton for fixed points of P (or of P o P when double=True).

    Returns (u, derivative, residual) or None when the start fails.
    """
    u = np.asarray(guess, dtype=float)
    eye = np.eye(frame.r)
    try:
        for it in range(max_iter + 1):
            r1 = _map_eval(family, frame, alpha, u, eps, tol, trust)
            if double:
                r2 = _map_eval(family, frame, alpha, r1.u, eps, tol, trust)
                image, deriv = r2.u, r2.jacobian @ r1.jacobian
            else:
                image, deriv = r1.u, r1.jacobian
            f = u - image
            rnorm = float(np.max(np.abs(f), initial=0.0))
            if rnorm <= tol:
                return u, deriv, rnorm
            if it == max_iter:
                return None
            jac = eye - deriv
            sv = np.linalg.svd(jac, compute_uv=False)
            if sv[-1] <= 1e-12 * max(1.0, sv[0]):
                return None
            u = u - np.linalg.solve(jac, f)
    except (NoConvergence, SingularJacobian, np.linalg.LinAlgError):
        return None


def _cycle_key(a, b) -> np.ndarray:
    """Order-independent representative of a 2-cycle for deduplication."""
    return np.asarray(min((tuple(a), tuple(b))))


def _fit_circle(family, frame, alpha, eps, u_star, spectrum_vecs, opts, trust):
    """Iterate the map near u_star and fit radius(theta) with a Fourier series."""
    vals, vecs = spectrum_vecs
    order = np.argsort(-np.abs(vals))
    pair = [i for i in order if abs(vals[i].imag) > 1e-9]
    if not pair:
        raise NothingFound("no complex multiplier pair at the probe parameter")
    v = vecs[:, pair[0]]
    plane, _ = np.linalg.qr(np.column_stack([v.real, v.imag]))
    u = u_star + plane[:, 0] * (0.5 * opts.search_radius)
    limit = 5.0 * opts.search_radius
    collected = []
    for step in range(opts.transient + opts.n_samples):
        u = _map_eval(family, frame, alpha, u, eps, opts.tol, trust,
                      with_jacobian=False).u
        if float(np.linalg.norm(u - u_star)) > limit:
            raise NothingFound("probe orbit escaped the search region")
        if step >= opts.transient:
            collected.append(u.copy())
    pts = np.asarray(collected)
    rel = pts - u_star
    radii = np.linalg.norm(rel, axis=1)
    if float(np.max(radii)) <= 100.0 * opts.tol:
        raise NothingFound("probe orbit collapsed onto the fixed point")
    angles = np.arctan2(rel @ plane[:, 1], rel @ plane[:, 0])
    cols = [np.ones_like(angles)]
    for mth in range(1, opts.fourier_order + 1):
        cols.append(np.cos(mth * angles))
        cols.append(np.sin(mth * angles))
    design = np.column_stack(cols)
    coef, *_ = np.linalg.lstsq(design, radii, rcond=None)
    resid = float(np.sqrt(np.mean((radii - design @ coef) ** 2)))
    return CircleFinding(u_star, float(coef[0]), resid, radii, angles, pts)


def postcritical_probe(family: VectorFieldFamily, seed: TorusSeed, alpha,
                       frame: SectionFrame, eps_post, kind: str,
                       opts: ProbeOptions | None = None) -> ProbeReport:
    """Search for the post-critical objects of the map just past a crossing.

    Real crossings (CaseA/CaseB) are probed for both non-trivial fixed
    points and genuine 2-cycles from a deterministic star of starts
    (n_directions x n_radii, radii geometric between 10*tol and the search
    radius). CaseC samples an orbit and fits an invariant circle by a
    radial Fourier series around the continued fixed point. Every find is
    re-verified under the map before being reported; finds correspond to
    new invariant tori of the flow (twin tori, a doubled torus, or a torus
    of one more dimension). Raises :class:`NothingFound` when the search
    comes up empty, which may indicate a subcritical scenario.
    """
    opts = opts or ProbeOptions()
    eps_post = as_params(eps_post, family.p)
    trust = max(frame.trust_radius, 4.0 * opts.search_radius)

    base = _newton_on_map(family, frame, alpha, eps_post, np.zeros(frame.r),
                          opts.tol, opts.max_iter, trust)
    if base is None:
        raise NothingFound("could not locate the continued fixed point")
    u0, ell0, _ = base
    base_spec = spectra.sorted_complex(np.linalg.eigvals(ell0))

    dedupe = max(opts.exclude_tol, 100.0 * opts.tol)
    fixed: list[FixedPointFinding] = []
    cycles: list[TwoCycleFinding] = []
    circle = None
    notes = []

    if kind in (CASE_A, CASE_B, DEGENERATE):
        starts = [u0 + rad * d
                  for rad in np.geomspace(10.0 * opts.tol, opts.search_radius,
                                          opts.n_radii)
                  for d in _probe_directions(frame.r, opts.n_directions)]
        for guess in starts:
            got = _newton_on_map(family, frame, alpha, eps_post, guess,
                                 opts.tol, opts.max_iter, trust)
            if got is None:
                continue
            u, deriv, res = got
            if float(np.linalg.norm(u - u0)) <= opts.exclude_tol:
                continue
            if any(float(np.linalg.norm(u - f.u)) <= dedupe for f in fixed):
                continue
            fixed.append(FixedPointFinding(
                u, spectra.sorted_complex(np.linalg.eigvals(deriv)), res))
        for guess in starts:
            got = _newton_on_map(family, frame, alpha, eps_post, guess,
                                 opts.tol, opts.max_iter, trust, double=True)
            if got is None:
                continue
            u, deriv, res = got
            partner = _map_eval(family, frame, alpha, u, eps_post, opts.tol,
                                trust, with_jacobian=False).u
            if float(np.linalg.norm(partner - u)) <= opts.exclude_tol:
                continue  # a fixed point of P, not a genuine 2-cycle
            key = _cycle_key(u, partner)
            if any(float(np.linalg.norm(key - _cycle_key(*c.points)))
                   <= dedupe for c in cycles):
                continue
            cycles.append(TwoCycleFinding(
                (u.copy(), partner.copy()),
                spectra.sorted_complex(np.linalg.eigvals(deriv)), res))
        notes.append(f"{len(fixed)} non-trivial fixed point(s), "
                     f"{len(cycles)} two-cycle(s) found")
        if not fixed and not cycles:
            raise NothingFound(
                "no non-trivial fixed points or 2-cycles within the search "
                "radius; possibly a subcritical scenario")

    if kind in (CASE_C, DEGENERATE):
        vals, vecs = np.linalg.eig(ell0)
        circle = _fit_circle(family, frame, alpha, eps_post, u0,
                             (vals, vecs), opts, trust)
        notes.append(f"invariant circle of mean radius {circle.mean_radius:.6g} "
                     f"(fit residual {circle.fit_residual:.2g}); corresponds "
                     "to an invariant torus of one more dimension for the flow")

    return ProbeReport(kind, eps_post, u0, base_spec, fixed, cycles, circle,
                       "; ".join(notes))


# ---------------------------------------------------------------------------
# pipeline


@dataclass(frozen=True)
class BifurcationAnalysis:
    paths: MultiplierPaths
    events: list
    probes: list  # (event_index, ProbeReport)


def analyze_branch(family: VectorFieldFamily, seed: TorusSeed, alpha,
                   branch: ContinuationBranch, circle_tol: float = 1e-9,
                   eps_tol: float = 1e-6, angle_tol: float = 1e-3,
                   tol: float = DEFAULT_TOL, probe_offsets=None,
                   probe_options: ProbeOptions | None = None) -> BifurcationAnalysis:
    """Track multipliers, bracket and classify crossings, optionally probe.

    The bisection refiner re-solves the fixed point at midpoint
    parameters, seeded by linear interpolation between the bracketing
    branch points. Probes run at eps_critical + offset on the unstable
    side (sign taken from the transversality estimate) for each entry of
    ``probe_offsets``.
    """
    paths = track_multipliers(branch)
    frame = branch.frame
    pts = branch.points

    def refine(eps):
        eps = np.asarray(eps, dtype=float)
        dists = [float(np.linalg.norm(eps - p.eps)) for p in pts]
        order = np.argsort(dists)
        i0, i1 = int(order[0]), int(order[1 % len(order)])
        d0, d1 = dists[i0], dists[i1]
        w = d0 / (d0 + d1) if d0 + d1 > 0 else 0.0
        guess = (1.0 - w) * pts[i0].u + w * pts[i1].u
        nr = newton_fixed_point(family, seed, alpha, frame, eps, guess, tol)
        return nr.spectrum

    brackets = detect_crossings(paths, circle_tol, refine=refine,
                                eps_tol=eps_tol)
    events = [classify_event(br, angle_tol) for br in brackets]

    probes = []
    if probe_offsets:
        for ev_idx, ev in enumerate(events):
            d_eps = ev.bracket.eps_hi - ev.bracket.eps_lo
            norm = float(np.linalg.norm(d_eps))
            direction = d_eps / norm if norm > 0 else np.ones_like(d_eps)
            side = 1.0 if ev.transversality >= 0 else -1.0
            for offset in probe_offsets:
                eps_post = ev.eps_critical + side * float(offset) * direction
                probes.append((ev_idx, postcritical_probe(
                    family, seed, alpha, frame, eps_post, ev.kind,
                    probe_options)))
    return BifurcationAnalysis(paths, events, probes)
