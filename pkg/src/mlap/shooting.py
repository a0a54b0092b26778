"""Locate the unique center value by monotone bisection on shot outcomes.

Stall shots sit below the ground-state center value, Crossing shots
above; the bracket shrinks on the event kind of each classified shot.
Independent one-dimensional oracles (root of F, energy quadrature of the
inverse integrand) are provided for cross-checking.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

from .nonlinearity import NonlinearitySpec, DomainError
from .radial_ode import (Controls, Profile, ProblemParams, ShotClassification,
                         integrate, dense_controls)


class NoCrossingFound(RuntimeError):
    """Upward doubling exhausted the search range without a Crossing."""


class BracketLost(RuntimeError):
    """Shot outcomes contradicted the Stall-below / Crossing-above order."""


class NoRoot(RuntimeError):
    """F has no zero above b in the searched range."""


@dataclass
class GroundStateResult:
    alpha_star: float
    R_star: float
    profile: Profile
    residuals: dict
    iterations: int
    classification_trace: list


def classify(params: ProblemParams, spec: NonlinearitySpec, alpha: float,
             controls: Controls = Controls()) -> ShotClassification:
    """One shot, classification only."""
    _, cls = integrate(params, spec, alpha, controls)
    return cls


def _side(cls: ShotClassification) -> str:
    """Which side of the ground state a shot lies on, by event kind."""
    if cls.kind == "stall":
        return "lo"
    if cls.kind == "crossing":
        return "hi"
    return "none"


def _tightened(controls: Controls, factor: float) -> Controls:
    """Scale the decay thresholds down by factor (no-op at factor 1)."""
    if factor >= 1.0:
        return controls
    return replace(controls, decay_tighten=controls.decay_tighten * factor)


def find_alpha(params: ProblemParams, spec: NonlinearitySpec,
               bracket_hint: Optional[tuple[float, float]] = None,
               controls: Controls = Controls(),
               alpha_rel_tol: float = 1e-12,
               alpha_max_factor: float = 1e6,
               profile_controls: Optional[Controls] = None) -> GroundStateResult:
    """Bisect on the shot classification for the unique admissible alpha.

    The initial bracket doubles alpha upward from b*(1.01) until a
    Crossing appears (error if none by alpha_max_factor*b); bisection
    then runs until the bracket width drops below alpha_rel_tol*alpha or
    a sustained-decay ground state is hit.  The returned profile is a
    dense re-integration at the bracket midpoint.
    """
    import warnings
    if not params.low_dim:
        warnings.warn(f"N={params.N} > m={params.m}: outside the uniqueness "
                      "regime, solving anyway")
    b = spec.b
    trace: list = []
    iterations = 0

    def shot(a: float) -> ShotClassification:
        nonlocal iterations
        c = classify(params, spec, a, controls)
        trace.append((a, c.tag))
        iterations += 1
        return c

    if bracket_hint is not None:
        lo, hi = bracket_hint
        cls_lo, cls_hi = shot(lo), shot(hi)
        if _side(cls_lo) != "lo" or _side(cls_hi) != "hi":
            raise BracketLost(
                f"bracket hint ({lo}, {hi}) is not (stall, crossing): "
                f"{cls_lo.kind}/{cls_hi.kind}")
    else:
        lo, hi = None, None
        a = b * (1.0 + 1e-2)
        a_max = alpha_max_factor * b
        first = shot(a)
        if _side(first) == "hi":
            # crossing already at the bottom: halve toward b for a stall
            hi = a
            step = a - b
            for _ in range(60):
                step *= 0.5
                cand = b + step
                c = shot(cand)
                if _side(c) == "lo":
                    lo = cand
                    break
                if _side(c) == "hi":
                    hi = cand
            if lo is None:
                raise BracketLost("no stall witness found above b")
        else:
            if _side(first) == "lo":
                lo = a
            while True:
                a *= 2.0
                if a > a_max:
                    raise NoCrossingFound(
                        f"no crossing up to alpha={a_max:.6g}; no ground state "
                        "in the searched range")
                c = shot(a)
                if _side(c) == "hi":
                    hi = a
                    break
                if _side(c) == "lo":
                    lo = a
            if lo is None:
                raise BracketLost("doubling found crossings but no stall below")

    # bisection on the classification
    early_alpha = None
    tighten = 1.0
    while (hi - lo) > alpha_rel_tol * hi:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        c = classify(params, spec, mid, _tightened(controls, tighten))
        trace.append((mid, c.tag))
        iterations += 1
        side = _side(c)
        if side == "lo":
            lo = mid
        elif side == "hi":
            hi = mid
        elif c.kind == "decay" and tighten > 1e-12:
            # decay thresholds reached before a stall or crossing: lower
            # them and re-shoot, so finite-radius cases keep bisecting
            tighten *= 1e-6
        elif c.kind == "decay":
            early_alpha = mid
            break
        else:
            raise BracketLost(
                f"undetermined shot at alpha={mid!r}: {c.reason}")

    alpha_star = early_alpha if early_alpha is not None else 0.5 * (lo + hi)
    bracket_width = hi - lo

    # dense final profile; the stall-side shot is preferred because its
    # terminal node has u' = 0 exactly and its event radius estimates the
    # free boundary to first order in the bracket width (the crossing
    # side is only accurate to the square root of it)
    pc = profile_controls if profile_controls is not None else \
        dense_controls(controls, params, spec, alpha_star)
    pc = _tightened(pc, min(tighten, 1e-6))
    profile, cls = integrate(params, spec, alpha_star, pc)
    if cls.kind == "crossing" and early_alpha is None:
        p_lo, c_lo = integrate(params, spec, lo, pc)
        if c_lo.kind == "stall":
            profile, cls = p_lo, c_lo
    ex = 1.0 / (params.m - 1.0)
    u_at_R = abs(cls.terminal_u)
    up_at_R = abs(cls.terminal_v) ** ex

    # free-boundary dichotomy: compact support iff -F(u) ~ u^k with k < m
    finite_R = spec.small_u_exponent() < params.m
    R_star = cls.event_r if finite_R else math.inf

    residuals = {"u_at_R": u_at_R, "uprime_at_R": up_at_R,
                 "bracket_width": bracket_width}
    return GroundStateResult(alpha_star=alpha_star, R_star=R_star,
                             profile=profile, residuals=residuals,
                             iterations=iterations,
                             classification_trace=trace)


# -- N = 1 oracles ------------------------------------------------------------

def n1_alpha_from_F(spec: NonlinearitySpec, rel_tol: float = 1e-13) -> float:
    """Root of F above b (for N = 1 the center value satisfies F(alpha)=0)."""
    b = spec.b
    lo = b * (1.0 + 1e-12)
    if spec.F(lo) >= 0.0:
        # F(b) < 0 always (f < 0 below b); a nonnegative value here is
        # a degenerate family
        raise NoRoot("F is not negative just above b")
    hi = b * 2.0
    for _ in range(60):
        if spec.F(hi) > 0.0:
            break
        hi *= 2.0
        if hi > 1e8 * b:
            raise NoRoot(f"F < 0 up to {hi:.3g}; no root above b")
    root = brentq(spec.F, lo, hi, xtol=1e-300, rtol=rel_tol)
    return float(root)


def n1_quadrature_profile(params: ProblemParams, spec: NonlinearitySpec,
                          alpha: float, n_points: int = 400,
                          u_min: Optional[float] = None) -> Profile:
    """Independent N=1 profile from the conserved energy.

    With N = 1 the energy (m-1)/m |u'|^m + F(u) is constant along the
    shot, so |u'|^m = (m/(m-1)) (F(alpha) - F(u)) and

        r(u) = int_u^alpha ds / [(m/(m-1)) (F(alpha)-F(s))]^(1/m).

    The endpoint singularity at s = alpha is removed by the substitution
    s = alpha - t^(m/(m-1)).
    """
    if params.N != 1.0:
        raise DomainError("quadrature oracle is defined for N = 1")
    if alpha <= spec.b:
        raise DomainError("alpha must exceed b")
    m = params.m
    mp = m / (m - 1.0)
    Fa = spec.F(alpha)
    fa = spec.f(alpha)
    fpa = spec.fprime(alpha)
    fppa = spec.fsecond(alpha)

    def dF_gap(d: float) -> float:
        # F(alpha) - F(alpha - d) as a function of the gap d: the direct
        # difference loses all precision as d -> 0 and the fractional
        # power amplifies the noise, so switch to the local expansion
        if abs(d) < 1e-4 * alpha:
            return d * (fa - d * (0.5 * fpa - d * fppa / 6.0))
        return Fa - spec.F(alpha - d)

    def speed_m(s: float) -> float:
        # alpha - s is exact for s in [alpha/2, 2 alpha] (Sterbenz), so
        # the gap form stays accurate arbitrarily close to alpha
        return mp * dF_gap(alpha - s)

    if u_min is None:
        # stop where the trajectory stalls (F(u)=F(alpha) below alpha) or near 0
        u_min = 1e-6 * alpha
        lo_scan = np.linspace(u_min, alpha * (1 - 1e-9), 20000)
        vals = np.array([speed_m(s) for s in lo_scan])
        bad = np.where(vals <= 0.0)[0]
        if len(bad):
            # integrand singular at the interior stall level: stay above it
            u_stall = lo_scan[bad[-1]]
            u_min = u_stall + 1e-6 * alpha
    # r(u) has a vertical tangent at u = alpha and decaying tails may be
    # logarithmic in u: cluster geometrically toward both ends
    n_lo = n_points // 2
    us_lo = np.geomspace(u_min, 0.5 * alpha, n_lo, endpoint=False)
    gap_hi = np.geomspace(1e-12 * alpha, 0.5 * alpha, n_points - n_lo)
    us = np.concatenate([us_lo, np.sort(alpha - gap_hi)])

    def integrand_s(s: float) -> float:
        val = speed_m(s)
        if val <= 0.0:
            return 0.0
        return val ** (-1.0 / m)

    def integrand_t(t: float) -> float:
        # substitution s = alpha - t^(m/(m-1)) removes the endpoint
        # singularity of the top segment; the gap t^(m/(m-1)) is used
        # directly (rounding it through s would destroy its precision)
        val = mp * dF_gap(t ** mp)
        if val <= 0.0:
            return 0.0
        return mp * t ** (1.0 / (m - 1.0)) * val ** (-1.0 / m)

    import warnings as _warnings
    rs = np.empty_like(us)
    with _warnings.catch_warnings():
        _warnings.simplefilter("ignore")
        # top segment [us[-1], alpha] in the substituted variable, then
        # accumulate the smooth interior segments downward
        T = (alpha - us[-1]) ** (1.0 / mp)
        rs[-1], _ = quad(integrand_t, 0.0, T, epsabs=0.0, epsrel=1e-12,
                         limit=200)
        for j in range(len(us) - 2, -1, -1):
            seg, _ = quad(integrand_s, us[j], us[j + 1], epsabs=0.0,
                          epsrel=1e-12, limit=200)
            rs[j] = rs[j + 1] + seg

    speeds = np.array([max(speed_m(s), 0.0) for s in us])
    uprime = -speeds ** (1.0 / m)
    v = -np.abs(uprime) ** (m - 1.0)

    order = np.argsort(rs)
    from .radial_ode import ProfileEvents
    return Profile(params=params, spec=spec, alpha=alpha,
                   r=rs[order], u=us[order], v=v[order],
                   R=math.inf, events=ProfileEvents(terminal_kind="oracle"),
                   eps=rs.min())


def compare_profiles_u(profile: Profile, oracle: Profile,
                       u_lo_frac: float = 0.05,
                       u_hi_frac: float = 0.999) -> float:
    """Max relative difference in u after aligning the two traces.

    The forward profile is interpolated at the oracle's own (u, r) nodes
    (no interpolation of the oracle); differences are relative to u.
    """
    alpha = profile.alpha
    sp_fwd = CubicSpline(profile.r, profile.u)
    u_lo = u_lo_frac * alpha
    u_hi = u_hi_frac * alpha
    sel = ((oracle.u > u_lo) & (oracle.u < u_hi)
           & (oracle.r >= profile.r[0]) & (oracle.r <= profile.r[-1]))
    if not np.any(sel):
        raise DomainError("no overlap between profile and oracle trace")
    diffs = np.abs(sp_fwd(oracle.r[sel]) - oracle.u[sel]) / oracle.u[sel]
    return float(np.max(diffs))


# -- sweeps -------------------------------------------------------------------

@dataclass
class SweepRow:
    alpha: float
    tag: str
    event_r: float


@dataclass
class SweepTable:
    rows: list
    transitions_up: int      # Stall -> Crossing
    transitions_down: int    # Crossing -> Stall
    n_undetermined: int


def sweep_classify(params: ProblemParams, spec: NonlinearitySpec,
                   alpha_grid, controls: Controls = Controls(),
                   workers: int = 1) -> SweepTable:
    """Classify every alpha in an increasing grid and count transitions.

    GroundState entries sit exactly at the Stall/Crossing boundary and do
    not count toward transitions; Undetermined entries are flagged.
    """
    alphas = [float(a) for a in alpha_grid]
    if any(a2 <= a1 for a1, a2 in zip(alphas, alphas[1:])):
        raise DomainError("alpha grid must be strictly increasing")
    if any(a <= spec.b for a in alphas):
        raise DomainError("alpha grid must lie above b")

    def one(a):
        c = classify(params, spec, a, controls)
        return SweepRow(alpha=a, tag=c.tag, event_r=c.event_r)

    if workers > 1 and len(alphas) > 8:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(one, alphas))
    else:
        rows = [one(a) for a in alphas]

    ups = downs = undet = 0
    prev = None
    for row in rows:
        if row.tag == "Undetermined":
            undet += 1
            continue
        if row.tag == "GroundState":
            continue
        if prev == "Stall" and row.tag == "Crossing":
            ups += 1
        if prev == "Crossing" and row.tag == "Stall":
            downs += 1
        prev = row.tag
    return SweepTable(rows=rows, transitions_up=ups, transitions_down=downs,
                      n_undetermined=undet)
