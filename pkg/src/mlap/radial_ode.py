"""Outward integration of the singular radial quasilinear ODE.

State variables are (u, v) with v = u'|u'|^(m-2), so the flux r^(N-1) v
obeys a first-order conservation law and no derivative of |u'|^(m-2) is
ever needed.  The system integrated from the series start at r = eps is

    u' = sign(v) |v|^(1/(m-1)),
    v' = -f(u) - (N-1) v / r.

The stepper is an embedded Dormand-Prince 5(4) pair with PI step-size
control and cubic Hermite dense output; events (u = 0 crossing, v = 0
stall, u = b passage, decay thresholds) are located by bisection on the
dense output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .nonlinearity import NonlinearitySpec, DomainError


@dataclass(frozen=True)
class ProblemParams:
    """Dimension-like parameter N >= 1 and exponent m > 1."""

    N: float
    m: float

    def __post_init__(self):
        if not (self.m > 1.0):
            raise DomainError(f"m must be > 1, got {self.m}")
        if not (self.N >= 1.0):
            raise DomainError(f"N must be >= 1, got {self.N}")

    @property
    def low_dim(self) -> bool:
        """Regime where the uniqueness theorem applies (N <= m)."""
        return self.N <= self.m


@dataclass(frozen=True)
class Controls:
    """Integration and event-detection knobs.

    u_floor / vprime_floor are the decay thresholds for declaring an
    asymptotic ground state (defaults derived from alpha and f(alpha)
    when left as None).  u_tang_rel / slope_tang_rel are tolerances for
    declaring a tangency (simultaneous u ~ 0, u' ~ 0) at a located event.
    """

    rel_tol: float = 1e-12
    abs_tol: float = 0.0
    r_max: float = 1e3
    u_floor: Optional[float] = None
    vprime_floor: Optional[float] = None
    max_step: Optional[float] = None
    eps: Optional[float] = None
    u_tang_rel: float = 1e-6
    slope_tang_rel: float = 1e-4
    # when set, cap steps so u drops by at most fd_du_rel * u per step
    # (down to u = fd_u_floor_rel * alpha): grades the node spacing for
    # the finite-difference identity checks near free-boundary cusps
    fd_du_rel: Optional[float] = None
    fd_u_floor_rel: float = 5e-4
    # cap steps to a fraction of the current radius: keeps the node
    # spacing ratio bounded through the ramp away from the singular
    # center (the dissipation rate has a cusp there for m > 2)
    r_rel_cap: float = 0.05
    # multiplier applied to the (derived) decay thresholds; bisection
    # lowers it when a shot decays below them without a located event
    decay_tighten: float = 1.0

    def __post_init__(self):
        if self.rel_tol <= 0 or self.abs_tol < 0 or self.r_max <= 0:
            raise DomainError("controls must be positive")


@dataclass(frozen=True)
class ProfileEvents:
    """Radii of notable events along one shot."""

    r_b_crossing: Optional[float] = None   # u passes the zero b of f
    terminal_kind: str = "none"            # crossing | stall | decay | horizon | underflow
    terminal_r: float = math.nan


@dataclass
class Profile:
    """Monotone trace (r_i, u_i, v_i) of one outward shot.

    R is the right endpoint of the positivity interval: the located
    u = 0 radius for crossing-type terminations (including tangencies,
    where it estimates the free boundary), +inf otherwise.
    """

    params: ProblemParams
    spec: NonlinearitySpec
    alpha: float
    r: np.ndarray
    u: np.ndarray
    v: np.ndarray
    R: float
    events: ProfileEvents
    eps: float

    def uprime(self) -> np.ndarray:
        """Recover u' = sign(v) |v|^(1/(m-1)) at the nodes."""
        ex = 1.0 / (self.params.m - 1.0)
        return np.sign(self.v) * np.abs(self.v) ** ex

    def slope_scale(self) -> float:
        """Largest |u'| attained along the trace."""
        return float(np.max(np.abs(self.uprime())))


@dataclass(frozen=True)
class ShotClassification:
    """Outcome of one alpha-shot.

    tag: Crossing | Stall | GroundState | Undetermined
    kind: the terminal event that produced the tag (crossing | stall |
          decay | horizon | underflow); bisection moves brackets by kind.
    """

    tag: str
    kind: str
    event_r: float
    terminal_u: float
    terminal_v: float
    reason: str = ""


# -- series start -----------------------------------------------------------

def radial_scale(params: ProblemParams, spec: NonlinearitySpec, alpha: float) -> float:
    """Radius at which the leading-order drop from alpha reaches alpha itself."""
    fa = spec.f(alpha)
    m, N = params.m, params.N
    return (alpha * m / (m - 1.0)) ** ((m - 1.0) / m) * (N / fa) ** (1.0 / m)


def choose_eps(params: ProblemParams, spec: NonlinearitySpec, alpha: float,
               rel_tol: float) -> float:
    """Series-start radius: the neglected third-order term of the local
    expansion stays below the integrator tolerance for r <= eps."""
    scale = radial_scale(params, spec, alpha)
    m = params.m
    eps = rel_tol ** ((m - 1.0) / m) * scale
    return min(max(eps, 1e-300), 1e-3 * scale)


def series_start(params: ProblemParams, spec: NonlinearitySpec, alpha: float,
                 epsilon: float) -> tuple[float, float]:
    """Two-term expansion at r = epsilon around the regular center.

    v(eps) = -f(alpha) eps / N,
    u(eps) = alpha - ((m-1)/m) (f(alpha)/N)^(1/(m-1)) eps^(m/(m-1)).
    """
    if alpha <= spec.b:
        raise DomainError(
            f"series start needs alpha > b = {spec.b:.6g} (f(alpha) > 0), got {alpha}")
    if epsilon <= 0:
        raise DomainError("epsilon must be positive")
    fa = spec.f(alpha)
    m, N = params.m, params.N
    v_eps = -fa * epsilon / N
    u_eps = alpha - (m - 1.0) / m * (fa / N) ** (1.0 / (m - 1.0)) \
        * epsilon ** (m / (m - 1.0))
    return u_eps, v_eps


# -- Dormand-Prince 5(4) ------------------------------------------------------

_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
# difference between 5th-order weights and the embedded 4th-order weights
_E = (71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40)

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 5.0
# PI step controller exponents (order-5 error estimate)
_BETA1 = 0.7 / 5.0
_BETA2 = 0.4 / 5.0


def _hermite(r0, h, u0, v0_, u1, v1_, du0, dv0, du1, dv1, r):
    """Cubic Hermite value of (u, v) inside one step."""
    s = (r - r0) / h
    h00 = (1 + 2 * s) * (1 - s) ** 2
    h10 = s * (1 - s) ** 2
    h01 = s * s * (3 - 2 * s)
    h11 = s * s * (s - 1)
    u = h00 * u0 + h10 * h * du0 + h01 * u1 + h11 * h * du1
    v = h00 * v0_ + h10 * h * dv0 + h01 * v1_ + h11 * h * dv1
    return u, v


def _bisect_event(interp, lo, hi, val_lo, target_sign, rtol=1e-12):
    """Locate a sign change of interp(r) in [lo, hi] by bisection."""
    a, b = lo, hi
    fa = val_lo
    for _ in range(200):
        if (b - a) <= rtol * max(1.0, abs(b)):
            break
        mid = 0.5 * (a + b)
        fm = interp(mid)
        if (fm > 0) == (fa > 0):
            a, fa = mid, fm
        else:
            b = mid
    return 0.5 * (a + b)


def integrate(params: ProblemParams, spec: NonlinearitySpec, alpha: float,
              controls: Controls = Controls()) -> tuple[Profile, ShotClassification]:
    """Shoot outward from the series start and classify the outcome.

    Returns the node trace and a classification:
      Crossing     u reached 0 with genuinely negative slope,
      Stall        u' reached 0 at genuinely positive u,
      GroundState  tangency (both small at the event) or sustained decay
                   below the thresholds,
      Undetermined r_max or step-size underflow without a criterion.
    """
    m, N = params.m, params.N
    ex = 1.0 / (m - 1.0)
    fa = spec.f(alpha)
    b_zero = spec.b
    scale = radial_scale(params, spec, alpha)

    eps = controls.eps if controls.eps is not None else \
        choose_eps(params, spec, alpha, controls.rel_tol)
    u_floor = controls.u_floor if controls.u_floor is not None else 1e-9 * alpha
    v_floor = controls.vprime_floor if controls.vprime_floor is not None else \
        1e-9 * fa * scale
    u_floor *= controls.decay_tighten
    v_floor *= controls.decay_tighten
    max_step = controls.max_step if controls.max_step is not None else math.inf
    rtol, atol = controls.rel_tol, controls.abs_tol

    f = spec.f_ode

    def rhs(r, u, v):
        du = -abs(v) ** ex if v < 0.0 else abs(v) ** ex
        return du, -f(u) - (N - 1.0) * v / r

    u0, v0 = series_start(params, spec, alpha, eps)
    r0 = eps
    rs = [r0]
    us = [u0]
    vs = [v0]
    du0, dv0 = rhs(r0, u0, v0)

    h = 0.5 * eps
    err_prev = 1.0
    r_b = None
    kind = "horizon"
    term_r = math.nan
    term_u, term_v = u0, v0
    reason = ""
    decay_armed = False

    grade = controls.fd_du_rel
    u_grade_floor = controls.fd_u_floor_rel * alpha

    while True:
        if r0 >= controls.r_max:
            term_r, term_u, term_v = r0, u0, v0
            kind = "horizon"
            break
        h = min(h, max_step, controls.r_max - r0, controls.r_rel_cap * r0)
        if grade is not None and u0 > u_grade_floor and v0 < 0.0:
            # r(u) has vertical tangents at both u = alpha and the
            # vanishing end: keep du per step proportional to the
            # distance to the nearer one (saturated at the floor)
            du_allow = grade * max(min(u0, alpha - u0), u_grade_floor)
            h = min(h, du_allow / abs(v0) ** ex)
        if h < 1e-14 * max(r0, eps):
            # degenerate slow-down; treat a near-zero v as a stall event
            if abs(v0) <= max(v_floor, 1e-10 * fa * scale):
                kind, term_r, term_u, term_v = "stall", r0, u0, v0
            else:
                kind, term_r, term_u, term_v = "underflow", r0, u0, v0
                reason = f"step size underflow at r={r0:.6g}"
            break

        # six fresh stages (FSAL reuse of k7 as next k1)
        k1u, k1v = du0, dv0
        ru, rv = u0 + h * _A[1][0] * k1u, v0 + h * _A[1][0] * k1v
        k2u, k2v = rhs(r0 + h / 5, ru, rv)
        a = _A[2]
        ru = u0 + h * (a[0] * k1u + a[1] * k2u)
        rv = v0 + h * (a[0] * k1v + a[1] * k2v)
        k3u, k3v = rhs(r0 + 3 * h / 10, ru, rv)
        a = _A[3]
        ru = u0 + h * (a[0] * k1u + a[1] * k2u + a[2] * k3u)
        rv = v0 + h * (a[0] * k1v + a[1] * k2v + a[2] * k3v)
        k4u, k4v = rhs(r0 + 4 * h / 5, ru, rv)
        a = _A[4]
        ru = u0 + h * (a[0] * k1u + a[1] * k2u + a[2] * k3u + a[3] * k4u)
        rv = v0 + h * (a[0] * k1v + a[1] * k2v + a[2] * k3v + a[3] * k4v)
        k5u, k5v = rhs(r0 + 8 * h / 9, ru, rv)
        a = _A[5]
        ru = u0 + h * (a[0] * k1u + a[1] * k2u + a[2] * k3u + a[3] * k4u + a[4] * k5u)
        rv = v0 + h * (a[0] * k1v + a[1] * k2v + a[2] * k3v + a[3] * k4v + a[4] * k5v)
        k6u, k6v = rhs(r0 + h, ru, rv)
        a = _A[6]
        u1 = u0 + h * (a[0] * k1u + a[2] * k3u + a[3] * k4u + a[4] * k5u + a[5] * k6u)
        v1 = v0 + h * (a[0] * k1v + a[2] * k3v + a[3] * k4v + a[4] * k5v + a[5] * k6v)
        r1 = r0 + h

        du1, dv1 = rhs(r1, u1, v1)

        eu = h * (_E[0] * k1u + _E[2] * k3u + _E[3] * k4u + _E[4] * k5u
                  + _E[5] * k6u + _E[6] * du1)
        ev = h * (_E[0] * k1v + _E[2] * k3v + _E[3] * k4v + _E[4] * k5v
                  + _E[5] * k6v + _E[6] * dv1)
        sc_u = atol + rtol * max(abs(u0), abs(u1))
        sc_v = atol + rtol * max(abs(v0), abs(v1))
        err = max(abs(eu) / max(sc_u, 1e-300), abs(ev) / max(sc_v, 1e-300))

        if err > 1.0:
            h *= max(_MIN_FACTOR, _SAFETY * err ** (-0.2))
            continue

        # accepted: look for events inside [r0, r1] on the dense output
        def interp_u(r):
            return _hermite(r0, h, u0, v0, u1, v1, du0, dv0, du1, dv1, r)[0]

        def interp_v(r):
            return _hermite(r0, h, u0, v0, u1, v1, du0, dv0, du1, dv1, r)[1]

        if r_b is None and u0 > b_zero >= u1:
            r_b = _bisect_event(lambda r: interp_u(r) - b_zero, r0, r1, u0 - b_zero,
                                -1)

        hit_u = u1 <= 0.0
        hit_v = v1 >= 0.0
        if hit_u or hit_v:
            r_u = _bisect_event(interp_u, r0, r1, u0, -1) if hit_u else math.inf
            r_v = _bisect_event(interp_v, r0, r1, v0, +1) if hit_v else math.inf
            if r_v < r_u and interp_u(r_v) < 0.0:
                # u dipped through zero and recovered before the step end;
                # the crossing precedes the dip bottom located by the v-root
                r_u = _bisect_event(interp_u, r0, r_v, u0, -1)
            if r_u <= r_v:
                kind = "crossing"
                term_r = r_u
                term_u = 0.0
                term_v = interp_v(r_u)
            else:
                kind = "stall"
                term_r = r_v
                term_u = interp_u(r_v)
                term_v = 0.0
            rs.append(term_r)
            us.append(max(term_u, 0.0))
            vs.append(min(term_v, 0.0))
            break

        rs.append(r1)
        us.append(u1)
        vs.append(v1)

        below = (u1 < u_floor) and (abs(v1) < v_floor)
        if below and decay_armed:
            kind, term_r, term_u, term_v = "decay", r1, u1, v1
            break
        decay_armed = below

        # PI controller
        err = max(err, 1e-10)
        fac = _SAFETY * err ** (-_BETA1) * err_prev ** _BETA2
        h *= min(_MAX_FACTOR, max(_MIN_FACTOR, fac))
        err_prev = err
        r0, u0, v0, du0, dv0 = r1, u1, v1, du1, dv1

    r_arr = np.asarray(rs)
    u_arr = np.asarray(us)
    v_arr = np.asarray(vs)

    # classification from the terminal event
    slope_max = float(np.max(np.abs(v_arr))) ** ex
    u_tang = controls.u_tang_rel * alpha
    v_tang = (controls.slope_tang_rel * slope_max) ** (m - 1.0)
    if kind == "crossing":
        tag = "GroundState" if abs(term_v) <= v_tang else "Crossing"
    elif kind == "stall":
        tag = "GroundState" if term_u <= u_tang else "Stall"
    elif kind == "decay":
        tag = "GroundState"
    elif kind == "horizon":
        if term_u < u_floor and abs(term_v) < v_floor:
            tag, kind = "GroundState", "decay"
        else:
            tag = "Undetermined"
            reason = f"r_max={controls.r_max:.6g} reached without criterion"
    else:
        tag = "Undetermined"

    if kind == "crossing" or (tag == "GroundState" and kind == "stall"):
        R = term_r
    else:
        R = math.inf

    profile = Profile(params=params, spec=spec, alpha=alpha,
                      r=r_arr, u=u_arr, v=v_arr, R=R,
                      events=ProfileEvents(r_b_crossing=r_b, terminal_kind=kind,
                                           terminal_r=term_r),
                      eps=eps)
    cls = ShotClassification(tag=tag, kind=kind, event_r=term_r,
                             terminal_u=term_u, terminal_v=term_v, reason=reason)
    return profile, cls


# -- inverse-plane view -------------------------------------------------------

@dataclass
class InverseProfile:
    """Tabulated inverse r(u) with r'(u) = 1/u' < 0, on increasing u."""

    params: ProblemParams
    spec: NonlinearitySpec
    alpha: float
    u: np.ndarray
    r: np.ndarray
    rprime: np.ndarray

    def rprime_abs_pow(self, p: float) -> np.ndarray:
        return np.abs(self.rprime) ** p


def invert_profile(profile: Profile) -> InverseProfile:
    """Flip a strictly monotone forward trace into the inverse plane.

    Rejects profiles with any interior u' >= 0; terminal stall nodes
    (v = 0) are dropped since r'(u) blows up there.
    """
    u, r, v = profile.u, profile.r, profile.v
    keep = (v < 0.0) & (u > 0.0)
    u, r, v = u[keep], r[keep], v[keep]
    if len(u) < 4:
        raise DomainError("profile too short to invert")
    if np.any(np.diff(u) >= 0.0):
        raise DomainError("profile is not strictly decreasing in u")
    ex = 1.0 / (profile.params.m - 1.0)
    uprime = -np.abs(v) ** ex
    rprime = 1.0 / uprime
    return InverseProfile(params=profile.params, spec=profile.spec,
                          alpha=profile.alpha,
                          u=u[::-1].copy(), r=r[::-1].copy(),
                          rprime=rprime[::-1].copy())


def profile_to_csv(profile: Profile, path: str) -> None:
    """Write the trace as CSV with header r,u,du,v at 17 significant digits."""
    du = profile.uprime()
    with open(path, "w") as fh:
        fh.write("r,u,du,v\n")
        for i in range(len(profile.r)):
            fh.write(f"{profile.r[i]:.17g},{profile.u[i]:.17g},"
                     f"{du[i]:.17g},{profile.v[i]:.17g}\n")


def dense_controls(controls: Controls, params: ProblemParams,
                   spec: NonlinearitySpec, alpha: float,
                   nodes_per_scale: int = 1000,
                   fd_du_rel: Optional[float] = 3e-4) -> Controls:
    """Derive controls for a certification-grade node grid: max_step
    fine enough for the monitor quadratures and finite differences, and
    relative-du grading through free-boundary cusps."""
    scale = radial_scale(params, spec, alpha)
    return replace(controls, max_step=scale / nodes_per_scale,
                   fd_du_rel=fd_du_rel, r_rel_cap=0.01)
