"""Structure functions along computed profiles and their identity checks.

Every monitored quantity comes with a closed-form derivative law derived
from the inverse-plane equation; the checks compare finite differences
of the tabulated series against those closed forms and report max
residuals relative to the series scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.interpolate import CubicSpline

from .nonlinearity import NonlinearitySpec
from .radial_ode import (Controls, InverseProfile, Profile, ProblemParams,
                         integrate, invert_profile, dense_controls)


@dataclass
class MonitorSeries:
    name: str
    grid: np.ndarray          # u-grid or r-grid, strictly monotone
    values: np.ndarray
    derivative: Optional[np.ndarray] = None   # closed-form derivative, if any
    meta: dict = field(default_factory=dict)

    def export_csv(self, path: str, grid_label: str = "u") -> None:
        with open(path, "w") as fh:
            fh.write(f"{grid_label},value,derivative\n")
            for i in range(len(self.grid)):
                d = self.derivative[i] if self.derivative is not None else math.nan
                fh.write(f"{self.grid[i]:.17g},{self.values[i]:.17g},{d:.17g}\n")


@dataclass(frozen=True)
class CheckResult:
    name: str
    max_residual: float
    tolerance: float
    passed: bool
    detail: str = ""


@dataclass
class CertificateReport:
    checks: list

    @property
    def all_pass(self) -> bool:
        return all(c.passed for c in self.checks)

    def failed(self) -> list:
        return [c for c in self.checks if not c.passed]


def _check(name: str, resid: float, tol: float, detail: str = "") -> CheckResult:
    return CheckResult(name=name, max_residual=float(resid), tolerance=float(tol),
                       passed=bool(resid <= tol), detail=detail)


def fd_central(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Second-order first derivative at interior points of a non-uniform grid."""
    hl = x[1:-1] - x[:-2]
    hr = x[2:] - x[1:-1]
    return (hl * hl * y[2:] - hr * hr * y[:-2]
            + (hr * hr - hl * hl) * y[1:-1]) / (hl * hr * (hl + hr))


def _scale(*arrays: np.ndarray) -> float:
    s = 0.0
    for a in arrays:
        if len(a):
            s = max(s, float(np.max(np.abs(a))))
    return max(s, 1e-300)


def _uprime(profile: Profile) -> np.ndarray:
    return profile.uprime()


# -- single-profile monitors ------------------------------------------------

def energy_rho(profile: Profile, u_ref: float) -> MonitorSeries:
    """Dissipated energy (m-1)/m |u'|^m + int_{u_ref}^{u} f along the shot.

    Its r-derivative equals -(N-1) |u'|^m / r; for N = 1 it is constant.
    """
    m, N = profile.params.m, profile.params.N
    up = np.abs(_uprime(profile))
    F = profile.spec.F
    rho = (m - 1.0) / m * up ** m + np.array([F(u) for u in profile.u]) - F(u_ref)
    drho = -(N - 1.0) * up ** m / profile.r
    return MonitorSeries(name="rho", grid=profile.r, values=rho, derivative=drho,
                         meta={"u_ref": u_ref})


def rho_residual(profile: Profile, series: Optional[MonitorSeries] = None) -> float:
    """Max relative residual of the dissipation law for the energy series.

    N = 1: deviation from constancy; N >= 2: finite-difference derivative
    against the closed form, both relative to the energy scale.
    """
    if series is None:
        series = energy_rho(profile, float(profile.u[0]))
    m = profile.params.m
    up = np.abs(_uprime(profile))
    scale = _scale((m - 1.0) / m * up ** m) + abs(series.values[0])
    if profile.params.N == 1.0:
        dev = np.max(np.abs(series.values - series.values[0]))
        return float(dev / scale)
    fd = fd_central(series.grid, series.values)
    resid = np.abs(fd - series.derivative[1:-1])
    # the dissipation rate has a fractional-power cusp where the profile
    # meets its free boundary; restrict to the region above it
    mask = profile.u[1:-1] >= 0.03 * profile.alpha
    dscale = _scale(series.derivative[1:-1][mask])
    return float(np.max(resid[mask]) / dscale)


def conservative_flux_residual(profile: Profile) -> float:
    """Re-quadrature of the flux law r^(N-1) v = -int_0^r s^(N-1) f(u) ds."""
    N = profile.params.N
    r, u, v = profile.r, profile.u, profile.v
    integrand = -r ** (N - 1.0) * np.array([profile.spec.f_ode(x) for x in u])
    # the missing [0, eps] piece of the integral: v ~ -f(alpha) r / N there
    head = -profile.spec.f(profile.alpha) * profile.eps ** N / N
    anti = CubicSpline(r, integrand).antiderivative()
    flux_quad = head + anti(r) - anti(r[0])
    flux = r ** (N - 1.0) * v
    return float(np.max(np.abs(flux - flux_quad)) / _scale(flux))


def series_limit_residual(profile: Profile, window: float = 20.0) -> float:
    """Deviation of |u'|^(m-1)/r from f(alpha)/N over the first nodes.

    Checks the center expansion actually propagated by the integrator
    (the start node satisfies it by construction).
    """
    fa = profile.spec.f(profile.alpha)
    N = profile.params.N
    sel = profile.r <= window * profile.eps
    if np.count_nonzero(sel) < 2:
        sel = np.zeros_like(profile.r, dtype=bool)
        sel[:2] = True
    ratio = np.abs(profile.v[sel]) / profile.r[sel]
    return float(np.max(np.abs(ratio * N / fa - 1.0)))


def terminal_decay_residuals(profile: Profile) -> dict:
    """Terminal-node limits: r^((N-1)/(m-1)) |u'| relative to the slope
    scale, and (for N < m) r^((N-m)/(m-1)) u relative to alpha."""
    m, N = profile.params.m, profile.params.N
    r_e = profile.r[-1]
    up_e = abs(_uprime(profile)[-1])
    u_e = profile.u[-1]
    out = {"slope_limit": r_e ** ((N - 1.0) / (m - 1.0)) * up_e / profile.slope_scale()}
    if N < m:
        out["value_limit"] = r_e ** ((N - m) / (m - 1.0)) * u_e / profile.alpha
    return out


# -- inverse-plane monitors ---------------------------------------------------

def _interior(inv: InverseProfile, lo_rel: float = 0.03, hi_rel: float = 1e-3):
    """Mask of grid points where finite differences are trustworthy: away
    from the vertical tangents of r(u) at u = alpha and (for profiles
    reaching a free boundary or stall) at the bottom of the range."""
    u = inv.u
    hi = inv.alpha * (1.0 - hi_rel)
    lo = max(u[0] + 1e-12, lo_rel * inv.alpha)
    return (u >= lo) & (u <= hi)


def inverse_ode_residual(inv: InverseProfile, lo_rel: float = 0.03,
                         hi_rel: float = 1e-3) -> float:
    """(m-1) r'' - (N-1) r'^2 / r - f(u) |r'|^m r' = 0 with r'' from
    finite differences of the tabulated r'."""
    m, N = inv.params.m, inv.params.N
    rpp = fd_central(inv.u, inv.rprime)
    u, r, rp = inv.u[1:-1], inv.r[1:-1], inv.rprime[1:-1]
    fvals = np.array([inv.spec.f(x) for x in u])
    lhs = (m - 1.0) * rpp
    rhs = (N - 1.0) * rp * rp / r + fvals * np.abs(rp) ** m * rp
    mask = _interior(inv, lo_rel=lo_rel, hi_rel=hi_rel)[1:-1]
    resid = np.abs(lhs - rhs)[mask]
    return float(np.max(resid) / _scale(rhs[mask]))


def func_A(inv: InverseProfile) -> MonitorSeries:
    """(N - m) u + (m - 1) r/r' with its closed-form derivative
    -f(u) r |r'|^(m-2) r'."""
    m, N = inv.params.m, inv.params.N
    A = (N - m) * inv.u + (m - 1.0) * inv.r / inv.rprime
    fvals = np.array([inv.spec.f(x) for x in inv.u])
    dA = -fvals * inv.r * np.abs(inv.rprime) ** (m - 2.0) * inv.rprime
    return MonitorSeries(name="A", grid=inv.u, values=A, derivative=dA)


def func_omega(inv: InverseProfile) -> MonitorSeries:
    """r^(N-1) / (r'|r'|^(m-2)), negative on (0, alpha); derivative
    -f(u) r' r^(N-1)."""
    m, N = inv.params.m, inv.params.N
    omega = inv.r ** (N - 1.0) * inv.rprime / np.abs(inv.rprime) ** (m - 1.0) \
        * np.abs(inv.rprime) ** (m - 2.0)
    # equivalent to r^(N-1)/(r' |r'|^(m-2)) without sign gymnastics:
    omega = -inv.r ** (N - 1.0) / np.abs(inv.rprime) ** (m - 1.0)
    fvals = np.array([inv.spec.f(x) for x in inv.u])
    domega = -fvals * inv.rprime * inv.r ** (N - 1.0)
    return MonitorSeries(name="omega", grid=inv.u, values=omega, derivative=domega)


def derivative_identity_residual(series: MonitorSeries, mask=None) -> float:
    """Finite-difference derivative of a series against its closed form."""
    fd = fd_central(series.grid, series.values)
    resid = np.abs(fd - series.derivative[1:-1])
    if mask is not None:
        resid = resid[mask[1:-1]]
        sc = _scale(series.derivative[1:-1][mask[1:-1]])
    else:
        sc = _scale(series.derivative[1:-1])
    return float(np.max(resid) / sc)


def _profile_cumulants(profile: Profile, a: float):
    """Cumulative integrals (from the center outward, i.e. from u = alpha
    down) used by the pressure identity, evaluated on the forward grid:

      W(r) = int_alpha^u omega d tau  = int_0^r s^(N-1) |v|^(m/(m-1)) ds
      G(r) = int_alpha^u r^N [tau f'(tau) - c f(tau)] d tau,  c=(N-a)/a
    """
    m, N = profile.params.m, profile.params.N
    mp = m / (m - 1.0)
    r, u, v = profile.r, profile.u, profile.v
    spec = profile.spec
    uprime = -np.abs(v) ** (1.0 / (m - 1.0))
    w_int = r ** (N - 1.0) * np.abs(v) ** mp
    # prepend the exact limit at r=0 (integrand vanishes superlinearly)
    r0 = np.concatenate([[0.0], r])
    w0 = np.concatenate([[0.0], w_int])
    W = CubicSpline(r0, w0).antiderivative()(r)
    if a != 0.0:
        c = (N - a) / a
        fp = np.array([spec.fprime(x) if x > 0 else 0.0 for x in u])
        g_int = r ** N * (u * fp
                          - c * np.array([spec.f_ode(x) for x in u])) * uprime
        g0 = np.concatenate([[0.0], g_int])
        G = CubicSpline(r0, g0).antiderivative()(r)
    else:
        g_int = r ** N * np.array([spec.f_ode(x) for x in u]) * uprime
        g0 = np.concatenate([[0.0], g_int])
        G = CubicSpline(r0, g0).antiderivative()(r)
    return W, G


def func_P(profile: Profile, a: float,
           hi_rel: float = 1e-3) -> tuple[MonitorSeries, float]:
    """Pohozaev-type combination a u omega + r^N ((m-1)/m |u'|^m
    + (a/N) u f(u)) and the max residual of its integral identity.

    For a != 0 the right side is (a+1-N/m) int omega + (a/N) int r^N
    (tau f' - ((N-a)/a) f); for a = 0 it is -(N-m)/m int omega
    - int r^N f.  The u-crossing of the g-pole at u = b is handled by
    the u f' - c f form of the integrand, continuous through b.
    """
    m, N = profile.params.m, profile.params.N
    r, u, v = profile.r, profile.u, profile.v
    spec = profile.spec
    up_m = np.abs(v) ** (m / (m - 1.0))
    omega = r ** (N - 1.0) * v
    fvals = np.array([spec.f_ode(x) for x in u])
    P = a * u * omega + r ** N * ((m - 1.0) / m * up_m + (a / N) * u * fvals)

    W, G = _profile_cumulants(profile, a)
    if a != 0.0:
        rhs = (a + 1.0 - N / m) * W + (a / N) * G
    else:
        rhs = -(N - m) / m * W - G

    mask = u <= profile.alpha * (1.0 - hi_rel)
    resid = float(np.max(np.abs(P - rhs)[mask]) / _scale(P[mask]))
    series = MonitorSeries(name="P", grid=u, values=P,
                           meta={"a": a, "identity_residual": resid,
                                 "P_at_alpha": float(P[0])})
    return series, resid


# -- pair monitors ------------------------------------------------------------

@dataclass
class PairMonitors:
    u: np.ndarray
    series: dict                 # name -> MonitorSeries (t, s, T, S, B)
    residuals: dict              # identity-name -> max relative residual
    critical_points: list       # u values where t' changes sign, if any


def _resample(inv: InverseProfile, ug: np.ndarray):
    """Spline r and the flux variable onto a common u-grid; r' is
    recovered from the smooth v = u'|u'|^(m-2) rather than interpolating
    its reciprocal."""
    m = inv.params.m
    v = -np.abs(1.0 / inv.rprime) ** (m - 1.0)
    sp_r = CubicSpline(inv.u, inv.r)
    sp_v = CubicSpline(inv.u, v)
    vg = sp_v(ug)
    vg = np.minimum(vg, -1e-300)
    rp = -np.abs(vg) ** (-1.0 / (m - 1.0))
    return sp_r(ug), rp, vg


def pair_monitors(inv1: InverseProfile, inv2: InverseProfile,
                  n_grid: int = 2001, edge_frac: float = 0.03,
                  tprime_tol_rel: float = 1e-9) -> PairMonitors:
    """Comparison functions of two trial shots of the same problem on the
    overlapping u-range, with their derivative-identity residuals.

    Checked identities (FD = central finite difference on the grid):
      (a) T = -(r2^2/(r1' r2')) s'        (s' by FD)
      (b) T' = f (r1|r1'|^(m-1) - r2|r2'|^(m-1)) / (m-1)
      (c) S' = (r1/r2)^(N-1) (r2'/r1')^(m-1) f (|r2'|^m - |r1'|^m)
      (d) t'' = [(N-1)(r1'^2/r1 - r2'^2/r2) + f(|r1'|^m r1' - |r2'|^m r2')]/(m-1)
          pointwise, plus the reduced form (N-1)/(m-1) r1'^2 (1/r1 - 1/r2)
          at any near-critical points of t
      (e) B constant when N = 1
    """
    if (inv1.params.N != inv2.params.N) or (inv1.params.m != inv2.params.m):
        raise ValueError("pair monitors need matching (N, m)")
    m, N = inv1.params.m, inv1.params.N
    u_lo = max(inv1.u[0], inv2.u[0])
    u_hi = min(inv1.u[-1], inv2.u[-1])
    if u_hi <= u_lo:
        raise ValueError("profiles have empty overlap in u")
    span = u_hi - u_lo
    ug = np.linspace(u_lo + edge_frac * span, u_hi - edge_frac * span, n_grid)
    r1, rp1, v1 = _resample(inv1, ug)
    r2, rp2, v2 = _resample(inv2, ug)
    fvals = np.array([inv1.spec.f(x) for x in ug])

    t = r1 - r2
    s = r1 / r2
    T = r1 / rp1 - r2 / rp2
    S = (r1 / r2) ** (N - 1.0) * (np.abs(rp2) / np.abs(rp1)) ** (m - 1.0)
    B = 1.0 / np.abs(rp1) ** m - 1.0 / np.abs(rp2) ** m
    tprime = rp1 - rp2

    residuals = {}
    # (a): T against -(r2^2/(r1' r2')) s'
    sp_fd = fd_central(ug, s)
    lhs = T[1:-1]
    rhs = -(r2[1:-1] ** 2 / (rp1[1:-1] * rp2[1:-1])) * sp_fd
    residuals["T_from_s"] = float(np.max(np.abs(lhs - rhs)) / _scale(lhs, rhs))
    # (b): T' closed form
    T_fd = fd_central(ug, T)
    T_rhs = fvals[1:-1] * (r1[1:-1] * np.abs(rp1[1:-1]) ** (m - 1.0)
                           - r2[1:-1] * np.abs(rp2[1:-1]) ** (m - 1.0)) / (m - 1.0)
    residuals["T_prime"] = float(np.max(np.abs(T_fd - T_rhs)) / _scale(T_rhs))
    # (c): S' closed form
    S_fd = fd_central(ug, S)
    S_rhs = (r1[1:-1] / r2[1:-1]) ** (N - 1.0) \
        * (rp2[1:-1] / rp1[1:-1]) ** (m - 1.0) * fvals[1:-1] \
        * (np.abs(rp2[1:-1]) ** m - np.abs(rp1[1:-1]) ** m)
    residuals["S_prime"] = float(np.max(np.abs(S_fd - S_rhs)) / _scale(S_rhs))
    # (d): pointwise second-derivative law for the gap t
    tpp_fd = fd_central(ug, tprime)
    tpp_rhs = ((N - 1.0) * (rp1 ** 2 / r1 - rp2 ** 2 / r2)
               + fvals * (np.abs(rp1) ** m * rp1 - np.abs(rp2) ** m * rp2)) \
        / (m - 1.0)
    residuals["t_second"] = float(
        np.max(np.abs(tpp_fd - tpp_rhs[1:-1])) / _scale(tpp_rhs[1:-1]))
    # reduced form at near-critical points of t (sign changes of t')
    crit = []
    sgn = np.sign(tprime)
    flips = np.where(sgn[:-1] * sgn[1:] < 0)[0]
    red_resid = 0.0
    for i in flips:
        if i < 1 or i > len(ug) - 3:
            continue
        uc = ug[i]
        crit.append(float(uc))
        reduced = (N - 1.0) / (m - 1.0) * rp1[i] ** 2 * (1.0 / r1[i] - 1.0 / r2[i])
        red_resid = max(red_resid,
                        abs(tpp_fd[i - 1] - reduced) / max(abs(reduced), 1e-300))
    residuals["t_second_at_critical"] = float(red_resid)
    residuals["n_critical_points"] = float(len(crit))
    # (e): constancy of the slope-power gap for N = 1
    if N == 1.0:
        residuals["B_const"] = float(np.max(np.abs(B - B[0])) / _scale(B))

    series = {
        "t": MonitorSeries("t", ug, t),
        "s": MonitorSeries("s", ug, s),
        "T": MonitorSeries("T", ug, T),
        "S": MonitorSeries("S", ug, S),
        "B": MonitorSeries("B", ug, B),
    }
    return PairMonitors(u=ug, series=series, residuals=residuals,
                        critical_points=crit)


# -- certificate --------------------------------------------------------------

def certify(params: ProblemParams, spec: NonlinearitySpec, result,
            controls: Controls = Controls(),
            a_values: Optional[list] = None,
            u_repr: Optional[float] = None) -> CertificateReport:
    """Run every monitor identity along a solved ground state.

    result is a GroundStateResult; its dense profile is reused.  For the
    pressure identity the nonzero parameter defaults to N/(1+g(u_repr))
    with u_repr = (alpha + b)/2.
    """
    prof = result.profile
    alpha = result.alpha_star
    m, N = params.m, params.N
    checks: list = []

    # hypotheses sampling on a grid spanning both sides of b
    b = spec.b
    grid = np.concatenate([np.linspace(0.05 * b, 0.999 * b, 40),
                           np.geomspace(b * (1 + 1e-5), max(3 * alpha, 10 * b), 60)])
    rep = None
    from .nonlinearity import check_hypotheses
    rep = check_hypotheses(spec, grid)
    checks.append(_check("h1_sign_pattern", 0.0 if rep.h1_ok else 1.0, 0.5,
                         detail="sampled sign pattern of f about b"))
    checks.append(_check("h2_g_nonincreasing", 0.0 if rep.h2_ok else 1.0, 0.5,
                         detail=f"g_min_above_b={rep.g_min_above_b:.6g}"))
    checks.append(_check("g_above_minus_one",
                         0.0 if rep.g_min_above_b > -1.0 else 1.0, 0.5))

    checks.append(_check("conservative_flux", conservative_flux_residual(prof),
                         1e-8))
    checks.append(_check("center_series_limit", series_limit_residual(prof),
                         1e-4))
    term = terminal_decay_residuals(prof)
    checks.append(_check("terminal_slope_limit", term["slope_limit"], 1e-6))
    if N < m:
        checks.append(_check("terminal_value_limit", term["value_limit"], 1e-6))

    checks.append(_check("rho_dissipation", rho_residual(prof),
                         1e-8 if N == 1.0 else 1e-6))

    inv = invert_profile(prof)
    checks.append(_check("inverse_ode", inverse_ode_residual(inv), 1e-6))

    A = func_A(inv)
    om = func_omega(inv)
    mask = _interior(inv)
    checks.append(_check("A_prime_identity",
                         derivative_identity_residual(A, mask), 1e-6))
    checks.append(_check("omega_prime_identity",
                         derivative_identity_residual(om, mask), 1e-6))
    checks.append(_check("omega_negative",
                         0.0 if np.all(om.values < 0.0) else 1.0, 0.5))
    checks.append(_check("rprime_negative",
                         0.0 if np.all(inv.rprime < 0.0) else 1.0, 0.5))

    if 2.0 <= N <= m:
        # A non-increasing on (0, b), A(b) <= 0, A -> 0 at the bottom
        sel = inv.u < b
        Ab = A.values[sel]
        scA = _scale(A.values)
        mono = float(np.max(np.maximum(np.diff(Ab), 0.0)) / scA) if len(Ab) > 1 else 0.0
        checks.append(_check("A_nonincreasing_below_b", mono, 1e-8))
        k_b = int(np.searchsorted(inv.u, b))
        k_b = min(max(k_b, 0), len(inv.u) - 1)
        checks.append(_check("A_at_b_nonpositive",
                             max(A.values[k_b], 0.0) / scA, 1e-8))
        u_min_grid = float(inv.u[0])
        checks.append(_check("A_limit_at_zero", abs(A.values[0]) / scA, 1e-4,
                             detail=f"u_min_grid/alpha={u_min_grid / alpha:.2e}"))

    ps, resid0 = func_P(prof, 0.0)
    checks.append(_check("P_identity_a0", resid0, 1e-6,
                         detail=f"P(alpha)={ps.meta['P_at_alpha']:.3e}"))
    if u_repr is None:
        u_repr = 0.5 * (alpha + b)
    g_repr = spec.g(max(u_repr, spec.u_min_for_g))
    if 1.0 + g_repr > 1e-9:
        a_star = N / (1.0 + g_repr)
        _, resid_a = func_P(prof, a_star)
        checks.append(_check("P_identity_a_repr", resid_a, 1e-6,
                             detail=f"a={a_star:.6g} from u_repr={u_repr:.6g}"))
    for a in (a_values or []):
        _, res_a = func_P(prof, a)
        checks.append(_check(f"P_identity_a{a:g}", res_a, 1e-6))

    if N == 1.0:
        from .shooting import n1_alpha_from_F, n1_quadrature_profile, \
            compare_profiles_u
        # center value solves F = 0
        FA = abs(spec.F(alpha))
        Fscale = _scale(np.array([spec.F(x) for x in
                                  np.linspace(0.1 * alpha, alpha, 50)]))
        checks.append(_check("F_at_alpha_zero", FA / Fscale, 1e-8))
        # energy-quadrature oracle agreement
        oracle = n1_quadrature_profile(params, spec, alpha)
        checks.append(_check("quadrature_oracle", compare_profiles_u(prof, oracle),
                             1e-6))
        # slope-power gap constant against a second trial shot
        alpha2 = 0.5 * (alpha + b)
        if alpha2 > b * (1 + 1e-6):
            prof2, _ = integrate(params, spec, alpha2,
                                 dense_controls(controls, params, spec, alpha2))
            pm = pair_monitors(inv, invert_profile(prof2))
            checks.append(_check("B_const_pair", pm.residuals["B_const"], 1e-8))

    return CertificateReport(checks=checks)
