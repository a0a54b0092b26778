"""Closed-form source terms f(u) for the radial quasilinear solver.

Each family carries exact expressions for f, f', the antiderivative
F(u) = int_0^u f, the positive zero b of f, and the logarithmic
steepness g(u) = u f'(u) / f(u).  All families have a single sign
change: f <= 0 on (0, b], f > 0 on (b, oo).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field


class DomainError(ValueError):
    """Argument outside the mathematical domain of an operation."""


class SingularityError(ValueError):
    """Evaluation requested too close to a pole (here: g at u = b)."""


# Relative cutoff above b below which g(u) is refused by default.
G_CUTOFF_REL = 1e-6


@dataclass(frozen=True)
class NonlinearitySpec:
    """One member of the admissible family of source terms.

    family:
        "power-minus-const":  f(u) = c1*u**gamma - c0   (c1 > 0, c0 >= 0, gamma > 0)
        "double-power":       f(u) = lam*u**(s-1) - u**(q-1)   (s > q >= 1, lam > 0)
        "cubic-minus-linear": f(u) = u**3 - u
        "linear-minus-const": f(u) = u - 1
    b is the positive zero of f, computed in closed form.
    u_min_for_g is the lower cutoff for evaluating g (singular at b).
    """

    family: str
    c1: float = 1.0
    c0: float = 1.0
    gamma: float = 1.0
    s: float = 3.0
    q: float = 1.0
    lam: float = 1.0
    b: float = field(init=False)
    u_min_for_g: float = field(init=False)

    def __post_init__(self):
        fam = self.family
        if fam == "power-minus-const":
            if self.c1 <= 0 or self.c0 < 0 or self.gamma <= 0:
                raise DomainError("power-minus-const needs c1>0, c0>=0, gamma>0")
            b = (self.c0 / self.c1) ** (1.0 / self.gamma) if self.c0 > 0 else 0.0
        elif fam == "double-power":
            if not (self.s > self.q >= 1.0) or self.lam <= 0:
                raise DomainError("double-power needs s > q >= 1 and lambda > 0")
            b = self.lam ** (1.0 / (self.q - self.s))
        elif fam == "cubic-minus-linear":
            b = 1.0
        elif fam == "linear-minus-const":
            b = 1.0
        else:
            raise DomainError(f"unknown family {fam!r}")
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "u_min_for_g", b * (1.0 + G_CUTOFF_REL))

    # -- closed forms -----------------------------------------------------

    def f(self, u: float) -> float:
        """Source term value; u must be positive."""
        if u <= 0.0:
            raise DomainError(f"f requires u > 0, got {u}")
        fam = self.family
        if fam == "power-minus-const":
            return self.c1 * u ** self.gamma - self.c0
        if fam == "double-power":
            return self.lam * u ** (self.s - 1.0) - u ** (self.q - 1.0)
        if fam == "cubic-minus-linear":
            return u * u * u - u
        return u - 1.0

    def f_ode(self, u: float) -> float:
        """Continuous odd-power extension of f through u <= 0.

        Integration stages may overshoot the u = 0 crossing before the
        event is located; only values at u > 0 are ever reported.
        """
        if u > 0.0:
            return self.f(u)
        fam = self.family
        if fam == "power-minus-const":
            return -self.c1 * (-u) ** self.gamma - self.c0
        if fam == "double-power":
            lead = -self.lam * (-u) ** (self.s - 1.0)
            if self.q > 1.0:
                return lead + (-u) ** (self.q - 1.0)
            return lead - 1.0
        if fam == "cubic-minus-linear":
            return u * u * u - u
        return u - 1.0

    def fprime(self, u: float) -> float:
        """Exact derivative f'(u) for u > 0."""
        if u <= 0.0:
            raise DomainError(f"f' requires u > 0, got {u}")
        fam = self.family
        if fam == "power-minus-const":
            return self.c1 * self.gamma * u ** (self.gamma - 1.0)
        if fam == "double-power":
            df = self.lam * (self.s - 1.0) * u ** (self.s - 2.0)
            if self.q > 1.0:
                df -= (self.q - 1.0) * u ** (self.q - 2.0)
            return df
        if fam == "cubic-minus-linear":
            return 3.0 * u * u - 1.0
        return 1.0

    def fsecond(self, u: float) -> float:
        """Exact second derivative f''(u) for u > 0."""
        if u <= 0.0:
            raise DomainError(f"f'' requires u > 0, got {u}")
        fam = self.family
        if fam == "power-minus-const":
            g = self.gamma
            return self.c1 * g * (g - 1.0) * u ** (g - 2.0)
        if fam == "double-power":
            d2 = self.lam * (self.s - 1.0) * (self.s - 2.0) * u ** (self.s - 3.0)
            if self.q > 1.0:
                d2 -= (self.q - 1.0) * (self.q - 2.0) * u ** (self.q - 3.0)
            return d2
        if fam == "cubic-minus-linear":
            return 6.0 * u
        return 0.0

    def F(self, u: float) -> float:
        """Antiderivative int_0^u f(tau) dtau, F(0) = 0."""
        if u < 0.0:
            raise DomainError(f"F requires u >= 0, got {u}")
        if u == 0.0:
            return 0.0
        fam = self.family
        if fam == "power-minus-const":
            return self.c1 * u ** (self.gamma + 1.0) / (self.gamma + 1.0) - self.c0 * u
        if fam == "double-power":
            return self.lam * u ** self.s / self.s - u ** self.q / self.q
        if fam == "cubic-minus-linear":
            return 0.25 * u ** 4 - 0.5 * u * u
        return 0.5 * u * u - u

    def g(self, u: float) -> float:
        """Logarithmic steepness u f'(u)/f(u); singular at u = b."""
        if u < self.u_min_for_g:
            raise SingularityError(
                f"g undefined below u_min_for_g={self.u_min_for_g:.6g}, got {u}"
            )
        return u * self.fprime(u) / self.f(u)

    def small_u_exponent(self) -> float:
        """Exponent k with -F(u) ~ c*u**k as u -> 0+.

        Decides whether the ground state has compact support: the
        vanishing endpoint is reached at finite radius iff k < m.
        """
        fam = self.family
        if fam == "power-minus-const":
            return 1.0 if self.c0 > 0 else self.gamma + 1.0
        if fam == "double-power":
            return self.q
        if fam == "cubic-minus-linear":
            return 2.0
        return 1.0


# -- module-level operations (thin wrappers over the spec methods) --------

def eval_f(spec: NonlinearitySpec, u: float) -> float:
    return spec.f(u)


def eval_F(spec: NonlinearitySpec, u: float) -> float:
    return spec.F(u)


def eval_g(spec: NonlinearitySpec, u: float) -> float:
    return spec.g(u)


@dataclass(frozen=True)
class HypothesesReport:
    h1_ok: bool
    h2_ok: bool
    g_min_above_b: float
    n_checked: int


def check_hypotheses(spec: NonlinearitySpec, grid) -> HypothesesReport:
    """Sample the sign pattern of f and the monotonicity of g on a grid.

    h1_ok: f <= 0 on sampled (0, b], f > 0 on sampled (b, oo).
    h2_ok: g non-increasing (within 1e-9 slack) on sampled u >= u_min_for_g.
    g_min_above_b lets callers verify the g > -1 side condition.
    """
    us = sorted(float(u) for u in grid)
    if not us or us[0] <= 0.0:
        raise DomainError("grid must be a positive increasing sequence")
    h1_ok = True
    for u in us:
        fu = spec.f(u)
        if u <= spec.b and fu > 0.0:
            h1_ok = False
        if u > spec.b and fu <= 0.0:
            h1_ok = False
    gs = [spec.g(u) for u in us if u >= spec.u_min_for_g]
    h2_ok = True
    for g0, g1 in zip(gs, gs[1:]):
        if g1 > g0 + 1e-9 * max(1.0, abs(g0)):
            h2_ok = False
    g_min = min(gs) if gs else math.inf
    return HypothesesReport(h1_ok=h1_ok, h2_ok=h2_ok, g_min_above_b=g_min,
                            n_checked=len(us))


# -- convenience constructors ---------------------------------------------

def power_minus_const(c1: float, c0: float, gamma: float) -> NonlinearitySpec:
    return NonlinearitySpec("power-minus-const", c1=c1, c0=c0, gamma=gamma)


def double_power(s: float, q: float, lam: float = 1.0) -> NonlinearitySpec:
    return NonlinearitySpec("double-power", s=s, q=q, lam=lam)


def cubic_minus_linear() -> NonlinearitySpec:
    return NonlinearitySpec("cubic-minus-linear")


def linear_minus_const() -> NonlinearitySpec:
    return NonlinearitySpec("linear-minus-const")
