"""Closed-form results for the lossy parametric cavity and thermal light.

H = omega a^dag a + (epsilon/2)(a^dag^2 + a^2), single loss channel a at
rate gamma. Below threshold (epsilon < sqrt(omega^2 + gamma^2/4)) the
steady state is a zero-mean Gaussian state.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

from .errors import ThresholdError, ZeroRate


@dataclass(frozen=True)
class CavityParams:
    omega: float
    epsilon: float
    gamma: float

    def __post_init__(self):
        if not self.omega > 0:
            raise ValueError("omega must be positive")
        if not self.epsilon >= 0:
            raise ValueError("epsilon must be non-negative")
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")

    @property
    def epsilon_c(self) -> float:
        return epsilon_c(self.omega, self.gamma)

    @property
    def detuning(self) -> float:
        """omega^2 + (gamma/2)^2 - epsilon^2; positive below threshold."""
        return self.omega**2 + (self.gamma / 2) ** 2 - self.epsilon**2

    def below_threshold(self) -> bool:
        return self.detuning > 0


def epsilon_c(omega: float, gamma: float) -> float:
    return math.hypot(omega, gamma / 2)


def _check(p: CavityParams, need_drive=False):
    if not p.below_threshold():
        raise ThresholdError(
            f"epsilon={p.epsilon} is not below threshold epsilon_c={p.epsilon_c}")
    if need_drive and p.epsilon == 0:
        raise ZeroRate("no emission without parametric drive (epsilon=0)")


def nss(p: CavityParams) -> float:
    """Mean steady-state photon number."""
    _check(p)
    return p.epsilon**2 / (2 * p.detuning)


def dnss_domega(p: CavityParams) -> float:
    _check(p)
    return -p.epsilon**2 * p.omega / p.detuning**2


def dnss_domega_critical(p: CavityParams) -> float:
    """Near-threshold approximation -(4 omega / epsilon_c^2) N_ss^2."""
    return -4 * p.omega / p.epsilon_c**2 * nss(p) ** 2


def stationary_moments(p: CavityParams) -> tuple[float, complex]:
    """Return (<a^dag a>, <a a>) of the Gaussian steady state."""
    n = nss(p)
    m = -1j * p.epsilon * (2 * n + 1) / (2 * (1j * p.omega + p.gamma / 2))
    return n, complex(m)


def variance_nss(p: CavityParams) -> float:
    """Photon-number variance of the zero-mean Gaussian steady state."""
    n, m = stationary_moments(p)
    return n * (n + 1) + abs(m) ** 2


def spectral_gap(p: CavityParams) -> float:
    """Smallest nonzero |Re| of the Liouvillian spectrum, min Re(lambda_pm)."""
    _check(p)
    s = cmath.sqrt(p.epsilon**2 - p.omega**2)
    return p.gamma / 2 - abs(s.real)


def tau_c_exact(p: CavityParams) -> float:
    """Integrated second-order correlation time of the emitted light.

    The middle term is gamma / (2 epsilon^2); it is the dimensionally
    consistent form and agrees with the truncated-Fock resolvent solve.
    """
    _check(p, need_drive=True)
    w, e, g = p.omega, p.epsilon, p.gamma
    return 2 * g / p.detuning + g / (2 * e**2) + 2 * w**2 / (g * e**2)


def tau_c_near_critical(p: CavityParams) -> float:
    return 4 * p.gamma / p.epsilon_c**2 * nss(p)


def tau_c_bound_formula(p: CavityParams) -> float:
    """Steady-state lower bound on tau_c specialised to the cavity."""
    _check(p, need_drive=True)
    w, e, g = p.omega, p.epsilon, p.gamma
    return 2 * w**2 * g / e**2 / p.detuning - 4 * w / e**2


def tau_c_bound_near_critical(p: CavityParams) -> float:
    return 4 * p.omega**2 * p.gamma / p.epsilon_c**4 * nss(p)


def bound_gap_lower_estimate(p: CavityParams) -> float:
    """Epsilon-free lower estimate of tau_c_exact - tau_c_bound_formula.

    Dropping epsilon from the last denominator can only decrease the
    difference, and what remains is manifestly non-negative.
    """
    w, e, g = p.omega, p.epsilon, p.gamma
    return (8 * w + (g**2 - 4 * w**2) ** 2 / (g * (g**2 + 4 * w**2))) / (2 * e**2)


def bound_gap(p: CavityParams) -> float:
    w, e, g = p.omega, p.epsilon, p.gamma
    return (-3 * g + 8 * w + 4 * w**2 / g
            + 4 * g**3 / (g**2 + 4 * w**2 - 4 * e**2)) / (2 * e**2)


def relaxation_bound_near_critical(p: CavityParams) -> float:
    """tau_ss >= 2 omega^2 gamma N_ss / epsilon_c^4 near threshold."""
    return 2 * p.omega**2 * p.gamma / p.epsilon_c**4 * nss(p)


def langevin_coefficients(p: CavityParams, x: float):
    """Return (c1(x), c2(x), lambda_plus, lambda_minus).

    a(t) = c1 a(0) + c2 a^dag(0) + noise, with c1(0) = 1, c2(0) = 0.
    lambda_pm = gamma/2 +- sqrt(epsilon^2 - omega^2), evaluated with the
    principal complex root so epsilon < omega needs no special casing.
    At epsilon == omega the two rates coincide and the limit form is used.
    """
    if x < 0:
        raise ValueError("x must be non-negative")
    w, e, g = p.omega, p.epsilon, p.gamma
    s = cmath.sqrt(e**2 - w**2)
    lam_p = g / 2 + s
    lam_m = g / 2 - s
    if abs(s) < 1e-12 * max(w, e, 1.0):
        decay = math.exp(-g * x / 2)
        return complex((1 - 1j * w * x) * decay), complex(-1j * e * x * decay), lam_p, lam_m
    em = cmath.exp(-lam_m * x)
    ep = cmath.exp(-lam_p * x)
    c1 = (0.5 - 1j * w / (2 * s)) * em + (0.5 + 1j * w / (2 * s)) * ep
    c2 = -1j * e / (2 * s) * (em - ep)
    return c1, c2, lam_p, lam_m


def langevin_rhs(p: CavityParams, c1: complex, c2: complex) -> tuple[complex, complex]:
    """Right-hand side of the coefficient ODE system."""
    k = p.gamma / 2 + 1j * p.omega
    return (-1j * p.epsilon * c2.conjugate() - k * c1,
            -1j * p.epsilon * c1.conjugate() - k * c2)


def thermal_tau_c(gamma: float) -> float:
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    return 2.0 / gamma


def thermal_g2(gamma: float, tau):
    import numpy as np
    return 1.0 + np.exp(-gamma * np.abs(tau))
