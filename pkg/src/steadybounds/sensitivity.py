"""Steady-state response to the frequency-like parameter omega.

Since H = omega G0 + G1, differentiating L(omega) rho_ss = 0 gives
L d_rho = i [G0, rho_ss] with Tr d_rho = 0, solved on the same bordered
system as the steady state itself.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .correlations import correlation_time_resolvent
from .errors import ModelClassError, ZeroRate
from .liouvillian import assemble, steady_state
from .operators import LindbladModel, dag, expect


@dataclass
class SensitivityResult:
    d_rho: np.ndarray
    d_obs: dict[str, float]
    method: str
    richardson_error: float | None = None
    extra: dict = field(default_factory=dict)


def _observables(model: LindbladModel, observables) -> dict[str, np.ndarray]:
    obs = {"g0": model.g0}
    if observables:
        obs.update({k: np.asarray(v) for k, v in observables.items()})
    return obs


def dss_domega(model: LindbladModel, observables: dict | None = None) -> SensitivityResult:
    """d rho_ss / d omega and d<O>/d omega for G0 plus any named observables."""
    L = assemble(model)
    rho = steady_state(L).rho
    g0 = model.g0
    d_rho = L.solver.solve(1j * (g0 @ rho - rho @ g0))
    d_rho = 0.5 * (d_rho + dag(d_rho))
    d_obs = {k: float(expect(o, d_rho).real) for k, o in _observables(model, observables).items()}
    return SensitivityResult(d_rho, d_obs, "linear_solve")


def default_step(omega: float) -> float:
    return 1e-4 * max(abs(omega), 1.0)


def _central(model: LindbladModel, delta: float) -> np.ndarray:
    hi = steady_state(model.with_omega(model.omega + delta)).rho
    lo = steady_state(model.with_omega(model.omega - delta)).rho
    return (hi - lo) / (2 * delta)


def finite_diff_dss(model: LindbladModel, delta: float | None = None,
                    observables: dict | None = None, richardson: bool = True) -> SensitivityResult:
    """Central difference of rho_ss at omega +- delta.

    With ``richardson`` the step is also halved; the difference between the
    two estimates (its max entry) is reported as ``richardson_error``.
    """
    if delta is None:
        delta = default_step(model.omega)
    if not delta > 0:
        raise ValueError("delta must be positive")
    d_rho = _central(model, delta)
    err = None
    if richardson:
        err = float(np.abs(_central(model, delta / 2) - d_rho).max())
    d_obs = {k: float(expect(o, d_rho).real) for k, o in _observables(model, observables).items()}
    return SensitivityResult(d_rho, d_obs, "finite_difference", err)


def _loss_rate(model: LindbladModel) -> float:
    gamma = model.loss_rate()
    if gamma is None:
        raise ModelClassError(
            "emission operator is not gamma * G0 over monitored channels; "
            "the counting SNR and its bound do not apply")
    return gamma


def _check_gamma1(gamma1: float, gamma: float):
    if not 0 < gamma1 <= gamma * (1 + 1e-12):
        raise ValueError(f"gamma1 must lie in (0, {gamma}], got {gamma1}")


def snr_rate(model: LindbladModel, gamma1: float, *, g0_mean: float | None = None,
             d_g0: float | None = None, tau_c: float | None = None) -> float:
    """Counting signal-to-noise per unit time with a fraction gamma1 monitored.

    |gamma1 dG|^2 / (gamma1 G + gamma1^2 G^2 tau_c), G = <G0>_ss, dG its omega
    derivative. tau_c is the normalised correlation time of the full output,
    which beam splitting leaves unchanged. Precomputed pieces may be passed.
    """
    gamma = _loss_rate(model)
    _check_gamma1(gamma1, gamma)
    if g0_mean is None:
        g0_mean = float(expect(model.g0, steady_state(model).rho).real)
    if not g0_mean > 0:
        raise ZeroRate("<G0>_ss vanishes; no photons are emitted")
    if d_g0 is None:
        d_g0 = dss_domega(model).d_obs["g0"]
    if d_g0 == 0:
        return 0.0
    if tau_c is None:
        tau_c = correlation_time_resolvent(model).tau_c
    rate = gamma1 * g0_mean
    return (gamma1 * d_g0) ** 2 / (rate + rate**2 * tau_c)


def qfi_rate_bound(model: LindbladModel, gamma1: float, g0_mean: float | None = None) -> float:
    """4 <G0>_ss / gamma0 with gamma0 = gamma - gamma1 (infinite when gamma0 = 0)."""
    gamma = _loss_rate(model)
    _check_gamma1(gamma1, gamma)
    if g0_mean is None:
        g0_mean = float(expect(model.g0, steady_state(model).rho).real)
    gamma0 = gamma - gamma1
    if gamma0 <= 1e-14 * gamma:
        return float("inf")
    return 4.0 * g0_mean / gamma0
