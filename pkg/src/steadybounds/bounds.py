"""Steady-state lower bounds on relaxation and correlation times.

Both bounds come from comparing the counting (or any steady-state) signal
to noise ratio with the quantum Fisher information available from the
emitted light, so they need only rho_ss, its omega derivative and a few
moments. ``certify`` evaluates them next to exactly computed comparators.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, fields
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import cumulative_trapezoid

from .correlations import correlation_time_resolvent, integrated_autocorrelation
from .errors import (DegenerateObservable, IllConditioned, ModelClassError, UnboundedReport,
                     ZeroRate)
from .liouvillian import assemble, max_g0_expectation, spectral_gap, steady_state, vec
from .operators import LindbladModel, as_operator, expect
from .sensitivity import dss_domega, qfi_rate_bound, snr_rate

G0MAX_MODES = ("steady_state", "operator_norm", "trajectory")
SATISFY_TOL = 1e-9


def satisfied(measured: float, bound: float) -> bool:
    return measured >= bound - SATISFY_TOL * max(1.0, abs(bound))


@dataclass
class BoundReport:
    """Bounds, comparators and verdicts for one model.

    Columns of ``csv_row`` follow the field order below.
    """

    tau_ss_bound: float
    tau_ss_measured: float
    tau_c_bound: float
    tau_c_measured: float
    gamma1_opt: float
    star_condition: bool
    tau_ss_satisfied: bool
    tau_c_satisfied: bool
    g0max_mode: str
    g0max: float
    g0max_at_boundary: bool
    g0_mean: float
    d_g0: float
    obs_variance: float
    d_obs: float
    gap: float

    @property
    def satisfied(self) -> bool:
        return self.tau_ss_satisfied and self.tau_c_satisfied

    @classmethod
    def columns(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def csv_row(self) -> list[str]:
        out = []
        for v in asdict(self).values():
            if isinstance(v, bool):
                out.append(str(int(v)))
            elif isinstance(v, float):
                out.append(f"{v:.17g}")
            else:
                out.append(str(v))
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns())
        w.writerow(self.csv_row())
        return buf.getvalue()


def _gamma(model: LindbladModel) -> float:
    gamma = model.loss_rate()
    if gamma is None:
        raise ModelClassError(
            "model is outside the emission class: every jump must be a monitored "
            "emission with sum r L^dag L = gamma G0 (absorbing channels are not allowed)")
    return gamma


def default_g0max_mode(model: LindbladModel) -> str:
    if model.kind == "parametric_cavity":
        p = model.params
        return "steady_state" if p["epsilon"] > p["omega"] else "trajectory"
    return "operator_norm"


def g0_ground_state(model: LindbladModel) -> np.ndarray:
    """Projector on the lowest eigenvector of G0 (the vacuum / all-down state)."""
    w, v = np.linalg.eigh(model.g0)
    psi = v[:, 0]
    return np.outer(psi, psi.conj())


class G0MaxInfo(NamedTuple):
    value: float
    mode: str
    at_boundary: bool


def g0_max(model: LindbladModel, mode: str | None = None, rho0: np.ndarray | None = None,
           horizon: float | None = None, steps: int = 400) -> G0MaxInfo:
    """<G0>_max in one of the three modes.

    trajectory: max of <G0>_t from rho0 (default: ground state of G0) over
    [0, horizon], horizon defaulting to 10/gap, which contains any
    relaxation window and so can only lower the bound.
    """
    mode = mode or default_g0max_mode(model)
    if mode == "steady_state":
        return G0MaxInfo(float(expect(model.g0, steady_state(model).rho).real), mode, False)
    if mode == "operator_norm":
        return G0MaxInfo(float(np.linalg.norm(model.g0, 2)), mode, False)
    if mode == "trajectory":
        if rho0 is None:
            rho0 = g0_ground_state(model)
        if horizon is None:
            horizon = 10.0 / spectral_gap(model)
        res = max_g0_expectation(model, rho0, horizon, steps)
        return G0MaxInfo(max(res.value, float(expect(model.g0, steady_state(model).rho).real)),
                         mode, res.at_boundary)
    raise ValueError(f"unknown g0max mode {mode!r}; expected one of {G0MAX_MODES}")


def observable_variance(model: LindbladModel, O) -> float:
    o = as_operator(O)
    rho = steady_state(model).rho
    mean = expect(o, rho).real
    return float(expect(o @ o, rho).real - mean**2)


class RelaxationBound(NamedTuple):
    value: float
    g0max: G0MaxInfo
    d_obs: float
    variance: float


def relaxation_bound(model: LindbladModel, O=None, g0max_mode: str | None = None,
                     rho0: np.ndarray | None = None, horizon: float | None = None,
                     d_obs: float | None = None) -> RelaxationBound:
    """tau_ss >= gamma |d<O>/d omega|^2 / (4 <G0>_max Var(O))."""
    gamma = _gamma(model)
    o = model.g0 if O is None else as_operator(O)
    var = observable_variance(model, o)
    if not var > 1e-12 * max(1.0, float(np.linalg.norm(o, 2)) ** 2):
        raise DegenerateObservable(f"steady-state variance {var:.3g} vanishes")
    if d_obs is None:
        d_obs = dss_domega(model, {"O": o}).d_obs["O"]
    info = g0_max(model, g0max_mode, rho0, horizon)
    if d_obs == 0:
        return RelaxationBound(0.0, info, 0.0, var)
    if not info.value > 0:
        raise UnboundedReport("<G0>_max vanishes; the relaxation bound is undefined")
    return RelaxationBound(gamma * d_obs**2 / (4 * info.value * var), info, d_obs, var)


class TransientSNR(NamedTuple):
    times: np.ndarray
    snr: np.ndarray
    g0: np.ndarray
    qfi_bound: np.ndarray  # (4 / gamma) int_0^t <G0>, trapezoid rule

    @property
    def holds(self) -> bool:
        return bool(np.all(self.snr <= self.qfi_bound * (1 + 1e-6) + 1e-12))

    def time_to_fraction(self, snr_ss: float, fraction: float) -> float:
        """First grid time with SNR(t) >= fraction * snr_ss (nan if never)."""
        hit = np.nonzero(self.snr >= fraction * snr_ss)[0]
        return float(self.times[hit[0]]) if hit.size else math.nan


def transient_snr(model: LindbladModel, O=None, rho0: np.ndarray | None = None,
                  t_max: float = 100.0, steps: int = 400) -> TransientSNR:
    """Single-shot SNR of O along the relaxation from an omega-independent rho0.

    rho_t and its omega derivative are propagated together under
    [[L, 0], [dL, L]] with dL = -i[G0, .]. The steady-state relaxation
    bound follows from SNR(t) <= (4 / gamma) int_0^t <G0>, which this
    trajectory lets one check directly at every t.
    """
    gamma = _gamma(model)
    o = model.g0 if O is None else as_operator(O)
    if rho0 is None:
        rho0 = g0_ground_state(model)
    L = assemble(model)
    d = model.dim
    eye = sp.identity(d, format="csr")
    g0 = sp.csr_matrix(model.g0)
    dL = -1j * (sp.kron(eye, g0) - sp.kron(g0.T, eye))
    big = sp.bmat([[L.matrix, None], [dL, L.matrix]], format="csr")
    x0 = np.concatenate([vec(rho0), np.zeros(d * d)]).astype(complex)
    traj = spla.expm_multiply(big, x0, start=0.0, stop=t_max, num=steps + 1, endpoint=True)
    rho_t, drho_t = traj[:, : d * d], traj[:, d * d:]
    row = lambda op: vec(np.asarray(op).T)
    mean = (rho_t @ row(o)).real
    var = (rho_t @ row(o @ o)).real - mean**2
    dmean = (drho_t @ row(o)).real
    with np.errstate(divide="ignore", invalid="ignore"):
        snr = np.where(var > 1e-14, dmean**2 / var, 0.0)
    g0_t = (rho_t @ row(model.g0)).real
    times = np.linspace(0.0, t_max, steps + 1)
    qfi = 4.0 / gamma * cumulative_trapezoid(g0_t, times, initial=0.0)
    return TransientSNR(times, snr, g0_t, qfi)


class CorrelationBound(NamedTuple):
    value: float
    gamma1_opt: float
    star_condition: bool
    reduced_value: float  # closed form valid under the star condition, else nan


def correlation_bound(model: LindbladModel, g0_mean: float | None = None,
                      d_g0: float | None = None) -> CorrelationBound:
    """tau_c >= (gamma - g1) D^2 / (4 G^3) - 1/(g1 G) at g1 = min(2G/|D|, gamma)."""
    gamma = _gamma(model)
    if g0_mean is None:
        g0_mean = float(expect(model.g0, steady_state(model).rho).real)
    G = g0_mean
    if not G > 1e-14:
        raise ZeroRate("<G0>_ss vanishes; the correlation bound is undefined")
    if d_g0 is None:
        d_g0 = dss_domega(model).d_obs["g0"]
    D = abs(d_g0)
    g1 = gamma if D == 0 else min(2 * G / D, gamma)
    value = (gamma - g1) * D**2 / (4 * G**3) - 1 / (g1 * G)
    star = D > 0 and 2 * G / D <= gamma
    reduced = (gamma * D**2 / (4 * G**2) - D / G) / G if star else math.nan
    return CorrelationBound(value, g1, star, reduced)


class GeneralCheck(NamedTuple):
    holds: bool
    lhs: float
    rhs: float


def general_bound_check(model: LindbladModel, A, C: float | None = None,
                        gamma1: float | None = None) -> GeneralCheck:
    """Check |d<A>/d omega|^2 / int_R C_A(t) dt <= C.

    ``A == "counts"`` selects the monitored photon flux with a fraction
    ``gamma1`` collected; C then defaults to 4 <G0>_ss / gamma0. For an
    operator A the autocorrelation is the symmetrised connected one, and
    C must be supplied unless the model is in the emission class, in which
    case 4 <G0>_ss / gamma is used.
    """
    gamma = _gamma(model)
    g0_mean = float(expect(model.g0, steady_state(model).rho).real)
    if isinstance(A, str):
        if A != "counts":
            raise ValueError(f"unknown observable {A!r}")
        gamma1 = gamma if gamma1 is None else gamma1
        if C is None:
            C = qfi_rate_bound(model, gamma1, g0_mean)
        lhs = snr_rate(model, gamma1, g0_mean=g0_mean)
    else:
        a = as_operator(A)
        if C is None:
            C = 4 * g0_mean / gamma
        d = dss_domega(model, {"A": a}).d_obs["A"]
        scale = max(1.0, float(np.linalg.norm(a, 2)))
        if abs(d) <= 1e-13 * scale:
            lhs = 0.0
        else:
            denom = 2 * integrated_autocorrelation(model, a)
            if not denom > 1e-14 * scale**2:
                raise IllConditioned(f"integrated autocorrelation {denom:.3g} is not positive")
            lhs = d**2 / denom
    if not C > 0:
        raise ValueError("C must be positive")
    return GeneralCheck(lhs <= C * (1 + 1e-10), lhs, C)


def certify(model: LindbladModel, O=None, g0max_mode: str | None = None,
            rho0: np.ndarray | None = None, horizon: float | None = None,
            gap_modes: int = 6) -> BoundReport:
    """Evaluate both bounds and compare them with gap^-1 and the resolvent tau_c."""
    _gamma(model)
    L = assemble(model)
    rho = steady_state(L).rho
    o = model.g0 if O is None else as_operator(O)
    sens = dss_domega(model, {"O": o})
    g0_mean = float(expect(model.g0, rho).real)
    d_g0 = sens.d_obs["g0"]
    gap = spectral_gap(L, k=gap_modes)
    if horizon is None:
        horizon = 10.0 / gap
    rb = relaxation_bound(model, o, g0max_mode, rho0, horizon, d_obs=sens.d_obs["O"])
    cb = correlation_bound(model, g0_mean, d_g0)
    tau_c = correlation_time_resolvent(model).tau_c
    tau_ss = 1.0 / gap
    return BoundReport(
        tau_ss_bound=rb.value, tau_ss_measured=tau_ss,
        tau_c_bound=cb.value, tau_c_measured=tau_c,
        gamma1_opt=cb.gamma1_opt, star_condition=cb.star_condition,
        tau_ss_satisfied=satisfied(tau_ss, rb.value),
        tau_c_satisfied=satisfied(tau_c, cb.value),
        g0max_mode=rb.g0max.mode, g0max=rb.g0max.value,
        g0max_at_boundary=rb.g0max.at_boundary,
        g0_mean=g0_mean, d_g0=d_g0, obs_variance=rb.variance, d_obs=rb.d_obs, gap=gap,
    )
