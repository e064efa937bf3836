"""Two-time correlations of the emitted light and of system observables.

Intensity correlations follow from the regression theorem: with the
monitored jump map J(rho) = sum r_k L_k rho L_k^dag, the emission operator
M = sum r_k L_k^dag L_k and the click rate n = Tr(M rho_ss),

    g2(tau) = Tr[M exp(L |tau|) J(rho_ss)] / n^2.

The integrated correlation time tau_c = int (g2 - 1) dtau over the whole
real line is obtained from a single traceless linear solve.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson

from .errors import InvalidObservable, ZeroRate
from .liouvillian import (Superoperator, assemble, evolve, jump_map, propagate_expectations,
                          spectral_gap, steady_state)
from .operators import LindbladModel, as_operator, expect, is_hermitian

RATE_TOL = 1e-14


@dataclass
class CorrelationResult:
    tau_grid: np.ndarray
    g2_values: np.ndarray
    tau_c: float
    method: str
    click_rate: float
    truncation_estimate: float = 0.0
    extra: dict = field(default_factory=dict)

    def to_csv(self, path=None, metadata: dict | None = None) -> str:
        """Write ``tau,g2`` rows under '#' header lines; returns the text."""
        buf = io.StringIO()
        header = {"tau_c": f"{self.tau_c:.17g}", "method": self.method,
                  "click_rate": f"{self.click_rate:.17g}"}
        if self.method == "quadrature":
            header["truncation_estimate"] = f"{self.truncation_estimate:.17g}"
        header.update(metadata or {})
        for k, v in header.items():
            buf.write(f"# {k} = {v}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["tau", "g2"])
        for t, g in zip(self.tau_grid, self.g2_values):
            w.writerow([f"{t:.17g}", f"{g:.17g}"])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, path) -> "CorrelationResult":
        meta, rows = {}, []
        with open(path) as fh:
            for line in fh:
                if line.startswith("#"):
                    key, _, val = line[1:].partition("=")
                    meta[key.strip()] = val.strip()
                elif line.strip() and not line.startswith("tau"):
                    rows.append([float(x) for x in line.split(",")])
        arr = np.array(rows).reshape(-1, 2)
        return cls(arr[:, 0], arr[:, 1], float(meta["tau_c"]), meta["method"],
                   float(meta["click_rate"]), float(meta.get("truncation_estimate", 0.0)))


def click_rate(model: LindbladModel, rho: np.ndarray | None = None) -> float:
    if rho is None:
        rho = steady_state(model).rho
    return float(expect(model.emission_operator(), rho).real)


def _emission_setup(model: LindbladModel):
    rho = steady_state(model).rho
    n = click_rate(model, rho)
    if not n > RATE_TOL * max(1.0, float(np.abs(model.emission_operator()).max())):
        raise ZeroRate(f"click rate {n:.3g} vanishes; g2 is undefined")
    return rho, n, model.emission_operator(), jump_map(model, rho)


def g2_at(model: LindbladModel, tau: float) -> float:
    """Normalised intensity correlation at delay tau (symmetric in tau)."""
    _, n, m, jr = _emission_setup(model)
    x = evolve(assemble(model), jr, abs(float(tau)))
    return float(expect(m, x).real) / n**2


def g2_curve(model: LindbladModel, tau_max: float, steps: int) -> tuple[np.ndarray, np.ndarray]:
    """g2 on the uniform grid [0, tau_max] with ``steps`` intervals."""
    _, n, m, jr = _emission_setup(model)
    vals = propagate_expectations(assemble(model), jr, [m], tau_max, steps)[:, 0].real
    return np.linspace(0.0, tau_max, steps + 1), vals / n**2


def g2_conditional(model: LindbladModel, tau: float) -> float:
    """g2 from the renormalised post-click state J(rho)/n propagated as a state."""
    _, n, m, jr = _emission_setup(model)
    cond = jr / np.trace(jr).real
    x = evolve(assemble(model), cond, abs(float(tau)))
    return float(expect(m, x).real) * np.trace(jr).real / n**2


def correlation_time_resolvent(model: LindbladModel, tau_max: float | None = None,
                               steps: int = 0) -> CorrelationResult:
    """tau_c = (2/n^2) Tr(M Y) with L Y = -(J(rho) - n rho), Tr Y = 0.

    With ``steps > 0`` a g2 curve on [0, tau_max] is attached for output.
    """
    rho, n, m, jr = _emission_setup(model)
    L = assemble(model)
    y = L.solver.solve(-(jr - n * rho))
    tau_c = 2.0 * float(expect(m, y).real) / n**2
    if steps > 0:
        if tau_max is None:
            tau_max = 10.0 / spectral_gap(L)
        tau, g2 = g2_curve(model, tau_max, steps)
    else:
        tau, g2 = np.empty(0), np.empty(0)
    return CorrelationResult(tau, g2, tau_c, "resolvent", n)


def correlation_time_quadrature(model: LindbladModel, tau_max: float | None = None,
                                steps: int = 2000, gap: float | None = None) -> CorrelationResult:
    """tau_c = 2 int_0^tau_max (g2 - 1) dtau by Simpson's rule.

    The default horizon is 20/gap. The reported truncation estimate is
    |g2(tau_max) - 1| / gap, the tail of a single exponential.
    """
    L = assemble(model)
    if gap is None:
        gap = spectral_gap(L)
    if tau_max is None:
        tau_max = 20.0 / gap
    tau, g2 = g2_curve(model, tau_max, steps)
    n = click_rate(model)
    tau_c = 2.0 * float(simpson(g2 - 1.0, x=tau))
    trunc = 2.0 * abs(g2[-1] - 1.0) / gap
    return CorrelationResult(tau, g2, tau_c, "quadrature", n, trunc, {"gap": gap})


def _check_observable(a) -> np.ndarray:
    a = as_operator(a)
    if not is_hermitian(a):
        raise InvalidObservable("observable must be Hermitian")
    return a


def system_autocorrelation(model: LindbladModel, A, tau: float) -> float:
    """Re Tr[A exp(L tau)((A rho + rho A)/2)] - <A>^2 (symmetrised ordering)."""
    a = _check_observable(A)
    rho = steady_state(model).rho
    mean = expect(a, rho).real
    x = evolve(assemble(model), 0.5 * (a @ rho + rho @ a), abs(float(tau)))
    return float(expect(a, x).real - mean**2)


def integrated_autocorrelation(model: LindbladModel, A) -> float:
    """int_0^inf of the symmetrised connected autocorrelation, by resolvent."""
    a = _check_observable(A)
    L: Superoperator = assemble(model)
    rho = steady_state(model).rho
    mean = expect(a, rho).real
    x = 0.5 * (a @ rho + rho @ a) - mean * rho
    y = L.solver.solve(-x)
    return float(expect(a, y).real)


def count_variance_rate(model: LindbladModel, tau_c: float | None = None,
                        window: float | None = None) -> float:
    """Var(counts)/T of the monitored clicks.

    Asymptotically n + n^2 tau_c. For a finite window T the exact value
    n + (2/T) Tr[M int_0^T (T - s) exp(L s) X ds], X = J(rho) - n rho, is
    evaluated in closed form as -T L^-1 X + (exp(L T) - 1) L^-2 X.
    """
    rho, n, m, jr = _emission_setup(model)
    if window is None:
        if tau_c is None:
            tau_c = correlation_time_resolvent(model).tau_c
        return n + n**2 * tau_c
    if window <= 0:
        raise ValueError("window must be positive")
    L = assemble(model)
    y1 = L.solver.solve(jr - n * rho)
    y2 = L.solver.solve(y1)
    folded = -window * y1 + evolve(L, y2, window) - y2
    return n + 2.0 / window * float(expect(m, folded).real)
