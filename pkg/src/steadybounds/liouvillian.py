"""Vectorised Liouvillian: assembly, steady state, spectral gap, propagation.

Vectorisation is column stacking, vec(A X B) = (B^T kron A) vec(X), so

    L = -i(I kron H - H^T kron I)
        + sum_k r_k (conj(L_k) kron L_k - 1/2 I kron L_k^dag L_k
                     - 1/2 (L_k^dag L_k)^T kron I).

Linear solves on the traceless subspace use the bordered system
[[L, vec(I)], [vec(I)^dag, 0]], which is nonsingular exactly when the zero
eigenvalue of L is simple. Small systems are factorised with SuperLU; larger
ones use GMRES preconditioned by the no-jump part of L, a Sylvester operator
that is inverted exactly through two Schur decompositions of size d.
"""
from __future__ import annotations

import logging
import math
import weakref
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import simpson, solve_ivp
from scipy.linalg.lapack import ztrsyl

from .errors import DegenerateSteadyState, InvalidTime, SolverFailure
from .operators import LindbladModel, dag, expect

log = logging.getLogger(__name__)

DIRECT_LIMIT = 1024      # d^2 at or below which SuperLU is used
BANDED_DIRECT_LIMIT = 90000  # single-mode truncations factorise with little fill
DENSE_EIG_LIMIT = 1024   # d^2 at or below which the full spectrum is computed
DENSE_EXPM_LIMIT = 1024  # d^2 at or below which expm is formed densely
ZERO_EIG_TOL = 1e-10     # |lambda| < tol * ||L|| counts as zero
RESIDUAL_TOL = 1e-10
CLIP_TOL = 1e-8


def vec(x: np.ndarray) -> np.ndarray:
    return np.asarray(x).reshape(-1, order="F")


def unvec(v: np.ndarray, d: int | None = None) -> np.ndarray:
    if d is None:
        d = math.isqrt(v.size)
    return np.asarray(v).reshape(d, d, order="F")


def lindblad_rhs(model: LindbladModel, rho: np.ndarray) -> np.ndarray:
    """Direct evaluation of -i[H, rho] + sum_k r_k D[L_k](rho)."""
    h = model.hamiltonian()
    out = -1j * (h @ rho - rho @ h)
    for op, rate in model.jumps:
        ldl = dag(op) @ op
        out += rate * (op @ rho @ dag(op) - 0.5 * (ldl @ rho + rho @ ldl))
    return out


def jump_map(model: LindbladModel, rho: np.ndarray, channels=None) -> np.ndarray:
    """sum over channels of r_k L_k rho L_k^dag (default: the counting channels)."""
    if channels is None:
        channels = model.counting
    out = np.zeros_like(rho, dtype=complex)
    for k in channels:
        op, rate = model.jumps[k]
        out += rate * (op @ rho @ dag(op))
    return out


@dataclass(frozen=True, eq=False)
class Superoperator:
    """Liouvillian acting on column-stacked density matrices."""

    dim: int
    matrix: sp.csr_matrix
    model: LindbladModel

    @cached_property
    def norm(self) -> float:
        return float(spla.norm(self.matrix, 1))

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def __matmul__(self, v):
        return self.matrix @ v

    def apply(self, x: np.ndarray) -> np.ndarray:
        return unvec(self.matrix @ vec(x), self.dim)

    @cached_property
    def solver(self) -> "StationarySolver":
        return StationarySolver(self)

    @cached_property
    def steady(self) -> "SteadyState":
        return _solve_steady_state(self)


_ASSEMBLED: "weakref.WeakKeyDictionary[LindbladModel, Superoperator]" = weakref.WeakKeyDictionary()


def assemble(model: LindbladModel) -> Superoperator:
    """Build (and memoise per model instance) the sparse Liouvillian."""
    cached = _ASSEMBLED.get(model)
    if cached is not None:
        return cached
    d = model.dim
    eye = sp.identity(d, dtype=complex, format="csr")
    h = sp.csr_matrix(model.hamiltonian())
    mat = -1j * (sp.kron(eye, h) - sp.kron(h.T, eye))
    for op, rate in model.jumps:
        if rate == 0:
            continue
        c = sp.csr_matrix(op)
        cdc = (c.conj().T @ c).tocsr()
        mat = mat + rate * (sp.kron(c.conj(), c) - 0.5 * sp.kron(eye, cdc) - 0.5 * sp.kron(cdc.T, eye))
    mat = sp.csr_matrix(mat)
    mat.eliminate_zeros()
    L = Superoperator(d, mat, model)
    _ASSEMBLED[model] = L
    return L


class _Sylvester:
    """Exact inverse of X -> (A - shift) X + X B with A = -i H_eff, B = A^dag."""

    def __init__(self, h_eff: np.ndarray, shift: complex = 0.0):
        d = h_eff.shape[0]
        a = -1j * h_eff - shift * np.eye(d)
        b = 1j * dag(h_eff)
        self.t, self.u = sla.schur(a, output="complex")
        self.s, self.w = sla.schur(b, output="complex")
        self.d = d

    def solve(self, y: np.ndarray) -> np.ndarray:
        q = dag(self.u) @ unvec(y, self.d) @ self.w
        x, scale, info = ztrsyl(self.t, self.s, q)
        if info < 0:
            raise SolverFailure(f"ztrsyl failed (info={info})")
        return vec(self.u @ (x / scale) @ dag(self.w))


class StationarySolver:
    """Solves L x = b subject to Tr x = c for b in the range of L."""

    def __init__(self, L: Superoperator, method: str = "auto"):
        self.L = L
        n = L.dim**2
        self.n = n
        self.trace_row = vec(np.eye(L.dim)).astype(complex)
        if method == "auto":
            banded = L.model.kind in _TRUNCATED_KINDS and n <= BANDED_DIRECT_LIMIT
            method = "direct" if n <= DIRECT_LIMIT or banded else "iterative"
        self.method = method
        self._lu = None
        self._precond = None

    def _bordered_direct(self):
        if self._lu is None:
            t = sp.csc_matrix(self.trace_row.reshape(-1, 1))
            mat = sp.bmat([[self.L.matrix, t], [t.T, None]], format="csc")
            try:
                # column AMD keeps the ladder band of a truncated mode narrow;
                # minimum degree on A^T + A does better on spin Hilbert spaces
                spec = "COLAMD" if self.L.model.kind in _TRUNCATED_KINDS else "MMD_AT_PLUS_A"
                self._lu = spla.splu(mat, permc_spec=spec)
            except RuntimeError as exc:
                raise DegenerateSteadyState(f"bordered Liouvillian is singular: {exc}") from exc
        return self._lu

    def _bordered_matvec(self, v):
        x, mu = v[: self.n], v[self.n]
        return np.concatenate([self.L.matrix @ x + mu * self.trace_row, [self.trace_row @ x]])

    def _gmres(self, rhs, rtol=1e-13):
        if self._precond is None:
            self._precond = _Sylvester(self.L.model.effective_hamiltonian())
        pre = self._precond
        n = self.n
        op = spla.LinearOperator((n + 1, n + 1), matvec=self._bordered_matvec, dtype=complex)
        m = spla.LinearOperator((n + 1, n + 1), dtype=complex,
                                matvec=lambda v: np.concatenate([pre.solve(v[:n]), v[n:]]))
        scale = np.linalg.norm(rhs)
        x = np.zeros(n + 1, dtype=complex)
        for _ in range(4):
            r = rhs - self._bordered_matvec(x)
            if np.linalg.norm(r) <= rtol * scale:
                break
            dx, info = spla.gmres(op, r, M=m, rtol=rtol, atol=0.0, restart=120, maxiter=40)
            x = x + dx
        return x

    def solve(self, b: np.ndarray, trace: complex = 0.0, rtol: float = 1e-13) -> np.ndarray:
        """Return X with L vec(X) = vec(b) and Tr X = trace.

        ``rtol`` is the relative residual target of the iterative path.
        """
        rhs = np.concatenate([vec(b).astype(complex), [trace]])
        if self.method == "direct":
            x = self._bordered_direct().solve(rhs)
        else:
            x = self._gmres(rhs, rtol)
            res = np.linalg.norm(rhs - self._bordered_matvec(x))
            if not res <= max(1e-9, 100 * rtol) * max(1.0, np.linalg.norm(rhs)):
                log.info("GMRES residual %.3g; switching to SuperLU", res)
                self.method = "direct"
                x = self._bordered_direct().solve(rhs)
        if not np.all(np.isfinite(x)):
            raise DegenerateSteadyState("bordered solve produced non-finite values")
        return unvec(x[: self.n], self.L.dim)


    def well_posed(self) -> bool:
        """Probe whether the bordered matrix is nonsingular (simple zero mode).

        A random right-hand side lies outside the range of a singular
        bordered matrix, so the solve then either fails, leaves a large
        residual or blows up.
        """
        rng = np.random.default_rng(0)
        rhs = rng.standard_normal(self.n + 1) + 1j * rng.standard_normal(self.n + 1)
        try:
            if self.method == "direct":
                x = self._bordered_direct().solve(rhs)
            else:
                x = self._gmres(rhs, 1e-10)
        except DegenerateSteadyState:
            return False
        if not np.all(np.isfinite(x)):
            return False
        res = np.linalg.norm(rhs - self._bordered_matvec(x)) / np.linalg.norm(rhs)
        growth = np.linalg.norm(x) * max(self.L.norm, 1.0) / np.linalg.norm(rhs)
        return res < 1e-6 and growth < 1e13


class SteadyState(NamedTuple):
    rho: np.ndarray
    residual: float
    nullity_estimate: int
    clipped_mass: float = 0.0
    tail_population: float | None = None


TAIL_WARN = 1e-8
_TRUNCATED_KINDS = {"parametric_cavity", "thermal_cavity"}


def tail_population(rho: np.ndarray, levels: int = 2) -> float:
    """Population of the top ``levels`` basis states (truncation diagnostic)."""
    return float(np.diag(rho)[-levels:].real.sum())


def _project_density(rho: np.ndarray) -> tuple[np.ndarray, float]:
    rho = 0.5 * (rho + dag(rho))
    rho = rho / np.trace(rho).real
    w, v = np.linalg.eigh(rho)
    neg = w < -CLIP_TOL
    clipped = float(-w[neg].sum())
    if clipped > 0:
        w = np.where(neg, 0.0, w)
        rho = (v * w) @ dag(v)
        rho = rho / np.trace(rho).real
    return rho, clipped


def _solve_steady_state(L: Superoperator) -> SteadyState:
    tol = RESIDUAL_TOL * max(L.norm, 1.0)
    rho = None
    singular = False
    try:
        rho = L.solver.solve(np.zeros((L.dim, L.dim)), trace=1.0)
    except DegenerateSteadyState:
        singular = True
    if rho is not None and not L.solver.well_posed():
        singular, rho = True, None
    if rho is not None:
        rho, clipped = _project_density(rho)
        residual = float(np.linalg.norm(L.matrix @ vec(rho)))
        if residual <= tol * max(1.0, 1e2 * clipped / CLIP_TOL):
            tail = None
            if L.model.kind in _TRUNCATED_KINDS:
                tail = tail_population(rho)
                if tail > TAIL_WARN:
                    log.warning("top two levels hold %.2e of the population; "
                                "increase the truncation dimension", tail)
            return SteadyState(rho, residual, 1, clipped, tail)
    # diagnosis of record: look at the spectrum near zero
    nullity = _nullity(L, singular)
    if nullity > 1:
        raise DegenerateSteadyState(f"zero eigenvalue has multiplicity {nullity}")
    raise SolverFailure("no null vector found within tolerance")


def _nullity(L: Superoperator, bordered_singular: bool) -> int:
    """Dimension of the numerical null space (diagnostic of record).

    Small systems count near-zero eigenvalues of the full spectrum. For
    large ones the bordered matrix is nonsingular exactly when the null
    space is one-dimensional, so its factorisation failing is the signal.
    """
    if L.dim**2 <= DENSE_EIG_LIMIT:
        tol = ZERO_EIG_TOL * max(L.norm, 1.0) * 1e2
        return int(np.sum(np.abs(np.linalg.eigvals(L.dense())) < tol))
    return 2 if bordered_singular else 1


def steady_state(L: Superoperator | LindbladModel) -> SteadyState:
    if isinstance(L, LindbladModel):
        L = assemble(L)
    return L.steady


def _eigs_near_zero(L: Superoperator, k: int | None) -> np.ndarray:
    """All eigenvalues (dense) or 0 plus the k nonzero ones of smallest modulus.

    The sparse path runs Arnoldi on the inverse of L restricted to the
    traceless subspace, applied through the bordered solver. That operator
    is well conditioned whenever the steady state is unique, unlike a
    shift-invert with a shift next to the zero eigenvalue.
    """
    if k is None or L.dim**2 <= DENSE_EIG_LIMIT:
        return np.linalg.eigvals(L.dense())
    n = L.dim**2
    d = L.dim
    rho = L.steady.rho
    solver = L.solver

    def inverse(v):
        x = unvec(v, d)
        return vec(solver.solve(x - np.trace(x) * rho, rtol=1e-11))

    op = spla.LinearOperator((n, n), matvec=inverse, dtype=complex)
    try:
        mu = spla.eigs(op, k=k, which="LM", return_eigenvectors=False,
                       tol=1e-9, maxiter=5000)
    except spla.ArpackNoConvergence as exc:
        mu = exc.eigenvalues
        if mu is None or len(mu) == 0:
            raise SolverFailure("Arnoldi found no slow modes") from exc
    mu = np.asarray(mu)
    mu = mu[np.abs(mu) > 0]
    return np.concatenate([[0.0], 1.0 / mu])


def liouvillian_eigenvalues(L: Superoperator, k: int | None = None) -> np.ndarray:
    """Full spectrum (k=None, small systems) or 0 plus the k slowest by modulus."""
    return _eigs_near_zero(L, k)


def spectral_gap(L: Superoperator | LindbladModel, k: int = 6) -> float:
    """Smallest nonzero |Re lambda| of the Liouvillian.

    Exact (full spectrum) for d^2 <= DENSE_EIG_LIMIT. Above that only the k
    nonzero eigenvalues of smallest modulus are found, so the result is an
    upper estimate of the gap, exact whenever the slowest-decaying mode is
    among them; gap^-1 is then a conservative comparator for lower bounds.
    """
    if isinstance(L, LindbladModel):
        L = assemble(L)
    n = L.dim**2
    if n > DENSE_EIG_LIMIT:
        L.steady  # raises DegenerateSteadyState if the zero eigenvalue is not simple
    vals = _eigs_near_zero(L, None if n <= DENSE_EIG_LIMIT else min(k, n - 2))
    zero = np.abs(vals) < ZERO_EIG_TOL * max(L.norm, 1.0)
    nz = int(zero.sum())
    if nz > 1:
        raise DegenerateSteadyState(f"zero eigenvalue has multiplicity {nz}")
    rest = vals[~zero]
    if rest.size == 0:
        raise SolverFailure("no nonzero eigenvalues found")
    return float(np.min(np.abs(rest.real)))


def evolve(L: Superoperator | LindbladModel, rho0: np.ndarray, t: float,
           method: str = "auto") -> np.ndarray:
    """vec(rho_t) = exp(L t) vec(rho0)."""
    if isinstance(L, LindbladModel):
        L = assemble(L)
    if t < 0:
        raise InvalidTime(f"t must be non-negative, got {t}")
    rho0 = np.asarray(rho0, dtype=complex)
    if t == 0:
        return rho0.copy()
    if method == "auto":
        method = "expm" if L.dim**2 <= DENSE_EXPM_LIMIT else "krylov"
    if method == "expm":
        return unvec(sla.expm(L.dense() * t) @ vec(rho0), L.dim)
    if method == "rk45":
        mat = L.matrix
        sol = solve_ivp(lambda _, y: mat @ y, (0.0, t), vec(rho0), method="RK45",
                        rtol=1e-11, atol=1e-13)
        if not sol.success:
            raise SolverFailure(sol.message)
        return unvec(sol.y[:, -1], L.dim)
    if method == "krylov":
        return unvec(spla.expm_multiply(L.matrix * t, vec(rho0)), L.dim)
    raise ValueError(f"unknown method {method!r}")


def propagate_expectations(L: Superoperator, x0: np.ndarray, ops, t_max: float,
                           steps: int, block: int = 256) -> np.ndarray:
    """Tr(op exp(L t) x0) for each op on the uniform grid t_j = j t_max / steps.

    Returns an array of shape (steps + 1, len(ops)). Propagation is done in
    blocks so memory stays at O(block * d^2).
    """
    if t_max < 0:
        raise InvalidTime(f"t_max must be non-negative, got {t_max}")
    ops = [np.asarray(op) for op in ops]
    # Tr(op X) = vec(op^T) . vec(X)
    rows = np.array([vec(op.T) for op in ops])
    dt = t_max / steps
    out = np.empty((steps + 1, len(ops)), dtype=complex)
    v = vec(x0).astype(complex)
    out[0] = rows @ v
    j = 0
    while j < steps:
        m = min(block, steps - j)
        chunk = spla.expm_multiply(L.matrix, v, start=dt, stop=dt * m, num=m, endpoint=True)
        chunk = np.atleast_2d(chunk)
        out[j + 1: j + 1 + m] = chunk @ rows.T
        v = chunk[-1]
        j += m
    return out


class G0Max(NamedTuple):
    value: float
    norm: float
    t_at_max: float
    at_boundary: bool


def max_g0_expectation(model: LindbladModel, rho0: np.ndarray, t_max: float,
                       steps: int = 200) -> G0Max:
    """Largest <G0>_t sampled on [0, t_max], plus ||G0|| as fallback."""
    if steps < 2:
        raise ValueError("steps must be >= 2")
    L = assemble(model)
    vals = propagate_expectations(L, rho0, [model.g0], t_max, steps)[:, 0].real
    i = int(np.argmax(vals))
    norm = float(np.linalg.norm(model.g0, 2))
    return G0Max(float(vals[i]), norm, t_max * i / steps, i == steps)


def qfi_bound_transient(model: LindbladModel, gamma0: float, rho0: np.ndarray, t: float,
                        steps: int = 64, rtol: float = 1e-6, max_steps: int = 1 << 16) -> float:
    """(4 / gamma0) * integral_0^t <G0>_t' dt' with Simpson refinement to rtol."""
    if t < 0:
        raise InvalidTime(f"t must be non-negative, got {t}")
    gamma = model.loss_rate()
    if not gamma0 > 0 or (gamma is not None and gamma0 > gamma * (1 + 1e-12)):
        raise ValueError(f"gamma0 must lie in (0, gamma], got {gamma0}")
    if t == 0:
        return 0.0
    L = assemble(model)
    prev = None
    while True:
        vals = propagate_expectations(L, rho0, [model.g0], t, steps)[:, 0].real
        integral = simpson(vals, dx=t / steps)
        if prev is not None and abs(integral - prev) <= rtol * max(abs(integral), 1e-300):
            break
        if steps >= max_steps:
            break
        prev = integral
        steps *= 2
    return 4.0 / gamma0 * float(integral)


def expectation(model: LindbladModel, op: np.ndarray, rho: np.ndarray | None = None) -> float:
    if rho is None:
        rho = steady_state(model).rho
    return expect(op, rho).real


def adequate_cavity(omega: float, epsilon: float, gamma: float, tail_tol: float = 1e-10,
                    max_dim: int = 400) -> LindbladModel:
    """Parametric cavity truncated in the basis that diagonalises its steady state.

    The stationary state is a squeezed thermal state; in the Fock basis of
    the squeezed mode it is geometric with mean n_b, so the truncation only
    has to resolve n_b rather than the (much larger) photon number. The
    dimension starts at the geometric-tail estimate and grows by 10 until
    the top two levels hold less than ``tail_tol``. A further quarter (at
    least 10 levels) is then added: the omega derivative and the
    regression-propagated operators reach higher in the ladder than rho_ss.
    """
    from .analytic_cavity import CavityParams, stationary_moments
    from .operators import build_parametric_cavity, thermal_dim

    n, m = stationary_moments(CavityParams(omega, epsilon, gamma))
    r = 0.5 * math.atanh(min(abs(m) / (n + 0.5), 1 - 1e-16))
    xi = r * np.exp(1j * np.angle(m)) if r > 0 else 0.0
    nb = max(math.sqrt(max((n + 0.5) ** 2 - abs(m) ** 2, 0.25)) - 0.5, 0.0)
    dim = max(8, thermal_dim(nb, tail_tol) + 4)
    while True:
        model = build_parametric_cavity(omega, epsilon, gamma, dim, squeeze=xi)
        tail = steady_state(model).tail_population
        if tail >= tail_tol and dim >= max_dim:
            log.warning("truncation tail %.2e at the dimension cap %d", tail, dim)
            return model
        if tail < tail_tol:
            break
        dim += 10
    dim = min(max_dim, dim + max(10, dim // 4))
    return build_parametric_cavity(omega, epsilon, gamma, dim, squeeze=xi)
