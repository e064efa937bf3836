"""Hilbert-space operators and the concrete Lindblad models.

Operators are plain dense complex ``numpy`` arrays. Models are immutable
:class:`LindbladModel` values holding the split H = omega * G0 + G1, the
jump operators with their rates, and the monitored (counting) channels.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import reduce
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .errors import InvalidCoupling, InvalidDimension, InvalidModel

HERMITIAN_TOL = 1e-10
MAX_SPINS = 10

_PAULI = {
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
    # sigma^- |up> = |down>, basis e0 = |up>
    "minus": np.array([[0, 0], [1, 0]], dtype=complex),
    "plus": np.array([[0, 1], [0, 0]], dtype=complex),
}


def as_operator(x) -> np.ndarray:
    """Validate and return a square, finite, complex matrix (read-only copy)."""
    op = np.array(x, dtype=complex)
    if op.ndim != 2 or op.shape[0] != op.shape[1] or op.shape[0] < 1:
        raise InvalidDimension(f"operator must be square, got shape {op.shape}")
    if not np.all(np.isfinite(op)):
        raise InvalidModel("operator has non-finite entries")
    op.setflags(write=False)
    return op


def dag(op: np.ndarray) -> np.ndarray:
    return op.conj().T


def is_hermitian(op: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    scale = max(1.0, float(np.abs(op).max(initial=0.0)))
    return bool(np.abs(op - dag(op)).max(initial=0.0) <= tol * scale)


def is_positive_semidefinite(op: np.ndarray, tol: float = 1e-8) -> bool:
    if not is_hermitian(op, max(tol, HERMITIAN_TOL)):
        return False
    return bool(np.linalg.eigvalsh(0.5 * (op + dag(op))).min() >= -tol)


def expect(op: np.ndarray, rho: np.ndarray) -> complex:
    """Tr(op rho) without forming the product."""
    return complex(np.einsum("ij,ji->", op, rho))


class Jump(NamedTuple):
    operator: np.ndarray
    rate: float


@dataclass(frozen=True, eq=False)
class LindbladModel:
    """Markovian model with H = omega * g0 + g1 and rate-weighted jumps.

    ``counting`` lists the jump indices whose clicks are monitored jointly.
    ``kind`` and ``params`` describe how the model was built so it can be
    rebuilt at shifted omega or serialised into a config.
    """

    g0: np.ndarray
    g1: np.ndarray
    omega: float
    jumps: tuple[Jump, ...]
    counting: tuple[int, ...] = (0,)
    kind: str = "custom"
    params: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        g0 = as_operator(self.g0)
        g1 = as_operator(self.g1)
        if g0.shape != g1.shape:
            raise InvalidDimension("g0 and g1 dimensions differ")
        jumps = tuple(Jump(as_operator(op), float(rate)) for op, rate in self.jumps)
        object.__setattr__(self, "g0", g0)
        object.__setattr__(self, "g1", g1)
        object.__setattr__(self, "jumps", jumps)
        object.__setattr__(self, "omega", float(self.omega))
        object.__setattr__(self, "counting", tuple(int(k) for k in self.counting))
        object.__setattr__(self, "params", dict(self.params))
        d = g0.shape[0]
        if not is_hermitian(g0):
            raise InvalidModel("g0 must be Hermitian")
        if np.linalg.eigvalsh(0.5 * (g0 + dag(g0))).min() < -1e-9 * max(1.0, np.abs(g0).max()):
            raise InvalidModel("g0 must be positive semidefinite")
        if not is_hermitian(g1):
            raise InvalidModel("g1 must be Hermitian")
        if not math.isfinite(self.omega):
            raise InvalidModel("omega must be finite")
        for op, rate in jumps:
            if op.shape != (d, d):
                raise InvalidDimension("jump operator dimension mismatch")
            if not (rate >= 0 and math.isfinite(rate)):
                raise InvalidModel(f"jump rates must be finite and >= 0, got {rate}")
        if not self.counting or any(k < 0 or k >= len(jumps) for k in self.counting):
            raise InvalidModel(f"counting channels {self.counting} out of range")

    @property
    def dim(self) -> int:
        return self.g0.shape[0]

    def hamiltonian(self) -> np.ndarray:
        return self.omega * self.g0 + self.g1

    def effective_hamiltonian(self) -> np.ndarray:
        """H - (i/2) sum_k rate_k L_k^dag L_k."""
        h = self.hamiltonian().astype(complex)
        for op, rate in self.jumps:
            h = h - 0.5j * rate * (dag(op) @ op)
        return h

    def emission_operator(self) -> np.ndarray:
        """M = sum over monitored channels of rate * L^dag L."""
        d = self.dim
        m = np.zeros((d, d), dtype=complex)
        for k in self.counting:
            op, rate = self.jumps[k]
            m += rate * (dag(op) @ op)
        return m

    def loss_rate(self, tol: float = 1e-9) -> float | None:
        """Return gamma if every jump is monitored and sum rate L^dag L = gamma G0.

        Otherwise return None: the model is outside the class the bounds
        assume (e.g. a thermal bath with an absorbing channel).
        """
        if len(self.counting) != len(self.jumps):
            return None
        m = self.emission_operator()
        norm = float(np.vdot(self.g0, self.g0).real)
        if norm == 0:
            return None
        gamma = float(np.vdot(self.g0, m).real) / norm
        if gamma <= 0:
            return None
        if np.abs(m - gamma * self.g0).max() > tol * max(1.0, np.abs(m).max()):
            return None
        return gamma

    def with_omega(self, omega: float) -> "LindbladModel":
        params = dict(self.params)
        if "omega" in params:
            params["omega"] = omega
        return replace(self, omega=omega, params=params)

    def scaled(self, s: float) -> "LindbladModel":
        """Multiply every energy and rate by s (G0 itself is dimensionless)."""
        params = {k: (_scale_param(v, s) if k in _ENERGY_KEYS else v)
                  for k, v in self.params.items()}
        return replace(self, omega=self.omega * s, g1=self.g1 * s,
                       jumps=tuple(Jump(op, rate * s) for op, rate in self.jumps),
                       params=params)

    def ladder_warning(self) -> str | None:
        """Report when the dissipator does not fit the assumed ladder class.

        The class: every jump monitored and lowering between neighbouring,
        equally spaced G0 levels, so the emission flux is gamma <G0>. Models
        outside it are accepted but flagged.
        """
        if self.loss_rate() is None:
            return "emission operator is not proportional to G0"
        return None


_ENERGY_KEYS = {"omega", "epsilon", "gamma", "hx", "J", "Jbar"}


def _scale_param(v, s):
    if isinstance(v, (list, tuple)):
        return [_scale_param(x, s) for x in v]
    return v * s


def fock_annihilation(dim: int) -> np.ndarray:
    if dim < 2:
        raise InvalidDimension(f"Fock dimension must be >= 2, got {dim}")
    return np.diag(np.sqrt(np.arange(1, dim, dtype=float)), 1).astype(complex)


def squeezed_annihilation(dim: int, xi: complex = 0.0) -> np.ndarray:
    """Truncated a expressed in a squeezed Fock basis.

    a = cosh(r) b + e^{i phi} sinh(r) b^dag with xi = r e^{i phi}, where b is
    the truncated annihilator. xi = 0 gives the plain Fock operator.
    """
    b = fock_annihilation(dim)
    r, phi = abs(xi), np.angle(xi)
    if r == 0:
        return b
    return np.cosh(r) * b + np.exp(1j * phi) * np.sinh(r) * dag(b)


def pauli_embedded(axis: str, site: int, n_sites: int) -> np.ndarray:
    """Pauli (or sigma^-/sigma^+) on ``site`` of an n-site chain; site 0 is leftmost."""
    if axis not in _PAULI:
        raise ValueError(f"unknown axis {axis!r}")
    if n_sites < 1:
        raise InvalidDimension("n_sites must be positive")
    if not 0 <= site < n_sites:
        raise IndexError(f"site {site} out of range for {n_sites} sites")
    factors = [np.eye(2, dtype=complex)] * n_sites
    factors[site] = _PAULI[axis]
    return reduce(np.kron, factors)


def build_parametric_cavity(omega: float, epsilon: float, gamma: float, dim: int,
                            squeeze: complex = 0.0) -> LindbladModel:
    """Degenerate parametric oscillator with single-photon loss.

    ``squeeze`` selects the truncation basis only; near threshold a basis
    squeezed along the stationary covariance needs far fewer levels.
    """
    if dim < 4:
        raise InvalidDimension(f"cavity dimension must be >= 4, got {dim}")
    if not gamma > 0:
        raise InvalidModel("gamma must be positive")
    if epsilon < 0:
        raise InvalidModel("epsilon must be non-negative")
    a = squeezed_annihilation(dim, squeeze)
    ad = dag(a)
    return LindbladModel(
        g0=ad @ a,
        g1=0.5 * epsilon * (ad @ ad + a @ a),
        omega=omega,
        jumps=(Jump(a, gamma),),
        counting=(0,),
        kind="parametric_cavity",
        params={"omega": omega, "epsilon": epsilon, "gamma": gamma,
                "dim": dim, "squeeze": complex(squeeze)},
    )


def build_thermal_cavity(gamma: float, nbar: float, dim: int,
                         omega: float = 1.0) -> LindbladModel:
    """Cavity coupled to a thermal bath; the downward channel is monitored."""
    if not gamma > 0:
        raise InvalidModel("gamma must be positive")
    if nbar < 0:
        raise InvalidModel("nbar must be non-negative")
    a = fock_annihilation(dim)
    return LindbladModel(
        g0=dag(a) @ a,
        g1=np.zeros((dim, dim), dtype=complex),
        omega=omega,
        jumps=(Jump(a, gamma * (nbar + 1)), Jump(dag(a), gamma * nbar)),
        counting=(0,),
        kind="thermal_cavity",
        params={"omega": omega, "gamma": gamma, "nbar": nbar, "dim": dim},
    )


def thermal_dim(nbar: float, tol: float = 1e-12) -> int:
    """Smallest Fock dimension whose thermal tail mass is below tol."""
    if nbar <= 0:
        return 4
    q = nbar / (nbar + 1)
    return max(4, int(math.ceil(math.log(tol) / math.log(q))) + 2)


def build_ising(n: int, omega: float, hx, J, gamma: float,
                max_sites: int = MAX_SPINS) -> LindbladModel:
    """Dissipative transverse-field Ising model with local decay.

    Spin operators are s = sigma/2, so G0 = sum_i s^z_i + n/2 = sum_i
    sigma^+_i sigma^-_i has spectrum {0, ..., n}, ||G0|| = n and the
    total emission flux is gamma <G0>. The n decay channels are counted
    jointly.
    """
    if n < 1:
        raise InvalidDimension("need at least one spin")
    if n > max_sites:
        raise InvalidDimension(f"n={n} exceeds max_sites={max_sites}")
    if not gamma > 0:
        raise InvalidModel("gamma must be positive")
    hx = np.broadcast_to(np.asarray(hx, dtype=float), (n,))
    J = np.asarray(J, dtype=float)
    if J.shape != (n, n):
        raise InvalidCoupling(f"J must be {n}x{n}, got {J.shape}")
    if not np.allclose(J, J.T, atol=1e-12):
        raise InvalidCoupling("J must be symmetric")
    if np.any(np.diag(J) != 0):
        raise InvalidCoupling("J must have zero diagonal")
    sz = [0.5 * pauli_embedded("z", i, n) for i in range(n)]
    sx = [0.5 * pauli_embedded("x", i, n) for i in range(n)]
    lower = [pauli_embedded("minus", i, n) for i in range(n)]
    d = 2**n
    g0 = sum(sz) + 0.5 * n * np.eye(d)
    g1 = sum(h * x for h, x in zip(hx, sx))
    for i in range(n):
        for j in range(n):
            if i != j and J[i, j] != 0:
                g1 = g1 + J[i, j] * (sz[i] @ sz[j])
    g1 = np.asarray(g1, dtype=complex) + np.zeros((d, d), dtype=complex)
    return LindbladModel(
        g0=g0,
        g1=g1,
        omega=omega,
        jumps=tuple(Jump(op, gamma) for op in lower),
        counting=tuple(range(n)),
        kind="ising",
        params={"n": n, "omega": omega, "gamma": gamma,
                "hx": [float(h) for h in hx], "J": J.tolist()},
    )


def build_infinite_range_ising(n: int, omega: float, hx_uniform: float, Jbar: float,
                               gamma: float, max_sites: int = MAX_SPINS) -> LindbladModel:
    """All-to-all Ising model with J_ij = Jbar / n for i != j."""
    J = np.full((n, n), Jbar / n)
    np.fill_diagonal(J, 0.0)
    model = build_ising(n, omega, np.full(n, hx_uniform), J, gamma, max_sites=max_sites)
    return replace(model, kind="infinite_range_ising",
                   params={"n": n, "omega": omega, "hx": hx_uniform,
                           "Jbar": Jbar, "gamma": gamma})


def rebuild(model: LindbladModel, **changes) -> LindbladModel:
    """Rebuild a named model with some constructor parameters replaced."""
    p = dict(model.params)
    p.update(changes)
    if model.kind == "parametric_cavity":
        return build_parametric_cavity(p["omega"], p["epsilon"], p["gamma"], p["dim"],
                                       p.get("squeeze", 0.0))
    if model.kind == "thermal_cavity":
        return build_thermal_cavity(p["gamma"], p["nbar"], p["dim"], p["omega"])
    if model.kind == "infinite_range_ising":
        return build_infinite_range_ising(p["n"], p["omega"], p["hx"], p["Jbar"], p["gamma"])
    if model.kind == "ising":
        return build_ising(p["n"], p["omega"], p["hx"], p["J"], p["gamma"])
    raise ValueError(f"cannot rebuild model of kind {model.kind!r}")


def spin_operators(n: int) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """(s^z_i, s^x_i) lists with s = sigma/2."""
    return ([0.5 * pauli_embedded("z", i, n) for i in range(n)],
            [0.5 * pauli_embedded("x", i, n) for i in range(n)])


def number_parity(dim: int) -> np.ndarray:
    return np.diag((-1.0) ** np.arange(dim)).astype(complex)


def random_hermitian(dim: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    x = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return scale * 0.5 * (x + dag(x))


def random_density_matrix(dim: int, rng: np.random.Generator) -> np.ndarray:
    x = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = x @ dag(x)
    return rho / np.trace(rho).real


def basis_projector(dim: int, k: int) -> np.ndarray:
    p = np.zeros((dim, dim), dtype=complex)
    p[k, k] = 1.0
    return p
