"""Quantum-jump unravelling and photon-counting statistics.

Between clicks the unnormalised state evolves under H_eff = H - (i/2) sum
r_k L_k^dag L_k, whose squared norm decays monotonically; a jump happens
when it crosses a uniform random threshold. Each trajectory owns an RNG
stream derived from (master seed, trajectory index), so records do not
depend on scheduling or worker count.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy.optimize import brentq
from scipy.stats import chi2 as chi2_dist

from .correlations import CorrelationResult
from .errors import StatisticsError, StiffnessError
from .liouvillian import steady_state
from .operators import LindbladModel

MIN_TRAJECTORIES = 100
MIN_WINDOWS = 10_000
ROOT_XTOL = 1e-12


@dataclass
class ClickRecord:
    duration: float
    click_times: np.ndarray
    channel_ids: np.ndarray
    seed: int
    index: int = 0

    def __post_init__(self):
        self.click_times = np.asarray(self.click_times, dtype=float)
        self.channel_ids = np.asarray(self.channel_ids, dtype=int)

    def counted(self, channels) -> np.ndarray:
        """Click times on the given channels."""
        return self.click_times[np.isin(self.channel_ids, list(channels))]


def trajectory_rng(master_seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=master_seed, spawn_key=(index,)))


class _NoJumpPropagator:
    """psi(t) = exp(-i H_eff t) psi via an eigendecomposition (expm if defective)."""

    def __init__(self, h_eff: np.ndarray):
        self.h = h_eff
        lam, v = np.linalg.eig(h_eff)
        self.diag = np.linalg.cond(v) < 1e8
        if self.diag:
            self.lam, self.v, self.vinv = lam, v, np.linalg.inv(v)

    def start(self, psi):
        return self.vinv @ psi if self.diag else psi

    def state(self, c, t):
        if self.diag:
            return self.v @ (np.exp(-1j * self.lam * t) * c)
        return sla.expm(-1j * self.h * t) @ c


def _sample_initial(rho: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    w, v = np.linalg.eigh(rho)
    w = np.clip(w, 0, None)
    k = rng.choice(len(w), p=w / w.sum())
    return v[:, k].astype(complex)


def simulate_trajectory(model: LindbladModel, t: float, seed: int, index: int = 0,
                        rho0: np.ndarray | None = None) -> ClickRecord:
    """One jump trajectory on [0, t]; every jump (all channels) is recorded.

    The initial pure state is drawn from the eigendecomposition of rho0,
    which defaults to rho_ss, so the record is stationary from the start.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    rng = trajectory_rng(seed, index)
    if rho0 is None:
        rho0 = steady_state(model).rho
    psi = _sample_initial(rho0, rng)
    prop = _NoJumpPropagator(model.effective_hamiltonian())
    ops = [(op, rate) for op, rate in model.jumps]
    times, chans = [], []
    now = 0.0
    scale = max((rate for _, rate in ops), default=1.0) or 1.0
    while True:
        c = prop.start(psi)
        target = rng.random()

        def excess(s):
            x = prop.state(c, s)
            return float(np.vdot(x, x).real) - target

        remaining = t - now
        if excess(remaining) > 0:
            break
        step = min(remaining, 0.1 / scale)
        lo = 0.0
        while excess(step) > 0:
            lo = step
            step = min(2 * step, remaining)
        if step - lo <= 0:
            raise StiffnessError("jump time bracket collapsed")
        dt = brentq(excess, lo, step, xtol=ROOT_XTOL * max(1.0, step), rtol=1e-14)
        now += dt
        psi = prop.state(c, dt)
        weights = np.array([rate * float(np.vdot(op @ psi, op @ psi).real) for op, rate in ops])
        total = weights.sum()
        if not total > 0:
            raise StiffnessError("no jump channel has positive weight at the jump time")
        k = int(rng.choice(len(ops), p=weights / total))
        psi = ops[k][0] @ psi
        psi = psi / np.linalg.norm(psi)
        times.append(now)
        chans.append(k)
    return ClickRecord(t, np.array(times), np.array(chans, dtype=int), seed, index)


def _run_one(args):
    model, t, seed, index, rho0 = args
    return simulate_trajectory(model, t, seed, index, rho0)


def run_ensemble(model: LindbladModel, n_traj: int, t: float, seed: int,
                 threads: int = 1, rho0: np.ndarray | None = None) -> list[ClickRecord]:
    """n_traj independent trajectories, returned in index order."""
    if rho0 is None:
        rho0 = steady_state(model).rho
    tasks = [(model, t, seed, i, rho0) for i in range(n_traj)]
    if threads <= 1:
        return [_run_one(a) for a in tasks]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        records = list(pool.map(_run_one, tasks, chunksize=max(1, n_traj // (4 * threads))))
    return sorted(records, key=lambda r: r.index)


@dataclass
class CountStatistics:
    mean_rate: float
    variance_rate: float
    fano: float
    standard_errors: dict[str, float]
    windows: int
    batches: int


def _batch_slices(n: int, batches: int) -> list[slice]:
    edges = np.linspace(0, n, batches + 1).astype(int)
    return [slice(a, b) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def count_statistics(records: list[ClickRecord], window: float, channels=None,
                     batches: int = 20) -> CountStatistics:
    """Windowed count mean and variance rates with batch-means errors.

    Batches are contiguous groups of trajectories (by index), or of windows
    when there are fewer trajectories than batches.
    """
    if not window > 0:
        raise ValueError("window must be positive")
    records = sorted(records, key=lambda r: r.index)
    per_traj = []
    for rec in records:
        nwin = int(math.floor(rec.duration / window + 1e-12))
        times = rec.click_times if channels is None else rec.counted(channels)
        counts, _ = np.histogram(times, bins=nwin, range=(0.0, nwin * window)) if nwin else (np.empty(0), None)
        per_traj.append(counts.astype(float))
    total_windows = sum(len(c) for c in per_traj)
    if len(records) < MIN_TRAJECTORIES and total_windows < MIN_WINDOWS:
        need = max(MIN_TRAJECTORIES, math.ceil(MIN_TRAJECTORIES * MIN_WINDOWS / max(total_windows, 1)))
        raise StatisticsError(
            f"{len(records)} trajectories with {total_windows} windows is too little data; "
            f"need >= {MIN_TRAJECTORIES} trajectories or >= {MIN_WINDOWS} windows",
            required=need)
    if len(records) >= batches:
        groups = [np.concatenate(per_traj[s]) for s in _batch_slices(len(records), batches)]
    else:
        flat = np.concatenate(per_traj)
        groups = [flat[s] for s in _batch_slices(len(flat), batches)]
    groups = [g for g in groups if len(g) > 1]
    means = np.array([g.mean() / window for g in groups])
    variances = np.array([g.var(ddof=1) / window for g in groups])
    b = len(groups)
    mean_rate, var_rate = float(means.mean()), float(variances.mean())
    fanos = variances / np.where(means > 0, means, np.nan)
    se = {
        "mean_rate": float(means.std(ddof=1) / math.sqrt(b)),
        "variance_rate": float(variances.std(ddof=1) / math.sqrt(b)),
        "fano": float(np.nanstd(fanos, ddof=1) / math.sqrt(b)),
    }
    fano = var_rate / mean_rate if mean_rate > 0 else math.nan
    return CountStatistics(mean_rate, var_rate, fano, se, total_windows, b)


def _coincidences(records, channels, bin_width, nbins):
    tau_max = bin_width * nbins
    hist = np.zeros((len(records), nbins))
    starts = np.zeros(len(records))
    clicks = np.zeros(len(records))
    span = np.zeros(len(records))
    for i, rec in enumerate(records):
        times = rec.click_times if channels is None else rec.counted(channels)
        clicks[i] = len(times)
        span[i] = rec.duration
        usable = times[times <= rec.duration - tau_max]
        starts[i] = len(usable)
        for j, t0 in enumerate(usable):
            k0 = np.searchsorted(times, t0, side="right")
            k1 = np.searchsorted(times, t0 + tau_max, side="left")
            if k1 > k0:
                idx = ((times[k0:k1] - t0) / bin_width).astype(int)
                np.add.at(hist[i], idx[idx < nbins], 1)
    return hist, starts, clicks, span


def _normalise(hist, starts, clicks, span, bin_width):
    rate = clicks.sum() / span.sum()
    return hist.sum(axis=0) / (starts.sum() * rate * bin_width), rate


def empirical_g2(records: list[ClickRecord], bin_width: float, tau_max: float,
                 channels=None, n_boot: int = 200, seed: int = 0) -> CorrelationResult:
    """Coincidence-histogram g2 with trajectory-bootstrap standard errors.

    A click at t0 contributes the delays to the later clicks in
    (t0, t0 + tau_max]; only clicks with t0 <= duration - tau_max start a
    delay window, so every bin sees the same exposure.
    """
    nbins = int(round(tau_max / bin_width))
    if nbins < 1:
        raise ValueError("tau_max must exceed bin_width")
    if len(records) < 2:
        raise StatisticsError("need at least two trajectories for a bootstrap", required=2)
    hist, starts, clicks, span = _coincidences(records, channels, bin_width, nbins)
    if starts.sum() == 0:
        raise StatisticsError("no clicks fall inside the usable window", required=len(records) * 10)
    g2, rate = _normalise(hist, starts, clicks, span, bin_width)
    rng = np.random.default_rng(seed)
    boot = np.empty((n_boot, nbins))
    for b in range(n_boot):
        pick = rng.integers(0, len(records), len(records))
        boot[b], _ = _normalise(hist[pick], starts[pick], clicks[pick], span[pick], bin_width)
    centres = (np.arange(nbins) + 0.5) * bin_width
    stderr = boot.std(axis=0, ddof=1)
    lo, hi = np.percentile(boot, [2.5, 97.5], axis=0)
    tau_c = 2.0 * float(np.sum(g2 - 1.0) * bin_width)
    return CorrelationResult(centres, g2, tau_c, "histogram", float(rate),
                             extra={"stderr": stderr, "ci_low": lo, "ci_high": hi})


def chi2_consistency(observed, stderr, expected) -> tuple[float, int, float]:
    """Chi-square statistic, degrees of freedom and p-value."""
    observed, stderr, expected = map(np.asarray, (observed, stderr, expected))
    ok = stderr > 0
    stat = float(np.sum(((observed[ok] - expected[ok]) / stderr[ok]) ** 2))
    dof = int(ok.sum())
    return stat, dof, float(chi2_dist.sf(stat, dof))


def bin_average(func, centres: np.ndarray, bin_width: float, points: int = 9) -> np.ndarray:
    """Average of func over each histogram bin (Gauss-Legendre)."""
    x, w = np.polynomial.legendre.leggauss(points)
    out = np.zeros(len(centres))
    for xi, wi in zip(x, w):
        out += 0.5 * wi * np.asarray(func(centres + 0.5 * bin_width * xi))
    return out


def ensemble_mean_state(model: LindbladModel, t: float, n_traj: int, seed: int,
                        rho0: np.ndarray) -> np.ndarray:
    """Average of |psi(t)><psi(t)| over n_traj trajectories started from rho0."""
    acc = np.zeros((model.dim, model.dim), dtype=complex)
    for i in range(n_traj):
        psi = final_state(model, t, seed, i, rho0)
        acc += np.outer(psi, psi.conj())
    return acc / n_traj


def final_state(model: LindbladModel, t: float, seed: int, index: int,
                rho0: np.ndarray) -> np.ndarray:
    """Normalised state at time t of the trajectory with the given seed/index."""
    rec = simulate_trajectory(model, t, seed, index, rho0)
    rng = trajectory_rng(seed, index)
    psi = _sample_initial(rho0, rng)
    prop = _NoJumpPropagator(model.effective_hamiltonian())
    now = 0.0
    for tj, k in zip(rec.click_times, rec.channel_ids):
        psi = prop.state(prop.start(psi), tj - now)
        psi = model.jumps[k][0] @ psi
        psi = psi / np.linalg.norm(psi)
        now = tj
    psi = prop.state(prop.start(psi), t - now)
    return psi / np.linalg.norm(psi)


def write_records(records: list[ClickRecord], path, metadata: dict | None = None) -> None:
    """CSV: '#' header (metadata, one line per trajectory with its seed), then
    trajectory_id,time,channel rows."""
    with open(path, "w", newline="") as fh:
        for k, v in (metadata or {}).items():
            fh.write(f"# {k} = {v}\n")
        for rec in records:
            fh.write(f"# trajectory {rec.index} seed {rec.seed} duration {rec.duration:.17g}\n")
        fh.write("trajectory_id,time,channel\n")
        for rec in records:
            for t, c in zip(rec.click_times, rec.channel_ids):
                fh.write(f"{rec.index},{t:.17g},{c}\n")


def read_records(path) -> list[ClickRecord]:
    info, rows = {}, {}
    with open(path) as fh:
        for line in fh:
            if line.startswith("# trajectory "):
                _, _, idx, _, seed, _, dur = line.split()
                info[int(idx)] = (int(seed), float(dur))
            elif line.startswith("#") or line.startswith("trajectory_id"):
                continue
            elif line.strip():
                i, t, c = line.split(",")
                rows.setdefault(int(i), []).append((float(t), int(c)))
    out = []
    for idx, (seed, dur) in sorted(info.items()):
        data = rows.get(idx, [])
        out.append(ClickRecord(dur, [t for t, _ in data], [c for _, c in data], seed, idx))
    return out
