# %% [markdown]
# # Bunched and antibunched light, exact and sampled
#
# Two reference emitters: a thermally populated mode, whose light is
# bunched with g2(0) = 2, and a resonantly driven two-level atom, which can
# never emit two photons at once. The regression-theorem curves are
# compared with coincidence histograms from quantum-jump trajectories.

# %%
import numpy as np

from steadybounds import correlations as cr
from steadybounds import trajectories as tj
from steadybounds.operators import build_ising, build_thermal_cavity, thermal_dim

thermal = build_thermal_cavity(0.5, 1.0, thermal_dim(1.0, 1e-12))
atom = build_ising(1, 0.0, [0.5], [[0.0]], 0.2)

# %%
for name, model in (("thermal", thermal), ("atom", atom)):
    tau_c = cr.correlation_time_resolvent(model).tau_c
    print(f"{name:8s} click rate {cr.click_rate(model):.4f}  g2(0) {cr.g2_at(model, 0):.3e}  "
          f"tau_c {tau_c:+.4f}")

# %% [markdown]
# The atom's negative correlation time means its click record is quieter
# than a Poisson stream. Sampling 200 trajectories reproduces the exact
# curve within the bootstrap errors.

# %%
records = tj.run_ensemble(atom, 200, 200.0, seed=1)
sampled = tj.empirical_g2(records, 0.5, 12.0, n_boot=100)
exact = tj.bin_average(lambda t: np.array([cr.g2_at(atom, x) for x in t]), sampled.tau_grid, 0.5)
print(f"{'tau':>6} {'sampled':>8} {'+-':>6} {'exact':>7}")
for t, g, e, x in zip(sampled.tau_grid, sampled.g2_values, sampled.extra["stderr"], exact):
    print(f"{t:6.2f} {g:8.3f} {e:6.3f} {x:7.3f}")
stat, dof, p = tj.chi2_consistency(sampled.g2_values, sampled.extra["stderr"], exact)
print(f"chi2 = {stat:.1f} on {dof} bins, p = {p:.2f}")

# %% [markdown]
# Long counting windows see the correlation time as excess variance:
# Var(N_T)/T tends to n + n^2 tau_c.

# %%
stats = tj.count_statistics(records, 20.0)
print(f"sampled variance rate {stats.variance_rate:.4f} +- {stats.standard_errors['variance_rate']:.4f}")
print(f"predicted (window 20) {cr.count_variance_rate(atom, window=20.0):.4f}, "
      f"asymptotic {cr.count_variance_rate(atom):.4f}")
