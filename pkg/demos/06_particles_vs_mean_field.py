"""Finite-N particle system against the mean-field solution.

Weak coupling: the KS distance between the empirical active law and the
mean-field density at t = 1 shrinks as N grows.  Strong coupling: the
largest avalanche near the mean-field blowup time is close to N*pi.

Run: python3 demos/06_particles_vs_mean_field.py
"""
import numpy as np
from scipy import integrate

from dpmf import Atom, GridSpec, ModelParams, build_initial, solve_dynamics
from dpmf.density import cumulative_rate, pull_back
from dpmf.particle import init_ensemble, ks_distance, run

params = ModelParams(1.0, 0.5, 1.0, 0.1)
init = build_initial(params, Atom(1.0))
mf = solve_dynamics(init, params, GridSpec(0.002, 2.5)).state
x = np.linspace(0, 10, 2001)
snap, _ = pull_back(mf, 1.0, x)
cdf = integrate.cumulative_trapezoid(snap.values, x, initial=0.0)

print("weak coupling, t = 1")
seeds = np.random.SeedSequence(1).spawn(3)
for N, seed in zip((100, 1000, 10_000), seeds):
    ens = init_ensemble(N, init, params, seed)
    art = run(ens, 1.0, snapshot_times=[1.0])
    print(f"  N={N:6d}: KS = {ks_distance(art.snapshots[1.0], N, x, cdf):.4f}, "
          f"F_N(1) = {ens.F():.4f} (mean field {float(cumulative_rate(mf, 1.0)):.4f})")

x0 = 1.0
strong = ModelParams(1.0, 1.5 * np.sqrt(2 * np.pi * x0), 1.0, 0.1)
init = build_initial(strong, Atom(x0))
ev = solve_dynamics(init, strong, GridSpec(0.002, 1.0)).events[0]
N = 10_000
ens = init_ensemble(N, init, strong, 7)
art = run(ens, ev.T + strong.epsilon)
big = max(art.avalanches, key=lambda a: a.size)
print(f"\nstrong coupling: mean-field blowup at T = {ev.T:.5f} with pi = {ev.pi:.4f}")
print(f"  largest avalanche at t = {big.t:.4f}: {big.size} of {N} particles "
      f"({big.size / N:.4f}) in {big.generations} generations")
