"""Strong coupling: blowup onset, synchronous jump and continuation.

When lam g reaches 1 the original-time rate diverges.  The solver locates
the onset S, solves for the jump size pi, inserts a plateau of length
lam*pi in Psi and continues.  Reset-free values (epsilon larger than the
onset time) are checked against scipy.stats.invgauss.

Run: python3 demos/04_blowup_resolution.py
"""
import numpy as np
from scipy import optimize, stats

from dpmf import Atom, GridSpec, ModelParams, build_initial, solve_dynamics
from dpmf.blowup import divergence_fit, divergence_samples

x0 = 1.0
lam = 1.5 * np.sqrt(2 * np.pi * x0)
params = ModelParams(1.0, lam, 1.0, 0.1)
init = build_initial(params, Atom(x0))
dyn = solve_dynamics(init, params, GridSpec(0.002, 20.0))

print(" k        S          T         pi        a     status")
for e in dyn.events:
    print(f"{e.k:2d}  {e.S:9.5f}  {e.T:9.5f}  {e.pi:8.5f}  {e.a:7.3f}  {e.status}")

# Independent reference for the first event: g = H'(S) and lam g(S) = 1.
law = stats.invgauss(mu=1 / x0, scale=x0 ** 2)
S = optimize.brentq(lambda s: lam * law.pdf(s) - 1, 1e-3, 0.3)
pi = optimize.brentq(lambda p: p - (law.cdf(S + lam * p) - law.cdf(S)), 1e-6, 1 - law.cdf(S))
e = dyn.events[0]
print(f"\ninvgauss reference: S = {S:.12f}, pi = {pi:.12f}")
print(f"solver:            S = {e.S:.12f}, pi = {e.pi:.12f}")

sig, g, dt = divergence_samples(dyn.state, e)
expo, amp = divergence_fit(sig, g, e.S, dt, params)
a1 = lam / params.nu * e.dg
print(f"\nf ~ A (T - t)^p near T: p = {expo:.5f}, A = {amp:.6f}")
print(f"1/(lam sqrt(2 a1)) with a1 = (lam/nu) g'(S) = {a1:.4f}: {1 / (lam * np.sqrt(2 * a1)):.6f}")
