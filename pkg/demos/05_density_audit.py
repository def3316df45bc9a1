"""Active density, original-time pull-back and conservation audit.

The density is a Duhamel sum of killed heat kernels from the initial
condition and from resets at Lambda.  The audit checks that active plus
refractory mass stays 1, that F(t) - F(t - eps) equals the refractory
mass, and that each blowup moves exactly pi into the refractory pool.

Run: python3 demos/05_density_audit.py
"""
import numpy as np

from dpmf import Atom, GridSpec, ModelParams, build_initial, solve_dynamics
from dpmf.density import boundary_slope, conservation_audit, duhamel_density, pull_back

x0 = 1.0
params = ModelParams(1.0, 1.5 * np.sqrt(2 * np.pi * x0), 1.0, 0.1)
dyn = solve_dynamics(build_initial(params, Atom(x0)), params, GridSpec(0.002, 8.0))
st = dyn.state
ev = dyn.events[0]

for s in (0.5 * ev.S, ev.S, ev.U, ev.U + 0.5):
    snap = duhamel_density(st, s)
    print(f"sigma={s:8.4f}: active {snap.active_mass:.6f}  refractory {snap.refractory_mass:.6f}  "
          f"total {snap.total_mass:.6f}")

s = ev.U + 0.5
print(f"\nboundary flux at sigma={s:.3f}: slope/2 = {0.5 * boundary_slope(st, s):.8f}, "
      f"g = {float(st.g_at(s)):.8f}")

t = 0.5 * ev.T
snap, f = pull_back(st, t)
print(f"pull-back at t={t:.5f}: f = {f:.5f}, active mass {snap.active_mass:.5f}")
try:
    pull_back(st, ev.T)
except ValueError as exc:
    print(f"at the blowup instant: {exc}")

rep = conservation_audit(st)
r = rep.record()
print(f"\naudit ok: {rep.ok}; max mass defect {r['max_mass_defect']:.2e}, "
      f"max window defect {r['max_window_defect']:.2e}")
for j in r["jumps"]:
    print(f"  blowup {j['k']}: pi {j['pi']:.6f}, active drop {j['active_drop']:.6f}, "
          f"refractory rise {j['refractory_rise']:.6f}")
