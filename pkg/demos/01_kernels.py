"""First-passage kernels of the drifted Brownian motion and their small-time limits.

Run: python3 demos/01_kernels.py
"""
import numpy as np
from scipy import integrate, stats

from dpmf.kernels import (fp_cdf, fp_pdf, heat_kernel, limit_formula, moment_integrals,
                          richardson_sqrt, small_sigma_limit)

# The hitting time of 0 from x by dX = -dt + dW is inverse Gaussian with
# mean x and shape x^2; scipy's invgauss gives an independent reference.
print("fp_cdf against scipy.stats.invgauss")
for x in (0.5, 1.0, 2.0):
    s = np.array([0.1, 0.5, 1.0, 3.0])
    ref = stats.invgauss.cdf(s, mu=1 / x, scale=x ** 2)
    print(f"  x={x}: max |diff| = {np.max(np.abs(fp_cdf(s, x) - ref)):.2e}")

print("\ndensity at sigma = x equals 1/sqrt(2 pi x)")
for x in (0.5, 1.0, 2.0):
    print(f"  x={x}: {fp_pdf(x, x):.15f} vs {1 / np.sqrt(2 * np.pi * x):.15f}")

# The killed heat kernel integrates to the survival probability.
y = np.linspace(0, 20, 20001)
for s in (0.2, 1.0):
    mass = integrate.trapezoid(heat_kernel(s, y, 1.0), y)
    print(f"\nsigma={s}: int kappa dy = {mass:.8f}, 1 - H = {1 - fp_cdf(s, 1.0):.8f}")

print("\nmoment limits as sigma -> 0 (Richardson in sqrt(sigma))")
sig = (1e-2, 1e-3, 1e-4)
ms = [moment_integrals(s) for s in sig]
print(f"  I2 - I1 -> {richardson_sqrt(sig, [m.I2 - m.I1 for m in ms]):.6f} (1)")
print(f"  I3      -> {richardson_sqrt(sig, [m.I3 for m in ms]):.6f} (3/2)")
print(f"  J4      -> {richardson_sqrt(sig, [m.J4 for m in ms]):.2e} (0)")

q = lambda x: np.sin(x) * np.exp(-x)
print(f"\nint h q -> {small_sigma_limit(q):.6f}, q'(0)/2 = {limit_formula(q):.6f}")
q = lambda x: -2 * x + 2 * x ** 2 + x ** 3
print(f"int dh q -> {small_sigma_limit(q, 'pdf_dt'):.6f}, "
      f"(q''(0) + q'''(0)/2)/2 = {limit_formula(q, 'pdf_dt'):.6f}")
