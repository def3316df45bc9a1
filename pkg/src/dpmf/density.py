"""Active density, pull-back to original time and conservation audits.

In the time-changed frame the active density is a Duhamel sum of the
killed heat kernel started from ``q0`` and from every reset at ``Lambda``:

    q(sigma, y) = int kappa(sigma, y, x) q0(x) dx
                  + int_0^sigma kappa(sigma - tau, y, Lambda) dR(tau).

Both terms are evaluated exactly against the piecewise-linear reset
measure, so the reset source never needs a mollified delta.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .curves import MonotoneCurve
from .timechange import SolverState


@dataclass
class DensitySnapshot:
    sigma: float
    x: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    active_mass: float
    refractory_mass: float

    @property
    def total_mass(self):
        return self.active_mass + self.refractory_mass


def _trapezoid(x, v):
    return float(np.sum(0.5 * np.diff(x) * (v[1:] + v[:-1])))


def _solved_end(state):
    return float(state.sigma[-1])


def reset_count(state: SolverState, sigma):
    """Cumulative resets ``R(sigma)``, right-continuous across synchronous resets."""
    rm = state.reset
    return MonotoneCurve(rm.tau, rm.R).right(sigma)


def density_values(state: SolverState, sigma, y):
    """``q(sigma, y)`` on arbitrary points ``y``."""
    sigma = float(sigma)
    if sigma < 0 or sigma > _solved_end(state) * (1 + 1e-12) + 1e-15:
        raise ValueError("sigma beyond the solved range")
    y = np.asarray(y, dtype=float)
    q = state.init.q0.density(sigma, y) + state.reset.density(sigma, y)
    return np.where(y <= 0, 0.0, q)


def duhamel_density(state: SolverState, sigma, x=None) -> DensitySnapshot:
    """Snapshot of the active density on the spatial grid.

    The refractory mass ``G(sigma) - R(sigma)`` comes from the flux, the
    active mass is the trapezoid integral of the sampled density, so their
    sum is an independent conservation check.
    """
    x = state.grid.x if x is None else np.asarray(x, dtype=float)
    q = density_values(state, sigma, x)
    G = float(state.G_at(sigma)) if sigma > 0 else 0.0
    refr = G - float(reset_count(state, sigma))
    return DensitySnapshot(float(sigma), x, q, _trapezoid(x, q), refr)


def boundary_slope(state: SolverState, sigma, h=1e-3):
    """Richardson-extrapolated 3-point forward estimate of ``dq/dx`` at ``x = 0``."""
    def d(step):
        q = density_values(state, sigma, np.array([0.0, step, 2 * step]))
        return (-3 * q[0] + 4 * q[1] - q[2]) / (2 * step)
    return (4 * d(h / 2) - d(h)) / 3


def _event_at(state, t, rtol=1e-12):
    for ev in state.events:
        if np.isfinite(ev.U) and abs(t - ev.T) <= rtol * max(1.0, abs(ev.T)):
            return ev
    return None


def sigma_of_t(state: SolverState, t):
    """``Phi(t)``, right-continuous: at a blowup instant it returns the plateau end."""
    return state.phi_curve.right(t)


def t_range(state: SolverState):
    return float(state.init.pre_psi[0]), float(state.psi[-1])


def flux_rate(state: SolverState, t):
    """Original-time firing rate ``f(t) = nu g / (1 - lam g)`` at ``sigma = Phi(t)``."""
    p = state.params
    t = np.asarray(t, dtype=float)
    s = sigma_of_t(state, t)
    g = np.where(s >= 0, state.g_at(np.maximum(s, 0.0)), 0.0)
    f = p.nu * g / (1.0 - p.lam * g)
    if state.init.f0.size and np.any(t < 0):
        f = np.where(t < 0, np.interp(t, state.init.f0_t, state.init.f0), f)
    return f


def cumulative_rate(state: SolverState, t):
    """``F(t) = G(Phi(t))`` with ``F(0) = 0``; negative ``t`` uses the history."""
    t = np.asarray(t, dtype=float)
    s = sigma_of_t(state, t)
    return np.where(s >= 0, state.G_at(np.maximum(s, 0.0)), state.table(s))


def pull_back(state: SolverState, t, x=None):
    """Active density ``p(t, .)`` and firing rate ``f(t)`` in original time.

    Raises
    ------
    ValueError
        At a blowup instant, where ``f`` is not defined; use the event's
        ``S`` and ``U`` for the one-sided limits.
    """
    lo, hi = t_range(state)
    if not 0 <= t <= hi:
        raise ValueError("t outside the solved range")
    ev = _event_at(state, t)
    if ev is not None:
        raise ValueError(f"t = {t:g} is blowup instant {ev.k}: f is undefined; "
                         f"use sigma = {ev.S:g} (before) or {ev.U:g} (after)")
    s = float(sigma_of_t(state, t))
    snap = duhamel_density(state, s, x)
    return snap, float(flux_rate(state, t))


# ---------------------------------------------------------------------------
# audits


@dataclass
class AuditReport:
    mass_sigma: np.ndarray
    mass_defect: np.ndarray
    window_t: np.ndarray
    window_defect: np.ndarray
    jumps: list
    tol: float
    violations: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.violations

    def record(self):
        return {
            "tol": self.tol,
            "max_mass_defect": float(np.max(np.abs(self.mass_defect), initial=0.0)),
            "max_window_defect": float(np.max(np.abs(self.window_defect), initial=0.0)),
            "jumps": self.jumps,
            "violations": self.violations,
        }


def audit_sigmas(state: SolverState, n=20):
    """Grid nodes spread over the run, plus both ends of every plateau."""
    s = state.sigma
    pick = list(s[np.unique(np.linspace(1, s.size - 1, n).astype(int))])
    for ev in state.events:
        if np.isfinite(ev.U):
            pick += [ev.S, 0.5 * (ev.S + ev.U), ev.U]
    return np.unique(np.asarray(pick))


def conservation_audit(state: SolverState, n=20, tol=1e-3, x=None) -> AuditReport:
    """Mass normalisation, refractory-window identity and blowup mass transfer."""
    p = state.params
    sig = audit_sigmas(state, n)
    snaps = {float(s): duhamel_density(state, s, x) for s in sig}
    defect = np.array([snaps[float(s)].total_mass - 1.0 for s in sig])
    viol = [f"mass defect {d:.3g} at sigma={s:.6g}" for s, d in zip(sig, defect) if abs(d) > tol]

    # F(t) - F(t - eps) against the refractory mass 1 - active mass
    t_hi = float(state.psi[-1])
    tw = np.linspace(0.0, t_hi, n + 1)[1:]
    tw = np.array([t for t in tw if _event_at(state, t) is None])
    wdef = []
    for t in tw:
        s = float(sigma_of_t(state, t))
        act = snaps[s].active_mass if s in snaps else duhamel_density(state, s, x).active_mass
        window = float(cumulative_rate(state, t) - cumulative_rate(state, t - p.epsilon))
        wdef.append(window - (1.0 - act))
    wdef = np.asarray(wdef)
    viol += [f"refractory window defect {d:.3g} at t={t:.6g}" for t, d in zip(tw, wdef) if abs(d) > tol]

    jumps = []
    for ev in state.events:
        if not np.isfinite(ev.U):
            continue
        a, b = snaps[float(ev.S)], snaps[float(ev.U)]
        drop = a.active_mass - b.active_mass
        rise = b.refractory_mass - a.refractory_mass
        jumps.append({"k": ev.k, "pi": ev.pi, "active_drop": drop, "refractory_rise": rise})
        if abs(drop - ev.pi) > tol or abs(rise - ev.pi) > tol:
            viol.append(f"blowup {ev.k}: mass transfer {drop:.6g}/{rise:.6g} vs pi {ev.pi:.6g}")
    return AuditReport(sig, defect, tw, wdef, jumps, tol, viol)


def pde_residual(state: SolverState, sigma, dsigma, x, exclude=0.25):
    """Max interior residual of ``dq/dsigma - dq/dx - d2q/dx2 / 2`` by centred differences.

    Points within ``exclude`` of the boundary, of the reset level or of the
    grid end are skipped; recent resets make ``q`` sharp near ``Lambda``.
    """
    x = np.asarray(x, dtype=float)
    dx = x[1] - x[0]
    qm = density_values(state, sigma - dsigma, x)
    q0 = density_values(state, sigma, x)
    qp = density_values(state, sigma + dsigma, x)
    dt = (qp - qm) / (2 * dsigma)
    d1 = (q0[2:] - q0[:-2]) / (2 * dx)
    d2 = (q0[2:] - 2 * q0[1:-1] + q0[:-2]) / dx ** 2
    res = dt[1:-1] - d1 - 0.5 * d2
    xi = x[1:-1]
    keep = (xi > exclude) & (np.abs(xi - state.params.Lambda_reset) > exclude) & (xi < x[-1] - exclude)
    return float(np.max(np.abs(res[keep])))
