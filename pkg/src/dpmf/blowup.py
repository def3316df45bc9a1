"""Blowup onset, synchronous jump size, plateau continuation and exit checks.

At onset ``S`` the boundary flux ``g`` reaches ``1/lam`` and ``Psi`` stops.
Resets are withheld while the clock is stalled, so on the plateau ``G``
follows the no-reset evolution of the frozen reset measure.  The jump
size ``pi`` is the smallest positive root of

    zeta(p) = p - [G_frozen(S + lam p) - G(S)],

which is the same as ``p - int H(lam p, x) q(S, x) dx`` by the Markov
property.  The plateau then ends at ``U = S + lam pi``.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np
from scipy import optimize

from .kernels import _H
from .renewal import FluxCurve
from .timechange import SolverState, Termination, solve_until_blowup

log = logging.getLogger(__name__)


class GridResolutionError(RuntimeError):
    """Raised when the onset cannot be resolved on the current grid."""


@dataclass
class BlowupEvent:
    k: int
    S: float
    T: float
    pi: float
    a: float
    U: float
    exit_g: float
    status: str
    active_mass: float = float("nan")
    zeta_residual: float = float("nan")
    dg: float = float("nan")

    def record(self):
        return asdict(self)


@dataclass
class FullBlowupCheck:
    status: str  # "full", "rejected" or "inconclusive"
    slope: float
    stderr: float
    a: float


def detect_onset(flux: FluxCurve, lam):
    """First crossing of ``g`` above ``1/lam``, refined by a local quadratic; ``None`` if absent."""
    if lam <= 0:
        return None
    s, g = np.asarray(flux.sigma), np.asarray(flux.g)
    level = 1.0 / lam
    hit = np.nonzero(g >= level)[0]
    if hit.size == 0:
        return None
    i = int(hit[0])
    if i == 0:
        return float(s[0])
    idx = [i - 2, i - 1, i] if i >= 2 else [i - 1, i, i + 1]
    idx = [j for j in idx if 0 <= j < s.size]
    lo, hi = s[i - 1], s[i]
    if len(idx) == 3:
        c = np.polyfit(s[idx] - lo, g[idx] - level, 2)
        roots = np.roots(c)
        roots = [r.real + lo for r in roots if abs(r.imag) < 1e-14 and lo - 1e-14 <= r.real + lo <= hi + 1e-14]
        if roots:
            return float(min(roots))
    w = (level - g[i - 1]) / (g[i] - g[i - 1])
    return float(lo + w * (hi - lo))


def full_blowup_check(flux: FluxCurve, S1, lam, nu, k=None, grid_step=None, start=0.0) -> FullBlowupCheck:
    """Left slope of ``g`` at ``S1`` by least squares over the last pre-onset samples.

    The default window is 5% of the smooth segment ``(start, S1)``; ``start``
    is the end of the previous plateau, so the fit never reaches across it.
    """
    s, g = np.asarray(flux.sigma), np.asarray(flux.g)
    pre = (s < S1) & (s > start)
    s, g = s[pre], g[pre]
    if s.size < 3:
        return FullBlowupCheck("inconclusive", float("nan"), float("nan"), float("nan"))
    step = grid_step or (s[-1] - s[-2])
    if k is None:
        k = max(5, int(np.ceil(0.05 * (S1 - start) / step)))
    k = min(k, s.size)
    if k < 3:
        return FullBlowupCheck("inconclusive", float("nan"), float("nan"), float("nan"))
    x, y = s[-k:] - S1, g[-k:]
    A = np.vstack([np.ones_like(x), x]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    dof = max(k - 2, 1)
    s2 = float(resid @ resid) / dof
    cov = s2 * np.linalg.inv(A.T @ A)
    slope, se = float(coef[1]), float(np.sqrt(max(cov[1, 1], 0.0)))
    scale = max(abs(y).max(), 1e-300) / max(abs(x).max(), 1e-300)
    if abs(slope) <= max(3 * se, 1e-9 * scale):
        return FullBlowupCheck("inconclusive", slope, se, float("nan"))
    if slope < 0:
        return FullBlowupCheck("rejected", slope, se, float("nan"))
    return FullBlowupCheck("full", slope, se, lam / nu * slope)


def _smallest_root(zeta, p_seed, step, p_max, head_slope=None):
    """Scan ``zeta`` upward from ``p_seed`` by ``step`` until positive, then bisect.

    With ``head_slope`` a positive start with ``zeta(p) <= head_slope * p``
    (quadrature error of a gridded density at tiny ``p``) is skipped until
    ``zeta`` first turns negative.
    """
    grid = p_seed + step * np.arange(int(np.ceil((p_max - p_seed) / step)) + 2)
    seen_negative = head_slope is None
    for lo in range(0, grid.size, 200):
        chunk = grid[lo:lo + 200]
        vals = zeta(chunk)
        start = 0
        if not seen_negative:
            neg = np.nonzero(vals < 0)[0]
            head = vals if neg.size == 0 else vals[:neg[0]]
            if np.any(head > head_slope * chunk[:head.size]):
                raise ArithmeticError("zeta positive near zero: the density is not at a blowup onset")
            if neg.size == 0:
                continue
            seen_negative, start = True, int(neg[0])
        pos = np.nonzero(vals[start:] > 0)[0]
        if pos.size:
            j = lo + start + int(pos[0])
            if j == 0:
                raise ArithmeticError("zeta already positive at the seed point")
            return optimize.bisect(lambda p: float(zeta(np.array([p]))[0]), grid[j - 1], grid[j],
                                   xtol=1e-12, maxiter=200)
    raise ArithmeticError("no sign change of zeta below the active mass")


# tolerated relative threshold defect of a gridded density at onset
HEAD_SLOPE = 0.05


def solve_pi(q_at_S1, lam, p_seed=1e-6, x=None):
    """Smallest positive root of ``p - int H(lam p, x) q(x) dx``.

    Parameters
    ----------
    q_at_S1 : DensitySnapshot or tuple
        Active density at onset, either a snapshot with ``x``/``values`` or
        a pair ``(x, values)``.
    lam : float
        Coupling.
    """
    if hasattr(q_at_S1, "values"):
        xs, q = q_at_S1.x, q_at_S1.values
    else:
        xs, q = q_at_S1
    xs, q = np.asarray(xs, dtype=float), np.asarray(q, dtype=float)
    w = np.zeros_like(xs)
    dx = np.diff(xs)
    w[:-1] += dx / 2
    w[1:] += dx / 2
    w = w * q
    m = float(w.sum())

    def zeta(p):
        p = np.asarray(p, dtype=float)
        return p - (_H(lam * p[:, None], xs) * w).sum(axis=1)

    # the kernel must span a few grid cells for the quadrature to resolve it
    p_seed = max(p_seed, (4 * float(np.min(dx))) ** 2 / lam)
    pi = _smallest_root(zeta, p_seed, m / 1000, m * (1 + 1e-9), head_slope=HEAD_SLOPE)
    if not 0 < pi < m:
        raise ArithmeticError("jump size outside (0, active mass)")
    return pi


def zeta_from_state(state: SolverState, S, G_S):
    lam = state.params.lam
    return lambda p: np.asarray(p) - (state.G_at(S + lam * np.asarray(p, dtype=float)) - G_S)


def continue_plateau(state: SolverState, event: BlowupEvent):
    """Append the plateau nodes ``[S, U]`` with ``Psi = T`` and the frozen flux."""
    d = state.grid.sigma_step
    S, U, T = event.S, event.U, event.T
    inner = d * np.arange(int(np.floor(S / d)) + 1, int(np.ceil(U / d)))
    inner = inner[(inner > S + 1e-9 * d) & (inner < U - 1e-9 * d) & (inner <= state.grid.sigma[-1])]
    nodes = np.concatenate([[S], inner, [U]])
    state.commit(nodes, np.full(nodes.size, T), state.G_at(nodes), state.g_at(nodes), state.dg_at(nodes))
    state.reset.append([U], [state.reset.R[-1]])
    return state


def exit_check(state: SolverState, event: BlowupEvent):
    """``"resume"`` if the clock can restart at ``U`` with slope above ``delta_min``."""
    p = state.params
    slope = (1.0 - p.lam * event.exit_g) / p.nu
    if event.exit_g < 1.0 / p.lam and slope > state.delta_min:
        return "resume"
    if abs(1.0 - p.lam * event.exit_g) <= p.nu * state.delta_min:
        return "marginal_exit"
    return "explosive_exit"


def _locate_onset(state: SolverState, term: Termination):
    lam = state.params.lam
    level = 1.0 / lam
    lo = float(state.sigma[-1])
    d = state.grid.sigma_step
    f = lambda s: float(state.g_at(s)) - level
    if f(lo) >= 0:
        raise GridResolutionError("flux already above threshold at the last accepted node; "
                                  "try halving sigma_step")
    hi, prev = lo, f(lo)
    for _ in range(80):
        hi = hi + d / 4
        val = f(hi)
        if val >= 0:
            break
        if val < prev - 1e-15:
            raise GridResolutionError("flux turned back below the threshold (near-tangent onset); "
                                      "try halving sigma_step")
        prev = val
    else:
        raise GridResolutionError("threshold not reached within 20 grid steps of the stall")
    return optimize.brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)


def resolve_onset(state: SolverState, term: Termination):
    """Build the blowup event at the stall reported by :func:`solve_until_blowup`.

    Returns ``(event, status)`` where ``status`` is ``"resume"`` or a stop
    reason.  The plateau is appended to ``state`` whenever a jump is found.
    """
    p, grid = state.params, state.grid
    lam, nu, eps = p.lam, p.nu, p.epsilon
    k = len(state.events) + 1
    S = _locate_onset(state, term)
    phi = state.phi_curve
    table = state.table
    G_S = float(state.G_at(S))
    T = (S - lam * G_S) / nu
    R_S = float(table(phi.right(T - eps)))
    state.reset.append([S], [R_S])
    G_S = float(state.G_at(S))
    T = (S - lam * G_S) / nu
    if state.events and S - state.events[-1].U < 10 * grid.sigma_step:
        ev = BlowupEvent(k, S, T, float("nan"), float("nan"), float("nan"), float("nan"), "accumulation")
        state.reset.truncate(state.reset.tau.size - 1)
        return ev, "accumulation"
    prev = [e.U for e in state.events if np.isfinite(e.U)]
    chk = full_blowup_check(FluxCurve(state.sigma, state.G, state.g), S, lam, nu,
                            grid_step=grid.sigma_step, start=prev[-1] if prev else 0.0)
    dg_S = float(state.dg_at(S))
    if chk.status != "full":
        ev = BlowupEvent(k, S, T, float("nan"), chk.a, float("nan"), float("nan"), chk.status, dg=dg_S)
        state.reset.truncate(state.reset.tau.size - 1)
        return ev, "not_full_" + chk.status
    m = 1.0 - (G_S - R_S)
    zeta = zeta_from_state(state, S, G_S)
    p_seed = max(grid.sigma_step / lam, 1e-6)
    pi = _smallest_root(zeta, p_seed, m / 1000, m * (1 + 1e-9))
    if not 0 < pi < m:
        raise ArithmeticError("jump size outside (0, active mass)")
    U = S + lam * pi
    ev = BlowupEvent(k, S, T, pi, chk.a, U, float(state.g_at(U)), "full", active_mass=m,
                     zeta_residual=float(zeta(np.array([pi]))[0]), dg=dg_S)
    continue_plateau(state, ev)
    state.events.append(ev)
    status = exit_check(state, ev)
    ev.status = "full" if status == "resume" else status
    return ev, status


@dataclass
class Dynamics:
    """Outcome of :func:`solve_dynamics`."""
    state: SolverState
    status: str
    sigma_end: float

    @property
    def events(self):
        return self.state.events

    @property
    def params(self):
        return self.state.params

    @property
    def init(self):
        return self.state.init

    @property
    def grid(self):
        return self.state.grid


def solve_dynamics(init, params, grid, tol=1e-10, max_iter=200, max_events=100,
                   state: SolverState | None = None) -> Dynamics:
    """Solve across blowups until the horizon or a stop condition.

    Passing ``state`` (for instance from a checkpoint) continues that run.
    """
    while True:
        state, term = solve_until_blowup(init, params, grid, tol=tol, max_iter=max_iter, state=state)
        if term.status == "horizon":
            return Dynamics(state, "horizon", float(state.sigma[-1]))
        ev, status = resolve_onset(state, term)
        log.info("blowup %d at S=%.6g, pi=%.6g, status %s", ev.k, ev.S, ev.pi, status)
        if status != "resume":
            if status in ("accumulation",) or status.startswith("not_full"):
                state.events.append(ev)
            return Dynamics(state, status, float(state.sigma[-1]))
        if len(state.events) >= max_events:
            return Dynamics(state, "event_limit", float(state.sigma[-1]))
        if state.sigma[-1] >= grid.sigma[-1]:
            return Dynamics(state, "horizon", float(state.sigma[-1]))


def divergence_fit(sigma, g, S1, T1_minus_t, params):
    """Log-log fit of ``f = nu g / (1 - lam g)`` against ``T1 - t``.

    Parameters
    ----------
    sigma, g : array_like
        Pre-onset samples of the flux (at least 20).
    S1 : float
        Onset.
    T1_minus_t : array_like
        Original-time distance to the blowup instant at each sample.
    params : ModelParams

    Returns
    -------
    (exponent, amplitude)
    """
    sigma, g, dt = (np.asarray(v, dtype=float) for v in (sigma, g, T1_minus_t))
    ok = (sigma < S1) & (dt > 0) & (params.lam * g < 1)
    if ok.sum() < 20:
        raise ValueError("need at least 20 samples before the blowup")
    f = params.nu * g[ok] / (1 - params.lam * g[ok])
    c = np.polyfit(np.log(dt[ok]), np.log(f), 1)
    return float(c[0]), float(np.exp(c[1]))


def divergence_samples(state: SolverState, event: BlowupEvent, n=30, rel=(1e-7, 1e-4)):
    """Samples of ``g`` and ``T - Psi`` just before ``S`` on a log-spaced window.

    ``T - Psi(sigma) = int_sigma^S (1 - lam g)/nu`` is integrated with
    Gauss-Legendre nodes to avoid cancellation.
    """
    p = state.params
    S = event.S
    d = S * np.logspace(np.log10(rel[0]), np.log10(rel[1]), n)
    sig = S - d
    g = state.g_at(sig)
    xg, wg = np.polynomial.legendre.leggauss(12)
    dt = np.empty(n)
    for i, s0 in enumerate(sig):
        mid, half = 0.5 * (s0 + S), 0.5 * (S - s0)
        nodes = mid + half * xg
        dt[i] = half * np.sum(wg * (1 - p.lam * state.g_at(nodes))) / p.nu
    return sig, g, dt
