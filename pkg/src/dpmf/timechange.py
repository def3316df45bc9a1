"""Time change, delay functions and the block-wise fixed-point solver.

The inverse time change ``Psi`` solves ``Psi = S_delta[(id - lam G[Psi]) / nu]``
where ``G[Psi]`` is the renewal flux under the delays induced by ``Psi``.
Nodes less than one delay floor ``nu*epsilon`` apart do not feed each other
through resets, so the map is iterated block by block.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .curves import MonotoneCurve
from .renewal import FluxCurve, GTable, ResetMeasure, _nodes_apply
from .kernels import _H, _dh, _h, fp_cdf_primitive

log = logging.getLogger(__name__)

DELTA_MIN_FACTOR = 1e-4


def right_inverse(psi: MonotoneCurve) -> MonotoneCurve:
    """Right-continuous generalized inverse; plateaus become jumps."""
    return psi.right_inverse()


def sup_transform(sigma, psi_raw, delta, prior=-np.inf):
    """``sup_{s <= sigma} (psi(s) - delta s) + delta sigma`` on samples.

    ``prior`` is the running supremum carried over from earlier samples.
    """
    sigma = np.asarray(sigma, dtype=float)
    line = np.maximum.accumulate(np.asarray(psi_raw, dtype=float) - delta * sigma)
    return np.maximum(line, prior) + delta * sigma


class _Shift:
    def __init__(self, c):
        self.c = c

    def __call__(self, s):
        return np.asarray(s, dtype=float) + self.c


class _Backward:
    """``sigma -> Phi(Psi(sigma) - epsilon)``, capped at the solved range."""

    def __init__(self, psi, phi, epsilon):
        self.psi, self.phi, self.epsilon = psi, phi, epsilon

    def __call__(self, s):
        return self.phi.right(np.minimum(self.psi.right(s) - self.epsilon, self.psi.y[-1]))


@dataclass
class DelayFunctions:
    """Backward function ``xi = id - eta`` and its left-continuous inverse ``tau``.

    ``jumps`` lists ``(tau_star, xi_left, xi_right)`` where ``xi`` jumps,
    i.e. where synchronously inactivated mass comes back.
    """
    xi: object
    tau: object
    min_delay: float
    jumps: list = field(default_factory=list)
    xi_curve: MonotoneCurve | None = None

    def eta(self, s):
        return np.asarray(s, dtype=float) - self.xi(s)

    def gamma(self, x):
        return self.tau(x) - np.asarray(x, dtype=float)

    @classmethod
    def constant(cls, c):
        c = float(c)
        if c <= 0:
            raise ValueError("delay must be positive")
        return cls(xi=_Shift(-c), tau=_Shift(c), min_delay=c)


def delays_of(psi: MonotoneCurve, epsilon: float) -> DelayFunctions:
    """Delays induced by an inverse time change carrying its history.

    ``psi`` must reach down to ``-epsilon`` (the start of the history).
    """
    if psi.y[0] > -epsilon + 1e-12 * max(1.0, epsilon):
        raise ValueError("psi must cover the history down to xi0")
    phi = psi.right_inverse()
    top = psi.y[-1]
    xi = _Backward(psi, phi, epsilon)

    jumps = []
    inv = psi.left_inverse()
    for T, S, U in phi.jumps:
        if T + epsilon <= top:
            jumps.append((float(inv(T + epsilon)), S, U))
    xs = psi.x[psi.x >= 0]
    levels = psi.y[(psi.y + epsilon <= top) & (psi.y + epsilon >= 0)] + epsilon
    B = np.unique(np.concatenate([xs, inv(levels), [j[0] for j in jumps]]))
    B = B[(B >= 0) & (B <= psi.x[-1])]
    vals = xi(B)
    bx, by = list(B), list(vals)
    for ts, S, U in sorted(jumps, reverse=True):
        k = int(np.searchsorted(B, ts))
        bx.insert(k, ts)
        by.insert(k, S)
    bx, by = np.array(bx), np.array(by)
    # nodes a rounding error before a jump may sit a few ulps above S
    mono = np.maximum.accumulate(by)
    if np.max(mono - by) > 1e-9:
        raise ValueError("backward delay map is not monotone")
    curve = MonotoneCurve(bx, mono)
    return DelayFunctions(xi=xi, tau=curve.left_inverse(), min_delay=float(np.min(bx - by)),
                          jumps=jumps, xi_curve=curve)


# ---------------------------------------------------------------------------
# solver state


@dataclass
class Termination:
    status: str
    sigma: float
    detail: dict = field(default_factory=dict)


@dataclass
class SolverState:
    """Solved nodes ``sigma >= 0`` with ``Psi``, ``G``, ``g``, ``dg`` and the reset measure."""
    params: object
    grid: object
    init: object
    sigma: np.ndarray
    psi: np.ndarray
    G: np.ndarray
    g: np.ndarray
    dg: np.ndarray
    reset: ResetMeasure
    delta: float = 0.0
    block_index: int = 0
    events: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    onset_trail: list = field(default_factory=list)

    @property
    def delta_min(self):
        return DELTA_MIN_FACTOR / self.params.nu

    @property
    def psi_curve(self):
        ini = self.init
        return MonotoneCurve(np.concatenate([ini.pre_sigma[:-1], self.sigma]),
                             np.concatenate([ini.pre_psi[:-1], self.psi]))

    @property
    def phi_curve(self):
        return self.psi_curve.right_inverse()

    @property
    def table(self):
        ini = self.init
        return GTable(np.concatenate([ini.pre_sigma, self.sigma]),
                      np.concatenate([ini.pre_G, self.G]),
                      np.concatenate([ini.pre_g, self.g]))

    @property
    def flux(self):
        return FluxCurve(self.sigma, self.G, self.g, self.dg)

    def G_at(self, s):
        return self.init.q0.cdf(s) + self.reset.cumulative(s)

    def g_at(self, s):
        return self.init.q0.flux(s) + self.reset.rate(s)

    def dg_at(self, s):
        return self.init.q0.flux_dt(s) + self.reset.rate_dt(s)

    def commit(self, sigma, psi, G, g, dg):
        self.sigma = np.concatenate([self.sigma, sigma])
        self.psi = np.concatenate([self.psi, psi])
        self.G = np.concatenate([self.G, G])
        self.g = np.concatenate([self.g, g])
        self.dg = np.concatenate([self.dg, dg])


def new_state(init, params, grid) -> SolverState:
    from .core import validate_params
    validate_params(params, grid)
    src = init.q0
    state = SolverState(params, grid, init, np.array([0.0]), np.array([0.0]), np.array([0.0]),
                        np.array([float(src.flux(0.0))]), np.array([float(src.flux_dt(0.0))]),
                        ResetMeasure(params.Lambda_reset))
    # xi(0) = Phi0(-epsilon) = xi0, so the reset count starts at G0(xi0)
    state.reset = ResetMeasure(params.Lambda_reset, 0.0, float(state.table(init.xi0)))
    return state


# ---------------------------------------------------------------------------
# one block


class BlockContext:
    """Everything about the solved past that a block iteration needs."""

    def __init__(self, state: SolverState):
        p, grid = state.params, state.grid
        self.state = state
        self.eps, self.nu, self.lam = p.epsilon, p.nu, p.lam
        s_b = float(state.sigma[-1])
        d = grid.sigma_step
        i0 = int(np.floor(s_b / d + 1e-7)) + 1
        top = min(s_b + p.nu * p.epsilon * (1 - 1e-12), grid.sigma[-1] * (1 + 1e-14))
        i1 = int(np.floor(top / d + 1e-9))
        blk = d * np.arange(i0, i1 + 1)
        self.blk = blk[(blk > s_b) & (blk <= top)]
        self.s_b, self.psi_b = s_b, float(state.psi[-1])
        past = state.psi_curve
        self.phi = past.right_inverse()
        self.table = state.table
        self.jumps = [(T, S, U) for T, S, U in self.phi.jumps if T + self.eps > self.psi_b]
        src = state.init.q0
        b = self.blk
        self.src = (src.cdf(b), src.flux(b), src.flux_dt(b))
        rm = state.reset
        self.past = (rm.cumulative(b), rm.rate(b), rm.rate_dt(b))
        self.t_last, self.R_last = float(rm.tau[-1]), float(rm.R[-1])

    def reset_nodes(self, psi_blk):
        arg = np.minimum(psi_blk - self.eps, self.psi_b)
        xi = self.phi.right(arg)
        taus, Rs = list(self.blk), list(self.table(xi))
        for T, S, U in self.jumps:
            level = T + self.eps
            if level <= psi_blk[-1]:
                curve = MonotoneCurve(np.concatenate([[self.s_b], self.blk]),
                                      np.concatenate([[self.psi_b], psi_blk]))
                ts = float(curve.left_inverse()(level))
                k = int(np.searchsorted(self.blk, ts, side="left"))
                taus[k:k] = [ts, ts]
                Rs[k:k] = [float(self.table(S)), float(self.table(U))]
        return np.array(taus), np.array(Rs)

    def _nodes(self, taus, Rs):
        return np.concatenate([[self.t_last], taus]), np.concatenate([[self.R_last], Rs])

    def cumulative(self, psi_blk):
        taus, Rs = self.reset_nodes(psi_blk)
        L = self.state.params.Lambda_reset
        own = _nodes_apply(self.blk, *self._nodes(taus, Rs),
                           lambda s: fp_cdf_primitive(s, L), lambda s: _H(s, L))
        return self.src[0] + self.past[0] + own

    def all_terms(self, psi_blk):
        taus, Rs = self.reset_nodes(psi_blk)
        L = self.state.params.Lambda_reset
        cells = self._nodes(taus, Rs)
        G = self.src[0] + self.past[0] + _nodes_apply(
            self.blk, *cells, lambda s: fp_cdf_primitive(s, L), lambda s: _H(s, L))
        g = self.src[1] + self.past[1] + _nodes_apply(
            self.blk, *cells, lambda s: _H(s, L), lambda s: _h(s, L))
        dg = self.src[2] + self.past[2] + _nodes_apply(
            self.blk, *cells, lambda s: _h(s, L), lambda s: _dh(s, L))
        return G, g, dg, taus, Rs


def apply_F_delta(state: SolverState, psi_blk, delta, ctx: BlockContext | None = None):
    """One application of the regularized fixed-point map on the current block."""
    ctx = ctx or BlockContext(state)
    G = ctx.cumulative(psi_blk)
    raw = (ctx.blk - ctx.lam * G) / ctx.nu
    return sup_transform(ctx.blk, raw, delta, prior=ctx.psi_b - delta * ctx.s_b)


@dataclass
class BlockResult:
    sigma: np.ndarray
    psi: np.ndarray
    G: np.ndarray
    g: np.ndarray
    dg: np.ndarray
    taus: np.ndarray
    Rs: np.ndarray
    residuals: list


class ConvergenceError(RuntimeError):
    pass


def solve_block(state: SolverState, delta, tol=1e-10, max_iter=200) -> BlockResult:
    """Picard iteration of :func:`apply_F_delta` until the sup-norm update is below ``tol``."""
    ctx = BlockContext(state)
    nu, lam = ctx.nu, ctx.lam
    slope = max((1.0 - lam * state.g[-1]) / nu, delta)
    psi = ctx.psi_b + slope * (ctx.blk - ctx.s_b)
    res = []
    for _ in range(max_iter):
        new = apply_F_delta(state, psi, delta, ctx)
        r = float(np.max(np.abs(new - psi))) if new.size else 0.0
        res.append(r)
        psi = new
        if r < tol:
            break
    else:
        raise ConvergenceError(f"Picard iteration stalled, last residual {res[-1]:.3e}")
    G, g, dg, taus, Rs = ctx.all_terms(psi)
    return BlockResult(ctx.blk, psi, G, g, dg, taus, Rs, res)


def _commit_block(state, br: BlockResult, k):
    if k <= 0:
        return
    state.commit(br.sigma[:k], br.psi[:k], br.G[:k], br.g[:k], br.dg[:k])
    last = br.sigma[k - 1]
    keep = br.taus <= last
    state.reset.append(br.taus[keep], br.Rs[keep])
    state.residuals.append(br.residuals)
    state.block_index += 1


def delta_schedule(state: SolverState):
    """Geometric schedule ``delta0 * 2**-k`` down to ``delta_min``."""
    p = state.params
    slope = (1.0 - p.lam * state.g[-1]) / p.nu
    d0 = max(0.5 * slope, state.delta_min)
    out = [d0]
    while out[-1] > state.delta_min:
        out.append(max(out[-1] / 2, state.delta_min))
    return out


def solve_until_blowup(init, params, grid, schedule=None, tol=1e-10, max_iter=200,
                       state: SolverState | None = None):
    """Advance block by block until the horizon or the onset of a blowup.

    Returns ``(state, termination)``.  On onset the state ends at the last
    node where ``(1 - lam g)/nu > delta_min`` and the termination carries the
    first offending node.
    """
    if state is None:
        state = new_state(init, params, grid)
    sched = list(schedule) if schedule is not None else delta_schedule(state)
    if any(b > a for a, b in zip(sched, sched[1:])):
        raise ValueError("delta schedule must be nonincreasing")
    k = 0
    state.delta = sched[0]
    end = grid.sigma[-1]
    while state.sigma[-1] < end - 1e-9 * grid.sigma_step:
        br = solve_block(state, state.delta, tol, max_iter)
        if br.sigma.size == 0:
            break
        crit = (1.0 - params.lam * br.g) / params.nu
        bad = np.nonzero(crit <= state.delta)[0]
        if bad.size == 0:
            _commit_block(state, br, br.sigma.size)
            continue
        i = int(bad[0])
        _commit_block(state, br, i)
        state.onset_trail.append((state.delta, float(br.sigma[i])))
        if k + 1 < len(sched):
            k += 1
            state.delta = sched[k]
            continue
        return state, Termination("onset", float(br.sigma[i]),
                                  {"g": float(br.g[i]), "G": float(br.G[i]),
                                   "psi": float(br.psi[i])})
    return state, Termination("horizon", float(state.sigma[-1]))
