"""Quasi-renewal equation for the cumulative inactivation flux.

The equation reads

    G(sigma) = int H(sigma, x) q0(x) dx + int_0^sigma H(sigma - tau, Lambda) dR(tau),

with ``R(tau) = G(xi(tau))`` the cumulative count of resets.  ``R`` is
stored as a piecewise-linear function of ``tau`` on a node list; repeated
nodes carry atoms (synchronous resets after a blowup).  Against such an
integrator every Stieltjes term is integrated exactly, cell by cell, with
closed-form primitives of the kernels.
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .curves import hermite
from .kernels import _H, _dh, _h, _kappa, _kappa_primitive, fp_cdf_primitive

_ATOM_LEN = 1e-11
_CHUNK = 2048
CLAMP_LIMIT = 1e-6


def _nodes_apply(sigma, tau, R, prim, kern):
    """``int kern(sigma - t) dR(t)`` for piecewise-linear ``R`` on nodes ``tau``.

    Each cell contributes ``dR * mean kern`` through the primitive, which is
    evaluated once per node; repeated nodes (``tb == ta``) are atoms.
    """
    sigma = np.asarray(sigma, dtype=float)
    out = np.zeros(sigma.shape)
    if sigma.size == 0 or tau.size < 2:
        return out
    n = int(np.searchsorted(tau, sigma.max(), side="left"))
    # cells [tau_j, tau_j+1] with tau_j < max(sigma)
    tau, R = tau[: n + 1], R[: n + 1]
    if tau.size < 2:
        return out
    flat = sigma.ravel()
    acc = np.zeros(flat.size)
    for lo in range(0, tau.size - 1, _CHUNK):
        t = tau[lo: lo + _CHUNK + 1]
        dR = np.diff(R[lo: lo + _CHUNK + 1])
        if not np.any(dR):
            continue
        L = np.diff(t)
        short = L < _ATOM_LEN
        P = prim(flat[:, None] - t)
        w = (P[:, :-1] - P[:, 1:]) / np.where(short, 1.0, L)
        if np.any(short):
            mid = flat[:, None] - 0.5 * (t[:-1] + t[1:])
            w = np.where(short, kern(mid), w)
        acc += w @ dR
    return acc.reshape(sigma.shape)


class ResetMeasure:
    """Piecewise-linear cumulative reset count ``R`` on nodes ``tau``.

    Nodes are nondecreasing; a repeated node is a jump of ``R`` (atom).
    """

    def __init__(self, Lambda_reset, tau0=0.0, R0=0.0):
        self.Lambda = float(Lambda_reset)
        self.tau = np.array([float(tau0)])
        self.R = np.array([float(R0)])
        self.clamped = 0.0

    def copy(self):
        new = ResetMeasure(self.Lambda)
        new.tau, new.R, new.clamped = self.tau.copy(), self.R.copy(), self.clamped
        return new

    def append(self, tau, R):
        tau = np.atleast_1d(np.asarray(tau, dtype=float))
        R = np.atleast_1d(np.asarray(R, dtype=float))
        if tau.size and tau[0] < self.tau[-1]:
            raise ValueError("reset nodes must be appended in order")
        # interpolated counts may undershoot slightly; R itself is nondecreasing
        run = np.maximum.accumulate(np.concatenate([self.R[-1:], R]))[1:]
        self.clamped += float(np.sum(run - R))
        if self.clamped > CLAMP_LIMIT:
            raise FloatingPointError("reset count decreases beyond the clamp budget")
        R = run
        self.tau = np.concatenate([self.tau, tau])
        self.R = np.concatenate([self.R, R])

    def truncate(self, n):
        self.tau, self.R = self.tau[:n], self.R[:n]

    @property
    def atoms(self):
        idx = np.nonzero(np.diff(self.tau) == 0)[0]
        return [(float(self.tau[i]), float(self.R[i + 1] - self.R[i])) for i in idx]

    def _nodes(self, start=0):
        return self.tau[start:], self.R[start:]

    def cumulative(self, sigma, start=0):
        """``int H(sigma - tau, Lambda) dR(tau)`` over cells from node ``start`` on."""
        L = self.Lambda
        return _nodes_apply(sigma, *self._nodes(start),
                            lambda s: fp_cdf_primitive(s, L), lambda s: _H(s, L))

    def rate(self, sigma, start=0):
        L = self.Lambda
        return _nodes_apply(sigma, *self._nodes(start), lambda s: _H(s, L), lambda s: _h(s, L))

    def rate_dt(self, sigma, start=0):
        L = self.Lambda
        return _nodes_apply(sigma, *self._nodes(start), lambda s: _h(s, L), lambda s: _dh(s, L))

    def density(self, sigma, y):
        """``int kappa(sigma - tau, y, Lambda) dR(tau)`` on the points ``y``."""
        y = np.asarray(y, dtype=float)
        return self._density_grid(float(sigma), y.ravel()).reshape(y.shape)

    def _density_grid(self, sigma, y):
        L = self.Lambda
        n = int(np.searchsorted(self.tau, sigma, side="left"))
        tau, R = self.tau[: n + 1], self.R[: n + 1]
        out = np.zeros(y.shape)
        step = _CHUNK // 4
        for lo in range(0, tau.size - 1, step):
            t = tau[lo: lo + step + 1]
            dR = np.diff(R[lo: lo + step + 1])
            if not np.any(dR):
                continue
            Lc = np.diff(t)
            short = Lc < _ATOM_LEN
            P = _kappa_primitive(sigma - t, y[:, None], L)
            w = (P[:, :-1] - P[:, 1:]) / np.where(short, 1.0, Lc)
            if np.any(short):
                w = np.where(short, _kappa(sigma - 0.5 * (t[:-1] + t[1:]), y[:, None], L), w)
            out += w @ dR
        return out


@dataclass
class FluxCurve:
    """Cumulative flux ``G`` with density ``g`` (and ``dg``) on ``sigma`` nodes."""
    sigma: np.ndarray
    G: np.ndarray
    g: np.ndarray
    dg: np.ndarray | None = None
    stderr: np.ndarray | None = None


class GTable:
    """Cubic Hermite interpolant of ``G`` through values and slopes, history included."""

    def __init__(self, sigma, G, g):
        self.sigma, self.G, self.g = sigma, G, g

    def __call__(self, s):
        return hermite(self.sigma, self.G, self.g, s)


def history_table(init):
    return init.pre_sigma, init.pre_G, init.pre_g


def solve_G(delays, init, grid, params, clamp_limit=CLAMP_LIMIT) -> FluxCurve:
    """Forward product integration of the quasi-renewal equation for given delays.

    Nodes within one delay floor of each other do not interact, so every
    block of length ``delays.min_delay`` is evaluated in one vectorized pass.
    """
    if grid.sigma_step >= delays.min_delay:
        raise ValueError("sigma_step must be below the minimal delay")
    src = init.q0
    nodes = grid.sigma
    ps, pG, pg = history_table(init)
    tab_s, tab_G, tab_g = [ps], [pG], [pg]
    g0 = float(src.flux(0.0))
    tab_s.append(np.array([0.0]))
    tab_G.append(np.array([0.0]))
    tab_g.append(np.array([g0]))
    table = GTable(np.concatenate(tab_s), np.concatenate(tab_G), np.concatenate(tab_g))
    R0 = float(table(delays.xi(0.0)))
    rm = ResetMeasure(params.Lambda_reset, 0.0, R0)
    G_out, g_out, dg_out = [0.0], [g0], [float(src.flux_dt(0.0))]
    clamped = 0.0
    n = 1
    jumps = sorted(delays.jumps)
    while n < nodes.size:
        start = nodes[n - 1]
        m = n
        while m < nodes.size and nodes[m] <= start + delays.min_delay * (1 - 1e-12):
            m += 1
        blk = nodes[n:m]
        xi = delays.xi(blk)
        tau_nodes, R_nodes = list(blk), list(table(xi))
        for ts, xl, xr in jumps:
            if start < ts <= blk[-1]:
                k = int(np.searchsorted(blk, ts, side="left"))
                tau_nodes[k:k] = [ts, ts]
                R_nodes[k:k] = [float(table(xl)), float(table(xr))]
        # a jump located on a grid node keeps its right value on the node
        rm.append(tau_nodes, R_nodes)
        G = src.cdf(blk) + rm.cumulative(blk)
        g = src.flux(blk) + rm.rate(blk)
        dg = src.flux_dt(blk) + rm.rate_dt(blk)
        prev = G_out[-1]
        for i in range(G.size):
            if G[i] < prev:
                clamped += prev - G[i]
                G[i] = prev
            prev = G[i]
        if clamped > clamp_limit:
            raise FloatingPointError("negative flux increments beyond the clamp budget")
        G_out.extend(G)
        g_out.extend(g)
        dg_out.extend(dg)
        table = GTable(np.concatenate([table.sigma, blk]), np.concatenate([table.G, G]),
                       np.concatenate([table.g, g]))
        n = m
    out = FluxCurve(nodes.copy(), np.array(G_out), np.maximum(np.array(g_out), 0.0), np.array(dg_out))
    out.reset = rm
    out.clamped = clamped
    return out


# ---------------------------------------------------------------------------
# Monte Carlo oracle


def _oracle_chunk(args):
    delays, init, n, sigma_out, Lambda, seedseq = args
    rng = np.random.default_rng(seedseq)
    q0 = init.q0
    m_active = q0.total
    is_active = rng.random(n) < m_active / (m_active + init.refractory_mass)
    t = np.zeros(n)
    x = np.full(n, float(Lambda))
    x[is_active] = q0.sample(rng, int(is_active.sum()))
    n_ref = int((~is_active).sum())
    if n_ref:
        # last inactivation drawn from dG0 on [xi0, 0)
        u = rng.random(n_ref) * init.refractory_mass
        xi = np.interp(u, init.pre_G + init.refractory_mass, init.pre_sigma)
        t[~is_active] = delays.tau(xi)
    top = float(sigma_out[-1])
    hist = np.zeros((n, sigma_out.size + 1))
    alive = np.nonzero(t < top)[0]
    while alive.size:
        xa = x[alive]
        xi = t[alive] + rng.wald(xa, xa * xa)
        k = np.searchsorted(sigma_out, xi, side="right")
        np.add.at(hist, (alive, k), 1.0)
        go = xi < top
        alive, xi = alive[go], xi[go]
        t[alive] = delays.tau(xi)
        x[alive] = Lambda
        alive = alive[t[alive] < top]
    counts = np.cumsum(hist, axis=1)[:, : sigma_out.size]
    return counts.sum(axis=0), (counts ** 2).sum(axis=0)


def mc_renewal_oracle(delays, init, n_paths, sigma_out, seed, Lambda_reset, workers=1,
                      chunk=20000) -> FluxCurve:
    """Monte Carlo estimate of ``G`` from the renewal sequence of inactivations.

    Each path starts active (state drawn from ``q0``) or refractory (last
    inactivation drawn from the history), alternates inverse-Gaussian
    first-passage epochs with refractory gaps through ``delays.tau``, and
    counts inactivations before each ``sigma_out``.  Paths are split into
    fixed chunks with spawned seeds, so the result does not depend on
    ``workers``.
    """
    if n_paths < 1000:
        raise ValueError("n_paths must be at least 1000")
    sigma_out = np.asarray(sigma_out, dtype=float)
    sizes = [chunk] * (n_paths // chunk) + ([n_paths % chunk] if n_paths % chunk else [])
    seqs = np.random.SeedSequence(seed).spawn(len(sizes))
    jobs = [(delays, init, s, sigma_out, float(Lambda_reset), q) for s, q in zip(sizes, seqs)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            parts = list(ex.map(_oracle_chunk, jobs))
    else:
        parts = [_oracle_chunk(j) for j in jobs]
    s1 = sum(p[0] for p in parts)
    s2 = sum(p[1] for p in parts)
    mean = s1 / n_paths
    var = np.maximum(s2 / n_paths - mean ** 2, 0.0)
    return FluxCurve(sigma_out, mean, np.full_like(mean, np.nan), stderr=np.sqrt(var / n_paths))


def series_G_upper_bound(sigma, x0, Lambda_reset, tol=1e-14):
    """Zero-delay majorant ``sum_k H(sigma, x0 + (k-1) Lambda)``."""
    sigma = np.asarray(sigma, dtype=float)
    total = np.zeros(sigma.shape)
    k = 0
    while True:
        term = _H(sigma, x0 + k * Lambda_reset)
        total = total + term
        k += 1
        if np.all(term < tol):
            return total
