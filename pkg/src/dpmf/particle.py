"""Finite-N interacting particle system with refractory periods and avalanches.

Active particles follow ``dX = -nu dt + sqrt(nu) dW`` between events.  A
particle whose path touches 0 spikes, becomes refractory for ``epsilon``
and then restarts at ``Lambda``.  Every spike kicks each other active
particle down by an independent ``Normal(lam/N, lam/N)`` amount, so spikes
cascade in generations until no new particle is pushed below 0.
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

SPIKE, RESET = 0, 1


@dataclass
class Avalanche:
    t: float
    size: int
    generations: int


@dataclass
class ParticleEnsemble:
    """Particle states, phases and the event log.

    ``reset_time`` is ``nan`` for active particles and the scheduled reset
    time for refractory ones.  ``noise_scale`` multiplies the diffusion and
    exists for drift-only checks.
    """
    N: int
    nu: float
    lam: float
    Lambda_reset: float
    epsilon: float
    states: np.ndarray
    active: np.ndarray
    reset_time: np.ndarray
    spikes: np.ndarray
    rng: np.random.Generator
    t: float = 0.0
    noise_scale: float = 1.0
    log_events: bool = True
    events: list = field(default_factory=list)
    avalanches: list = field(default_factory=list)

    @property
    def active_fraction(self):
        return float(self.active.mean())

    @property
    def refractory_fraction(self):
        return 1.0 - self.active_fraction

    def F(self):
        """Empirical cumulative spike count per particle."""
        return float(self.spikes.sum()) / self.N

    def event_table(self):
        """Events as columns ``(t, particle, kind, generation)`` ordered as logged."""
        if not self.events:
            return np.empty(0), np.empty(0, int), np.empty(0, int), np.empty(0, int)
        cols = [np.concatenate(c) for c in zip(*self.events)]
        return cols[0], cols[1].astype(int), cols[2].astype(int), cols[3].astype(int)

    def _log(self, t, idx, kind, gen):
        if self.log_events and idx.size:
            n = idx.size
            t = np.broadcast_to(np.asarray(t, dtype=float), (n,)).copy()
            self.events.append((t, idx.copy(), np.full(n, kind), np.full(n, gen)))


def init_ensemble(N, init, params, seed) -> ParticleEnsemble:
    """Sample ``N`` particles from the initial condition.

    Each particle is active with probability ``active mass`` and then drawn
    from ``q0``; otherwise its last spike time is drawn from the history
    rate on ``[-epsilon, 0)`` and it resets ``epsilon`` later.
    """
    N = int(N)
    if N < 1:
        raise ValueError("N must be at least 1")
    rng = np.random.default_rng(seed)
    m_a, m_r = init.q0.total, init.refractory_mass
    active = rng.random(N) < m_a / (m_a + m_r)
    states = np.zeros(N)
    states[active] = init.q0.sample(rng, int(active.sum()))
    reset_time = np.full(N, np.nan)
    n_ref = int((~active).sum())
    if n_ref:
        t, f = init.f0_t, init.f0
        cum = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(t) * (f[:-1] + f[1:]))])
        last = np.interp(rng.random(n_ref) * cum[-1], cum, t)
        reset_time[~active] = last + params.epsilon
    return ParticleEnsemble(N, params.nu, params.lam, params.Lambda_reset, params.epsilon,
                            states, active, reset_time, np.zeros(N, dtype=np.int64), rng)


def resolve_avalanche(ens: ParticleEnsemble, triggers, t) -> Avalanche:
    """Run the spike cascade started by ``triggers`` at time ``t``.

    Each generation of ``k`` spikers gives every still-active particle the
    sum of ``k`` independent ``Normal(lam/N, lam/N)`` kicks, which is
    ``Normal(k lam/N, k lam/N)``.  Spikers leave the active set at once, so
    nobody spikes twice in one avalanche.
    """
    gen = np.asarray(triggers, dtype=int)
    size, g = 0, 0
    scale = ens.lam / ens.N
    while gen.size:
        ens._log(t, gen, SPIKE, g)
        ens.active[gen] = False
        ens.reset_time[gen] = t + ens.epsilon
        ens.spikes[gen] += 1
        size += gen.size
        g += 1
        if scale == 0:
            break
        recv = np.nonzero(ens.active)[0]
        k = gen.size
        ens.states[recv] -= ens.rng.normal(k * scale, np.sqrt(k * scale), recv.size)
        gen = recv[ens.states[recv] <= 0]
    av = Avalanche(float(t), int(size), g)
    if size:
        ens.avalanches.append(av)
    return av


def step(ens: ParticleEnsemble, dt):
    """Advance by ``dt``: resets, diffusion with bridge crossing test, then spikes at step end."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    if dt >= ens.epsilon:
        raise ValueError("dt must be below epsilon")
    t0, t1 = ens.t, ens.t + dt
    start = np.full(ens.N, t0)
    due = ~ens.active & (ens.reset_time <= t1)
    if np.any(due):
        idx = np.nonzero(due)[0]
        r = ens.reset_time[idx]
        order = np.argsort(r, kind="stable")
        ens._log(r[order], idx[order], RESET, 0)
        ens.states[idx] = ens.Lambda_reset
        ens.active[idx] = True
        ens.reset_time[idx] = np.nan
        start[idx] = r
    a = np.nonzero(ens.active)[0]
    tau = t1 - start[a]
    var = ens.nu * tau * ens.noise_scale ** 2
    x0 = ens.states[a]
    x1 = x0 - ens.nu * tau + np.sqrt(var) * ens.rng.standard_normal(a.size)
    u = ens.rng.random(a.size)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        p_bridge = np.where((x1 > 0) & (var > 0), np.exp(-2.0 * x0 * x1 / var), 0.0)
    cross = (x1 <= 0) | (u < p_bridge)
    ens.states[a] = np.maximum(x1, 0.0)
    ens.t = t1
    return resolve_avalanche(ens, a[cross], t1)


@dataclass
class RunArtifacts:
    t: np.ndarray
    F: np.ndarray
    active_fraction: np.ndarray
    snapshots: dict
    avalanches: list

    def max_avalanche(self, t_lo=-np.inf, t_hi=np.inf):
        sizes = [a.size for a in self.avalanches if t_lo <= a.t <= t_hi]
        return max(sizes, default=0)


def default_dt(epsilon):
    return min(epsilon / 20.0, 1e-3)


def run(ens: ParticleEnsemble, horizon, dt=None, snapshot_times=()) -> RunArtifacts:
    """Advance to ``horizon`` recording ``F_N``, active fractions and state snapshots.

    Steps are shortened to land exactly on every snapshot time.
    """
    dt = default_dt(ens.epsilon) if dt is None else float(dt)
    if dt >= ens.epsilon:
        raise ValueError("dt must be below epsilon")
    stops = sorted(float(s) for s in snapshot_times if ens.t < s <= horizon)
    ts, Fs, act = [ens.t], [ens.F()], [ens.active_fraction]
    snaps = {}
    for s in snapshot_times:
        if s == ens.t:
            snaps[float(s)] = ens.states[ens.active].copy()
    tol = 1e-12 * max(1.0, horizon)
    while ens.t < horizon - tol:
        nxt = min(ens.t + dt, horizon)
        if stops and stops[0] < nxt - tol:
            nxt = stops[0]
        if horizon - nxt < tol:
            nxt = horizon
        step(ens, nxt - ens.t)
        ts.append(ens.t)
        Fs.append(ens.F())
        act.append(ens.active_fraction)
        while stops and stops[0] <= ens.t + tol:
            snaps[stops.pop(0)] = ens.states[ens.active].copy()
    return RunArtifacts(np.array(ts), np.array(Fs), np.array(act), snaps, list(ens.avalanches))


def _run_one(args):
    fn, seed = args
    return fn(seed)


def replicates(fn, seeds, workers=1):
    """``[fn(seed) for seed in seeds]``, optionally across processes, in seed order."""
    seeds = list(seeds)
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            return list(ex.map(_run_one, [(fn, s) for s in seeds]))
    return [fn(s) for s in seeds]


def ks_distance(states, N, x, cdf):
    """Sup distance between the empirical sub-probability law of ``states`` and ``cdf``.

    ``states`` are the active particle positions, weighted ``1/N`` each;
    ``cdf`` is sampled on ``x`` and may be defective (total below 1).
    """
    s = np.sort(np.asarray(states, dtype=float))
    F = np.interp(s, x, cdf, left=0.0, right=cdf[-1])
    hi = np.arange(1, s.size + 1) / N
    lo = np.arange(0, s.size) / N
    d = max(np.max(np.abs(hi - F), initial=0.0), np.max(np.abs(F - lo), initial=0.0))
    return float(max(d, abs(s.size / N - cdf[-1])))
