"""Command line front end: ``solve``, ``simulate``, ``compare`` and ``kernels selftest``.

Every run writes its files plus ``manifest.json`` (file names and sha256
checksums) into ``--out``.  Exit status: 0 success, 2 invalid input,
3 numerical failure, 4 stop at a marginal or non-full blowup,
5 suspected accumulation of blowups.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np
from scipy import integrate

from . import __version__
from .blowup import GridResolutionError, solve_dynamics
from .density import conservation_audit, cumulative_rate, duhamel_density, flux_rate, pull_back
from .io import Scenario, parse_config, save_checkpoint, sha256, write_csv, write_json
from .kernels import _dh, _kernel_quad, fp_cdf, fp_pdf, moment_integrals, richardson_sqrt
from .particle import default_dt, init_ensemble, ks_distance, replicates, run
from .timechange import ConvergenceError, delays_of

log = logging.getLogger("dpmf")

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL, EXIT_MARGINAL, EXIT_ACCUMULATION = 0, 2, 3, 4, 5


class RunFailed(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


def status_code(status):
    if status in ("horizon", "event_limit"):
        return EXIT_OK
    if status == "accumulation":
        return EXIT_ACCUMULATION
    return EXIT_MARGINAL


# ---------------------------------------------------------------------------
# pipelines


def _solve(sc: Scenario):
    init = sc.build_initial()
    tol = float(sc.solver.get("tol", 1e-10))
    max_iter = int(sc.solver.get("max_iter", 200))
    return solve_dynamics(init, sc.params, sc.grid, tol=tol, max_iter=max_iter)


def _rate_times(state, n):
    """Uniform original-time grid on the solved range, skipping blowup instants."""
    t_end = float(state.psi[-1])
    t = np.linspace(0.0, t_end, n + 1)
    bad = np.zeros(t.size, dtype=bool)
    for ev in state.events:
        if np.isfinite(ev.U):
            bad |= np.abs(t - ev.T) <= 1e-12 * max(1.0, ev.T)
    return t[~bad]


def write_solution(out: Path, sc: Scenario, dyn):
    st = dyn.state
    files = []
    delays = delays_of(st.psi_curve, sc.params.epsilon)
    eta = st.sigma - delays.xi(st.sigma)
    write_csv(out / "solution.csv", ["sigma", "psi", "G", "g", "dg", "eta"],
              [st.sigma, st.psi, st.G, st.g, st.dg, eta])
    phi = st.phi_curve
    write_csv(out / "phi.csv", ["t", "phi"], [phi.x, phi.y])
    t = _rate_times(st, int(sc.output.get("rate_points", 1000)))
    write_csv(out / "rate.csv", ["t", "f", "F"], [t, flux_rate(st, t), cumulative_rate(st, t)])
    files += ["solution.csv", "phi.csv", "rate.csv"]
    sig = [float(s) for s in sc.output.get("snapshot_sigmas", [])]
    for ev in st.events:
        if np.isfinite(ev.U):
            sig += [ev.S, ev.U]
    for i, s in enumerate(sorted(set(s for s in sig if 0 <= s <= st.sigma[-1]))):
        snap = duhamel_density(st, s)
        name = f"density_{i:03d}.csv"
        write_csv(out / name, ["x", "q"], [snap.x, snap.values])
        files.append(name)
    for i, tt in enumerate(float(v) for v in sc.output.get("snapshot_times", [])):
        snap, _ = pull_back(st, tt)
        name = f"density_t_{i:03d}.csv"
        write_csv(out / name, ["x", "p"], [snap.x, snap.values])
        files.append(name)
    if st.events:
        write_json(out / "events.json", [
            {k: e.record()[k] for k in ("k", "S", "T", "pi", "a", "U", "exit_g", "status")}
            for e in st.events])
        files.append("events.json")
    audit = conservation_audit(st, n=int(sc.output.get("audit_points", 20)))
    write_json(out / "audit.json", audit.record())
    files.append("audit.json")
    if sc.output.get("checkpoint", False):
        save_checkpoint(out / "checkpoint.npz", st)
        files.append("checkpoint.npz")
    return files


def cmd_solve(sc: Scenario, out: Path):
    dyn = _solve(sc)
    files = write_solution(out, sc, dyn)
    summary = {"status": dyn.status, "sigma_end": dyn.sigma_end, "t_end": float(dyn.state.psi[-1]),
               "n_events": len(dyn.events)}
    return files, summary, status_code(dyn.status)


def _particle_opts(sc: Scenario):
    p = sc.particle
    dt = float(p.get("dt", default_dt(sc.params.epsilon)))
    return int(p.get("n_particles", 1000)), float(p.get("horizon", 1.0)), dt


def cmd_simulate(sc: Scenario, out: Path):
    N, horizon, dt = _particle_opts(sc)
    init = sc.build_initial()
    times = [float(v) for v in sc.particle.get("snapshot_times", [horizon])]
    ens = init_ensemble(N, init, sc.params, np.random.SeedSequence(sc.seed))
    art = run(ens, horizon, dt=dt, snapshot_times=times)
    files = []
    t, i, kind, gen = ens.event_table()
    write_csv(out / "events.csv", ["t", "particle", "kind", "generation"],
              [t, i, np.where(kind == 0, "spike", "reset"), gen])
    write_csv(out / "F_N.csv", ["t", "F_N", "active_fraction"], [art.t, art.F, art.active_fraction])
    av = art.avalanches
    write_csv(out / "avalanches.csv", ["t", "size", "generations"],
              [np.array([a.t for a in av]), np.array([a.size for a in av], dtype=int),
               np.array([a.generations for a in av], dtype=int)])
    files += ["events.csv", "F_N.csv", "avalanches.csv"]
    bins = np.linspace(0.0, float(sc.particle.get("hist_max", sc.grid.x_max)),
                       int(sc.particle.get("hist_bins", 50)) + 1)
    for k, tt in enumerate(sorted(art.snapshots)):
        counts, _ = np.histogram(art.snapshots[tt], bins=bins)
        name = f"hist_{k:03d}.csv"
        write_csv(out / name, ["x_left", "x_right", "density"],
                  [bins[:-1], bins[1:], counts / (N * np.diff(bins))])
        files.append(name)
    summary = {"N": N, "horizon": horizon, "dt": dt, "F_N_end": float(art.F[-1]),
               "max_avalanche_fraction": art.max_avalanche() / N,
               "hist_times": sorted(art.snapshots)}
    return files, summary, EXIT_OK


def _ks_job(args):
    N, seed, init, params, horizon, dt, t, x, cdf = args
    ens = init_ensemble(N, init, params, seed)
    ens.log_events = False
    art = run(ens, horizon, dt=dt, snapshot_times=[t])
    return ks_distance(art.snapshots[t], N, x, cdf), art.max_avalanche() / N, \
        [(a.t, a.size) for a in art.avalanches]


def cmd_compare(sc: Scenario, out: Path):
    c = sc.compare
    n_values = [int(v) for v in c.get("n_values", [100, 1000, 10000])]
    n_rep = int(c.get("replicates", 10))
    t_cmp = float(c.get("t", 1.0))
    workers = int(c.get("workers", 1))
    dt = float(sc.particle.get("dt", default_dt(sc.params.epsilon)))
    dyn = _solve(sc)
    st = dyn.state
    if t_cmp > st.psi[-1]:
        raise RunFailed(EXIT_INVALID, "comparison time beyond the solved range")
    x = np.linspace(0.0, sc.grid.x_max, int(round(sc.grid.x_max / sc.grid.x_step)) + 1)
    snap, _ = pull_back(st, t_cmp, x)
    cdf = integrate.cumulative_trapezoid(snap.values, x, initial=0.0)
    seeds = np.random.SeedSequence(sc.seed).spawn(n_rep)
    horizon = t_cmp
    ev = [e for e in st.events if np.isfinite(e.U)]
    if ev:
        horizon = max(horizon, ev[0].T + sc.params.epsilon)
    rows = []
    init = sc.build_initial()
    for N in n_values:
        jobs = [(N, seeds[r], init, sc.params, horizon, dt, t_cmp, x, cdf) for r in range(n_rep)]
        for r, (ks, frac, avs) in enumerate(replicates(_ks_job, jobs, workers)):
            jump = 0.0
            if ev:
                T1, w = ev[0].T, sc.params.epsilon / 2
                jump = max((s for ta, s in avs if T1 - w <= ta <= T1 + w), default=0) / N
            rows.append((N, r, ks, jump))
    rows = np.array(rows, dtype=float)
    write_csv(out / "ks.csv", ["N", "replicate", "ks", "jump_fraction"],
              [rows[:, 0].astype(int), rows[:, 1].astype(int), rows[:, 2], rows[:, 3]])
    ks = rows[:, 2].reshape(len(n_values), n_rep)
    decreasing = int(np.sum(np.all(np.diff(ks, axis=0) < 0, axis=0)))
    summary = {"status": dyn.status, "t": t_cmp, "n_values": n_values, "replicates": n_rep,
               "ks_mean": ks.mean(axis=1), "strictly_decreasing_replicates": decreasing}
    if ev:
        jumps = rows[:, 3].reshape(len(n_values), n_rep)
        summary.update(pi1=ev[0].pi, T1=ev[0].T, jump_fraction_mean=jumps.mean(axis=1))
    write_json(out / "compare.json", summary)
    return ["ks.csv", "compare.json"], summary, status_code(dyn.status)


# ---------------------------------------------------------------------------
# kernel self test


def selftest_rows():
    """Closed forms against independent references: ``(check, value, reference, tol)``."""
    rows = []
    for x0 in (0.5, 1.0, 2.0):
        rows.append((f"fp_pdf({x0},{x0})", float(fp_pdf(x0, x0)), 1 / np.sqrt(2 * np.pi * x0), 1e-12))
    for s, x in ((0.5, 1.0), (2.0, 1.0), (1.0, 0.5), (3.0, 2.0)):
        ref, _ = integrate.quad(lambda u: float(fp_pdf(u, x)), 0.0, s, epsabs=1e-14, epsrel=1e-13)
        rows.append((f"fp_cdf({s},{x})", float(fp_cdf(s, x)), ref, 1e-10))
    for s in (0.1, 0.5, 2.0):
        m = moment_integrals(s)
        for n, val in ((1, m.I1), (2, m.I2), (3, m.I3)):
            ref = _kernel_quad(_dh, lambda x, n=n: x ** n, s)
            rows.append((f"I{n}({s})", val, ref, 1e-8 * max(1.0, abs(ref))))
        ref = _kernel_quad(lambda u, x: np.abs(_dh(u, x)), lambda x: x ** 4, s)
        rows.append((f"J4({s})", m.J4, ref, 1e-8 * max(1.0, abs(ref))))
    sig = (1e-2, 1e-3, 1e-4)
    ms = [moment_integrals(s) for s in sig]
    rows.append(("lim I2-I1", richardson_sqrt(sig, [m.I2 - m.I1 for m in ms]), 1.0, 1e-3))
    rows.append(("lim I3", richardson_sqrt(sig, [m.I3 for m in ms]), 1.5, 1e-3))
    rows.append(("lim J4", richardson_sqrt(sig, [m.J4 for m in ms]), 0.0, 1e-3))
    return rows


def cmd_selftest(out: Path):
    rows = selftest_rows()
    names = [r[0] for r in rows]
    val = np.array([r[1] for r in rows])
    ref = np.array([r[2] for r in rows])
    tol = np.array([r[3] for r in rows])
    err = np.abs(val - ref)
    ok = err <= tol
    write_csv(out / "selftest.csv", ["check", "value", "reference", "abs_error", "tol", "pass"],
              [np.array(names, dtype=object), val, ref, err, tol, ok])
    summary = {"checks": len(rows), "failed": [n for n, o in zip(names, ok) if not o]}
    return ["selftest.csv"], summary, EXIT_OK if ok.all() else EXIT_NUMERICAL


# ---------------------------------------------------------------------------
# entry point


def build_parser():
    ap = argparse.ArgumentParser(prog="dpmf", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", required=True, type=Path, help="TOML scenario file")
            p.add_argument("--seed", type=int, help="override the config seed")
            p.add_argument("--horizon", type=float,
                           help="override the horizon (sigma for solve, t for simulate/compare)")
            p.add_argument("--n-particles", type=int, help="override particle.n_particles")
        p.add_argument("--out", required=True, type=Path, help="output directory")
        p.add_argument("-v", "--verbose", action="store_true")

    common(sub.add_parser("solve", help="mean-field solution across blowups"))
    common(sub.add_parser("simulate", help="finite-N particle system"))
    common(sub.add_parser("compare", help="particle system against the mean field"))
    kp = sub.add_parser("kernels", help="kernel utilities")
    ksub = kp.add_subparsers(dest="kernels_command", required=True)
    common(ksub.add_parser("selftest", help="closed forms against quadrature"), config=False)
    return ap


def _apply_overrides(sc: Scenario, args):
    from dataclasses import replace
    if args.seed is not None:
        if args.seed < 0 or args.seed >= 2 ** 64:
            raise ValueError("seed must fit in an unsigned 64-bit integer")
        sc.seed = args.seed
    if args.n_particles is not None:
        if not 1 <= args.n_particles < 2 ** 32:
            raise ValueError("n-particles must be a positive 32-bit integer")
        sc.particle["n_particles"] = args.n_particles
    if args.horizon is not None:
        if args.command == "solve":
            sc.grid = replace(sc.grid, horizon_sigma=args.horizon)
        else:
            sc.particle["horizon"] = args.horizon
            sc.compare["t"] = args.horizon
    return sc


def write_manifest(out: Path, command, files, summary, code):
    listed = sorted(set(files))
    present = sorted(p.name for p in out.iterdir() if p.is_file() and p.name != "manifest.json")
    extra = sorted(set(present) - set(listed))
    manifest = {"command": command, "version": __version__, "exit_code": code, "summary": summary,
                "files": [{"name": f, "sha256": sha256(out / f)} for f in sorted(set(listed) | set(extra))]}
    write_json(out / "manifest.json", manifest)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    command = "kernels selftest" if args.command == "kernels" else args.command
    try:
        args.out.mkdir(parents=True, exist_ok=True)
        if args.command == "kernels":
            files, summary, code = cmd_selftest(args.out)
        else:
            sc = _apply_overrides(parse_config(args.config), args)
            from .core import validate_params
            validate_params(sc.params, sc.grid)
            fn = {"solve": cmd_solve, "simulate": cmd_simulate, "compare": cmd_compare}[args.command]
            files, summary, code = fn(sc, args.out)
    except RunFailed as exc:
        print(f"dpmf: {exc}", file=sys.stderr)
        return exc.code
    except (ValueError, OSError) as exc:
        print(f"dpmf: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (ConvergenceError, GridResolutionError, FloatingPointError, ArithmeticError) as exc:
        print(f"dpmf: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    write_manifest(args.out, command, files, summary, code)
    if code == EXIT_MARGINAL:
        print(f"dpmf: stopped at a marginal or non-full blowup ({summary.get('status')})", file=sys.stderr)
    elif code == EXIT_ACCUMULATION:
        print("dpmf: stopped: blowups appear to accumulate", file=sys.stderr)
    elif code == EXIT_NUMERICAL:
        print(f"dpmf: failed checks: {summary.get('failed')}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
