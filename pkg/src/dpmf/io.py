"""Config parsing, CSV/JSON writers and solver checkpoints.

Floats are written with ``repr``, the shortest decimal string that reads
back to the same double, so identical runs give byte-identical files.
"""
from __future__ import annotations

import hashlib
import json
import zipfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .core import Atom, GriddedDensity, GridSpec, ModelParams, build_initial
from .renewal import ResetMeasure

SCHEMA_VERSION = 1
CHECKPOINT_VERSION = 1


def fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    return repr(float(v))


def write_csv(path, header, columns):
    """Write equal-length columns with a header line."""
    cols = [np.asarray(c) for c in columns]
    n = cols[0].shape[0] if cols else 0
    if any(c.shape[0] != n for c in cols):
        raise ValueError("columns differ in length")
    lines = [",".join(header)]
    lines += [",".join(fmt(c[i]) for c in cols) for i in range(n)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_two_column_csv(path):
    """``(x, value)`` pairs; a non-numeric first line is taken as a header."""
    rows = [r.strip() for r in Path(path).read_text().splitlines() if r.strip()]
    try:
        [float(v) for v in rows[0].split(",")]
    except ValueError:
        rows = rows[1:]
    data = np.array([[float(v) for v in r.split(",")[:2]] for r in rows])
    if data.ndim != 2 or data.shape[1] != 2:
        raise ValueError(f"{path}: expected two numeric columns")
    return data[:, 0], data[:, 1]


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return [_jsonable(x) for x in v.tolist()]
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if np.isfinite(v) else None
    if isinstance(v, np.integer):
        return int(v)
    return v


def write_json(path, obj):
    Path(path).write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# ---------------------------------------------------------------------------
# config


@dataclass
class Scenario:
    params: ModelParams
    grid: GridSpec
    initial: dict
    seed: int = 0
    solver: dict = field(default_factory=dict)
    particle: dict = field(default_factory=dict)
    compare: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    base_dir: Path = Path(".")

    def build_initial(self):
        return build_initial(self.params, *initial_density(self.initial, self.base_dir))


def initial_density(spec, base_dir):
    """``(q0, f0)`` from the ``[initial]`` section."""
    kind = spec.get("kind", "atom")
    f0 = None
    if "history_file" in spec:
        f0 = read_two_column_csv(Path(base_dir) / spec["history_file"])
    if kind == "atom":
        if "x0" not in spec:
            raise ValueError("[initial] atom needs x0")
        return Atom(float(spec["x0"]), float(spec.get("mass", 1.0))), f0
    if kind == "table":
        if "file" not in spec:
            raise ValueError("[initial] table needs file")
        x, v = read_two_column_csv(Path(base_dir) / spec["file"])
        return GriddedDensity(x, v), f0
    raise ValueError(f"unknown initial kind {kind!r}")


_KNOWN = {"schema_version", "seed", "model", "grid", "initial", "solver", "particle", "compare",
          "output"}


def parse_config(path) -> Scenario:
    """Read and validate a TOML scenario file."""
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise ValueError(f"cannot read config {path}: {exc}") from exc
    return scenario_from_dict(raw, path.parent)


def scenario_from_dict(raw, base_dir=".") -> Scenario:
    unknown = set(raw) - _KNOWN
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    if raw.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"schema_version must be {SCHEMA_VERSION}")
    for sec in ("model", "grid", "initial"):
        if sec not in raw:
            raise ValueError(f"missing [{sec}] section")
    m = raw["model"]
    try:
        params = ModelParams(m["nu"], m["lam"], m["Lambda_reset"], m["epsilon"])
        grid = GridSpec(**raw["grid"])
    except KeyError as exc:
        raise ValueError(f"missing key {exc}") from exc
    except TypeError as exc:
        raise ValueError(str(exc)) from exc
    seed = int(raw.get("seed", 0))
    if seed < 0:
        raise ValueError("seed must be nonnegative")
    return Scenario(params, grid, dict(raw["initial"]), seed, dict(raw.get("solver", {})),
                    dict(raw.get("particle", {})), dict(raw.get("compare", {})),
                    dict(raw.get("output", {})), Path(base_dir))


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(path, state):
    """Store a solver state as ``.npz``; scalars and events go in a JSON header."""
    ini, p, g = state.init, state.params, state.grid
    q0 = ini.q0
    meta = {
        "format_version": CHECKPOINT_VERSION,
        "params": [p.nu, p.lam, p.Lambda_reset, p.epsilon],
        "grid": [g.sigma_step, g.horizon_sigma, g.x_step, g.x_max],
        "q0": {"kind": "atom", "x0": q0.x0, "mass": q0.mass} if isinstance(q0, Atom) else {"kind": "table"},
        "delta": state.delta,
        "block_index": state.block_index,
        "clamped": state.reset.clamped,
        "events": [e.record() for e in state.events],
    }
    arrays = dict(sigma=state.sigma, psi=state.psi, G=state.G, g=state.g, dg=state.dg,
                  reset_tau=state.reset.tau, reset_R=state.reset.R, f0_t=ini.f0_t, f0=ini.f0)
    if not isinstance(q0, Atom):
        arrays.update(q0_x=q0.x, q0_values=q0.values)
    arrays["meta"] = np.array(json.dumps(_jsonable(meta), sort_keys=True))
    # zip entries get a fixed timestamp so identical states give identical files
    with zipfile.ZipFile(path, "w", zipfile.ZIP_DEFLATED) as zf:
        for name in sorted(arrays):
            info = zipfile.ZipInfo(name + ".npy", date_time=(1980, 1, 1, 0, 0, 0))
            info.compress_type = zipfile.ZIP_DEFLATED
            with zf.open(info, "w") as fh:
                np.lib.format.write_array(fh, np.asarray(arrays[name]), allow_pickle=False)


def load_checkpoint(path, grid=None):
    """Rebuild a solver state saved by :func:`save_checkpoint`.

    A different ``grid`` (typically a longer horizon) may be passed to
    continue the run.
    """
    from .blowup import BlowupEvent
    from .timechange import SolverState

    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(str(z["meta"]))
        if meta.get("format_version") != CHECKPOINT_VERSION:
            raise ValueError("unsupported checkpoint version")
        arr = {k: z[k] for k in z.files if k != "meta"}
    params = ModelParams(*meta["params"])
    saved_grid = GridSpec(*meta["grid"])
    if grid is None:
        grid = saved_grid
    elif grid.sigma_step != saved_grid.sigma_step:
        raise ValueError("a checkpoint can only be continued with the same sigma_step")
    q = meta["q0"]
    q0 = Atom(q["x0"], q["mass"]) if q["kind"] == "atom" else GriddedDensity(arr["q0_x"], arr["q0_values"])
    f0 = None if not np.any(arr["f0"]) else (arr["f0_t"], arr["f0"])
    init = build_initial(params, q0, f0)
    rm = ResetMeasure(params.Lambda_reset)
    rm.tau, rm.R, rm.clamped = arr["reset_tau"], arr["reset_R"], float(meta["clamped"])
    nan = float("nan")
    events = [BlowupEvent(**{k: (nan if v is None else v) for k, v in e.items()}) for e in meta["events"]]
    return SolverState(params, grid, init, arr["sigma"], arr["psi"], arr["G"], arr["g"], arr["dg"],
                       rm, float(meta["delta"]), int(meta["block_index"]), events)
