"""Command line runs on the bundled scenarios.

Equivalent shell commands:
    dpmf solve --config demos/configs/supercritical.toml --out out/super
    dpmf simulate --config demos/configs/weak_coupling.toml --out out/sim
    dpmf kernels selftest --out out/selftest

Run: python3 demos/07_cli.py
"""
import json
import tempfile
from pathlib import Path

from dpmf.cli import main

configs = Path(__file__).resolve().parent / "configs"
with tempfile.TemporaryDirectory() as tmp:
    tmp = Path(tmp)
    runs = {
        "solve": ["solve", "--config", str(configs / "supercritical.toml")],
        "simulate": ["simulate", "--config", str(configs / "weak_coupling.toml")],
        "selftest": ["kernels", "selftest"],
    }
    for name, args in runs.items():
        out = tmp / name
        code = main(args + ["--out", str(out)])
        man = json.loads((out / "manifest.json").read_text())
        print(f"{name}: exit {code}, files {[f['name'] for f in man['files']]}")
        print(f"  summary {man['summary']}")
    events = json.loads((tmp / "solve" / "events.json").read_text())
    print("\nsupercritical events:", [(e["k"], round(e["T"], 5), round(e["pi"], 5)) for e in events])
