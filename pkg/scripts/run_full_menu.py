"""Run every evaluation family on 64x128, 100-step fixtures and collate one report.

    python scripts/run_full_menu.py --out full_menu

Each family runs through the installed command line, one process per step,
the way a CI job would. The script exits with the worst exit code seen and
prints the wall time of each step.
"""
import argparse
import json
import subprocess
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent))
from make_fixtures import make_fixtures  # noqa: E402

CLI = [sys.executable, "-m", "esmgauntlet.cli"]


def _run(argv, log):
    t0 = time.perf_counter()
    proc = subprocess.run(CLI + argv, capture_output=True, text=True)
    elapsed = time.perf_counter() - t0
    log.append({"argv": argv, "exit": proc.returncode, "seconds": round(elapsed, 3)})
    print(f"[{proc.returncode}] {elapsed:6.2f}s  esmgauntlet {' '.join(argv)}")
    if proc.returncode not in (0, 1):
        print(proc.stderr, file=sys.stderr)
    return proc.returncode


def run_full_menu(out, nlat=64, nlon=128, steps=100, stamp="1970-01-01T00:00:00Z"):
    out = Path(out)
    fx = make_fixtures(out / "fixtures", nlat, nlon, steps)
    grid = ["--nlat", str(nlat), "--nlon", str(nlon)]
    common = ["--timestamp", stamp]
    log, reports = [], []

    def step(name, argv):
        d = out / name
        code = _run(argv + ["--out", str(d)] + common, log)
        reports.append(str(d / "report.json"))
        return code

    codes = []
    for model in ("model_a", "model_b"):
        path = str(fx[model])
        codes.append(step(f"{model}_sanity", ["sanity", path]))
        codes.append(step(f"{model}_metrics", ["metrics", path, str(fx["reference"]), "--seasons", "ANN,DJF,JJA"]))
        codes.append(step(f"{model}_constraints", ["constraints", path]))
    codes.append(step("causality_upwind", ["causality", "--builtin", "upwind"] + grid))
    codes.append(step("idealized_jet", ["idealized", "jet", "--builtin", "upwind"] + grid))
    codes.append(step("idealized_advection", ["idealized", "advection", "--builtin", "upwind"] + grid))
    codes.append(_run(["compare"] + reports + ["--out", str(out / "combined"),
                                               "--formats", "json,csv,markdown"] + common, log))
    (out / "run_log.json").write_text(json.dumps(log, indent=1))
    return max(codes), out / "combined" / "report.json"


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", default="full_menu")
    p.add_argument("--nlat", type=int, default=64)
    p.add_argument("--nlon", type=int, default=128)
    p.add_argument("--steps", type=int, default=100)
    args = p.parse_args()
    t0 = time.perf_counter()
    code, path = run_full_menu(args.out, args.nlat, args.nlon, args.steps)
    print(f"combined report: {path}  total {time.perf_counter() - t0:.1f}s  exit {code}")
    return code


if __name__ == "__main__":
    sys.exit(main())
