"""Write synthetic model and reference datasets as ETC files.

    python scripts/make_fixtures.py --out fixtures --nlat 64 --nlon 128 --steps 100
"""
import argparse
from pathlib import Path

from esmgauntlet.dataio import write_dataset
from esmgauntlet.fixtures import synthetic_climate
from esmgauntlet.grid import GridSpec


def make_fixtures(out, nlat=64, nlon=128, steps=100, years=5):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    grid = GridSpec.regular(nlat, nlon)
    specs = {
        "reference": dict(model_id="reference"),
        "model_a": dict(model_id="model_a", noise=0.01, seed=1),
        "model_b": dict(model_id="model_b", noise=0.02, seed=2, wv_rate=0.065),
    }
    paths = {}
    for name, kw in specs.items():
        paths[name] = out / f"{name}.etc"
        write_dataset(synthetic_climate(grid, steps, years, **kw), paths[name])
    return paths


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", default="fixtures")
    p.add_argument("--nlat", type=int, default=64)
    p.add_argument("--nlon", type=int, default=128)
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("--years", type=int, default=5)
    args = p.parse_args()
    for name, path in make_fixtures(args.out, args.nlat, args.nlon, args.steps, args.years).items():
        print(f"{name}: {path}")


if __name__ == "__main__":
    main()
