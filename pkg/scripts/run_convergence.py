"""Strong-order experiment on every shipped example; writes one CSV per example.

    python3 scripts/run_convergence.py [--paths 1024] [--seed 7] [--outdir results]
"""
import argparse
import pathlib
import sys

from sdetransform.cli import main

LEVELS = {"unit-circle": 10, "1d-jump": 10, "dividend": 9}


def run(args):
    out = pathlib.Path(args.outdir)
    out.mkdir(parents=True, exist_ok=True)
    codes = {}
    for name in args.examples:
        codes[name] = main(["convergence", "--example", name, "--levels", str(LEVELS[name]),
                            "--paths", str(args.paths), "--seed", str(args.seed),
                            "--methods", args.methods, "--out", str(out / f"{name}.csv")])
    for name, code in codes.items():
        print(f"{name}: exit {code}")
    return max(codes.values())


if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--paths", type=int, default=1024)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--methods", default="gm,em")
    p.add_argument("--outdir", default="results")
    p.add_argument("--examples", nargs="+", default=list(LEVELS), choices=list(LEVELS))
    sys.exit(run(p.parse_args()))
