"""Command-line front end: convergence studies, single simulations and assumption checks.

    sdetransform (convergence|simulate|check) --example NAME [--config PATH]
        [--levels N] [--paths N] [--seed N] [--methods gm,em] [--out PATH]
        [--set key=value ...]

Configuration is a flat ``key = value`` file; ``--set`` and the dedicated
flags override it.  Exit codes: 0 success, 2 configuration error, 3 too many
failed paths, 4 slope outside the acceptance band or a failed hard check.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

import numpy as np

from .convergence import estimate_errors
from .errors import (
    DegenerateDiffusionAtJump,
    InverseIterationDiverged,
    NonParallelityViolated,
    SdeTransformError,
    SimulationFailureBudgetExceeded,
)
from .examples import (DividendParams, build_1d_jump, build_dividend, build_no_jump, build_unit_circle,
                       shipped_1d_jump, staircase_drifts)
from .geometry import Sphere, normal_derivative_bound_check
from .sde import TransformedSde, check_non_parallelity, continuity_probe
from .solver import BrownianLadder, run_monte_carlo, simulate
from .transform import check_admissibility

log = logging.getLogger(__name__)

EXIT_OK, EXIT_CONFIG, EXIT_FAILURES, EXIT_CHECK = 0, 2, 3, 4

# key -> parser; every accepted key is listed here
KEYS = {
    "example.name": str,
    "sim.x0": "floats",
    "sim.T": float,
    "sim.levels": int,
    "sim.paths": int,
    "sim.seed": int,
    "sim.methods": str,
    "sim.workers": int,
    "sim.batch_size": int,
    "transform.c": float,
    "transform.kappa": float,
    "transform.safety_factor": float,
    "transform.inverse_tol": float,
    "dividend.beta": float,
    "dividend.ubar": float,
    "dividend.alphas": "floats",
    "dividend.b_intercept": float,
    "dividend.b_slope": float,
    "surface.kind": str,
    "surface.center": "floats",
    "surface.radius": float,
    "surface.normal": "floats",
    "surface.offset": float,
    "surface.points": "floats",
    "surface.reach": float,
    "sde.sigma_scale": float,
    "check.c0": float,
    "convergence.band": "floats",
}

SURFACE_KIND = {"unit-circle": "sphere", "no-jump": "sphere", "1d-jump": "points", "dividend": "graph"}


class ConfigError(ValueError):
    pass


def _parse_value(key, text):
    kind = KEYS.get(key)
    if kind is None:
        raise ConfigError(f"unknown configuration key {key!r}")
    try:
        if kind == "floats":
            return tuple(float(v) for v in text.replace(",", " ").split())
        return kind(text.strip())
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {text!r}") from exc


def read_config(path):
    """Flat ``key = value`` file; ``#`` starts a comment."""
    out = {}
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for num, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{num}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        out[key] = _parse_value(key, value)
    return out


@dataclasses.dataclass
class RunConfiguration:
    command: str
    example: str
    levels: int
    paths: int
    seed: int
    methods: tuple
    out: str | None
    values: dict

    def get(self, key, default=None):
        return self.values.get(key, default)

    def header(self, resolved=None):
        """``key=value`` lines of the configuration; ``resolved`` adds or replaces derived values."""
        values = dict(self.values)
        values.update(resolved or {})
        lines = [f"command={self.command}", f"example.name={self.example}",
                 f"sim.levels={self.levels}", f"sim.paths={self.paths}", f"sim.seed={self.seed}",
                 f"sim.methods={','.join(m.lower() for m in self.methods)}"]
        for key in sorted(values):
            if key in ("example.name", "sim.levels", "sim.paths", "sim.seed", "sim.methods"):
                continue
            value = values[key]
            if isinstance(value, tuple):
                value = ",".join(_fmt(v) for v in value)
            elif isinstance(value, float):
                value = _fmt(value)
            lines.append(f"{key}={value}")
        return lines


def resolve(args):
    values = read_config(args.config) if args.config else {}
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        values[key.strip()] = _parse_value(key.strip(), value)
    for key, flag in (("example.name", args.example), ("sim.levels", args.levels),
                      ("sim.paths", args.paths), ("sim.seed", args.seed), ("sim.methods", args.methods)):
        if flag is not None:
            values[key] = _parse_value(key, str(flag))
    example = values.get("example.name")
    if not example:
        raise ConfigError("an example name is required (--example or example.name)")
    if example not in SURFACE_KIND:
        raise ConfigError(f"unknown example {example!r}; choose from {', '.join(SURFACE_KIND)}")
    kind = values.get("surface.kind")
    if kind is not None and kind != SURFACE_KIND[example]:
        raise ConfigError(f"example {example} uses a {SURFACE_KIND[example]} surface, not {kind}")

    default_methods = "gm,em" if args.command == "convergence" else "gm"
    methods = tuple(m.strip().upper() for m in values.get("sim.methods", default_methods).split(",") if m.strip())
    if not methods or any(m not in ("GM", "EM") for m in methods):
        raise ConfigError("methods must be a subset of gm,em")
    default_levels = {"dividend": 9}.get(example, 10)
    levels = values.get("sim.levels", default_levels)
    paths = values.get("sim.paths", 1 if args.command == "simulate" else 1024)
    if args.command == "convergence" and levels < 2:
        raise ConfigError("convergence needs at least two levels")
    if levels < 0:
        raise ConfigError("levels must be nonnegative")
    if paths < 1:
        raise ConfigError("paths must be positive")
    if args.command == "simulate" and len(methods) != 1:
        raise ConfigError("simulate runs a single method")
    band = values.get("convergence.band")
    if band is not None and len(band) != 2:
        raise ConfigError("convergence.band takes two numbers")
    return RunConfiguration(args.command, example, int(levels), int(paths), values.get("sim.seed", 0),
                            methods, args.out, values)


# ---------------------------------------------------------------------------
# building problems from a configuration

def build_bundle(cfg):
    try:
        return _build_bundle(cfg)
    except (ValueError, TypeError, SdeTransformError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"cannot build example {cfg.example}: {exc}") from exc


def _build_bundle(cfg):
    name = cfg.example
    g = cfg.get
    kwargs = {}
    if g("sim.T") is not None:
        kwargs["T"] = g("sim.T")
    if name in ("unit-circle", "no-jump"):
        if g("sim.x0") is not None:
            kwargs["x0"] = g("sim.x0")
        bundle = (build_unit_circle if name == "unit-circle" else build_no_jump)(**kwargs)
        if g("surface.center") is not None or g("surface.radius") is not None:
            center = np.asarray(g("surface.center", (0.0, 0.0)))
            if center.shape != (2,):
                raise ConfigError("surface.center needs two coordinates")
            surface = Sphere(center=center, radius=g("surface.radius", 1.0))
            bundle = dataclasses.replace(bundle, problem=bundle.problem.with_surface(surface))
    elif name == "1d-jump":
        if g("sim.x0") is not None:
            if len(g("sim.x0")) != 1:
                raise ConfigError("sim.x0 needs one coordinate for 1d-jump")
            kwargs["x0"] = g("sim.x0")[0]
        points = g("surface.points")
        if points is not None:
            points = tuple(sorted(points))
            kwargs["jump_points"] = points
            if len(points) > 1:
                kwargs["mu_pieces"] = staircase_drifts(points)
        # the shipped radius belongs to the single jump at 0; other layouts use the bound
        bundle = build_1d_jump(**kwargs) if points is not None else shipped_1d_jump(**kwargs)
    else:
        overrides = {}
        for key, field in (("dividend.beta", "beta"), ("dividend.ubar", "ubar"),
                           ("dividend.b_intercept", "b_intercept"), ("dividend.b_slope", "b_slope"),
                           ("sim.x0", "x0"), ("sim.T", "T")):
            if g(key) is not None:
                overrides[field] = g(key)
        if g("dividend.alphas") is not None:
            overrides["alphas"] = np.asarray(g("dividend.alphas"))
            overrides["n_states"] = len(g("dividend.alphas"))
        if g("surface.reach") is not None:
            overrides["reach"] = g("surface.reach")
        bundle = build_dividend(DividendParams(**overrides))
    scale = g("sde.sigma_scale")
    if scale is not None:
        problem = bundle.problem
        base = problem.diffusion_fn
        problem = dataclasses.replace(problem, diffusion_fn=lambda x: scale * np.asarray(base(x)))
        bundle = dataclasses.replace(bundle, problem=problem)
    return bundle


def build_transform(cfg, bundle):
    return bundle.transform(
        c=cfg.get("transform.c"),
        kappa=cfg.get("transform.kappa"),
        safety_factor=cfg.get("transform.safety_factor", 0.9),
        inverse_tol=cfg.get("transform.inverse_tol", 1e-12),
    )


# ---------------------------------------------------------------------------
# output

def _fmt(value):
    return format(float(value), ".17g")


def _write(cfg, header_lines, columns, rows):
    text = ["# " + line for line in header_lines]
    text.append(",".join(columns))
    text.extend(",".join(row) for row in rows)
    payload = "\n".join(text) + "\n"
    if cfg.out:
        with open(cfg.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(payload)
    else:
        sys.stdout.write(payload)


def _say(cfg, message):
    # the summary goes to stderr whenever the CSV occupies stdout
    print(message, file=sys.stdout if cfg.out else sys.stderr)


# ---------------------------------------------------------------------------
# commands

def cmd_convergence(cfg):
    bundle = build_bundle(cfg)
    transform = build_transform(cfg, bundle) if "GM" in cfg.methods else None
    band = cfg.get("convergence.band", bundle.slope_band)
    levels = range(1, cfg.levels + 1)
    rows, slopes = [], {}
    for method in cfg.methods:
        result = run_monte_carlo(bundle.problem, method, levels, cfg.paths, cfg.seed,
                                 transform=transform if method == "GM" else None,
                                 workers=cfg.get("sim.workers", 1), batch_size=cfg.get("sim.batch_size", 256))
        report = estimate_errors(result.levels, T=bundle.problem.T, method=method, seed=cfg.seed)
        slopes[method] = report.slope
        for rec in report.records:
            rows.append([method, str(rec.k), _fmt(rec.log2_dt), _fmt(rec.raw_l2_diff),
                         _fmt(rec.err), _fmt(rec.mc_stderr)])
    header = cfg.header({"transform.c": float(transform.c) if transform else "none",
                         "convergence.band": tuple(float(b) for b in band)})
    _write(cfg, header, ["method", "level", "log2_dt", "raw_l2_diff", "err_k", "mc_stderr"], rows)
    for method, slope in slopes.items():
        _say(cfg, f"{method} slope: {'n/a' if slope is None else f'{slope:.4f}'}")
    gm = slopes.get("GM")
    if gm is not None:
        inside = band[0] <= gm <= band[1]
        _say(cfg, f"GM slope {'within' if inside else 'outside'} band [{band[0]}, {band[1]}]")
        if not inside:
            return EXIT_CHECK
    return EXIT_OK


def cmd_simulate(cfg):
    bundle = build_bundle(cfg)
    method = cfg.methods[0]
    transform = build_transform(cfg, bundle) if method == "GM" else None
    ladder = BrownianLadder(bundle.problem.T, cfg.levels, bundle.problem.noise_dim, cfg.seed,
                            np.arange(cfg.paths))
    res = simulate(bundle.problem, method, cfg.levels, ladder, transform, store_trajectory=True)
    if res.failed.any():
        _say(cfg, f"{int(res.failed.sum())} of {cfg.paths} paths failed")
        return EXIT_FAILURES
    d = bundle.problem.dimension
    rows = []
    for p in range(cfg.paths):
        for t, state in zip(res.times, res.trajectory[p]):
            rows.append([str(p), _fmt(t)] + [_fmt(v) for v in state])
    header = cfg.header({"transform.c": float(transform.c)} if transform else None)
    _write(cfg, header, ["path", "t"] + [f"x_{i + 1}" for i in range(d)], rows)
    _say(cfg, f"{method}: {cfg.paths} path(s), {ladder.steps(cfg.levels)} steps")
    return EXIT_OK


def cmd_check(cfg):
    bundle = build_bundle(cfg)
    problem = bundle.problem
    results = []

    nonpar = check_non_parallelity(problem, c0=cfg.get("check.c0", 1e-6))
    results.append(("non-parallelity", nonpar.passed, f"min |sigma^T n| = {nonpar.minimum:.6g} (>= {nonpar.threshold:g})"))

    nd = normal_derivative_bound_check(problem.surface)
    results.append(("normal derivative", nd.passed, f"max |n'| = {nd.max_observed:.6g} (bound {nd.bound:.6g})"))

    c = cfg.get("transform.c", bundle.c)
    transform = None
    if nonpar.passed:
        try:
            if c is None:
                transform = build_transform(cfg, bundle)
                c = transform.c
            adm = check_admissibility(problem, c, kappa=cfg.get("transform.kappa", bundle.kappa),
                                      alpha_jacobian=bundle.alpha_jacobian)
            note = "" if adm.within_bound else " (above the theoretical bound, accepted on det G' > 0)"
            results.append(("admissibility", adm.passed,
                            f"c = {c:.6g}, bound = {adm.bound.bound:.6g}, reach ok = {adm.within_reach}, "
                            f"min det G' = {adm.min_det:.6g}{note}"))
            if adm.passed and transform is None:
                transform = build_transform(cfg, bundle)
        except (NonParallelityViolated, DegenerateDiffusionAtJump) as exc:
            results.append(("admissibility", False, str(exc)))
    else:
        results.append(("admissibility", False, "skipped: non-parallelity fails"))

    if transform is not None:
        probe = continuity_probe(TransformedSde(transform))
        results.append(("drift continuity", probe.passed,
                        f"gap ratios in [{np.nanmin(probe.ratios):.3g}, {np.nanmax(probe.ratios):.3g}] "
                        f"(band {probe.ratio_band}); raw gap ~ {np.median(probe.raw_gaps[:, -1]):.4g}"))
    else:
        results.append(("drift continuity", False, "skipped: no admissible transform"))

    for name, passed, detail in results:
        print(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
    return EXIT_OK if all(p for _, p, _ in results) else EXIT_CHECK


COMMANDS = {"convergence": cmd_convergence, "simulate": cmd_simulate, "check": cmd_check}


def parser():
    p = argparse.ArgumentParser(prog="sdetransform", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--example")
    p.add_argument("--config")
    p.add_argument("--levels", type=int)
    p.add_argument("--paths", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--methods")
    p.add_argument("--out")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None):
    ap = parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve(args)
    except ConfigError as exc:
        ap.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[cfg.command](cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SimulationFailureBudgetExceeded, InverseIterationDiverged) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURES
    except (SdeTransformError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CHECK


if __name__ == "__main__":
    sys.exit(main())
