"""Command line entry point: ``qbsde quantizer|reference|solve|converge|table1|alpha-study``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import harness
from .backward import SchemeParams, SchemeError, solve
from .driver import TruncationPolicy
from .models import BUILTIN_NAMES, builtin
from .oracle import quadrature_self_check, reference_y0
from .quantizer import GridError, gaussian_grid, save_grid, stationarity_residual

DEFAULTS = {
    "model": "d2_fig1", "n": 12, "n_list": [5, 10, 20, 40], "alpha": 0.25, "alpha_list": None, "points": 100,
    "dim": 1, "delta": None, "kappa": None, "truncation": "adaptive", "N": None, "R": None, "workers": 1,
    "out": None, "nodes": 64, "timings": False,
}


class ConfigError(ValueError):
    pass


def _floats(text):
    return [float(t) for t in text.split(",") if t]


def _ints(text):
    return [int(t) for t in text.split(",") if t]


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file whose keys mirror the flags; flags take precedence")
    common.add_argument("--model", choices=BUILTIN_NAMES)
    common.add_argument("--n", type=int, help="number of time steps")
    common.add_argument("--n-list", dest="n_list", type=_ints, help="comma-separated increasing step counts")
    common.add_argument("--alpha", type=float)
    common.add_argument("--alpha-list", dest="alpha_list", type=_floats)
    common.add_argument("--points", type=int, help="total quantizer nodes M")
    common.add_argument("--dim", type=int)
    common.add_argument("--delta", type=float, help="lattice spacing")
    common.add_argument("--kappa", type=int, help="lattice half-width in spacings")
    common.add_argument("--truncation", help="adaptive|fixed|none (comma-separated for converge)")
    common.add_argument("--N", type=float, help="z-truncation level for --truncation fixed")
    common.add_argument("--R", type=float, help="weight clamp for --truncation fixed")
    common.add_argument("--workers", type=int)
    common.add_argument("--out", help="output file (JSON for solve, CSV for studies, grid text for quantizer)")
    common.add_argument("--nodes", type=int, help="Gauss-Hermite nodes per axis for reference")
    common.add_argument("--timings", action="store_const", const=True, help="write runtimes to CSV")
    common.add_argument("-v", "--verbose", action="store_true")
    p = argparse.ArgumentParser(prog="qbsde", description="Quantized truncated BTZ scheme for quadratic BSDEs")
    sub = p.add_subparsers(dest="command", required=True)
    for name, text in [("quantizer", "build an optimal Gaussian quantization grid"),
                       ("reference", "closed-form reference value by quadrature"),
                       ("solve", "run the scheme once"),
                       ("converge", "convergence study over --n-list"),
                       ("table1", "dimension-3 models with and without truncation"),
                       ("alpha-study", "error profiles over n for several alpha")]:
        sub.add_parser(name, parents=[common], help=text)
    return p


def resolve(args: argparse.Namespace) -> dict:
    """Defaults, then the config file, then explicit flags."""
    opts = dict(DEFAULTS)
    if args.config:
        try:
            cfg = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        unknown = set(cfg) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        opts.update(cfg)
    for k in DEFAULTS:
        v = getattr(args, k, None)
        if v is not None:
            opts[k] = v
    return opts


def _policy(o) -> TruncationPolicy:
    return TruncationPolicy(o["truncation"], o["alpha"], o["N"], o["R"])


def _cmd_quantizer(o):
    grid = gaussian_grid(o["points"], o["dim"])
    print(f"nodes {grid.size} (per axis {grid.per_dim_points}), distortion {grid.distortion:.12g}, "
          f"stationarity residual {stationarity_residual(grid.base.points):.3e}")
    if o["out"]:
        save_grid(grid.base if grid.dim == 1 else grid, o["out"])


def _cmd_reference(o):
    p = builtin(o["model"])
    spec = p.reference_spec(o["nodes"])
    v1, v2, gap = quadrature_self_check(spec)
    print(f"{p.name}: hermite {o['nodes']}/{2 * o['nodes']} nodes: {v1:.10f} / {v2:.10f}, gap {gap:.3e}")
    ref = reference_y0(spec)
    print(f"{p.name}: y0 = {ref.y0:.10f} ({ref.method}, gap {ref.gap:.3e}, "
          f"{'converged' if ref.converged else 'NOT converged'})")


def _cmd_solve(o):
    p = builtin(o["model"])
    delta = o["delta"] if o["delta"] is not None else p.lattice[0]
    kappa = o["kappa"] if o["kappa"] is not None else p.lattice[1]
    params = SchemeParams(o["n"], _policy(o), o["points"], delta, kappa, workers=o["workers"])
    res = solve(p, params)
    print(f"{p.name}: y0 = {res.y0:.12g}, z0 = {res.z0}, stability {res.diagnostics.get('stability', {}).get('status')}"
          f"{' (diverged)' if res.diverged else ''}")
    if o["out"]:
        Path(o["out"]).write_text(res.to_json())


def _study_config(o, **kw):
    out = o["out"]
    plot = str(Path(out).with_suffix(".svg")) if out else None
    trunc = tuple(t for t in str(o["truncation"]).split(",") if t)
    return harness.StudyConfig(o["model"], o["n_list"], alpha=o["alpha"], alpha_list=o["alpha_list"],
                               M=o["points"], delta=o["delta"], kappa=o["kappa"], truncation=trunc, N=o["N"],
                               R=o["R"], workers=o["workers"], csv_path=out, plot_path=plot,
                               timings=bool(o["timings"]), **kw)


def _cmd_converge(o):
    rows, rates = harness.run_convergence(_study_config(o))
    sys.stdout.write(harness.csv_text(rows))
    for mode, fit in rates.items():
        print(f"# {mode}: rate {fit.rate if fit.rate is None else f'{fit.rate:.4f}'} ({fit.flag}, {fit.points} points)")


def _cmd_table1(o):
    rows = harness.run_table1(n=o["n"], M=o["points"], alpha=o["alpha"], workers=o["workers"],
                              delta=o["delta"], kappa=o["kappa"])
    print(harness.format_table1(rows))
    if o["out"]:
        Path(o["out"]).write_text(harness.table1_csv(rows))


def _cmd_alpha_study(o):
    if o["alpha_list"] is None:
        o["alpha_list"] = [0.0, 0.125, 0.25, 0.375, 0.625]
    if o["model"] == DEFAULTS["model"]:
        o["model"] = "d1_alpha"
    profiles = harness.run_alpha_study(_study_config(o))
    for a, rows in profiles.items():
        s = harness.summarize_profile(rows)
        final = "diverged" if s.final_error is None else f"{s.final_error:.3e}"
        print(f"alpha={a:g}: final rel. error {final}, best {s.min_error:.3e}, any diverged {s.any_diverged}")


COMMANDS = {"quantizer": _cmd_quantizer, "reference": _cmd_reference, "solve": _cmd_solve,
            "converge": _cmd_converge, "table1": _cmd_table1, "alpha-study": _cmd_alpha_study}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        opts = resolve(args)
        COMMANDS[args.command](opts)
    except (ConfigError, ValueError, KeyError, OSError, GridError, SchemeError) as exc:
        print(f"qbsde: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
