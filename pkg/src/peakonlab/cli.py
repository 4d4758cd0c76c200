"""Command-line front end.

Subcommands: simulate, verify, sweep, psi-check.  Config files are plain
`key = value` text (comments with #); flags override config, config overrides
defaults.  The default output directory comes from PEAKONLAB_OUT.  Exit codes:
0 success / all criteria pass, 1 criterion or profile failure, 2 scenario or
config error, 3 runtime failure (collision, lost convergence).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace

import numpy as np

from . import __version__
from .core import Scenario
from .errors import (
    BadScale,
    EmptyWindow,
    IntegrationError,
    InvalidScenario,
    NoConvergence,
    NotSettled,
    OrderingLost,
    PeakonLabError,
    SignOrderViolation,
)
from .functionals import make_weight_profile, validate_weight_profile
from .harness import (
    FROZEN_CONSTANTS,
    conservation_result,
    read_report,
    run_experiment,
    sweep,
    stability_bound_unit,
    verify_drift,
    verify_monotonicity,
    verify_stability_bound,
    write_manifest,
    write_report_csv,
    write_sweep_csv,
)

_SCENARIO_KEYS = {
    "velocities": lambda v: tuple(float(x) for x in _split(v)),
    "spacing": float,
    "epsilon": float,
    "t_end": float,
    "seed": int,
    "perturbation": str,
    "lambdas": lambda v: tuple(float(x) for x in _split(v)),
    "K": float,
    "grid_h": float,
    "grid_pad": float,
    "cadence": int,
    "rel_tol": float,
    "abs_tol": float,
    "z0": lambda v: tuple(float(x) for x in _split(v)),
    "max_retries": int,
}
_EXTRA_KEYS = {
    "out_dir": str,
    "sweep_eps": lambda v: tuple(float(x) for x in _split(v)),
    "sweep_L": lambda v: tuple(float(x) for x in _split(v)),
    "jobs": int,
    "name": str,
}
_FIELD_OF = {
    "spacing": "L",
    "perturbation": "perturbation_mode",
    "lambdas": "lambda_list",
}


def _split(v: str):
    return [s for s in v.replace(",", " ").split() if s]


def parse_config(path: str) -> dict:
    """Strict key=value parser; unknown keys are rejected."""
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise InvalidScenario(f"{path}:{lineno}: expected key = value")
            key, val = (s.strip() for s in line.split("=", 1))
            if key in _SCENARIO_KEYS:
                conv = _SCENARIO_KEYS[key]
            elif key in _EXTRA_KEYS:
                conv = _EXTRA_KEYS[key]
            else:
                raise InvalidScenario(f"{path}:{lineno}: unknown key {key!r}")
            if key in out:
                raise InvalidScenario(f"{path}:{lineno}: duplicate key {key!r}")
            try:
                out[key] = conv(val)
            except ValueError as err:
                raise InvalidScenario(f"{path}:{lineno}: bad value for {key}: {err}")
    return out


def scenario_from_config(cfg: dict, overrides: dict) -> Scenario:
    kwargs = {}
    for key, val in cfg.items():
        if key in _SCENARIO_KEYS:
            kwargs[_FIELD_OF.get(key, key)] = val
    for key, val in overrides.items():
        if val is not None:
            kwargs[key] = val
    if "velocities" not in kwargs:
        raise InvalidScenario("config must set `velocities`")
    if "L" not in kwargs:
        raise InvalidScenario("config must set `spacing`")
    return Scenario(**kwargs)


def _out_dir(cfg: dict, flag) -> str:
    out = flag or cfg.get("out_dir") or os.environ.get("PEAKONLAB_OUT") or "."
    os.makedirs(out, exist_ok=True)
    return out


def _svg_line_chart(path, xs, series, title, labels):
    """Small dependency-free SVG line chart (scripts/CI consumption only)."""
    width, height, m = 720, 360, 45
    xs = np.asarray(xs, float)
    ally = np.concatenate([np.asarray(y, float) for y in series])
    ally = ally[np.isfinite(ally)]
    y0, y1 = (float(ally.min()), float(ally.max())) if len(ally) else (0.0, 1.0)
    if y1 - y0 < 1e-300:
        y1 = y0 + 1.0
    sx = lambda x: m + (x - xs[0]) / max(xs[-1] - xs[0], 1e-300) * (width - 2 * m)
    sy = lambda y: height - m - (y - y0) / (y1 - y0) * (height - 2 * m)
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width/2}" y="18" text-anchor="middle" font-size="13">{title}</text>',
        f'<line x1="{m}" y1="{height-m}" x2="{width-m}" y2="{height-m}" stroke="black"/>',
        f'<line x1="{m}" y1="{m}" x2="{m}" y2="{height-m}" stroke="black"/>',
        f'<text x="{m}" y="{height-m+16}" font-size="10">{xs[0]:.3g}</text>',
        f'<text x="{width-m}" y="{height-m+16}" text-anchor="end" font-size="10">{xs[-1]:.3g}</text>',
        f'<text x="{m-4}" y="{height-m}" text-anchor="end" font-size="10">{y0:.3g}</text>',
        f'<text x="{m-4}" y="{m+4}" text-anchor="end" font-size="10">{y1:.3g}</text>',
    ]
    for ci, (y, lab) in enumerate(zip(series, labels)):
        y = np.asarray(y, float)
        pts = " ".join(
            f"{sx(x):.2f},{sy(v):.2f}" for x, v in zip(xs, y) if np.isfinite(v)
        )
        color = colors[ci % len(colors)]
        parts.append(
            f'<polyline fill="none" stroke="{color}" stroke-width="1.3" points="{pts}"/>'
        )
        parts.append(
            f'<text x="{width-m}" y="{m+14*ci+12}" text-anchor="end" '
            f'font-size="11" fill="{color}">{lab}</text>'
        )
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts))


def cmd_simulate(args) -> int:
    try:
        cfg = parse_config(args.config)
        overrides = {"seed": args.seed, "t_end": args.t_end}
        s = scenario_from_config(cfg, overrides)
    except (InvalidScenario, OSError) as err:
        print(f"scenario error: {err}", file=sys.stderr)
        return 2
    out = _out_dir(cfg, args.out)
    name = cfg.get("name", "experiment")
    try:
        report = run_experiment(s)
    except (InvalidScenario, SignOrderViolation, BadScale) as err:
        print(f"scenario error: {err}", file=sys.stderr)
        return 2
    except (IntegrationError, NoConvergence, NotSettled, OrderingLost,
            EmptyWindow) as err:
        t = getattr(err, "t", None)
        at = f" at t={t:.6g}" if t is not None else ""
        print(f"runtime error{at}: {type(err).__name__}: {err}", file=sys.stderr)
        return 3
    csv_path = os.path.join(out, f"{name}.csv")
    write_report_csv(report, csv_path)
    write_manifest(report, os.path.join(out, f"{name}.manifest.json"))
    if args.plots:
        _svg_line_chart(
            os.path.join(out, f"{name}_dist.svg"),
            report.times, [report.dist_h1], "H1 distance to the fitted train",
            ["dist_h1"],
        )
        deltas = report.monotonicity_deltas()
        series = [deltas[:, j, 0] for j in range(deltas.shape[1])]
        labels = [f"I_j{report.k+1+j} (lam=0)" for j in range(deltas.shape[1])]
        _svg_line_chart(
            os.path.join(out, f"{name}_monotonicity.svg"),
            report.times, series, "Weighted-functional deltas", labels,
        )
    print(f"wrote {csv_path}")
    for key, val in sorted(report.flags.items()):
        print(f"  flag {key}: {'pass' if val else 'FAIL'}")
    return 0


def cmd_verify(args) -> int:
    try:
        report = read_report(args.report)
    except (OSError, KeyError, ValueError) as err:
        print(f"cannot read report: {err}", file=sys.stderr)
        return 2
    wanted = _split(args.criteria) if args.criteria else [
        "conservation", "monotonicity", "stability", "drift"
    ]
    ok = True
    for crit in wanted:
        if crit == "conservation":
            res = conservation_result(report)
            passed = res["e_ok"] and res["f_ok"]
            print(
                f"conservation: {'pass' if passed else 'FAIL'} "
                f"(E drift {res['e_drift']:.3e} vs {res['e_bound']:.3e}, "
                f"F drift {res['f_drift']:.3e} vs {res['f_bound']:.3e})"
            )
        elif crit == "monotonicity":
            res = verify_monotonicity(report)
            passed = res["ok"]
            print(
                f"monotonicity: {'pass' if passed else 'FAIL'} "
                f"(worst {float(np.max(res['worst'])):.3e}, bound {res['bound']:.3e})"
            )
        elif crit == "stability":
            res = verify_stability_bound(report)
            passed = res["ok"]
            print(
                f"stability: {'pass' if passed else 'FAIL'} "
                f"(sup {res['sup_dist']:.3e}, bound {res['bound']:.3e}, "
                f"margin {res['margin']:.3e})"
            )
        elif crit == "drift":
            res = verify_drift(report)
            passed = res["ok"]
            print(
                f"drift: {'pass' if passed else 'FAIL'} "
                f"(max dev {res['max_dev']:.3e}, bound {res['bound']:.3e})"
            )
        else:
            print(f"unknown criterion {crit!r}", file=sys.stderr)
            return 2
        ok = ok and passed
    return 0 if ok else 1


def cmd_sweep(args) -> int:
    try:
        cfg = parse_config(args.config)
        s = scenario_from_config(cfg, {"seed": args.seed, "t_end": args.t_end})
    except (InvalidScenario, OSError) as err:
        print(f"scenario error: {err}", file=sys.stderr)
        return 2
    eps_list = cfg.get("sweep_eps")
    L_list = cfg.get("sweep_L")
    if not eps_list or not L_list:
        print("sweep config must set sweep_eps and sweep_L", file=sys.stderr)
        return 2
    jobs = args.jobs or cfg.get("jobs", 1)
    out = _out_dir(cfg, args.out)
    result = sweep(s, eps_list, L_list, jobs=jobs)
    path = os.path.join(out, cfg.get("name", "sweep") + "_summary.csv")
    write_sweep_csv(result, path)
    with open(os.path.join(out, cfg.get("name", "sweep") + "_fit.json"), "w") as fh:
        json.dump(
            {"fitted_A": result.fitted_A, "fitted_C_drift": result.fitted_C_drift},
            fh, indent=2,
        )
    failures = [c for c in result.cells if c.error]
    for c in failures:
        print(f"cell eps={c.epsilon} L={c.L} failed: {c.error}", file=sys.stderr)
    print(f"wrote {path}; fitted A = {result.fitted_A:.6g}")
    return 0 if not failures else 3


def cmd_psi_check(args) -> int:
    profile = make_weight_profile(
        invert_bridge_slope=args.test_invert_bridge, validate=False
    )
    checks = validate_weight_profile(profile)
    ok = True
    for c in checks:
        status = "pass" if c.passed else "FAIL"
        print(f"{c.name}: {status} (value {c.value:.6g}, bound {c.bound:.6g}) - {c.description}")
        ok = ok and c.passed
    ratio = next(c for c in checks if c.name == "third_derivative_ratio")
    print(
        f"max |Psi'''|/|Psi'| on [-1,1] = {ratio.value:.6g} "
        f"(achievable optimum; the classical ratio 10 is infeasible for these tails)"
    )
    return 0 if ok else 1


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="peakonlab",
        description="Numerical experiments on ordered antipeakon-peakon trains.",
    )
    ap.add_argument("--version", action="version", version=f"peakonlab {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run one experiment, write CSV report")
    sim.add_argument("--config", required=True)
    sim.add_argument("--out", help="output directory (default $PEAKONLAB_OUT or .)")
    sim.add_argument("--seed", type=int)
    sim.add_argument("--t-end", dest="t_end", type=float)
    sim.add_argument("--plots", action="store_true", help="emit SVG line charts")
    sim.set_defaults(fn=cmd_simulate)

    ver = sub.add_parser("verify", help="recompute pass/fail flags from a report")
    ver.add_argument("--report", required=True, help="path to the report CSV")
    ver.add_argument("--criteria", help="comma list: conservation,monotonicity,stability,drift")
    ver.set_defaults(fn=cmd_verify)

    sw = sub.add_parser("sweep", help="run an (epsilon, L) sweep and fit constants")
    sw.add_argument("--config", required=True)
    sw.add_argument("--out")
    sw.add_argument("--seed", type=int)
    sw.add_argument("--t-end", dest="t_end", type=float)
    sw.add_argument("--jobs", type=int)
    sw.set_defaults(fn=cmd_sweep)

    pc = sub.add_parser("psi-check", help="validate the weight profile constraints")
    pc.add_argument("--test-invert-bridge", action="store_true",
                    help=argparse.SUPPRESS)  # test hook: flips the bridge slope
    pc.set_defaults(fn=cmd_psi_check)

    args = ap.parse_args(argv)
    try:
        return args.fn(args)
    except PeakonLabError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
