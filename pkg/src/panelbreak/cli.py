"""Command-line surface.

Verbs: ``detect`` (test, then date, then interval, then subsample
recursion), ``test``, ``estimate``, ``ci``, ``simulate`` (Monte Carlo
experiment from a key=value config file) and ``tables`` (critical-value
cache regeneration).

Exit codes: 0 success (including "no break"), 1 usage or parse error,
2 statistical failure (rank or singularity), 3 internal error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from importlib.metadata import PackageNotFoundError, version

import numpy as np

from . import limits
from .dgp import DgpConfig, run_experiment
from .estimator import estimate_breakpoint, fit_break
from .exceptions import InputError, PanelBreakError, StatisticalError
from .io import load_panel, read_keyvalue_config
from .panel import BreakSpec, PanelData
from .wald import HacConfig, Kernel, sequential_breaks, sup_wald

SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_STATISTICAL = 2
EXIT_INTERNAL = 3


def _package_version() -> str:
    try:
        return version("panelbreak")
    except PackageNotFoundError:
        return "unknown"


class _Parser(argparse.ArgumentParser):
    # argparse exits with code 2 on usage errors; the contract wants 1.
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


class UsageError(Exception):
    pass


def _add_data_args(p):
    p.add_argument("--input", required=True, help="long-format panel CSV")
    p.add_argument("--common-input", help="optional time,d... CSV of known common regressors")
    p.add_argument("--y", required=True, help="outcome column name")
    p.add_argument("--x", required=True, help="comma-separated regressor column names")
    p.add_argument("--break-x", required=True, help="comma-separated breaking regressor names")
    p.add_argument("--no-intercept", action="store_true", help="drop the default intercept column of d")


def _add_common_args(p):
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--trim", type=float, default=0.15)
    p.add_argument("--kernel", choices=["bartlett", "uniform"], default="bartlett")
    p.add_argument("--bandwidth", default="auto", help="integer lag bandwidth, or 'auto' for floor(T^(1/3))")
    p.add_argument("--max-breaks", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write the report to this path (default stdout)")
    p.add_argument("--format", choices=["json", "text"], default="json")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="panelbreak", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in [
        ("detect", "test for a break; if found, date it, build the interval, recurse"),
        ("test", "sup-Wald test only"),
        ("estimate", "SSR profile and break-date estimate only"),
        ("ci", "break-date estimate with confidence interval and coefficients"),
    ]:
        p = sub.add_parser(name, help=helptext)
        _add_data_args(p)
        _add_common_args(p)
    p = sub.add_parser("simulate", help="Monte Carlo experiment from a config file")
    p.add_argument("--config", required=True, help="key = value experiment config file")
    p.add_argument("--out")
    p.add_argument("--format", choices=["json", "text"], default="json")
    p = sub.add_parser("tables", help="regenerate the critical-value cache")
    p.add_argument("--orders", default="1,2,3,4,5,6", help="comma-separated Bessel orders r")
    p.add_argument("--trims", default="0.05,0.10,0.15,0.20")
    p.add_argument("--alphas", default="0.01,0.05,0.10")
    p.add_argument("--n-paths", type=int, default=200_000)
    p.add_argument("--seed", type=int, default=limits.SimConfig().seed)
    p.add_argument("--out", help="cache file to write (default: the packaged cache)")
    return parser


def _parse_names(arg: str):
    names = [n.strip() for n in arg.split(",") if n.strip()]
    if not names:
        raise InputError("expected a non-empty comma-separated name list")
    return names


def _build_inputs(args):
    x_names = _parse_names(args.x)
    break_names = _parse_names(args.break_x)
    missing = [n for n in break_names if n not in x_names]
    if missing:
        raise InputError(f"breaking regressors {missing} are not in --x")
    panel = load_panel(
        args.input,
        y=args.y,
        x_names=x_names,
        common_path=args.common_input,
        intercept=not args.no_intercept,
    )
    spec = BreakSpec.from_indices(
        len(x_names), [x_names.index(n) for n in break_names], trim_fraction=args.trim
    )
    if args.bandwidth == "auto":
        bandwidth = None
    else:
        try:
            bandwidth = int(args.bandwidth)
        except ValueError:
            raise InputError("--bandwidth must be an integer or 'auto'") from None
    kernel = Kernel.BARTLETT if args.kernel == "bartlett" else Kernel.TRUNCATED_UNIFORM
    hac = HacConfig(kernel=kernel, bandwidth=bandwidth)
    return panel, spec, hac, x_names, break_names


def _date(panel: PanelData, b: int) -> dict:
    return {"index": b, "label": panel.time_labels[b - 1]}


def _wald_payload(panel, result) -> dict:
    return {
        "candidate_dates": list(result.candidate_dates),
        "wald_values": list(result.wald_values),
        "sw": result.sw,
        "sw_critical": result.sw_critical,
        "chi2_critical": result.chi2_critical,
        "reject": result.reject_sw,
        "argmax_date": _date(panel, result.argmax_date),
        "trim_fraction": result.trim_fraction,
        "r": result.r,
        "alpha": result.alpha,
        "excluded_dates": list(result.excluded_dates),
    }


def _fit_payload(panel, fit, x_names, break_names) -> dict:
    se = np.sqrt(np.diag(fit.theta_cov))
    return {
        "b_hat": _date(panel, fit.b_hat),
        "ci": {
            "lower": _date(panel, fit.ci_lower),
            "upper": _date(panel, fit.ci_upper),
            "alpha": fit.alpha,
            "clamped": fit.ci_clamped,
        },
        "delta_hat": dict(zip(break_names, fit.delta_hat.tolist())),
        "beta_hat": dict(zip(x_names, fit.theta_hat[: len(x_names)].tolist())),
        "theta_se": dict(
            zip(list(x_names) + [f"break:{n}" for n in break_names], se.tolist())
        ),
        "ssr_profile": {
            "dates": list(fit.ssr_profile.candidate_dates),
            "ssr": list(fit.ssr_profile.ssr_values),
        },
    }


def _report(args, stages, warnings) -> dict:
    echo = dict(sorted(vars(args).items()))
    return {
        "schema_version": SCHEMA_VERSION,
        "package_version": _package_version(),
        "config": echo,
        "stages": stages,
        "warnings": warnings,
    }


def _emit(args, report: dict) -> None:
    if args.format == "json":
        text = json.dumps(report, indent=1, sort_keys=True) + "\n"
    else:
        text = _render_text(report)
    if args.out:
        directory = os.path.dirname(args.out) or "."
        fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
        with os.fdopen(fd, "w") as handle:
            handle.write(text)
        os.replace(tmp, args.out)
    else:
        sys.stdout.write(text)


def _render_text(report: dict, indent: int = 0) -> str:
    lines = []

    def walk(node, depth):
        pad = "  " * depth
        if isinstance(node, dict):
            for key in sorted(node):
                value = node[key]
                if isinstance(value, (dict, list)):
                    lines.append(f"{pad}{key}:")
                    walk(value, depth + 1)
                else:
                    lines.append(f"{pad}{key}: {value}")
        elif isinstance(node, list):
            for value in node:
                if isinstance(value, (dict, list)):
                    walk(value, depth)
                else:
                    lines.append(f"{pad}- {value}")

    walk(report, indent)
    return "\n".join(lines) + "\n"


def _cmd_detect(args) -> int:
    panel, spec, hac, x_names, break_names = _build_inputs(args)
    stages: dict = {}
    warnings: list = []
    wald = sup_wald(panel, spec, hac, args.alpha)
    stages["sup_wald"] = _wald_payload(panel, wald)
    if wald.excluded_dates:
        warnings.append(
            {"kind": "excluded_candidates", "dates": list(wald.excluded_dates)}
        )
    if wald.reject_sw:
        breaks = sequential_breaks(
            panel, spec, hac, args.alpha, max_breaks=args.max_breaks
        )
        stages["breaks"] = [
            {
                "window": list(br.window),
                "fit": _fit_payload(panel, br.fit, x_names, break_names),
                "sw": br.wald.sw,
                "sw_critical": br.wald.sw_critical,
            }
            for br in breaks
        ]
        for br in breaks:
            if br.fit.ci_clamped:
                warnings.append({"kind": "ci_clamped", "b_hat": br.fit.b_hat})
    else:
        stages["decision"] = "no break detected"
    _emit(args, _report(args, stages, warnings))
    return EXIT_OK


def _cmd_test(args) -> int:
    panel, spec, hac, _, _ = _build_inputs(args)
    wald = sup_wald(panel, spec, hac, args.alpha)
    warnings = []
    if wald.excluded_dates:
        warnings.append(
            {"kind": "excluded_candidates", "dates": list(wald.excluded_dates)}
        )
    _emit(args, _report(args, {"sup_wald": _wald_payload(panel, wald)}, warnings))
    return EXIT_OK


def _cmd_estimate(args) -> int:
    panel, spec, _, _, _ = _build_inputs(args)
    profile = estimate_breakpoint(panel, spec)
    stages = {
        "estimate": {
            "b_hat": _date(panel, profile.b_hat),
            "ssr_profile": {
                "dates": list(profile.candidate_dates),
                "ssr": list(profile.ssr_values),
            },
        }
    }
    _emit(args, _report(args, stages, []))
    return EXIT_OK


def _cmd_ci(args) -> int:
    panel, spec, _, x_names, break_names = _build_inputs(args)
    fit = fit_break(panel, spec, alpha=args.alpha)
    warnings = []
    if fit.ci_clamped:
        warnings.append({"kind": "ci_clamped", "b_hat": fit.b_hat})
    _emit(
        args,
        _report(args, {"fit": _fit_payload(panel, fit, x_names, break_names)}, warnings),
    )
    return EXIT_OK


_SIM_INT_KEYS = {"n_units", "n_periods", "k", "r", "m", "n_known", "b0", "seed", "reps"}
_SIM_FLOAT_KEYS = {
    "factor_rho",
    "loading_mean",
    "loading_scale",
    "v_scale",
    "alpha",
}
_SIM_TUPLE_KEYS = {"beta", "delta", "eps_variance_range"}


def _cmd_simulate(args) -> int:
    raw = read_keyvalue_config(args.config)
    dgp_kwargs: dict = {}
    reps = 100
    alpha = 0.05
    pipeline = "FULL"
    for key, value in raw.items():
        if key == "pipeline":
            pipeline = value
        elif key == "reps":
            reps = int(value)
        elif key == "alpha":
            alpha = float(value)
        elif key in _SIM_INT_KEYS:
            dgp_kwargs[key] = None if value.lower() == "none" else int(value)
        elif key in _SIM_FLOAT_KEYS:
            dgp_kwargs[key] = float(value)
        elif key in _SIM_TUPLE_KEYS:
            dgp_kwargs[key] = tuple(float(v) for v in value.split(","))
        else:
            raise InputError(f"unknown simulate config key {key!r}")
    config = DgpConfig(**dgp_kwargs)
    report = run_experiment(config, pipeline=pipeline, reps=reps, alpha=alpha)
    if args.format == "json":
        text = report.to_json() + "\n"
    else:
        text = report.to_text() + "\n"
    if args.out:
        with open(args.out, "w") as handle:
            handle.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _cmd_tables(args) -> int:
    orders = [int(v) for v in _parse_names(args.orders)]
    if any(r < 1 for r in orders):
        raise InputError("Bessel orders must be >= 1")
    trims = [float(v) for v in _parse_names(args.trims)]
    alphas = [float(v) for v in _parse_names(args.alphas)]
    sim = limits.SimConfig(n_paths=args.n_paths, seed=args.seed)
    payload = limits.generate_default_tables(
        sim, orders=orders, trims=trims, alphas=alphas
    )
    out = args.out or os.fspath(limits._packaged_cache_path())
    limits.write_cache(out, payload)
    sys.stdout.write(f"wrote {len(payload['tables'])} tables to {out}\n")
    for table in payload["tables"]:
        sys.stdout.write(
            f"{table['law']} params={tuple(table['params'])} "
            f"quantiles={table['quantiles']}\n"
        )
    return EXIT_OK


_COMMANDS = {
    "detect": _cmd_detect,
    "test": _cmd_test,
    "estimate": _cmd_estimate,
    "ci": _cmd_ci,
    "simulate": _cmd_simulate,
    "tables": _cmd_tables,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except UsageError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (InputError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except StatisticalError as err:
        print(f"statistical failure: {err}", file=sys.stderr)
        return EXIT_STATISTICAL
    except PanelBreakError as err:
        print(f"internal error: {err}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
