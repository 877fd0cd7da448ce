"""Command-line interface: system listing and stability scans.

Exit codes: 0 = stable verdict, 2 = unstable, 3 = inconclusive or error.
"""

import argparse
import json
import sys

from .errors import EvansKitError
from .registry import list_systems
from .report import (
    ScanConfig,
    config_from_mapping,
    emit_report,
    parse_config_file,
    run_scan,
)

EXIT_STABLE = 0
EXIT_UNSTABLE = 2
EXIT_INCONCLUSIVE = 3


def status_to_exit(status):
    return {"stable": EXIT_STABLE, "unstable": EXIT_UNSTABLE}.get(
        status, EXIT_INCONCLUSIVE)


def build_parser():
    ap = argparse.ArgumentParser(prog="evanskit",
                                 description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    sub.add_parser("list", help="list registered systems and their parameters")

    sc = sub.add_parser("scan", help="run a stability scan")
    sc.add_argument("--config", help="configuration file (nested key = value)")
    sc.add_argument("--system", help="system name from the registry")
    sc.add_argument("--eps", type=float, help="amplitude parameter")
    sc.add_argument("--xi2", type=float, help="transverse frequency (multid model)")
    sc.add_argument("--contour", help="contour geometry (half-annulus)")
    sc.add_argument("--rmin", type=float, help="inner contour radius")
    sc.add_argument("--rmax", type=float, help="outer contour radius")
    sc.add_argument("--points", type=int, help="initial contour samples")
    sc.add_argument("--domain-L", type=float, dest="domain_L",
                    help="profile half-length")
    sc.add_argument("--tol", type=float, help="ODE integration tolerance")
    sc.add_argument("--out", help="output directory")
    sc.add_argument("--jobs", type=int, help="parallel contour evaluations")
    sc.add_argument("--no-regimes", action="store_true",
                    help="skip the regime certificate pass")
    sc.add_argument("--no-figures", action="store_true",
                    help="skip figure rendering")
    return ap


def _config_from_args(args):
    cfg = config_from_mapping(parse_config_file(args.config)) if args.config \
        else ScanConfig()
    for attr in ("system", "eps", "xi2", "contour", "rmin", "rmax", "points",
                 "domain_L", "tol", "out", "jobs"):
        val = getattr(args, attr, None)
        if val is not None:
            setattr(cfg, attr, val)
    if args.no_regimes:
        cfg.with_regimes = False
    if args.no_figures:
        cfg.with_figures = False
    return cfg


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "list":
        print(json.dumps(list_systems(), indent=2, sort_keys=True))
        return EXIT_STABLE
    try:
        cfg = _config_from_args(args)
        report = run_scan(cfg)
        paths = emit_report(report, cfg.out, with_figures=cfg.with_figures)
    except EvansKitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INCONCLUSIVE
    status = report.verdict["status"]
    wtxt = ""
    if report.contours:
        wtxt = (f", winding {report.contours[0]['winding']}, "
                f"min|D| {report.contours[0]['min_abs_D']:.3g}")
    print(f"{cfg.system} eps={cfg.eps:g}: {status}{wtxt}")
    print(f"report: {paths['json']}")
    return status_to_exit(status)


if __name__ == "__main__":
    raise SystemExit(main())
