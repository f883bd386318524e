"""Command-line entry point: generate, run, compare, sweep, verify.

Exit codes: 0 success, 1 runtime or I/O failure, 2 usage error, 3 failed
checks in ``verify``.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import PRESETS, SimConfig, load_config, save_config
from .scenario import generate_fleet, load_prices, prices_for, read_fleet, write_fleet, write_prices

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, EXIT_CHECKS = 0, 1, 2, 3
RUN_METHODS = ("online", "offline", "greedy")


class UsageError(Exception):
    pass


def _on_off(text: str) -> bool:
    if text not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected 'on' or 'off'")
    return text == "on"


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers: {exc}") from None


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers: {exc}") from None


def _scalar(text: str):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    if text.lower() in ("true", "false"):
        return text.lower() == "true"
    return text


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="evflex", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def scenario_args(p):
        src = p.add_mutually_exclusive_group()
        src.add_argument("--config", type=Path, help="TOML or JSON config file")
        src.add_argument("--preset", choices=sorted(PRESETS), help="built-in scenario preset")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config field, e.g. algorithm.V=50 (repeatable)")

    p = sub.add_parser("generate", help="write a fleet, price series and config")
    scenario_args(p)
    p.add_argument("--out", type=Path, required=True, help="output directory")

    p = sub.add_parser("run", help="run one method and write a result bundle")
    scenario_args(p)
    p.add_argument("--method", choices=RUN_METHODS, default="online")
    p.add_argument("--feedback", type=_on_off, default=True, metavar="on|off")
    p.add_argument("--fleet", type=Path, help="fleet CSV from 'generate' (default: generate from seed)")
    p.add_argument("--prices", type=Path, help="price CSV (default: from config)")
    p.add_argument("--out", type=Path, required=True, help="bundle directory")

    p = sub.add_parser("compare", help="total value of several methods on the same scenario")
    scenario_args(p)
    p.add_argument("--methods", default="greedy,offline,online",
                   help="comma list from greedy, offline, online, online-nofeedback")
    p.add_argument("--seeds", type=_int_list, help="comma list of seeds (default: config seed)")
    p.add_argument("--out", type=Path, help="CSV path (default: print a table)")

    p = sub.add_parser("sweep", help="vary one parameter, one online run per value")
    scenario_args(p)
    p.add_argument("--param", required=True, choices=("V", "alpha", "eta-mult", "groups", "fleet-size"))
    p.add_argument("--values", type=_float_list, required=True, help="comma list of values")
    p.add_argument("--feedback", type=_on_off, default=True, metavar="on|off")
    p.add_argument("--workers", type=int, default=1, help="parallel processes")
    p.add_argument("--out", type=Path, required=True, help="CSV path")

    p = sub.add_parser("verify", help="re-run the checks on a stored bundle")
    p.add_argument("bundle", type=Path, help="bundle directory written by 'run'")
    return parser


def parse(argv=None) -> argparse.Namespace:
    return build_parser().parse_args(argv)


def _scenario(args) -> SimConfig:
    if args.config is not None:
        cfg = load_config(args.config)
    else:
        cfg = PRESETS[args.preset or "commercial"]()
    changes = {}
    for item in args.overrides:
        if "=" not in item:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        changes[key.strip()] = _scalar(value.strip())
    if args.seed is not None:
        changes["seed"] = args.seed
    try:
        return cfg.replace(**changes) if changes else cfg
    except (TypeError, KeyError, AttributeError, ValueError) as exc:
        raise UsageError(f"bad override: {exc}") from None


def cmd_generate(args) -> int:
    cfg = _scenario(args)
    args.out.mkdir(parents=True, exist_ok=True)
    save_config(cfg, args.out / "config.toml")
    write_fleet(args.out / "fleet.csv", generate_fleet(cfg))
    write_prices(args.out / "prices.csv", prices_for(cfg))
    print(f"wrote config.toml, fleet.csv, prices.csv to {args.out}")
    return EXIT_OK


def cmd_run(args) -> int:
    from .bundle import write_bundle
    from .engine import run_greedy, run_offline, run_online

    cfg = _scenario(args)
    fleet = read_fleet(args.fleet) if args.fleet else generate_fleet(cfg)
    prices = load_prices(args.prices, cfg.horizon_slots, cfg.slot_hours) if args.prices else prices_for(cfg)
    if args.method == "online":
        report = run_online(cfg, fleet, prices, feedback=args.feedback)
    elif args.method == "offline":
        report = run_offline(cfg, fleet, prices)
    else:
        report = run_greedy(cfg, fleet, prices)
    metrics = write_bundle(report, fleet, cfg, args.out)
    status = "all checks passed" if metrics["checks_passed"] else "some checks failed"
    print(f"{args.method}: total value {report.total:.4f} USD; {status}; bundle in {args.out}")
    return EXIT_OK


def cmd_compare(args) -> int:
    from .experiments import compare, write_rows

    cfg = _scenario(args)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    seeds = args.seeds or [cfg.seed]
    try:
        rows = [r for s in seeds for r in compare(cfg.replace(seed=s), methods)]
    except ValueError as exc:
        if "unknown method" in str(exc):
            raise UsageError(str(exc)) from None
        raise
    if args.out:
        write_rows(rows, args.out, drop=("runtime_s",))
        print(f"wrote {len(rows)} rows to {args.out}")
    else:
        print(f"{'seed':>4}  {'method':<18} {'total_usd':>10}  checks")
        for r in rows:
            print(f"{r['seed']:>4}  {r['method']:<18} {r['total_usd']:>10.3f}  {'ok' if r['checks_passed'] else 'FAIL'}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    from .experiments import sweep, write_rows

    cfg = _scenario(args)
    if args.workers < 1:
        raise UsageError("--workers must be >= 1")
    rows = sweep(cfg, args.param, args.values, workers=args.workers, feedback=args.feedback)
    drop = () if args.param == "fleet-size" else ("runtime_s",)
    write_rows(rows, args.out, drop=drop)
    print(f"wrote {len(rows)} rows to {args.out}")
    return EXIT_OK


def cmd_verify(args) -> int:
    from .bundle import read_bundle
    from .engine import validate_run

    report, fleet, cfg, metrics = read_bundle(args.bundle)
    summary = validate_run(report, fleet, cfg, metrics.get("offline_total_usd"))
    for name, res in summary.results.items():
        mark = {True: "pass", False: "FAIL", None: "n/a "}[res.passed]
        print(f"{mark}  {name}: {res.detail}")
    stored = metrics.get("checks", {})
    drift = [k for k, r in summary.to_dict().items() if k in stored and stored[k]["passed"] != r["passed"]]
    if drift:
        print(f"check results differ from the stored metrics: {drift}")
    return EXIT_OK if summary.passed and not drift else EXIT_CHECKS


COMMANDS = {"generate": cmd_generate, "run": cmd_run, "compare": cmd_compare,
            "sweep": cmd_sweep, "verify": cmd_verify}


def execute(args: argparse.Namespace) -> int:
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"evflex: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError, RuntimeError, KeyError, json.JSONDecodeError) as exc:
        print(f"evflex: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def main(argv=None) -> int:
    try:
        args = parse(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors, 0 on --help
        return int(exc.code or 0)
    return execute(args)


if __name__ == "__main__":
    sys.exit(main())
