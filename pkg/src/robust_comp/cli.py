"""Command line entry point: ``robust-comp run|sweep|validate``."""
from __future__ import annotations

import argparse
import logging
import sys
from typing import List, Optional

import yaml

from .config import ConfigError, ScenarioConfig, apply_overrides, load_config

log = logging.getLogger("robust_comp")


def _load(args) -> ScenarioConfig:
    cfg = ScenarioConfig()
    if args.config:
        with open(args.config) as fh:
            cfg = load_config(fh.read())
    cfg = apply_overrides(cfg, args.set or [])
    if getattr(args, "reps", None) is not None:
        cfg = cfg.replace(num_replications=args.reps)
    return cfg


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML scenario file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override one config field (repeatable)")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--reps", type=int, help="number of replications")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="robust-comp", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    _common(sub.add_parser("run", help="simulate one configuration"))
    sw = sub.add_parser("sweep", help="simulate one configuration per axis value")
    _common(sw)
    sw.add_argument("--axis", required=True, choices=["V", "q", "L", "policy"])
    sw.add_argument("--values", required=True,
                    help="comma separated values, e.g. 0.1,1,10")
    sub.add_parser("validate", help="check invariants on small instances")
    return p


def _print_summary(s) -> None:
    print(f"avg sum power: {s.avg_power_mw:.6g} mW ({s.avg_power_dbm:.2f} dBm)")
    print("Pr{Q >= threshold}: " + " ".join(f"{x:.3f}" for x in s.prob_q_exceed))
    print("outage rate: " + " ".join(f"{x:.3f}" for x in s.outage_rate))


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    from . import checks, sim

    if args.command == "validate":
        bad = 0
        for name, ok, detail in checks.run_checks():
            print(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}".rstrip())
            bad += not ok
        return 1 if bad else 0
    try:
        cfg = _load(args)
    except (ConfigError, OSError, yaml.YAMLError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.command == "run":
        s = sim.run_simulation(cfg, args.out)
        _print_summary(s)
        print(f"wrote {args.out}/slots.csv, summary.csv, resolved_config.yaml")
        return 0
    values = [yaml.safe_load(v) for v in args.values.split(",") if v.strip()]
    for point in sim.sweep(cfg, args.axis, values, args.out):
        if point.error:
            print(f"{args.axis}={point.value}: FAILED {point.error}")
        else:
            print(f"{args.axis}={point.value}: {point.summary.avg_power_dbm:.2f} dBm, "
                  f"max Pr{{Q>=th}} {point.summary.prob_q_exceed.max():.3f}")
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
