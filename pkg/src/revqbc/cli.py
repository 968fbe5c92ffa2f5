"""Command line entry point: ``revqbc <experiment> [options]``.

Exit status is 0 on success, 1 when a trial breaks an invariant and 2 for
an unusable configuration.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .experiments import EXPERIMENTS, ConfigError, ExperimentConfig, ExperimentFailure, run_experiment
from .report import render_report, write_report

EXIT_OK, EXIT_INVARIANT, EXIT_CONFIG = 0, 1, 2

_DEFAULTS = {"n": 8, "trials": 10_000, "seed": 0, "format": "json", "rounds": 1, "r_weight": 1, "workers": 1}
_EXPERIMENT_DEFAULTS = {"mlc": {"n": 3}, "nosig": {"n": 6, "trials": 1000}, "conceal": {"n": 6}}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--n", type=int, help="photon count (qubits per side for nosig)")
    common.add_argument("--trials", type=int)
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--out", help="report path; stdout when omitted")
    common.add_argument("--format", choices=("csv", "json"))
    common.add_argument("--config", help="JSON file whose keys mirror the flags")
    common.add_argument("--workers", type=int)
    common.add_argument("--no-timing", action="store_true",
                        help="write wall_time as 0 so reruns are byte-identical")

    parser = _Parser(prog="revqbc", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="experiment", required=True, parser_class=_Parser)
    for name in EXPERIMENTS:
        p = sub.add_parser(name, parents=[common])
        if name == "bind":
            p.add_argument("--rounds", type=int)
        if name == "conceal":
            p.add_argument("--r-weight", dest="r_weight", type=int)
    return parser


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    values = dict(_DEFAULTS)
    values.update(_EXPERIMENT_DEFAULTS.get(args.experiment, {}))
    if args.config:
        try:
            loaded = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
        values.update({k.replace("-", "_"): v for k, v in loaded.items()})
    for key in ("n", "trials", "seed", "out", "format", "workers", "rounds", "r_weight"):
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    try:
        return ExperimentConfig(
            experiment=args.experiment, n=int(values["n"]), trials=int(values["trials"]),
            rounds=int(values["rounds"]), r_weight=int(values["r_weight"]),
            master_seed=int(values["seed"]), output=values.get("out"), fmt=values["format"],
            workers=int(values["workers"]))
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = resolve_config(args)
    except ConfigError as exc:
        print(f"revqbc: bad config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        report = run_experiment(config)
    except ExperimentFailure as exc:
        print(f"revqbc: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    timing = not args.no_timing
    if config.output:
        write_report(report, config.output, config.fmt, include_timing=timing)
    else:
        sys.stdout.write(render_report(report, config.fmt, include_timing=timing))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
