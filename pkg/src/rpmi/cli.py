"""Command line entry point (``rpmi``).

Exit codes: 0 success, 2 invalid config, 3 infeasible sequence selection,
4 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import yaml

from .errors import (
    ConfigError,
    InfeasibleSelectionError,
    InvalidArgumentError,
    NonPrimitivePolynomialError,
    NumericalError,
    OracleMismatchError,
    OutOfRangeError,
    SingularOperatingPointError,
)
from .experiments import (
    Report,
    Scenario,
    paper_scenario,
    run_fringe_sweep,
    run_jitter_study,
    run_paper_example,
    run_sequences,
    run_shot_noise_scaling,
)
from .io import matrix_to_csv, table_to_csv, write_text

log = logging.getLogger("rpmi")

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_NUMERICAL = 0, 2, 3, 4


def load_config(path) -> dict:
    text = Path(path).read_text()
    try:
        data = json.loads(text) if str(path).endswith(".json") else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return data


def build_scenario(args) -> Scenario:
    data = load_config(args.config) if args.config else {}
    if args.seed is not None:
        data["seed"] = args.seed
    if args.trials is not None:
        data["trials"] = args.trials
    if args.theta_grid is not None:
        data.setdefault("sweep", {})["theta_grid"] = args.theta_grid
    if args.command == "jitter" and not args.config:
        data = {**paper_scenario().to_dict(), **data}
    if args.command == "montecarlo" and not args.config:
        data.setdefault("noise", {"shot_noise": True})
    return Scenario.from_dict(data)


def _emit(args, name: str, text: str, ext: str) -> None:
    if args.out:
        path = write_text(Path(args.out) / f"{name}.{ext}", text)
        print(f"wrote {path}")
    else:
        sys.stdout.write(text)


def _emit_report(args, report: Report) -> None:
    if args.format == "json":
        _emit(args, report.name, report.to_json() + "\n", "json")
        return
    if report.name == "fringe":
        cols = ["theta", "s_n", "expected", "residual"]
        for n in sorted({r["N"] for r in report.records}):
            rows = ([r[c] for c in cols] for r in report.records if r["N"] == n)
            _emit(args, f"fringe_N{n}", table_to_csv(cols, rows), "csv")
    else:
        _emit(args, report.name, report.to_csv(), "csv")
    if args.out:
        write_text(Path(args.out) / f"{report.name}_report.json", report.to_json() + "\n")


def _run(args) -> int:
    if args.command == "paper-example":
        report = run_paper_example()
        if args.seed is not None:
            report.provenance["seed"] = args.seed
        _emit_report(args, report)
        return EXIT_OK
    scenario = build_scenario(args)
    if args.command == "sequences":
        phases, doc = run_sequences(scenario)
        if args.format == "json":
            _emit(args, "sequences", json.dumps(doc, indent=1) + "\n", "json")
        else:
            _emit(args, "sequences", matrix_to_csv(phases.phases), "csv")
        return EXIT_OK
    runner = {
        "fringe": run_fringe_sweep,
        "montecarlo": run_shot_noise_scaling,
        "jitter": run_jitter_study,
    }[args.command]
    _emit_report(args, runner(scenario))
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML or JSON scenario file")
    common.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    common.add_argument("--out", help="output directory (default: stdout)")
    common.add_argument("--format", choices=("csv", "json"), default="json")
    common.add_argument("--trials", type=int, help="Monte Carlo trials per grid point")
    common.add_argument("--theta-grid", help="start:stop:step, 'pi' allowed (e.g. 0:2pi:pi/256)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="rpmi", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("sequences", parents=[common], help="dump the designed phase set")
    sub.add_parser("fringe", parents=[common], help="noiseless fringe sweep over theta")
    sub.add_parser("montecarlo", parents=[common], help="shot-noise scaling study")
    sub.add_parser("jitter", parents=[common], help="modulator phase-jitter study")
    sub.add_parser("paper-example", parents=[common], help="10-slot, order-8 worked example")
    return p


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return _run(args)
    except (ConfigError, InvalidArgumentError, NonPrimitivePolynomialError, FileNotFoundError) as exc:
        log.error("invalid config: %s", exc)
        return EXIT_CONFIG
    except InfeasibleSelectionError as exc:
        log.error("%s", exc)
        return EXIT_INFEASIBLE
    except (NumericalError, OracleMismatchError, OutOfRangeError, SingularOperatingPointError) as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
