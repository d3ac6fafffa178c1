#!/usr/bin/env python
# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.

"""
socialcue – detect social interactions of a smart glasses wearer from eight
social cues, and benchmark the detection.
"""

import argparse
import logging
import sys
import textwrap
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path
from typing import List, Tuple

from . import harness
from .dataset import cue_correlation_matrix, distribution_report, dump_manifest
from .errors import BackendError, RunAborted, SocialCueError, ValidationError
from .metrics import compare_runs, run_key
from .synthgen import GeneratorConfig, generate, implied_prevalences
from .util import percent, wrap

NAME = "socialcue"
try:
    VERSION = version(__name__)
except PackageNotFoundError:  # pragma: no cover
    VERSION = "unknown"

OPERATIONS = ["gen", "validate", "run", "sweep", "report"]

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_MISSING_ARGUMENT = 2
EXIT_INVALID = 3
EXIT_VIOLATIONS = 4
EXIT_BACKEND = 5
EXIT_ABORTED = 6
EXIT_IO = 7

# Dedicated override flags and the config keys they set
FLAG_KEYS = {
    "output_dir": "output_dir",
    "parallelism": "parallelism",
    "seed": "seed",
    "policy": "policy",
    "mask": "component_mask",
    "modality": "modality.mode",
    "frame_budget": "modality.frame_budget",
    "variant": "variant",
    "decider": "decider",
}


def print_help():
    """Print help."""
    help_text = f"""\
        {NAME} {VERSION}

        Usage: {NAME} [-v] command [options]

        Available commands:
        - gen --config FILE --out MANIFEST     Generate a synthetic dataset
        - validate MANIFEST                    Check a dataset manifest
        - run --config FILE                    Run an experiment
        - sweep --config FILE --grid FILE      Run every cell of a settings grid
        - report --records DIR [--baseline DIR]
                                               Recompute and compare metrics

        Options of run and sweep, overriding the config file:
          --output-dir DIR  --parallelism N  --seed N  --policy POLICY
          --mask MASK  --modality MODE  --frame-budget N  --variant VARIANT
          --decider RULE|MODEL  --set KEY=VALUE (dotted key, JSON value)
        """
    print(textwrap.dedent(help_text))


logging.basicConfig(level="INFO", format="%(message)s")


def _override(text: str) -> Tuple[str, str]:
    key, sep, value = text.partition("=")
    if not sep or not key:
        raise argparse.ArgumentTypeError(f"expected KEY=VALUE, got {text!r}")
    return key, value


def _parser(operation: str) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog=f"{NAME} {operation}")
    if operation == "gen":
        parser.add_argument("--config", required=True, type=Path)
        parser.add_argument("--out", required=True, type=Path)
    elif operation == "validate":
        parser.add_argument("manifest", type=Path)
    elif operation == "report":
        parser.add_argument("--records", required=True, type=Path)
        parser.add_argument("--baseline", type=Path)
    else:
        parser.add_argument("--config", required=True, type=Path)
        if operation == "sweep":
            parser.add_argument("--grid", required=True, type=Path)
        parser.add_argument("--output-dir", type=lambda text: str(Path(text).resolve()))
        parser.add_argument("--parallelism", type=int)
        parser.add_argument("--seed", type=int)
        parser.add_argument("--policy")
        parser.add_argument("--mask")
        parser.add_argument("--modality")
        parser.add_argument("--frame-budget", type=int)
        parser.add_argument("--variant")
        parser.add_argument("--decider")
        parser.add_argument("--set", action="append", default=[], type=_override)
    return parser


def overrides_from(args: argparse.Namespace) -> List[Tuple[str, object]]:
    """Config overrides given on the command line, dedicated flags first."""
    result: List[Tuple[str, object]] = []
    for name, key in FLAG_KEYS.items():
        value = getattr(args, name, None)
        if value is not None:
            result.append((key, value))
    for key, value in getattr(args, "set", []):
        result.append((key, harness.parse_value(value)))
    return result


def arg_parse(argv):
    """Parse the command line arguments."""
    argv = list(argv)
    if len(argv) > 1 and argv[1] == "-v":
        verbose = True
        logging.getLogger().setLevel("DEBUG")
        del argv[1]
    else:
        verbose = False
    if len(argv) < 2:
        print_help()
        sys.exit(EXIT_OK)
    operation = argv[1]

    if operation == "help":
        print_help()
        sys.exit(EXIT_OK)

    if operation not in OPERATIONS:
        print_help()
        sys.exit(EXIT_USAGE)

    # argparse exits with 2 on missing arguments
    args = _parser(operation).parse_args(argv[2:])
    return operation, args, verbose


def generate_dataset(config_path: Path, out: Path):
    data = harness.load_json(config_path)
    if isinstance(data, dict) and "dataset" in data:
        # An experiment config: its generator, seeded like a run would seed it
        experiment_seed = data.get("seed", 0)
        data = dict(data["dataset"].get("generate", {}))
        data.setdefault("seed", experiment_seed)
    config = GeneratorConfig.from_dict(data)
    manifest = generate(config)
    dump_manifest(manifest, out)
    stats = distribution_report(manifest)
    expected = implied_prevalences(config)
    for name, rate in stats.rates.items():
        logging.info("%-13s %6s %% (expected %s %%)", name, percent(rate), percent(expected[name]))
    stats.write_csv(out.with_suffix(".distribution.csv"))
    stats.write_json(out.with_suffix(".distribution.json"))
    if len(manifest) > 1:
        cue_correlation_matrix(manifest).write_csv(out.with_suffix(".correlation.csv"))
    logging.info("Wrote %i segments to %s", len(manifest), out)


def validate_manifest(path: Path) -> int:
    report = harness.validate(path)
    for line in report.lines():
        print(wrap(line, indent=1))
    if not report.ok:
        logging.error("%i violations in %s", len(report.violations), path)
        return EXIT_VIOLATIONS
    logging.info(
        "%s: %i segments, %i video-question pairs, %i discarded, no violations",
        path,
        len(report.manifest),
        report.manifest.pair_count,
        len(report.manifest.discarded),
    )
    return EXIT_OK


def report_runs(records: Path, baseline=None):
    current = harness.report_from_records(records)
    if baseline is not None:
        reports = [harness.report_from_records(baseline), current]
        names = None
        if run_key(reports[0].metadata) == run_key(current.metadata):
            # Same settings, e.g. a rerun: tell the runs apart by folder
            names = [str(baseline), str(records)]
        comparison = compare_runs(reports, names=names)
    else:
        comparison = compare_runs([current])
    if current.cue_report is not None:
        current.cue_report.write_csv(records / "cue_report.csv")
    comparison.write_csv(records / "comparison.csv")
    comparison.write_markdown(records / "comparison.md")
    print(comparison.to_markdown())


def dispatch(operation: str, args: argparse.Namespace) -> int:
    """Execute an operation and return the exit code."""
    if operation == "gen":
        generate_dataset(args.config, args.out)
    elif operation == "validate":
        return validate_manifest(args.manifest)
    elif operation == "run":
        harness.run(harness.load_config(args.config, overrides_from(args)))
    elif operation == "sweep":
        config = harness.load_config(args.config, overrides_from(args))
        grid = harness.SweepGrid.from_dict(harness.load_json(args.grid))
        result = harness.sweep(grid, config)
        print(result.comparison.to_markdown())
        if result.failed:
            logging.warning("%i sweep cells failed: %s", len(result.failed), ", ".join(result.failed))
    elif operation == "report":
        report_runs(args.records, args.baseline)
    return EXIT_OK


def main(operation: str, args: argparse.Namespace, verbose: bool = False):
    """Call the desired operation and exit with a code for its outcome."""
    try:
        code = dispatch(operation, args)
    except ValidationError as error:
        logging.error("Invalid input: %s", error)
        code = EXIT_INVALID
    except BackendError as error:
        logging.error("Backend failed: %s", error)
        code = EXIT_BACKEND
    except RunAborted as error:
        logging.error("Aborted: %s", error)
        code = EXIT_ABORTED
    except SocialCueError as error:
        logging.error("%s", error)
        code = EXIT_INVALID
    except OSError as error:
        logging.error("I/O error: %s", error)
        if verbose:
            logging.exception(error)
        code = EXIT_IO
    sys.exit(code)


def run():
    """Main entry point"""
    main(*arg_parse(sys.argv))


if __name__ == "__main__":
    run()
