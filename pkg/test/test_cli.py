# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.

# pylint: disable=redefined-outer-name
import json
import logging
from pathlib import Path

import pytest

import socialcue
from socialcue.errors import BackendError, ManifestError, RunAborted, SocialCueError, ValidationError


def test_print_help():
    socialcue.print_help()


def test_arg_parse_help():
    """Print help and exit."""
    for argv in (["socialcue", "help"], ["socialcue"]):
        with pytest.raises(SystemExit) as pytest_wrapped_e:
            socialcue.arg_parse(argv)
        assert pytest_wrapped_e.value.code == 0


def test_arg_parse_valid(tmp_path):
    """Parse every operation with its required arguments."""
    path = str(tmp_path / "x.json")
    argvs = {
        "gen": ["--config", path, "--out", path],
        "validate": [path],
        "run": ["--config", path],
        "sweep": ["--config", path, "--grid", path],
        "report": ["--records", path],
    }
    assert set(argvs) == set(socialcue.OPERATIONS)
    for operation, rest in argvs.items():
        result = socialcue.arg_parse(["socialcue", operation, *rest])
        assert isinstance(result, tuple)
        assert len(result) == 3
        assert result[0] == operation
        assert result[2] is False


def test_arg_parse_verbose():
    try:
        operation, args, verbose = socialcue.arg_parse(["socialcue", "-v", "validate", "m.jsonl"])
        assert verbose
        assert operation == "validate"
        assert args.manifest == Path("m.jsonl")
        assert logging.getLogger().level == logging.DEBUG
    finally:
        logging.getLogger().setLevel("INFO")


def test_arg_parse_invalid_op():
    """Unknown operation: Print help and exit."""
    for operation in ["invalid", "", None]:
        with pytest.raises(SystemExit) as pytest_wrapped_e:
            socialcue.arg_parse(["socialcue", operation])
        assert pytest_wrapped_e.value.code == socialcue.EXIT_USAGE


@pytest.mark.parametrize("operation", ["gen", "validate", "run", "sweep", "report"])
def test_arg_parse_missing_argument(operation):
    with pytest.raises(SystemExit) as pytest_wrapped_e:
        socialcue.arg_parse(["socialcue", operation])
    assert pytest_wrapped_e.value.code == socialcue.EXIT_MISSING_ARGUMENT


def test_overrides_from(tmp_path):
    """Dedicated flags come first, --set values are parsed as JSON."""
    _, args, _ = socialcue.arg_parse(
        [
            "socialcue",
            "run",
            "--config",
            "c.json",
            "--set",
            "variant.think=true",
            "--policy",
            "EAGER",
            "--output-dir",
            str(tmp_path / "o"),
            "--frame-budget",
            "3",
            "--set",
            "backend.kind=ORACLE",
        ]
    )
    assert socialcue.overrides_from(args) == [
        ("output_dir", str((tmp_path / "o").resolve())),
        ("policy", "EAGER"),
        ("modality.frame_budget", 3),
        ("variant.think", True),
        ("backend.kind", "ORACLE"),
    ]
    with pytest.raises(SystemExit):
        socialcue.arg_parse(["socialcue", "run", "--config", "c.json", "--set", "nokey"])


@pytest.mark.parametrize(
    "error,code",
    [
        (None, socialcue.EXIT_OK),
        (ValidationError("bad"), socialcue.EXIT_INVALID),
        (ManifestError("bad", line=3), socialcue.EXIT_INVALID),
        (BackendError("down", "seg", "AUD"), socialcue.EXIT_BACKEND),
        (RunAborted("too many failures", None), socialcue.EXIT_ABORTED),
        (SocialCueError("other"), socialcue.EXIT_INVALID),
        (FileNotFoundError("missing"), socialcue.EXIT_IO),
    ],
)
def test_main_exit_codes(mocker, error, code):
    """Each outcome leaves with its own exit code."""
    if error is None:
        dispatch = mocker.patch("socialcue.dispatch", return_value=socialcue.EXIT_OK)
    else:
        dispatch = mocker.patch("socialcue.dispatch", side_effect=error)
    with pytest.raises(SystemExit) as pytest_wrapped_e:
        socialcue.main("run", "args")
    assert pytest_wrapped_e.value.code == code
    dispatch.assert_called_once_with("run", "args")


def test_main_calls_operation(mocker):
    """Every operation calls only its own function."""
    mock_generate = mocker.patch("socialcue.generate_dataset")
    mock_validate = mocker.patch("socialcue.validate_manifest", return_value=0)
    mock_run = mocker.patch("socialcue.harness.run")
    mock_sweep = mocker.patch("socialcue.harness.sweep")
    mock_sweep.return_value.failed = {}
    mock_report = mocker.patch("socialcue.report_runs")
    mocker.patch("socialcue.harness.load_config")
    mocker.patch("socialcue.harness.load_json", return_value={"policy": ["EAGER"]})
    argmap = {
        "gen": (mock_generate, ["--config", "c", "--out", "o"]),
        "validate": (mock_validate, ["m"]),
        "run": (mock_run, ["--config", "c"]),
        "sweep": (mock_sweep, ["--config", "c", "--grid", "g"]),
        "report": (mock_report, ["--records", "r"]),
    }
    mocks = [mock for mock, _ in argmap.values()]
    for operation, (mock, rest) in argmap.items():
        _, args, _ = socialcue.arg_parse(["socialcue", operation, *rest])
        with pytest.raises(SystemExit):
            socialcue.main(operation, args)
        for mock_op in mocks:
            if mock_op is not mock:
                mock_op.assert_not_called()
            else:
                mock.assert_called_once()
            mock_op.reset_mock()


def call(*argv):
    """Run the command line and return its exit code."""
    with pytest.raises(SystemExit) as pytest_wrapped_e:
        socialcue.main(*socialcue.arg_parse(["socialcue", *argv]))
    return pytest_wrapped_e.value.code


def write_json(path, data):
    path.write_text(json.dumps(data), encoding="utf-8")
    return path


@pytest.fixture(name="manifest")
def fixture_manifest(tmp_path):
    """A generated manifest next to its experiment config."""
    config = write_json(
        tmp_path / "gen.json", {"n_segments": 12, "seed": 1, "emit_transcripts": False}
    )
    out = tmp_path / "data.jsonl"
    assert call("gen", "--config", str(config), "--out", str(out)) == 0
    return out


def test_gen(manifest):
    assert manifest.exists()
    assert len(manifest.read_text(encoding="utf-8").splitlines()) == 13
    assert manifest.with_suffix(".distribution.csv").exists()
    distribution = manifest.with_suffix(".distribution.json")
    assert json.loads(distribution.read_text(encoding="utf-8"))["n_segments"] == 12
    assert manifest.with_suffix(".correlation.csv").exists()


def test_gen_from_experiment_config(tmp_path):
    """The generator block of an experiment config works too."""
    config = write_json(
        tmp_path / "exp.json",
        {"dataset": {"generate": {"n_segments": 1}}, "backend": {"kind": "ORACLE"}, "seed": 4},
    )
    out = tmp_path / "one.jsonl"
    assert call("gen", "--config", str(config), "--out", str(out)) == 0
    header = json.loads(out.read_text(encoding="utf-8").splitlines()[0])
    assert header["manifest"]["name"] == "synthetic"
    assert not out.with_suffix(".correlation.csv").exists()


def test_validate(manifest):
    assert call("validate", str(manifest)) == 0
    lines = manifest.read_text(encoding="utf-8").splitlines()
    lines[1] = "{broken"
    manifest.write_text("\n".join(lines) + "\n", encoding="utf-8")
    assert call("validate", str(manifest)) == socialcue.EXIT_VIOLATIONS
    assert call("validate", str(manifest.parent / "missing.jsonl")) == socialcue.EXIT_IO


def test_validate_bad_header(manifest):
    """Header problems are violations, not crashes."""
    lines = manifest.read_text(encoding="utf-8").splitlines()
    lines[0] = json.dumps({"manifest": {"frame_rate_hz": "fast"}})
    manifest.write_text("\n".join(lines) + "\n", encoding="utf-8")
    assert call("validate", str(manifest)) == socialcue.EXIT_VIOLATIONS
    manifest.write_bytes(b"\xff\xfe\n" + manifest.read_bytes())
    assert call("validate", str(manifest)) == socialcue.EXIT_VIOLATIONS


def test_run_and_report(tmp_path, manifest):
    """A run with overrides, then its report recomputed from the records."""
    config = write_json(
        tmp_path / "exp.json",
        {"dataset": {"manifest": manifest.name}, "backend": {"kind": "ORACLE"}, "output_dir": "runs/a"},
    )
    other = tmp_path / "elsewhere"
    code = call(
        "run",
        "--config",
        str(config),
        "--output-dir",
        str(other),
        "--policy",
        "EAGER",
        "--set",
        "variant.think=true",
    )
    assert code == 0
    assert not (tmp_path / "runs" / "a").exists()
    run_info = json.loads((other / "run.json").read_text(encoding="utf-8"))
    assert run_info["config"]["policy"] == "EAGER"
    assert run_info["config"]["variant"]["think"] is True
    assert (other / "report.json").exists()

    assert call("run", "--config", str(config)) == 0
    assert call("report", "--records", str(other), "--baseline", str(tmp_path / "runs" / "a")) == 0
    assert (other / "comparison.md").read_text(encoding="utf-8").startswith("### Intervention Timing")
    assert (other / "cue_report.csv").exists()


def test_report_rerun_against_baseline(tmp_path, manifest):
    """Two runs with the same settings compare by folder."""
    config = write_json(
        tmp_path / "exp.json", {"dataset": {"manifest": manifest.name}, "backend": {"kind": "ORACLE"}}
    )
    first, second = tmp_path / "first", tmp_path / "second"
    assert call("run", "--config", str(config), "--output-dir", str(first)) == 0
    assert call("run", "--config", str(config), "--output-dir", str(second)) == 0
    assert call("report", "--records", str(second), "--baseline", str(first)) == 0
    markdown = (second / "comparison.md").read_text(encoding="utf-8")
    assert f"| {first} (baseline) |" in markdown


def test_run_invalid_config(tmp_path, manifest):
    config = write_json(
        tmp_path / "exp.json",
        {"dataset": {"manifest": manifest.name}, "backend": {"kind": "ORACLE"}, "policy": "LAZY"},
    )
    assert call("run", "--config", str(config)) == socialcue.EXIT_INVALID
    assert call("run", "--config", str(tmp_path / "missing.json")) == socialcue.EXIT_IO


def test_sweep(tmp_path, manifest):
    config = write_json(
        tmp_path / "exp.json",
        {"dataset": {"manifest": manifest.name}, "backend": {"kind": "ORACLE"}, "output_dir": "sweep"},
    )
    grid = write_json(tmp_path / "grid.json", {"policy": ["EAGER", "HIERARCHICAL"]})
    assert call("sweep", "--config", str(config), "--grid", str(grid)) == 0
    assert (tmp_path / "sweep" / "comparison.csv").exists()
    assert (tmp_path / "sweep" / "policy=EAGER" / "report.json").exists()
