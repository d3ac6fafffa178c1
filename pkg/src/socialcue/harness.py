# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.

"""
Experiments: run a backend and the graph over a dataset, sweep settings and
report the results.

A run writes into its output directory
- run.json                the resolved configuration and run metadata
- records.partial.jsonl   one line per finished segment, used to resume
- records.jsonl           the final records in manifest order
- report.json             the metrics
- timings.csv             wall time per segment
records.jsonl and report.json hold no clock values, so repeated runs of a
deterministic backend produce identical files.
"""

import copy
import itertools
import json
import logging
import math
import re
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Iterator, List, Mapping, Optional, Sequence, Tuple, Type, TypeVar

from .cues import AUDIO_CUES, VISUAL_CUES, Cue, CueVector, DecisionQuery
from .dataset import (
    DatasetManifest,
    LabeledSegment,
    Violation,
    load_manifest,
    read_manifest,
)
from .detectors import (
    Backend,
    BackendKind,
    BackendSpec,
    CuePredictions,
    make_backend,
    predict,
)
from .errors import RunAborted, SocialCueError, ValidationError
from .graph import Decision, GatePolicy, evaluate
from .metrics import Comparison, MetricsReport, compare_runs, cue_metrics, run_key
from .prompts import Modality, ModalityConfig, PromptVariant, sample_frame_indices
from .synthgen import GeneratorConfig, generate
from .util import atomic_write_text, canonical_json, percent, write_csv

RUN_FILE = "run.json"
RECORDS_FILE = "records.jsonl"
CHECKPOINT_FILE = "records.partial.jsonl"
REPORT_FILE = "report.json"
TIMINGS_FILE = "timings.csv"
DEFAULT_FAILURE_BUDGET = 0.05

E = TypeVar("E", bound=Enum)


def parse_enum(kind: Type[E], value: Any, name: str) -> E:
    """Look up an enum member by its (case insensitive) value."""
    if isinstance(value, kind):
        return value
    try:
        return kind(str(value).upper())
    except ValueError:
        allowed = ", ".join(member.value for member in kind)
        raise ValidationError(f"{value!r} is not one of {allowed}", field=name) from None


class ComponentMask(Enum):
    FULL = "FULL"
    # Audio processing graph only: visual cues count as false
    APG_ONLY = "APG_ONLY"
    # Video processing graph only: audio cues count as false
    VPG_ONLY = "VPG_ONLY"
    # No cues, the interaction question is asked directly
    BASELINE_DIRECT = "BASELINE_DIRECT"
    # One predicted cue guides the interaction question
    CUE_GUIDED = "CUE_GUIDED"

    @property
    def masked_cues(self) -> frozenset:
        if self is ComponentMask.APG_ONLY:
            return VISUAL_CUES
        if self is ComponentMask.VPG_ONLY:
            return AUDIO_CUES
        return frozenset()


class Decider(Enum):
    # Closed form decision of the graph
    RULE = "RULE"
    # The backend decides, given the cues the graph collected
    MODEL = "MODEL"


def _resolve(path: Any, base_dir: Optional[Path]) -> Path:
    path = Path(path)
    if base_dir is not None and not path.is_absolute():
        return base_dir / path
    return path


@dataclass(frozen=True)
class DatasetSource:
    """A manifest on disk or a generator configuration."""

    manifest: Optional[Path] = None
    generate: Optional[GeneratorConfig] = None

    def __post_init__(self):
        if (self.manifest is None) == (self.generate is None):
            raise ValidationError(
                "dataset needs exactly one of manifest and generate", field="dataset"
            )

    def load(self) -> DatasetManifest:
        if self.manifest is not None:
            manifest = load_manifest(self.manifest)
            logging.info("Loaded %i segments from %s", len(manifest), self.manifest)
            return manifest
        return generate(self.generate)  # type: ignore

    def to_dict(self) -> Dict[str, Any]:
        if self.manifest is not None:
            return {"manifest": str(self.manifest)}
        return {"generate": self.generate.to_dict()}  # type: ignore

    @classmethod
    def from_dict(
        cls, data: Mapping[str, Any], base_dir: Optional[Path] = None, seed: int = 0
    ) -> "DatasetSource":
        if not isinstance(data, dict):
            raise ValidationError("dataset must be an object", field="dataset")
        if "manifest" in data:
            return cls(manifest=_resolve(data["manifest"], base_dir))
        if "generate" in data:
            if not isinstance(data["generate"], dict):
                raise ValidationError("dataset.generate must be an object", field="dataset.generate")
            generator = dict(data["generate"])
            generator.setdefault("seed", seed)
            return cls(generate=GeneratorConfig.from_dict(generator))
        raise ValidationError("dataset needs manifest or generate", field="dataset")


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetSource
    backend: BackendSpec
    modality: ModalityConfig = ModalityConfig()
    variant: PromptVariant = PromptVariant()
    policy: GatePolicy = GatePolicy.HIERARCHICAL
    component_mask: ComponentMask = ComponentMask.FULL
    decider: Decider = Decider.RULE
    guide_cue: Optional[Cue] = None
    output_dir: Path = Path("output")
    parallelism: int = 1
    seed: int = 0
    failure_budget: float = DEFAULT_FAILURE_BUDGET

    def __post_init__(self):
        if isinstance(self.parallelism, bool) or not isinstance(self.parallelism, int):
            raise ValidationError("parallelism must be an integer", field="parallelism")
        if self.parallelism < 1:
            raise ValidationError("parallelism must be at least 1", field="parallelism")
        if isinstance(self.seed, bool) or not isinstance(self.seed, int):
            raise ValidationError("seed must be an integer", field="seed")
        if not 0.0 <= self.failure_budget <= 1.0:
            raise ValidationError("failure_budget must lie in [0, 1]", field="failure_budget")
        if self.component_mask is ComponentMask.CUE_GUIDED and self.guide_cue is None:
            raise ValidationError("CUE_GUIDED needs a guide_cue", field="guide_cue")
        if self.backend.kind in (BackendKind.REMOTE, BackendKind.REPLAY):
            self._check_remote()

    def _check_remote(self):
        """Audio cues cannot be asked about video without sound."""
        if self.modality.mode.has_audio:
            return
        if self.component_mask in (ComponentMask.FULL, ComponentMask.APG_ONLY):
            raise ValidationError(
                f"{self.component_mask.value} asks audio cues, "
                "which a VIDEO_ONLY model cannot answer; use VPG_ONLY",
                field="component_mask",
            )
        if self.component_mask is ComponentMask.CUE_GUIDED and self.guide_cue in AUDIO_CUES:
            raise ValidationError(
                f"{self.guide_cue} is an audio cue but the modality is VIDEO_ONLY",
                field="guide_cue",
            )

    @property
    def effective_guide_cue(self) -> Optional[Cue]:
        return self.guide_cue if self.component_mask is ComponentMask.CUE_GUIDED else None

    def metadata(self, backend_id: str) -> Dict[str, Any]:
        """What identifies this run in reports and comparisons."""
        guide = self.effective_guide_cue
        return {
            "backend": backend_id,
            "modality": self.modality.mode.value,
            "frame_budget": self.modality.frame_budget,
            "variant": self.variant.label,
            "policy": self.policy.value,
            "component_mask": self.component_mask.value,
            "decider": self.decider.value,
            "guide_cue": None if guide is None else guide.name,
            "seed": self.seed,
            # Cue answers do not depend on the variant and are reused
            "cue_cache_shared": True,
        }

    def to_dict(self) -> Dict[str, Any]:
        return {
            "dataset": self.dataset.to_dict(),
            "backend": self.backend.to_dict(),
            "modality": self.modality.to_dict(),
            "variant": self.variant.to_dict(),
            "policy": self.policy.value,
            "component_mask": self.component_mask.value,
            "decider": self.decider.value,
            "guide_cue": None if self.guide_cue is None else self.guide_cue.value,
            "output_dir": str(self.output_dir),
            "parallelism": self.parallelism,
            "seed": self.seed,
            "failure_budget": self.failure_budget,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], base_dir: Optional[Path] = None) -> "ExperimentConfig":
        """Build a config from its JSON form.

        Relative paths resolve against base_dir. The experiment seed is the
        default seed of a NOISY backend and of a generated dataset.
        """
        known = set(cls.__dataclass_fields__)  # type: ignore
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValidationError(f"Unknown config fields {unknown}", field=unknown[0])
        for key in ("dataset", "backend"):
            if key not in data:
                raise ValidationError(f"{key} is required", field=key)
        seed = data.get("seed", 0)
        backend = dict(data["backend"])
        if isinstance(backend.get("noisy"), dict):
            backend["noisy"] = dict(backend["noisy"])
            backend["noisy"].setdefault("seed", seed)
        guide_cue = data.get("guide_cue")
        failure_budget = data.get("failure_budget", DEFAULT_FAILURE_BUDGET)
        if isinstance(failure_budget, bool) or not isinstance(failure_budget, (int, float)):
            raise ValidationError("failure_budget must be a number", field="failure_budget")
        return cls(
            dataset=DatasetSource.from_dict(data["dataset"], base_dir, seed),
            backend=BackendSpec.from_dict(backend, base_dir),
            modality=ModalityConfig.from_dict(data.get("modality", {})),
            variant=PromptVariant.from_dict(data.get("variant", {})),
            policy=parse_enum(GatePolicy, data.get("policy", "HIERARCHICAL"), "policy"),
            component_mask=parse_enum(ComponentMask, data.get("component_mask", "FULL"), "component_mask"),
            decider=parse_enum(Decider, data.get("decider", "RULE"), "decider"),
            guide_cue=None if guide_cue is None else Cue.parse(guide_cue),
            output_dir=_resolve(data.get("output_dir", "output"), base_dir),
            parallelism=data.get("parallelism", 1),
            seed=seed,
            failure_budget=float(failure_budget),
        )


def parse_value(text: str) -> Any:
    """JSON if it parses, the plain string otherwise."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def set_dotted(data: Dict[str, Any], key: str, value: Any):
    """Set data["a"]["b"] for key "a.b", creating objects on the way."""
    parts = key.split(".")
    if not all(parts):
        raise ValidationError(f"Invalid override key {key!r}", field=key)
    node = data
    for part in parts[:-1]:
        child = node.get(part)
        if isinstance(child, str) and part == "modality":
            child = {"mode": child}
        elif isinstance(child, str) and part == "variant":
            child = PromptVariant.parse(child).to_dict()
        elif not isinstance(child, dict):
            child = {}
        node[part] = child
        node = child
    node[parts[-1]] = value


def apply_overrides(data: Mapping[str, Any], overrides: Sequence[Tuple[str, Any]]) -> Dict[str, Any]:
    """Return a copy of a raw config with dotted key overrides applied."""
    result = copy.deepcopy(dict(data))
    for key, value in overrides:
        set_dotted(result, key, value)
    return result


def load_json(path: Path) -> Any:
    with open(path, encoding="utf-8") as json_file:
        try:
            return json.load(json_file)
        except json.JSONDecodeError as error:
            raise ValidationError(f"{path} is not valid JSON: {error}") from None


def load_config(path: Path, overrides: Sequence[Tuple[str, Any]] = ()) -> ExperimentConfig:
    """Read an experiment config file and apply overrides."""
    path = Path(path)
    data = load_json(path)
    if not isinstance(data, dict):
        raise ValidationError(f"{path} does not hold a JSON object")
    return ExperimentConfig.from_dict(apply_overrides(data, overrides), base_dir=path.parent)


@dataclass
class RunRecord:
    """Everything one segment contributed to a run."""

    segment_id: str
    ground_truth: bool
    cues: CueVector
    predicted_interaction: bool
    predictions: Optional[CuePredictions] = None
    decision: Optional[Decision] = None
    model_verdict: Optional[bool] = None
    queries_issued: int = 0
    parse_failures: int = 0
    wall_time_s: float = 0.0

    def to_dict(self, timing: bool = False) -> Dict[str, Any]:
        data = {
            "segment_id": self.segment_id,
            "ground_truth": self.ground_truth,
            "cues": self.cues.to_dict(),
            "predicted_interaction": self.predicted_interaction,
            "predictions": None if self.predictions is None else self.predictions.to_dict(),
            "decision": None if self.decision is None else self.decision.to_dict(),
            "model_verdict": self.model_verdict,
            "queries_issued": self.queries_issued,
            "parse_failures": self.parse_failures,
        }
        if timing:
            data["wall_time_s"] = self.wall_time_s
        return data

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "RunRecord":
        predictions = data.get("predictions")
        decision = data.get("decision")
        return cls(
            segment_id=data["segment_id"],
            ground_truth=bool(data["ground_truth"]),
            cues=CueVector.from_dict(data["cues"]),
            predicted_interaction=bool(data["predicted_interaction"]),
            predictions=None if predictions is None else CuePredictions.from_dict(predictions),
            decision=None if decision is None else Decision.from_dict(decision),
            model_verdict=data.get("model_verdict"),
            queries_issued=int(data.get("queries_issued", 0)),
            parse_failures=int(data.get("parse_failures", 0)),
            wall_time_s=float(data.get("wall_time_s", 0.0)),
        )


def check_dataset(config: ExperimentConfig, manifest: DatasetManifest):
    """Fail before any query if the dataset cannot serve the run."""
    if not manifest.segments:
        raise ValidationError("The dataset has no segments", field="dataset")
    if config.backend.kind not in (BackendKind.REMOTE, BackendKind.REPLAY):
        return
    for labeled in manifest.segments:
        segment = labeled.segment
        sample_frame_indices(len(segment.frame_times), config.modality.frame_budget)
        if config.modality.mode.has_text and segment.transcript is None:
            raise ValidationError(
                f"{config.modality.mode.value} needs transcripts",
                segment_id=segment.segment_id,
                field="transcript",
            )
        if config.modality.mode.has_audio and segment.audio_ref is None:
            raise ValidationError(
                f"{config.modality.mode.value} needs audio",
                segment_id=segment.segment_id,
                field="audio_ref",
            )


def process_segment(
    config: ExperimentConfig, backend: Backend, labeled: LabeledSegment
) -> RunRecord:
    """Ask the backend what the component mask requires and decide."""
    started = time.perf_counter()
    modality, variant = config.modality, config.variant
    predictions: Optional[CuePredictions] = None
    decision: Optional[Decision] = None
    model_verdict: Optional[bool] = None
    parse_failures = 0
    queries = 0

    if config.component_mask is ComponentMask.BASELINE_DIRECT:
        answer = backend.answer(labeled, DecisionQuery.DIRECT_DECISION, modality, variant)
        model_verdict, parse_failures, queries = answer.value, int(answer.parse_failed), 1
    elif config.component_mask is ComponentMask.CUE_GUIDED:
        guide: Cue = config.guide_cue  # type: ignore
        predictions = predict(backend, labeled, [guide], modality, variant)
        prior = {guide: predictions.values[guide]}
        answer = backend.answer(labeled, DecisionQuery.GUIDED_DECISION, modality, variant, prior)
        model_verdict = answer.value
        parse_failures = len(predictions.parse_failed) + int(answer.parse_failed)
        queries = 2
    else:
        predictions = CuePredictions(labeled.segment_id, backend.backend_id)

        def ask(cue: Cue) -> bool:
            answer = backend.answer(labeled, cue, modality, variant)
            predictions.record(cue, answer)  # type: ignore
            return answer.value

        decision = evaluate(
            ask, config.policy, config.component_mask.masked_cues, labeled.segment_id
        )
        queries = decision.trace.query_count
        parse_failures = len(predictions.parse_failed)
        if config.decider is Decider.MODEL:
            prior = dict(decision.trace.effective())
            answer = backend.answer(labeled, DecisionQuery.FINAL_DECISION, modality, variant, prior)
            model_verdict = answer.value
            parse_failures += int(answer.parse_failed)
            queries += 1

    predicted = decision.interacting if model_verdict is None else model_verdict  # type: ignore
    return RunRecord(
        segment_id=labeled.segment_id,
        ground_truth=labeled.ground_truth_interaction,
        cues=labeled.consensus,
        predicted_interaction=predicted,
        predictions=predictions,
        decision=decision,
        model_verdict=model_verdict,
        queries_issued=queries,
        parse_failures=parse_failures,
        wall_time_s=time.perf_counter() - started,
    )


def build_report(
    records: Sequence[RunRecord],
    metadata: Mapping[str, Any],
    failed_segments: int = 0,
    partial: bool = False,
) -> MetricsReport:
    """Aggregate records into metrics. Works offline on loaded records."""
    with_cues = [record for record in records if record.predictions is not None]
    cue_report = (
        cue_metrics(
            [record.predictions for record in with_cues],  # type: ignore
            {record.segment_id: record.cues for record in with_cues},
        )
        if with_cues
        else None
    )
    return MetricsReport.build(
        [record.predicted_interaction for record in records],
        [record.ground_truth for record in records],
        cue_report,
        parse_failure_count=sum(record.parse_failures for record in records),
        metadata=dict(metadata),
        queries_issued=sum(record.queries_issued for record in records),
        failed_segments=failed_segments,
        partial=partial,
    )


def _comparable(config_dict: Mapping[str, Any]) -> Dict[str, Any]:
    """The parts of a config that change the records."""
    return {k: v for k, v in config_dict.items() if k not in ("output_dir", "parallelism")}


def iter_records(path: Path) -> Iterator[RunRecord]:
    with open(path, encoding="utf-8") as records_file:
        for line in records_file:
            line = line.strip()
            if line:
                yield RunRecord.from_dict(json.loads(line))


def read_records(path: Path) -> List[RunRecord]:
    return list(iter_records(path))


def _load_checkpoint(config: ExperimentConfig, manifest: DatasetManifest) -> Dict[str, RunRecord]:
    """Finished records of an earlier, interrupted run of the same config."""
    out = config.output_dir
    checkpoint = out / CHECKPOINT_FILE
    if not checkpoint.exists():
        return {}
    previous = load_json(out / RUN_FILE) if (out / RUN_FILE).exists() else {}
    if _comparable(previous.get("config", {})) != _comparable(config.to_dict()):
        logging.warning("Configuration changed, not resuming from %s", checkpoint)
        checkpoint.unlink()
        return {}
    wanted = {labeled.segment_id for labeled in manifest.segments}
    done: Dict[str, RunRecord] = {}
    try:
        for record in iter_records(checkpoint):
            if record.segment_id in wanted:
                done[record.segment_id] = record
    except (ValueError, KeyError) as error:
        # An interrupted write leaves at most a truncated last line
        logging.warning("Stopped reading %s at a broken line: %s", checkpoint, error)
        atomic_write_text(
            checkpoint,
            "".join(canonical_json(record.to_dict(timing=True)) + "\n" for record in done.values()),
        )
    return done


def write_report(report: MetricsReport, path: Path) -> Path:
    atomic_write_text(path, json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n")
    return path


def read_report(path: Path) -> MetricsReport:
    return MetricsReport.from_dict(load_json(path))


@dataclass
class RunResult:
    records: List[RunRecord]
    report: MetricsReport
    failed: Dict[str, str] = field(default_factory=dict)


def run(config: ExperimentConfig, manifest: Optional[DatasetManifest] = None) -> RunResult:
    """Run an experiment and write its outputs.

    Segments already in the checkpoint of an interrupted run are skipped.
    Failing segments are logged and left out; if more than failure_budget of
    them fail, the run stops with RunAborted carrying a partial report.
    """
    if manifest is None:
        manifest = config.dataset.load()
    check_dataset(config, manifest)
    backend = make_backend(config.backend)
    metadata = config.metadata(backend.backend_id)
    metadata["dataset"] = manifest.name
    out = config.output_dir
    out.mkdir(parents=True, exist_ok=True)

    done = _load_checkpoint(config, manifest)
    run_info = {"config": config.to_dict(), "metadata": metadata}
    atomic_write_text(out / RUN_FILE, json.dumps(run_info, sort_keys=True, indent=2) + "\n")
    todo = [labeled for labeled in manifest.segments if labeled.segment_id not in done]
    logging.info(
        "Running %i segments (%i already done) with %s",
        len(todo),
        len(done),
        backend.backend_id,
    )

    failed: Dict[str, str] = {}
    allowed_failures = config.failure_budget * len(manifest.segments)
    aborted = False
    with open(out / CHECKPOINT_FILE, "a", encoding="utf-8") as checkpoint, ThreadPoolExecutor(
        max_workers=config.parallelism
    ) as pool:
        futures = {
            pool.submit(process_segment, config, backend, labeled): labeled.segment_id
            for labeled in todo
        }
        for future in as_completed(futures):
            segment_id = futures[future]
            try:
                record = future.result()
            except SocialCueError as error:
                logging.warning("Segment %s failed: %s", segment_id, error)
                failed[segment_id] = str(error)
                if len(failed) > allowed_failures:
                    aborted = True
                    for pending in futures:
                        pending.cancel()
                    break
                continue
            done[segment_id] = record
            checkpoint.write(canonical_json(record.to_dict(timing=True)) + "\n")
            checkpoint.flush()

    records = [done[labeled.segment_id] for labeled in manifest.segments if labeled.segment_id in done]
    report = build_report(records, metadata, len(failed), aborted) if records else None
    if aborted:
        if report is not None:
            write_report(report, out / REPORT_FILE)
        logging.error("%i of %i segments failed, run aborted", len(failed), len(manifest.segments))
        raise RunAborted(f"{len(failed)} segments failed, more than the failure budget allows", report)
    if report is None:
        raise RunAborted("No segment finished", None)

    atomic_write_text(
        out / RECORDS_FILE, "".join(canonical_json(record.to_dict()) + "\n" for record in records)
    )
    write_report(report, out / REPORT_FILE)
    write_csv(
        out / TIMINGS_FILE,
        ("segment_id", "wall_time_s", "queries_issued"),
        [(r.segment_id, f"{r.wall_time_s:.6f}", r.queries_issued) for r in records],
    )
    logging.info(
        "ITM %s %%, SIM %s %%, %i queries, %i failed segments",
        percent(report.itm),
        percent(report.sim),
        report.queries_issued,
        len(failed),
    )
    return RunResult(records, report, failed)


def report_from_records(directory: Path) -> MetricsReport:
    """Recompute the metrics of a finished run from its records."""
    directory = Path(directory)
    run_info = load_json(directory / RUN_FILE)
    records = read_records(directory / RECORDS_FILE)
    if not records:
        raise ValidationError(f"{directory / RECORDS_FILE} holds no records")
    failed, partial = 0, False
    if (directory / REPORT_FILE).exists():
        stored = read_report(directory / REPORT_FILE)
        failed, partial = stored.failed_segments, stored.partial
        recomputed = build_report(records, run_info.get("metadata", {}), failed, partial)
        if recomputed.to_dict() != stored.to_dict():
            logging.warning("Stored report of %s differs from its records", directory)
        return recomputed
    return build_report(records, run_info.get("metadata", {}), failed, partial)


SWEEP_AXES: Tuple[str, ...] = (
    "modality",
    "variant",
    "policy",
    "component_mask",
    "frame_budget",
    "decider",
    "guide_cue",
)


def apply_cell(config: ExperimentConfig, cell: Sequence[Tuple[str, Any]]) -> ExperimentConfig:
    """Change the swept settings of a config all at once, so that settings
    which depend on each other (CUE_GUIDED and guide_cue) validate together."""
    changes: Dict[str, Any] = {}
    mode, budget = config.modality.mode, config.modality.frame_budget
    for axis, value in cell:
        if axis == "modality":
            mode = parse_enum(Modality, value, "modality")
        elif axis == "frame_budget":
            budget = value
        elif axis == "variant":
            changes["variant"] = PromptVariant.from_dict(value)
        elif axis == "policy":
            changes["policy"] = parse_enum(GatePolicy, value, "policy")
        elif axis == "component_mask":
            changes["component_mask"] = parse_enum(ComponentMask, value, "component_mask")
        elif axis == "decider":
            changes["decider"] = parse_enum(Decider, value, "decider")
        elif axis == "guide_cue":
            changes["guide_cue"] = Cue.parse(value)
        else:
            raise ValidationError(f"Cannot sweep over {axis}", field=axis)
    changes["modality"] = ModalityConfig(mode, budget)
    return replace(config, **changes)


def _slug(value: Any) -> str:
    text = value if isinstance(value, str) else canonical_json(value)
    return re.sub(r"[^A-Za-z0-9_.+-]+", "_", text).strip("_")


@dataclass(frozen=True)
class SweepGrid:
    axes: Tuple[Tuple[str, Tuple[Any, ...]], ...]

    @classmethod
    def from_dict(cls, data: Any) -> "SweepGrid":
        if not isinstance(data, dict) or not data:
            raise ValidationError("The sweep grid has no axes", field="grid")
        axes = []
        for axis, values in data.items():
            if axis not in SWEEP_AXES:
                raise ValidationError(f"Unknown sweep axis {axis!r}", field=axis)
            if not isinstance(values, list) or not values:
                raise ValidationError(f"Sweep axis {axis} has no values", field=axis)
            axes.append((axis, tuple(values)))
        return cls(tuple(axes))

    def cells(self) -> List[Tuple[Tuple[str, Any], ...]]:
        """All combinations, first axis varying slowest."""
        names = [axis for axis, _ in self.axes]
        return [tuple(zip(names, combo)) for combo in itertools.product(*(v for _, v in self.axes))]

    def __len__(self):
        return math.prod(len(values) for _, values in self.axes) if self.axes else 0


def cell_name(cell: Sequence[Tuple[str, Any]]) -> str:
    return "__".join(f"{axis}={_slug(value)}" for axis, value in cell)


@dataclass
class SweepResult:
    reports: Dict[str, MetricsReport]
    failed: Dict[str, str]
    comparison: Comparison


def sweep(grid: SweepGrid, base: ExperimentConfig) -> SweepResult:
    """Run every cell of the grid in its own subdirectory of base.output_dir.

    A failing cell is recorded and skipped. Deltas in the comparison are
    taken against the first cell that finished.
    """
    manifest = base.dataset.load()
    reports: Dict[str, MetricsReport] = {}
    failed: Dict[str, str] = {}
    summary = []
    seen: Dict[Tuple[Any, ...], str] = {}
    cells = grid.cells()
    for number, cell in enumerate(cells, 1):
        name = cell_name(cell)
        logging.info("Sweep cell %i/%i: %s", number, len(cells), name)
        entry: Dict[str, Any] = {"name": name, "settings": dict(cell)}
        try:
            config = apply_cell(base, cell)
            key = run_key(config.metadata(""))
            if key in seen:
                logging.info("Skipping %s, same settings as %s", name, seen[key])
                entry.update(status="duplicate", same_as=seen[key])
                summary.append(entry)
                continue
            seen[key] = name
            config = replace(config, output_dir=base.output_dir / name)
            report = run(config, manifest).report
        except SocialCueError as error:
            logging.warning("Sweep cell %s failed: %s", name, error)
            failed[name] = str(error)
            entry.update(status="failed", error=str(error))
        else:
            reports[name] = report
            entry.update(status="ok", itm=report.itm, sim=report.sim)
        summary.append(entry)

    summary_path = base.output_dir / "sweep_summary.json"
    atomic_write_text(
        summary_path,
        json.dumps({"cells": summary, "failed": len(failed)}, sort_keys=True, indent=2) + "\n",
    )
    if not reports:
        raise RunAborted("Every sweep cell failed", None)
    comparison = compare_runs(list(reports.values()))
    comparison.write_csv(base.output_dir / "comparison.csv")
    comparison.write_markdown(base.output_dir / "comparison.md")
    return SweepResult(reports, failed, comparison)


@dataclass
class ValidationReport:
    path: Path
    manifest: DatasetManifest
    violations: List[Violation]

    @property
    def ok(self) -> bool:
        return not self.violations

    def lines(self) -> List[str]:
        return [str(violation) for violation in self.violations]


def validate(path: Path) -> ValidationReport:
    """Check every invariant of a manifest. OSError if it cannot be read."""
    manifest, violations = read_manifest(Path(path))
    return ValidationReport(Path(path), manifest, violations)
