# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.

"""
Evaluation measures.

ITM  intervention timing: recall of the negative (no interaction) class,
     tn / (tn + fp).
SIM  social interaction: macro F1 over the positive and negative class.
     A 0/0 precision, recall or F1 counts as 0.

Per cue, the positive accuracy (tp / (tp + fn)), the negative accuracy
(tn / (tn + fp)) and the macro F1 are reported. Undefined values are None.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .cues import CUE_ORDER, Cue, CueVector
from .detectors import CuePredictions
from .errors import ValidationError
from .util import percent, write_csv

RUN_KEY_FIELDS: Tuple[str, ...] = (
    "backend",
    "modality",
    "frame_budget",
    "variant",
    "policy",
    "component_mask",
    "decider",
    "guide_cue",
    "seed",
    "dataset",
)


@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts with "interaction present" (or "cue present") as positive class."""

    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValidationError("Confusion counts must not be negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def swapped(self) -> "ConfusionMatrix":
        """The same counts with the negative class as positive class."""
        return ConfusionMatrix(tp=self.tn, fp=self.fn, fn=self.fp, tn=self.tp)

    def to_dict(self) -> Dict[str, int]:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ConfusionMatrix":
        return cls(int(data["tp"]), int(data["fp"]), int(data["fn"]), int(data["tn"]))


def confusion(predictions: Sequence[bool], truths: Sequence[bool]) -> ConfusionMatrix:
    if len(predictions) != len(truths):
        raise ValidationError(
            f"{len(predictions)} predictions but {len(truths)} truths", field="predictions"
        )
    if not predictions:
        raise ValidationError("Nothing to compare", field="predictions")
    pred = np.asarray(predictions, dtype=bool)
    true = np.asarray(truths, dtype=bool)
    return ConfusionMatrix(
        tp=int(np.sum(pred & true)),
        fp=int(np.sum(pred & ~true)),
        fn=int(np.sum(~pred & true)),
        tn=int(np.sum(~pred & ~true)),
    )


def _ratio(numerator: int, denominator: int) -> Optional[float]:
    return numerator / denominator if denominator else None


def _f1(tp: int, fp: int, fn: int) -> float:
    precision = _ratio(tp, tp + fp) or 0.0
    recall = _ratio(tp, tp + fn) or 0.0
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def itm(cm: ConfusionMatrix) -> Optional[float]:
    """Fraction of segments without interaction that are left open for an
    intervention. None if there is no such segment."""
    return _ratio(cm.tn, cm.tn + cm.fp)


def sim(cm: ConfusionMatrix) -> float:
    """Macro F1 of the interaction and the no interaction class."""
    if cm.total == 0:
        raise ValidationError("SIM of an empty confusion matrix")
    f1_positive = _f1(cm.tp, cm.fp, cm.fn)
    f1_negative = _f1(cm.tn, cm.fn, cm.fp)
    return (f1_positive + f1_negative) / 2


@dataclass(frozen=True)
class CueStats:
    counts: ConfusionMatrix
    positive_accuracy: Optional[float]
    negative_accuracy: Optional[float]
    macro_f1: float

    @classmethod
    def from_counts(cls, counts: ConfusionMatrix) -> "CueStats":
        return cls(
            counts=counts,
            positive_accuracy=_ratio(counts.tp, counts.tp + counts.fn),
            negative_accuracy=_ratio(counts.tn, counts.tn + counts.fp),
            macro_f1=sim(counts),
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "counts": self.counts.to_dict(),
            "positive_accuracy": self.positive_accuracy,
            "negative_accuracy": self.negative_accuracy,
            "macro_f1": self.macro_f1,
        }


@dataclass(frozen=True)
class CueReport:
    """Statistics per cue; None for cues never asked on any segment."""

    stats: Mapping[Cue, Optional[CueStats]]

    def __getitem__(self, cue: Cue) -> Optional[CueStats]:
        return self.stats[cue]

    def to_dict(self) -> Dict[str, Any]:
        return {
            cue.value: None if self.stats[cue] is None else self.stats[cue].to_dict()  # type: ignore
            for cue in CUE_ORDER
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "CueReport":
        stats: Dict[Cue, Optional[CueStats]] = {}
        for cue in CUE_ORDER:
            entry = data.get(cue.value)
            stats[cue] = (
                None
                if entry is None
                else CueStats.from_counts(ConfusionMatrix.from_dict(entry["counts"]))
            )
        return cls(stats)

    def write_csv(self, path: Path) -> Path:
        rows = []
        for cue in CUE_ORDER:
            entry = self.stats[cue]
            if entry is None:
                rows.append((cue.name, None, None, None, None, None, None, None))
                continue
            counts = entry.counts
            rows.append(
                (
                    cue.name,
                    entry.positive_accuracy,
                    entry.negative_accuracy,
                    entry.macro_f1,
                    counts.tp,
                    counts.fp,
                    counts.fn,
                    counts.tn,
                )
            )
        header = ("cue", "positive_accuracy", "negative_accuracy", "macro_f1", "tp", "fp", "fn", "tn")
        return write_csv(path, header, rows)


def cue_metrics(
    predictions: Iterable[CuePredictions], truths: Mapping[str, CueVector]
) -> CueReport:
    """Compare per cue predictions with the consensus labels. A cue only
    counts on segments where it was asked."""
    pairs: Dict[Cue, Tuple[List[bool], List[bool]]] = {cue: ([], []) for cue in CUE_ORDER}
    for prediction in predictions:
        if prediction.segment_id not in truths:
            raise ValidationError(
                "Prediction without ground truth",
                segment_id=prediction.segment_id,
            )
        truth = truths[prediction.segment_id]
        for cue, value in prediction.values.items():
            pairs[cue][0].append(value)
            pairs[cue][1].append(truth[cue])
    stats: Dict[Cue, Optional[CueStats]] = {}
    for cue in CUE_ORDER:
        predicted, actual = pairs[cue]
        stats[cue] = CueStats.from_counts(confusion(predicted, actual)) if predicted else None
    return CueReport(stats)


@dataclass(frozen=True)
class MetricsReport:
    itm: Optional[float]
    sim: float
    interaction_confusion: ConfusionMatrix
    cue_report: Optional[CueReport] = None
    parse_failure_count: int = 0
    metadata: Mapping[str, Any] = field(default_factory=dict)
    queries_issued: int = 0
    failed_segments: int = 0
    # Set when the run stopped early because of the failure budget
    partial: bool = False

    @classmethod
    def build(
        cls,
        predicted: Sequence[bool],
        truths: Sequence[bool],
        cue_report: Optional[CueReport] = None,
        **kwargs,
    ) -> "MetricsReport":
        cm = confusion(predicted, truths)
        return cls(itm(cm), sim(cm), cm, cue_report, **kwargs)

    @property
    def n_segments(self) -> int:
        return self.interaction_confusion.total

    def is_consistent(self) -> bool:
        """Whether ITM and SIM match the stored confusion matrix."""
        cm = self.interaction_confusion
        return self.itm == itm(cm) and self.sim == sim(cm)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "itm": self.itm,
            "sim": self.sim,
            "interaction_confusion": self.interaction_confusion.to_dict(),
            "cue_report": None if self.cue_report is None else self.cue_report.to_dict(),
            "parse_failure_count": self.parse_failure_count,
            "metadata": dict(self.metadata),
            "n_segments": self.n_segments,
            "queries_issued": self.queries_issued,
            "failed_segments": self.failed_segments,
            "partial": self.partial,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "MetricsReport":
        cue_report = data.get("cue_report")
        return cls(
            itm=data["itm"],
            sim=data["sim"],
            interaction_confusion=ConfusionMatrix.from_dict(data["interaction_confusion"]),
            cue_report=None if cue_report is None else CueReport.from_dict(cue_report),
            parse_failure_count=int(data.get("parse_failure_count", 0)),
            metadata=dict(data.get("metadata", {})),
            queries_issued=int(data.get("queries_issued", 0)),
            failed_segments=int(data.get("failed_segments", 0)),
            partial=bool(data.get("partial", False)),
        )


def run_key(metadata: Mapping[str, Any]) -> Tuple[Any, ...]:
    return tuple(metadata.get(name) for name in RUN_KEY_FIELDS)


def run_label(metadata: Mapping[str, Any]) -> str:
    return " ".join(
        f"{name}={metadata[name]}" for name in RUN_KEY_FIELDS if metadata.get(name) is not None
    )


def _sortable(key: Tuple[Any, ...]) -> Tuple[Tuple[int, float, str], ...]:
    """Numbers sort numerically, everything else as text, None first."""
    parts = []
    for value in key:
        if value is None:
            parts.append((0, 0.0, ""))
        elif isinstance(value, (int, float)) and not isinstance(value, bool):
            parts.append((1, float(value), ""))
        else:
            parts.append((2, 0.0, str(value)))
    return tuple(parts)


def _delta(value: Optional[float], base: Optional[float]) -> Optional[float]:
    if value is None or base is None:
        return None
    return value - base


@dataclass(frozen=True)
class ComparisonRow:
    label: str
    key: Tuple[Any, ...]
    itm: Optional[float]
    sim: float
    itm_delta: Optional[float]
    sim_delta: float
    baseline: bool


@dataclass(frozen=True)
class Comparison:
    rows: Tuple[ComparisonRow, ...]

    def write_csv(self, path: Path) -> Path:
        header = ("run", *RUN_KEY_FIELDS, "itm", "sim", "itm_delta", "sim_delta", "baseline")
        rows = [
            (row.label, *row.key, row.itm, row.sim, row.itm_delta, row.sim_delta, row.baseline)
            for row in self.rows
        ]
        return write_csv(path, header, rows)

    def to_markdown(self) -> str:
        """Two blocks: intervention timing and overall social interaction."""
        lines = []
        for title, value_of, delta_of in (
            ("Intervention Timing", lambda r: r.itm, lambda r: r.itm_delta),
            ("Overall Social Interaction: Macro F1", lambda r: r.sim, lambda r: r.sim_delta),
        ):
            lines += [f"### {title}", "", "| Run | % | Δ vs baseline |", "|---|---:|---:|"]
            for row in self.rows:
                delta = delta_of(row)
                delta_text = "n/a" if delta is None else f"{'+' if delta >= 0 else ''}{percent(delta)}"
                name = f"{row.label} (baseline)" if row.baseline else row.label
                lines.append(f"| {name} | {percent(value_of(row))} | {delta_text} |")
            lines.append("")
        return "\n".join(lines)

    def write_markdown(self, path: Path) -> Path:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_markdown(), encoding="utf-8")
        return path


def compare_runs(
    reports: Sequence[MetricsReport], baseline: int = 0, names: Optional[Sequence[str]] = None
) -> Comparison:
    """Tabulate ITM and SIM of several runs, sorted by their settings.

    Deltas are taken against reports[baseline]. Runs with equal settings
    need names to tell them apart.
    """
    if not reports:
        raise ValidationError("compare_runs needs at least one report")
    keys = [run_key(report.metadata) for report in reports]
    if names is not None and len(names) != len(reports):
        raise ValidationError("compare_runs needs one name per report")
    labels = [
        names[index] if names is not None else run_label(report.metadata) or f"run {index}"
        for index, report in enumerate(reports)
    ]
    if len(set(zip(keys, labels))) != len(keys):
        raise ValidationError("Two reports share the same run settings", field="metadata")
    base = reports[baseline]
    rows = [
        ComparisonRow(
            label=labels[index],
            key=key,
            itm=report.itm,
            sim=report.sim,
            itm_delta=_delta(report.itm, base.itm),
            sim_delta=report.sim - base.sim,
            baseline=index == baseline,
        )
        for index, (report, key) in enumerate(zip(reports, keys))
    ]
    rows.sort(key=lambda row: (_sortable(row.key), row.label))
    return Comparison(tuple(rows))
