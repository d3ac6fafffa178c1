# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.

"""
Data model of the social interaction benchmark.

Segments are 10 second windows of egocentric clips, sampled at 1 fps. Each
labeled segment carries the consensus of the eight cues and the ground truth
interaction label, which is always AUD or UDSD.

Manifests are JSON Lines files: an optional header line
{"manifest": {"name": ..., "frame_rate_hz": ..., "segment_duration_s": ...}}
followed by one segment per line. A segment line holds either the consensus
"cues" or the raw "annotations" of several annotators.
"""

import json
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .cues import CUE_ORDER, QUESTIONS_PER_SEGMENT, Cue, CueVector
from .errors import ManifestError, ValidationError
from .util import atomic_write_text, canonical_json, write_csv

DEFAULT_FRAME_RATE_HZ = 1.0
DEFAULT_SEGMENT_DURATION_S = 10.0
GROUND_TRUTH = "ground_truth"
MIN_HIGH_CONFIDENCE_VOTES = 2


class SpeakerKind(Enum):
    WEARER = "WEARER"
    OTHER = "OTHER"
    UNKNOWN = "UNKNOWN"


@dataclass(frozen=True)
class Speaker:
    """Who spoke an utterance. OTHER speakers carry a small integer id."""

    kind: SpeakerKind
    number: Optional[int] = None

    def __post_init__(self):
        if (self.kind is SpeakerKind.OTHER) != (self.number is not None):
            raise ValidationError("Only OTHER speakers carry a number", field="speaker")

    def __str__(self):
        if self.kind is SpeakerKind.OTHER:
            return f"OTHER:{self.number}"
        return self.kind.value

    @classmethod
    def parse(cls, tag: str) -> "Speaker":
        """Parse "WEARER", "UNKNOWN" or "OTHER:<n>"."""
        if tag in ("WEARER", "UNKNOWN"):
            return cls(SpeakerKind(tag))
        kind, _, number = tag.partition(":")
        if kind == "OTHER" and number.isdigit():
            return cls(SpeakerKind.OTHER, int(number))
        raise ValidationError(f"Invalid speaker tag {tag!r}", field="speaker")


WEARER = Speaker(SpeakerKind.WEARER)
UNKNOWN_SPEAKER = Speaker(SpeakerKind.UNKNOWN)


def other(number: int) -> Speaker:
    return Speaker(SpeakerKind.OTHER, number)


@dataclass(frozen=True)
class Utterance:
    speaker: Speaker
    start_s: float
    end_s: float
    text: str
    nonverbal: bool = False

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {
            "speaker": str(self.speaker),
            "start_s": self.start_s,
            "end_s": self.end_s,
            "text": self.text,
        }
        if self.nonverbal:
            data["nonverbal"] = True
        return data

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Utterance":
        return cls(
            speaker=Speaker.parse(_require(data, "speaker", str)),
            start_s=float(_require(data, "start_s", (int, float))),
            end_s=float(_require(data, "end_s", (int, float))),
            text=_require(data, "text", str),
            nonverbal=bool(data.get("nonverbal", False)),
        )


@dataclass(frozen=True)
class Segment:
    """One window of an egocentric clip."""

    segment_id: str
    clip_id: str
    start_s: float
    duration_s: float = DEFAULT_SEGMENT_DURATION_S
    frame_times: Tuple[float, ...] = ()
    frame_refs: Tuple[str, ...] = ()
    audio_ref: Optional[str] = None
    transcript: Optional[Tuple[Utterance, ...]] = None

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {
            "segment_id": self.segment_id,
            "clip_id": self.clip_id,
            "start_s": self.start_s,
            "duration_s": self.duration_s,
            "frame_times": list(self.frame_times),
            "frame_refs": list(self.frame_refs),
        }
        if self.audio_ref is not None:
            data["audio_ref"] = self.audio_ref
        if self.transcript is not None:
            data["transcript"] = [utt.to_dict() for utt in self.transcript]
        return data

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Segment":
        transcript = data.get("transcript")
        if transcript is not None:
            if not isinstance(transcript, list):
                raise ValidationError("transcript must be a list", field="transcript")
            transcript = tuple(Utterance.from_dict(utt) for utt in transcript)
        audio_ref = data.get("audio_ref")
        if audio_ref is not None and not isinstance(audio_ref, str):
            raise ValidationError("audio_ref must be a string", field="audio_ref")
        return cls(
            segment_id=_require(data, "segment_id", str),
            clip_id=_require(data, "clip_id", str),
            start_s=float(_require(data, "start_s", (int, float))),
            duration_s=float(_require(data, "duration_s", (int, float)))
            if "duration_s" in data
            else DEFAULT_SEGMENT_DURATION_S,
            frame_times=tuple(float(t) for t in _require(data, "frame_times", list)),
            frame_refs=tuple(str(ref) for ref in _require(data, "frame_refs", list)),
            audio_ref=audio_ref,
            transcript=transcript,
        )


class Confidence(Enum):
    LOW = "LOW"
    HIGH = "HIGH"


@dataclass(frozen=True)
class AnnotationRecord:
    """The eight answers of one annotator for one segment."""

    segment_id: str
    annotator_id: str
    cues: Mapping[Cue, bool]
    confidence: Mapping[Cue, Confidence]

    def __post_init__(self):
        for cue in CUE_ORDER:
            if cue not in self.cues or cue not in self.confidence:
                raise ValidationError(
                    f"Annotation by {self.annotator_id} lacks {cue}",
                    segment_id=self.segment_id,
                    field="annotations",
                )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "annotator_id": self.annotator_id,
            "cues": {cue.value: self.cues[cue] for cue in CUE_ORDER},
            "confidence": {cue.value: self.confidence[cue].value for cue in CUE_ORDER},
        }

    @classmethod
    def from_dict(cls, segment_id: str, data: Mapping[str, Any]) -> "AnnotationRecord":
        cues = CueVector.from_dict(_require(data, "cues", dict))
        confidence = _require(data, "confidence", dict)
        try:
            levels = {cue: Confidence(confidence[cue.value]) for cue in CUE_ORDER}
        except (KeyError, ValueError) as error:
            raise ValidationError(
                f"Invalid confidence entry {error}",
                segment_id=segment_id,
                field="confidence",
            ) from None
        return cls(
            segment_id=segment_id,
            annotator_id=str(_require(data, "annotator_id", str)),
            cues=dict(cues),
            confidence=levels,
        )


class Provenance(Enum):
    CONSENSUS = "CONSENSUS"
    SYNTHETIC = "SYNTHETIC"
    IMPORTED = "IMPORTED"


def derive_ground_truth(cues: CueVector) -> bool:
    """A segment is a social interaction iff someone talks to the wearer or
    the wearer talks."""
    return cues.aud or cues.udsd


@dataclass(frozen=True)
class LabeledSegment:
    segment: Segment
    consensus: CueVector
    ground_truth_interaction: bool
    provenance: Provenance = Provenance.IMPORTED

    def __post_init__(self):
        if self.ground_truth_interaction != derive_ground_truth(self.consensus):
            raise ValidationError(
                "ground_truth must equal aud or udsd",
                segment_id=self.segment.segment_id,
                field=GROUND_TRUTH,
            )

    @property
    def segment_id(self) -> str:
        return self.segment.segment_id

    @classmethod
    def from_consensus(
        cls, segment: Segment, consensus: CueVector, provenance: Provenance
    ) -> "LabeledSegment":
        return cls(segment, consensus, derive_ground_truth(consensus), provenance)

    def to_dict(self) -> Dict[str, Any]:
        data = self.segment.to_dict()
        data["cues"] = self.consensus.to_dict()
        data[GROUND_TRUTH] = self.ground_truth_interaction
        data["provenance"] = self.provenance.value
        return data


@dataclass(frozen=True)
class DatasetManifest:
    name: str
    segments: Tuple[LabeledSegment, ...]
    frame_rate_hz: float = DEFAULT_FRAME_RATE_HZ
    segment_duration_s: float = DEFAULT_SEGMENT_DURATION_S
    # Ids of raw segments dropped because annotators did not agree
    discarded: Tuple[str, ...] = field(default=())

    def __len__(self):
        return len(self.segments)

    @property
    def pair_count(self) -> int:
        return len(self.segments) * QUESTIONS_PER_SEGMENT

    def header(self) -> Dict[str, Any]:
        return {
            "manifest": {
                "name": self.name,
                "frame_rate_hz": self.frame_rate_hz,
                "segment_duration_s": self.segment_duration_s,
            }
        }


@dataclass(frozen=True)
class Violation:
    """A manifest invariant that does not hold."""

    message: str
    segment_id: Optional[str] = None
    field: Optional[str] = None
    line: Optional[int] = None

    def __str__(self):
        where = []
        if self.line is not None:
            where.append(f"line {self.line}")
        if self.segment_id is not None:
            where.append(f"segment {self.segment_id}")
        if self.field is not None:
            where.append(f"field {self.field}")
        prefix = ", ".join(where)
        return f"{prefix}: {self.message}" if prefix else self.message

    def to_error(self) -> ManifestError:
        return ManifestError(
            self.message, line=self.line, segment_id=self.segment_id, field=self.field
        )


def _require(data: Mapping[str, Any], key: str, kind) -> Any:
    if key not in data:
        raise ValidationError(f"Missing field {key}", field=key)
    value = data[key]
    if isinstance(value, bool) and kind in ((int, float), int, float):
        raise ValidationError(f"Field {key} must be a number", field=key)
    if not isinstance(value, kind):
        raise ValidationError(f"Field {key} has the wrong type", field=key)
    return value


def frame_count(duration_s: float, frame_rate_hz: float) -> int:
    """Number of frames sampled at 0, 1/rate, 2/rate, ... before duration_s."""
    return int(math.ceil(duration_s * frame_rate_hz - 1e-9))


def segmentize_clip(
    clip_id: str,
    clip_duration_s: float,
    window_s: float = DEFAULT_SEGMENT_DURATION_S,
    frame_rate_hz: float = DEFAULT_FRAME_RATE_HZ,
) -> List[Segment]:
    """Cut a clip into consecutive non overlapping windows.

    A trailing remainder shorter than the window is dropped.
    """
    for name, value in (
        ("clip_duration_s", clip_duration_s),
        ("window_s", window_s),
        ("frame_rate_hz", frame_rate_hz),
    ):
        if not value > 0:
            raise ValidationError(f"{name} must be positive, got {value}", field=name)
    count = int(math.floor(clip_duration_s / window_s + 1e-9))
    n_frames = frame_count(window_s, frame_rate_hz)
    frame_times = tuple(float(t) for t in np.arange(n_frames) / frame_rate_hz)
    segments = []
    for index in range(count):
        start = index * window_s
        segments.append(
            Segment(
                segment_id=f"{clip_id}_{index:04d}",
                clip_id=clip_id,
                start_s=start,
                duration_s=window_s,
                frame_times=frame_times,
                frame_refs=tuple(f"{clip_id}@{start + t:.3f}s" for t in frame_times),
                audio_ref=f"{clip_id}@{start:.3f}s+{window_s:g}s",
            )
        )
    return segments


class _Discard(Enum):
    DISCARD = "DISCARD"

    def __repr__(self):
        return "DISCARD"


DISCARD = _Discard.DISCARD
VoteOutcome = Union[bool, _Discard]


def majority_vote(records: Sequence[AnnotationRecord]) -> Dict[Cue, VoteOutcome]:
    """Aggregate the annotations of one segment cue by cue.

    A value is accepted if at least two annotators gave it with high
    confidence. Otherwise the cue is DISCARD.
    """
    if not records:
        raise ValidationError("majority_vote needs at least one record")
    segment_ids = {record.segment_id for record in records}
    if len(segment_ids) > 1:
        raise ValidationError(
            f"Annotation records of different segments: {sorted(segment_ids)}",
            field="segment_id",
        )
    outcome: Dict[Cue, VoteOutcome] = {}
    for cue in CUE_ORDER:
        votes = Counter(
            record.cues[cue]
            for record in records
            if record.confidence[cue] is Confidence.HIGH
        )
        accepted = [
            value for value, count in votes.items() if count >= MIN_HIGH_CONFIDENCE_VOTES
        ]
        # With more than three annotators both values could qualify
        outcome[cue] = accepted[0] if len(accepted) == 1 else DISCARD
    return outcome


def aggregate_annotations(records: Sequence[AnnotationRecord]) -> Optional[CueVector]:
    """Consensus cue vector, or None if any cue had to be discarded."""
    annotators = [record.annotator_id for record in records]
    if len(set(annotators)) != len(annotators):
        raise ValidationError(
            "Duplicate annotator",
            segment_id=records[0].segment_id if records else None,
            field="annotations",
        )
    outcome = majority_vote(records)
    if any(value is DISCARD for value in outcome.values()):
        return None
    return CueVector.from_mapping(outcome)  # type: ignore


def segment_violations(
    segment: Segment, frame_rate_hz: float = DEFAULT_FRAME_RATE_HZ
) -> List[Violation]:
    """Check the invariants of a single segment."""
    sid = segment.segment_id
    found: List[Violation] = []

    def violation(message, name):
        found.append(Violation(message, segment_id=sid, field=name))

    if not segment.duration_s > 0:
        violation("duration must be positive", "duration_s")
    if segment.start_s < 0:
        violation("start must not be negative", "start_s")
    times = segment.frame_times
    if any(later <= earlier for earlier, later in zip(times, times[1:])):
        violation("frame times must be strictly increasing", "frame_times")
    if any(not 0 <= t < segment.duration_s for t in times):
        violation("frame times must lie in [0, duration)", "frame_times")
    expected_frames = frame_count(segment.duration_s, frame_rate_hz)
    if len(times) != expected_frames:
        violation(
            f"expected {expected_frames} frames at {frame_rate_hz:g} Hz, got {len(times)}",
            "frame_times",
        )
    if len(segment.frame_refs) != len(times):
        violation("frame_refs and frame_times differ in length", "frame_refs")
    transcript = segment.transcript or ()
    starts = [utt.start_s for utt in transcript]
    if starts != sorted(starts):
        violation("utterances must be ordered by start", "transcript")
    for utt in transcript:
        if not 0 <= utt.start_s < utt.end_s <= segment.duration_s:
            violation(
                f"utterance [{utt.start_s}, {utt.end_s}] outside the segment",
                "transcript",
            )
        if not utt.text and not utt.nonverbal:
            violation("empty utterance text without nonverbal flag", "transcript")
    return found


def _parse_line(
    data: Mapping[str, Any], frame_rate_hz: float, line: int
) -> Tuple[Optional[LabeledSegment], Optional[str], List[Violation]]:
    """Parse one segment line.

    Returns the labeled segment (None if invalid or discarded), the id of a
    discarded segment and the violations found.
    """
    segment_id = data.get("segment_id")
    try:
        segment = Segment.from_dict(data)
    except ValidationError as error:
        return None, None, [
            Violation(str(error), segment_id=segment_id, field=error.field, line=line)
        ]
    except (ValueError, TypeError) as error:
        return None, None, [Violation(str(error), segment_id=segment_id, line=line)]
    sid = segment.segment_id
    violations = [
        Violation(v.message, v.segment_id, v.field, line)
        for v in segment_violations(segment, frame_rate_hz)
    ]
    try:
        provenance = Provenance(data.get("provenance", Provenance.IMPORTED.value))
        if "cues" in data:
            consensus: Optional[CueVector] = CueVector.from_dict(data["cues"])
        elif "annotations" in data:
            records = [
                AnnotationRecord.from_dict(sid, record)
                for record in data["annotations"]
            ]
            consensus = aggregate_annotations(records)
            provenance = Provenance.CONSENSUS
        else:
            raise ValidationError("Segment has neither cues nor annotations", field="cues")
    except ValidationError as error:
        violations.append(Violation(str(error), sid, error.field or "cues", line))
        return None, None, violations
    except (ValueError, TypeError, AttributeError) as error:
        violations.append(Violation(str(error), sid, "cues", line))
        return None, None, violations
    if consensus is None:
        return None, sid, violations
    stated = data.get(GROUND_TRUTH)
    derived = derive_ground_truth(consensus)
    if stated is not None and stated != derived:
        violations.append(
            Violation(
                f"ground_truth is {stated} but aud or udsd is {derived}",
                sid,
                GROUND_TRUTH,
                line,
            )
        )
    if violations:
        return None, None, violations
    return LabeledSegment(segment, consensus, derived, provenance), None, violations


def _read_header(value: Any, line: int) -> Tuple[Dict[str, Any], List[Violation]]:
    """Header fields with their defaults; invalid fields fall back to the default."""
    if not isinstance(value, dict):
        return {}, [Violation("manifest header is not an object", field="manifest", line=line)]
    header = dict(value)
    found: List[Violation] = []
    for key, default in (
        ("frame_rate_hz", DEFAULT_FRAME_RATE_HZ),
        ("segment_duration_s", DEFAULT_SEGMENT_DURATION_S),
    ):
        number = header.get(key, default)
        if isinstance(number, bool) or not isinstance(number, (int, float)) or not number > 0:
            found.append(
                Violation(f"{key} must be a positive number, got {number!r}", field=key, line=line)
            )
            header[key] = default
    return header, found


def read_manifest(path: Path) -> Tuple[DatasetManifest, List[Violation]]:
    """Parse a manifest and collect every violation instead of stopping at the
    first one. Invalid segments are left out of the returned manifest."""
    path = Path(path)
    header: Dict[str, Any] = {}
    segments: List[LabeledSegment] = []
    discarded: List[str] = []
    violations: List[Violation] = []
    seen: Dict[str, int] = {}
    header_line: Optional[int] = None
    with open(path, "rb") as manifest_file:
        for line_number, raw in enumerate(manifest_file, 1):
            try:
                line = raw.decode("utf-8").strip()
            except UnicodeDecodeError as error:
                violations.append(Violation(f"invalid UTF-8: {error}", line=line_number))
                continue
            if not line:
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as error:
                violations.append(Violation(f"invalid JSON: {error}", line=line_number))
                continue
            if not isinstance(data, dict):
                violations.append(Violation("record is not an object", line=line_number))
                continue
            if "manifest" in data:
                if segments or header_line is not None:
                    violations.append(
                        Violation("header must be the first line", line=line_number)
                    )
                header_line = line_number
                header, found = _read_header(data["manifest"], line_number)
                violations.extend(found)
                continue
            frame_rate = float(header.get("frame_rate_hz", DEFAULT_FRAME_RATE_HZ))
            labeled, dropped, found = _parse_line(data, frame_rate, line_number)
            violations.extend(found)
            sid = labeled.segment_id if labeled else dropped or data.get("segment_id")
            if isinstance(sid, str):
                if sid in seen:
                    violations.append(
                        Violation(
                            f"duplicate segment id, first seen on line {seen[sid]}",
                            sid,
                            "segment_id",
                            line_number,
                        )
                    )
                    continue
                seen[sid] = line_number
            if labeled is not None:
                segments.append(labeled)
            if dropped is not None:
                logging.warning("Discarding %s: annotators did not agree", dropped)
                discarded.append(dropped)
    manifest = DatasetManifest(
        name=str(header.get("name", path.stem)),
        segments=tuple(segments),
        frame_rate_hz=float(header.get("frame_rate_hz", DEFAULT_FRAME_RATE_HZ)),
        segment_duration_s=float(
            header.get("segment_duration_s", DEFAULT_SEGMENT_DURATION_S)
        ),
        discarded=tuple(discarded),
    )
    return manifest, violations


def load_manifest(path: Path) -> DatasetManifest:
    """Load and fully validate a manifest.

    Raises ManifestError for the first violation found.
    """
    manifest, violations = read_manifest(path)
    if violations:
        for violation in violations[1:]:
            logging.debug("Further violation: %s", violation)
        raise violations[0].to_error()
    logging.debug("Loaded %i segments from %s", len(manifest), path)
    return manifest


def dump_manifest(manifest: DatasetManifest, path: Path) -> Path:
    """Write a manifest as JSON Lines, header first."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as manifest_file:
        manifest_file.write(canonical_json(manifest.header()) + "\n")
        for labeled in manifest.segments:
            manifest_file.write(canonical_json(labeled.to_dict()) + "\n")
    return path


VARIABLES: Tuple[str, ...] = tuple(cue.value for cue in CUE_ORDER) + (GROUND_TRUTH,)


def _label_matrix(manifest: DatasetManifest) -> np.ndarray:
    """n x 9 matrix of 0/1 labels: the eight cues and the ground truth."""
    return np.array(
        [
            labeled.consensus.as_tuple() + (labeled.ground_truth_interaction,)
            for labeled in manifest.segments
        ],
        dtype=float,
    ).reshape(len(manifest.segments), len(VARIABLES))


@dataclass(frozen=True)
class DistributionReport:
    n_segments: int
    pairs: int
    positives: Dict[str, int]
    rates: Dict[str, float]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n_segments": self.n_segments,
            "pairs": self.pairs,
            "positives": dict(self.positives),
            "rates": dict(self.rates),
        }

    def write_csv(self, path: Path) -> Path:
        rows = [
            (name, self.positives[name], self.n_segments, self.rates[name])
            for name in VARIABLES
        ]
        return write_csv(path, ("variable", "positives", "segments", "rate"), rows)

    def write_json(self, path: Path) -> Path:
        atomic_write_text(Path(path), json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n")
        return Path(path)


def distribution_report(manifest: DatasetManifest) -> DistributionReport:
    """Positive counts and rates per cue and for the ground truth."""
    if not manifest.segments:
        raise ValidationError("Cannot report on an empty manifest")
    labels = _label_matrix(manifest)
    counts = labels.sum(axis=0)
    n = len(manifest.segments)
    return DistributionReport(
        n_segments=n,
        pairs=manifest.pair_count,
        positives={name: int(count) for name, count in zip(VARIABLES, counts)},
        rates={name: float(count) / n for name, count in zip(VARIABLES, counts)},
    )


@dataclass(frozen=True)
class CorrelationMatrix:
    """Pearson (phi) coefficients; None marks an undefined coefficient."""

    names: Tuple[str, ...]
    values: Tuple[Tuple[Optional[float], ...], ...]

    def __getitem__(self, pair: Tuple[str, str]) -> Optional[float]:
        row, col = pair
        return self.values[self.names.index(row)][self.names.index(col)]

    def to_dict(self) -> Dict[str, Any]:
        return {"names": list(self.names), "values": [list(row) for row in self.values]}

    def write_csv(self, path: Path) -> Path:
        rows = [(name, *row) for name, row in zip(self.names, self.values)]
        return write_csv(path, ("", *self.names), rows)


def cue_correlation_matrix(manifest: DatasetManifest) -> CorrelationMatrix:
    """Correlation between every pair of cues and the ground truth.

    Columns without variance have no defined correlation; their rows and
    columns are filled with None.
    """
    if len(manifest.segments) < 2:
        raise ValidationError("Correlation needs at least two segments")
    labels = _label_matrix(manifest)
    size = len(VARIABLES)
    defined = labels.std(axis=0) > 0
    matrix: List[List[Optional[float]]] = [[None] * size for _ in range(size)]
    index = np.flatnonzero(defined)
    if index.size:
        coefficients = np.atleast_2d(np.corrcoef(labels[:, index], rowvar=False))
        coefficients = np.clip((coefficients + coefficients.T) / 2, -1.0, 1.0)
        np.fill_diagonal(coefficients, 1.0)
        for i, row in enumerate(index):
            for j, col in enumerate(index):
                matrix[row][col] = float(coefficients[i, j])
    return CorrelationMatrix(VARIABLES, tuple(tuple(row) for row in matrix))
