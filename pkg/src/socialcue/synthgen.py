# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.

"""
Synthetic labeled datasets.

Every segment first picks a scenario (conversation, eating together, ...)
by weight, then draws each cue independently with the probability the
scenario assigns to it. Cues thus correlate through the mixture. Two
entailments are repaired afterwards: turn taking and being talked to both
imply that someone other than the wearer talks.

Segment i uses its own random stream seeded with (seed, i), so the output
does not depend on the order segments are generated in.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .cues import AUDIO_CUES, CUE_ORDER, Cue, CueVector
from .dataset import (
    DEFAULT_FRAME_RATE_HZ,
    DEFAULT_SEGMENT_DURATION_S,
    GROUND_TRUTH,
    WEARER,
    DatasetManifest,
    LabeledSegment,
    Provenance,
    Segment,
    Speaker,
    Utterance,
    frame_count,
    other,
)
from .errors import ValidationError

_UINT64 = 2 ** 64 - 1
SEGMENTS_PER_CLIP = 30

_LOREM = (
    "lorem ipsum dolor sit amet consectetur adipiscing elit sed do eiusmod "
    "tempor incididunt ut labore et dolore magna aliqua enim ad minim veniam "
    "quis nostrud exercitation ullamco laboris nisi aliquip ex ea commodo"
).split()


def _probability(value: Any, name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(f"{name} must be a number", field=name)
    if not 0.0 <= value <= 1.0:
        raise ValidationError(f"{name} must lie in [0, 1], got {value}", field=name)
    return float(value)


@dataclass(frozen=True)
class Scenario:
    name: str
    weight: float
    cue_probs: Mapping[Cue, float]

    def __post_init__(self):
        if not self.weight >= 0:
            raise ValidationError(
                f"Scenario {self.name} has a negative weight", field="scenarios.weight"
            )
        missing = [cue.value for cue in CUE_ORDER if cue not in self.cue_probs]
        if missing:
            raise ValidationError(
                f"Scenario {self.name} lacks probabilities for {missing}",
                field="scenarios.cue_probs",
            )

    def probabilities(self) -> np.ndarray:
        return np.array([self.cue_probs[cue] for cue in CUE_ORDER])

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "weight": self.weight,
            "cue_probs": {cue.value: self.cue_probs[cue] for cue in CUE_ORDER},
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Scenario":
        """Cues left out of cue_probs never occur."""
        name = str(data.get("name", "scenario"))
        weight = data.get("weight", 1.0)
        if isinstance(weight, bool) or not isinstance(weight, (int, float)):
            raise ValidationError("weight must be a number", field="scenarios.weight")
        given = data.get("cue_probs", {})
        if not isinstance(given, dict):
            raise ValidationError("cue_probs must be an object", field="scenarios.cue_probs")
        probs = {cue: 0.0 for cue in CUE_ORDER}
        for key, value in given.items():
            probs[Cue.parse(key)] = _probability(value, f"scenarios.cue_probs.{key}")
        return cls(name, float(weight), probs)


def scenario(name: str, weight: float, **probs: float) -> Scenario:
    """Shorthand: scenario("chat", 0.3, aud=0.9, udsd=0.8)."""
    return Scenario(name, weight, {cue: probs.get(cue.value, 0.0) for cue in CUE_ORDER})


def default_scenarios() -> List[Scenario]:
    """Everyday situations of a glasses wearer, roughly as often as they occur."""
    return [
        scenario(
            "conversation", 0.30,
            osad=0.95, stad=0.85, aud=0.85, udsd=0.80, pad=0.85, igd=0.70, ogd=0.75, sfd=0.10,
        ),
        scenario(
            "group game", 0.10,
            osad=0.90, stad=0.80, aud=0.55, udsd=0.60, pad=0.90, igd=0.45, ogd=0.50, sfd=0.60,
        ),
        scenario(
            "eating together", 0.15,
            osad=0.70, stad=0.55, aud=0.50, udsd=0.45, pad=0.90, igd=0.40, ogd=0.45, sfd=0.50,
        ),
        scenario(
            "solo device use", 0.20,
            osad=0.10, stad=0.02, aud=0.02, udsd=0.03, pad=0.10, igd=0.02, ogd=0.03, sfd=0.90,
        ),
        scenario(
            "walking alone", 0.15,
            osad=0.20, stad=0.05, aud=0.02, udsd=0.02, pad=0.25, igd=0.05, ogd=0.10, sfd=0.15,
        ),
        scenario(
            "overheard chatter", 0.10,
            osad=0.95, stad=0.70, aud=0.05, udsd=0.03, pad=0.40, igd=0.10, ogd=0.20, sfd=0.30,
        ),
    ]


@dataclass(frozen=True)
class GeneratorConfig:
    n_segments: int
    scenarios: Tuple[Scenario, ...] = field(default_factory=lambda: tuple(default_scenarios()))
    seed: int = 0
    frame_rate_hz: float = DEFAULT_FRAME_RATE_HZ
    segment_duration_s: float = DEFAULT_SEGMENT_DURATION_S
    emit_transcripts: bool = True
    name: str = "synthetic"

    def __post_init__(self):
        if isinstance(self.n_segments, bool) or not isinstance(self.n_segments, int):
            raise ValidationError("n_segments must be an integer", field="n_segments")
        if self.n_segments < 1:
            raise ValidationError("n_segments must be at least 1", field="n_segments")
        if not self.scenarios:
            raise ValidationError("At least one scenario is required", field="scenarios")
        if not sum(s.weight for s in self.scenarios) > 0:
            raise ValidationError("Scenario weights sum to zero", field="scenarios")
        if isinstance(self.seed, bool) or not isinstance(self.seed, int):
            raise ValidationError("seed must be an integer", field="seed")
        if not self.frame_rate_hz > 0 or not self.segment_duration_s > 0:
            raise ValidationError(
                "frame rate and segment duration must be positive", field="frame_rate_hz"
            )

    def weights(self) -> np.ndarray:
        weights = np.array([s.weight for s in self.scenarios], dtype=float)
        return weights / weights.sum()

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n_segments": self.n_segments,
            "scenarios": [s.to_dict() for s in self.scenarios],
            "seed": self.seed,
            "frame_rate_hz": self.frame_rate_hz,
            "segment_duration_s": self.segment_duration_s,
            "emit_transcripts": self.emit_transcripts,
            "name": self.name,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "GeneratorConfig":
        """Without a scenarios list the built in mixture is used."""
        if "n_segments" not in data:
            raise ValidationError("n_segments is required", field="n_segments")
        scenarios = data.get("scenarios")
        if scenarios is None:
            parsed = tuple(default_scenarios())
        elif isinstance(scenarios, list):
            parsed = tuple(Scenario.from_dict(s) for s in scenarios)
        else:
            raise ValidationError("scenarios must be a list", field="scenarios")
        return cls(
            n_segments=data["n_segments"],
            scenarios=parsed,
            seed=data.get("seed", 0),
            frame_rate_hz=float(data.get("frame_rate_hz", DEFAULT_FRAME_RATE_HZ)),
            segment_duration_s=float(data.get("segment_duration_s", DEFAULT_SEGMENT_DURATION_S)),
            emit_transcripts=bool(data.get("emit_transcripts", True)),
            name=str(data.get("name", "synthetic")),
        )


def consistency_repair(raw: CueVector) -> CueVector:
    """Turn taking (STAD) and speech addressed to the wearer (AUD) both
    imply other speaker activity (OSAD)."""
    if (raw.stad or raw.aud) and not raw.osad:
        return raw.replace({Cue.OSAD: True})
    return raw


def _speakers(cues: CueVector) -> List[Speaker]:
    if cues.stad:
        if cues.udsd:
            return [WEARER, other(1), WEARER, other(1)]
        return [other(1), other(2), other(1)]
    speakers = []
    if cues.osad:
        speakers.append(other(1))
    if cues.udsd:
        speakers.append(WEARER)
    return speakers


def synthesize_transcript(
    cues: CueVector, duration_s: float, rng: np.random.Generator
) -> Tuple[Utterance, ...]:
    """Filler utterances whose speakers and turns fit the audio cues."""
    speakers = _speakers(cues)
    if not speakers:
        return ()
    slot = duration_s / len(speakers)
    utterances = []
    for index, speaker in enumerate(speakers):
        start = round(index * slot, 3)
        words = rng.choice(_LOREM, size=int(rng.integers(3, 9)))
        utterances.append(
            Utterance(speaker, start, round(start + 0.8 * slot, 3), " ".join(words))
        )
    return tuple(utterances)


def _segment(config: GeneratorConfig, index: int, cues: CueVector, rng) -> Segment:
    duration = config.segment_duration_s
    n_frames = frame_count(duration, config.frame_rate_hz)
    frame_times = tuple(float(t) for t in np.arange(n_frames) / config.frame_rate_hz)
    clip_id = f"synclip-{index // SEGMENTS_PER_CLIP:05d}"
    segment_id = f"syn-{index:06d}"
    return Segment(
        segment_id=segment_id,
        clip_id=clip_id,
        start_s=(index % SEGMENTS_PER_CLIP) * duration,
        duration_s=duration,
        frame_times=frame_times,
        frame_refs=tuple(f"synthetic://{segment_id}/frame/{i}" for i in range(n_frames)),
        audio_ref=f"synthetic://{segment_id}/audio",
        transcript=synthesize_transcript(cues, duration, rng) if config.emit_transcripts else None,
    )


def generate_segment(config: GeneratorConfig, index: int) -> LabeledSegment:
    """Segment number index of the dataset config describes."""
    rng = np.random.default_rng([config.seed & _UINT64, index])
    chosen = config.scenarios[int(rng.choice(len(config.scenarios), p=config.weights()))]
    raw = CueVector.from_values(rng.random(len(CUE_ORDER)) < chosen.probabilities())
    cues = consistency_repair(raw)
    return LabeledSegment.from_consensus(
        _segment(config, index, cues, rng), cues, Provenance.SYNTHETIC
    )


def generate(config: GeneratorConfig) -> DatasetManifest:
    segments = tuple(generate_segment(config, index) for index in range(config.n_segments))
    logging.info("Generated %i synthetic segments (seed %i)", len(segments), config.seed)
    return DatasetManifest(
        name=config.name,
        segments=segments,
        frame_rate_hz=config.frame_rate_hz,
        segment_duration_s=config.segment_duration_s,
    )


def _joint(probs: Mapping[Cue, float], first: Cue, second: Cue) -> float:
    """P(first and second) within one scenario, after repair."""
    if first is second:
        return _marginal(probs, first)
    if second is Cue.OSAD:
        first, second = second, first
    if first is Cue.OSAD:
        if second in (Cue.STAD, Cue.AUD):
            return probs[second]
        return _marginal(probs, Cue.OSAD) * probs[second]
    return probs[first] * probs[second]


def _marginal(probs: Mapping[Cue, float], cue: Cue) -> float:
    if cue is Cue.OSAD:
        return 1 - (1 - probs[Cue.OSAD]) * (1 - probs[Cue.STAD]) * (1 - probs[Cue.AUD])
    return probs[cue]


def implied_prevalences(config: GeneratorConfig) -> Dict[str, float]:
    """Expected positive rate of every cue and of the ground truth."""
    rates = {cue.value: 0.0 for cue in CUE_ORDER}
    rates[GROUND_TRUTH] = 0.0
    for weight, chosen in zip(config.weights(), config.scenarios):
        probs = chosen.cue_probs
        for cue in CUE_ORDER:
            rates[cue.value] += weight * _marginal(probs, cue)
        rates[GROUND_TRUTH] += weight * (1 - (1 - probs[Cue.AUD]) * (1 - probs[Cue.UDSD]))
    return {name: float(rate) for name, rate in rates.items()}


def implied_correlation(config: GeneratorConfig, first: Cue, second: Cue) -> Optional[float]:
    """Expected Pearson correlation of two cues over the mixture. None if
    either cue is constant."""
    weights = config.weights()
    joint = sum(w * _joint(s.cue_probs, first, second) for w, s in zip(weights, config.scenarios))
    mean_first = sum(w * _marginal(s.cue_probs, first) for w, s in zip(weights, config.scenarios))
    mean_second = sum(w * _marginal(s.cue_probs, second) for w, s in zip(weights, config.scenarios))
    variance = mean_first * (1 - mean_first) * mean_second * (1 - mean_second)
    if variance <= 0:
        return None
    return float((joint - mean_first * mean_second) / math.sqrt(variance))


def audio_consistent(labeled: LabeledSegment) -> bool:
    """Whether a transcript fits the audio cues of its segment."""
    transcript: Sequence[Utterance] = labeled.segment.transcript or ()
    cues = labeled.consensus
    kinds = [utt.speaker for utt in transcript]
    if not any(cues[cue] for cue in AUDIO_CUES):
        return not transcript
    if cues.osad and not any(s != WEARER for s in kinds):
        return False
    if cues.udsd and WEARER not in kinds:
        return False
    if cues.stad:
        changes = sum(a != b for a, b in zip(kinds, kinds[1:]))
        if len(set(kinds)) < 2 or changes < 1:
            return False
    return True
