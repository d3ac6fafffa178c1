# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.

"""
Prompt construction for remote multimodal models.

The wording lives in the plain text files of the templates folder. Bump
TEMPLATE_VERSION whenever one of them changes, cached answers are keyed by it.
"""

from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

from .cues import (
    CUE_ORDER,
    INTERACTION_QUESTION,
    Cue,
    DecisionQuery,
    Target,
)
from .dataset import Segment, SpeakerKind, Utterance
from .errors import ValidationError
from .util import fill_template

TEMPLATE_DIR = Path(__file__).parent / "templates"
TEMPLATE_VERSION = "1"
DEFAULT_FRAME_BUDGET = 10


class Modality(Enum):
    VIDEO_ONLY = "VIDEO_ONLY"
    AUDIO_VIDEO = "AUDIO_VIDEO"
    AUDIO_VIDEO_TEXT = "AUDIO_VIDEO_TEXT"
    # Transcript rendered as a conversation with speaker labels
    AUDIO_VIDEO_TEXT_CONV = "AUDIO_VIDEO_TEXT_CONV"

    @property
    def has_audio(self) -> bool:
        return self is not Modality.VIDEO_ONLY

    @property
    def has_text(self) -> bool:
        return self in (Modality.AUDIO_VIDEO_TEXT, Modality.AUDIO_VIDEO_TEXT_CONV)


@dataclass(frozen=True)
class ModalityConfig:
    mode: Modality = Modality.AUDIO_VIDEO_TEXT
    frame_budget: int = DEFAULT_FRAME_BUDGET

    def __post_init__(self):
        if isinstance(self.frame_budget, bool) or not isinstance(self.frame_budget, int):
            raise ValidationError("frame_budget must be an integer", field="frame_budget")
        if self.frame_budget < 1:
            raise ValidationError("frame_budget must be positive", field="frame_budget")

    def to_dict(self) -> Dict[str, Any]:
        return {"mode": self.mode.value, "frame_budget": self.frame_budget}

    @classmethod
    def from_dict(cls, data: Any) -> "ModalityConfig":
        """Accept {"mode": ..., "frame_budget": ...} or just the mode name."""
        if isinstance(data, str):
            data = {"mode": data}
        try:
            mode = Modality(str(data.get("mode", Modality.AUDIO_VIDEO_TEXT.value)).upper())
        except ValueError:
            raise ValidationError(f"Unknown modality {data.get('mode')!r}", field="modality") from None
        return cls(mode, data.get("frame_budget", DEFAULT_FRAME_BUDGET))


class PromptBase(Enum):
    # Raw cue questions
    AUTO = "AUTO"
    # Predicted cues as triplets
    GRAPH = "GRAPH"


@dataclass(frozen=True)
class PromptVariant:
    """Format of the decision prompt.

    dep: rely heavily on the given cues (GRAPH only)
    think: output the reasoning chain and the cues used
    hier: reason from environment level to personal attention cues
    """

    base: PromptBase = PromptBase.GRAPH
    dep: bool = False
    think: bool = False
    hier: bool = False

    def __post_init__(self):
        if self.dep and self.base is not PromptBase.GRAPH:
            raise ValidationError("dep requires the GRAPH prompt base", field="variant")

    @property
    def label(self) -> str:
        flags = [("Dep", self.dep), ("Think", self.think), ("H", self.hier)]
        return "-".join([self.base.value.title()] + [name for name, on in flags if on])

    def to_dict(self) -> Dict[str, Any]:
        return {
            "base": self.base.value,
            "dep": self.dep,
            "think": self.think,
            "hier": self.hier,
        }

    @classmethod
    def parse(cls, text: str) -> "PromptVariant":
        """Parse a compact form such as "GRAPH+dep+think" or "Graph-Dep-H"."""
        parts = [part.strip().lower() for part in text.replace("-", "+").split("+")]
        try:
            base = PromptBase(parts[0].upper())
        except ValueError:
            raise ValidationError(f"Unknown prompt base {parts[0]!r}", field="variant") from None
        flags = {"dep": False, "think": False, "hier": False}
        for part in parts[1:]:
            name = "hier" if part == "h" else part
            if name not in flags:
                raise ValidationError(f"Unknown prompt flag {part!r}", field="variant")
            flags[name] = True
        return cls(base, **flags)

    @classmethod
    def from_dict(cls, data: Any) -> "PromptVariant":
        if isinstance(data, str):
            return cls.parse(data)
        try:
            base = PromptBase(str(data.get("base", "GRAPH")).upper())
        except ValueError:
            raise ValidationError(f"Unknown prompt base {data.get('base')!r}", field="variant") from None
        return cls(
            base,
            dep=bool(data.get("dep", False)),
            think=bool(data.get("think", False)),
            hier=bool(data.get("hier", False)),
        )


@dataclass(frozen=True)
class MediaItem:
    kind: str  # "image" or "audio"
    reference: str

    def to_dict(self) -> Dict[str, str]:
        return {"kind": self.kind, "reference": self.reference}


@dataclass(frozen=True)
class Prompt:
    text: str
    media: Tuple[MediaItem, ...]


@lru_cache(maxsize=None)
def load_template(name: str) -> str:
    """Read a template file from the templates folder."""
    return (TEMPLATE_DIR / f"{name}.txt").read_text(encoding="utf-8").strip()


def sample_frame_indices(n_frames: int, budget: int) -> List[int]:
    """Evenly spaced frame indices, always including the first frame.

    Index i of k is floor(i * (n - 1) / (k - 1)).
    """
    if budget > n_frames:
        raise ValidationError(
            f"frame budget {budget} exceeds the {n_frames} frames of the segment",
            field="frame_budget",
        )
    if budget == 1:
        return [0]
    return [(i * (n_frames - 1)) // (budget - 1) for i in range(budget)]


def speaker_label(utterance: Utterance) -> str:
    speaker = utterance.speaker
    if speaker.kind is SpeakerKind.WEARER:
        return "Me"
    if speaker.kind is SpeakerKind.OTHER:
        return f"Speaker {speaker.number}"
    return "Speaker ?"


def format_transcript(transcript: Sequence[Utterance], conv: bool) -> str:
    """Render a transcript as plain text or as a labeled conversation."""
    ordered = sorted(transcript, key=lambda utt: utt.start_s)
    if conv:
        return "\n".join(f"{speaker_label(utt)}: {utt.text}" for utt in ordered)
    return " ".join(utt.text for utt in ordered if utt.text)


def render_triplet(cue: Cue, value: bool) -> str:
    return f"(wearer, {cue.question}, {'yes' if value else 'no'})"


def build_prompt(
    segment: Segment,
    target: Target,
    modality: ModalityConfig,
    variant: PromptVariant,
    prior_predictions: Optional[Mapping[Cue, bool]] = None,
) -> Prompt:
    """Build the prompt text and the ordered list of media attachments.

    Per cue questions do not depend on the variant; the variant only shapes
    the decision questions.
    """
    prior = dict(prior_predictions or {})
    parts = [load_template("preamble")]
    if isinstance(target, Cue):
        parts.append(fill_template(load_template("cue"), {"CUE_QUESTION": target.question}))
    elif target is DecisionQuery.DIRECT_DECISION:
        parts.append(
            fill_template(load_template("direct"), {"CUE_QUESTION": INTERACTION_QUESTION})
        )
    elif target is DecisionQuery.GUIDED_DECISION:
        if len(prior) != 1:
            raise ValidationError("A guided decision needs exactly one prior cue", field="prior")
        ((cue, value),) = prior.items()
        parts.append(
            fill_template(
                load_template("guided"),
                {"TRIPLETS": render_triplet(cue, value), "CUE_QUESTION": INTERACTION_QUESTION},
            )
        )
    elif variant.base is PromptBase.GRAPH:
        missing = [cue.name for cue in CUE_ORDER if cue not in prior]
        if missing:
            raise ValidationError(
                f"GRAPH decision prompt lacks prior cues {missing}", field="prior"
            )
        triplets = "\n".join(render_triplet(cue, prior[cue]) for cue in CUE_ORDER)
        parts.append(
            fill_template(
                load_template("final_graph"),
                {"TRIPLETS": triplets, "CUE_QUESTION": INTERACTION_QUESTION},
            )
        )
    else:
        questions = "\n".join(f"- {cue.question}" for cue in CUE_ORDER)
        parts.append(
            fill_template(
                load_template("final_auto"),
                {"QUESTIONS": questions, "CUE_QUESTION": INTERACTION_QUESTION},
            )
        )

    if modality.mode.has_text:
        if segment.transcript is None:
            raise ValidationError(
                f"{modality.mode.value} needs a transcript",
                segment_id=segment.segment_id,
                field="transcript",
            )
        conv = modality.mode is Modality.AUDIO_VIDEO_TEXT_CONV
        parts.append(
            fill_template(
                load_template("transcript"),
                {"TRANSCRIPT": format_transcript(segment.transcript, conv)},
            )
        )

    if isinstance(target, DecisionQuery):
        if variant.dep and target is not DecisionQuery.DIRECT_DECISION:
            parts.append(load_template("dep"))
        if variant.hier:
            parts.append(load_template("hier"))
        if variant.think:
            parts.append(load_template("think"))
    if not (isinstance(target, DecisionQuery) and variant.think):
        parts.append(load_template("answer"))

    media = [
        MediaItem("image", segment.frame_refs[index])
        for index in sample_frame_indices(len(segment.frame_times), modality.frame_budget)
    ]
    if modality.mode.has_audio:
        if segment.audio_ref is None:
            raise ValidationError(
                f"{modality.mode.value} needs an audio reference",
                segment_id=segment.segment_id,
                field="audio_ref",
            )
        media.append(MediaItem("audio", segment.audio_ref))
    return Prompt("\n".join(parts), tuple(media))
