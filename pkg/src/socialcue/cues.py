# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.

"""
The eight social cues and the boolean vector holding one value per cue.

The cue order (OSAD, STAD, AUD, UDSD, PAD, IGD, OGD, SFD) is the
serialization order everywhere in this package.
"""

from dataclasses import dataclass, fields
from enum import Enum
from typing import Dict, Iterable, Iterator, Mapping, Tuple, Union

from .errors import ValidationError


class Cue(Enum):
    """A binary social signal about a segment."""

    OSAD = "osad"
    STAD = "stad"
    AUD = "aud"
    UDSD = "udsd"
    PAD = "pad"
    IGD = "igd"
    OGD = "ogd"
    SFD = "sfd"

    @property
    def question(self) -> str:
        return CUE_QUESTIONS[self]

    @property
    def is_audio(self) -> bool:
        return self in AUDIO_CUES

    @classmethod
    def parse(cls, name: str) -> "Cue":
        """Look up a cue by its (case insensitive) short name."""
        try:
            return cls(name.strip().lower())
        except ValueError:
            raise ValidationError(f"Unknown cue {name!r}", field="cue") from None

    def __str__(self):
        return self.name


class DecisionQuery(Enum):
    """Questions about the whole segment rather than a single cue."""

    # Decision given all eight cues (auto questions or graph triplets)
    FINAL_DECISION = "final_decision"
    # Unguided baseline question
    DIRECT_DECISION = "direct_decision"
    # Decision given a single predicted cue
    GUIDED_DECISION = "guided_decision"

    def __str__(self):
        return self.name


Target = Union[Cue, DecisionQuery]

CUE_ORDER: Tuple[Cue, ...] = tuple(Cue)
AUDIO_CUES = frozenset({Cue.OSAD, Cue.STAD, Cue.AUD, Cue.UDSD})
VISUAL_CUES = frozenset({Cue.PAD, Cue.IGD, Cue.OGD, Cue.SFD})

CUE_QUESTIONS: Dict[Cue, str] = {
    Cue.OSAD: "Is someone else talking?",
    Cue.STAD: "Are people talking in turns?",
    Cue.AUD: "Is someone talking to me?",
    Cue.UDSD: "Am I talking?",
    Cue.PAD: "Are people in personal space?",
    Cue.IGD: "Is someone looking at me?",
    Cue.OGD: "Am I looking at someone?",
    Cue.SFD: "Am I focusing on something?",
}

INTERACTION_QUESTION = "Am I in a social interaction?"

# 8 cue questions + 1 ground truth question per segment
QUESTIONS_PER_SEGMENT = len(CUE_ORDER) + 1


@dataclass(frozen=True)
class CueVector:
    """One boolean per cue."""

    osad: bool = False
    stad: bool = False
    aud: bool = False
    udsd: bool = False
    pad: bool = False
    igd: bool = False
    ogd: bool = False
    sfd: bool = False

    def __getitem__(self, cue: Cue) -> bool:
        return getattr(self, cue.value)

    def __iter__(self) -> Iterator[Tuple[Cue, bool]]:
        for cue in CUE_ORDER:
            yield cue, self[cue]

    def replace(self, values: Mapping[Cue, bool]) -> "CueVector":
        """Return a copy with some cues set to new values."""
        current = self.to_dict()
        for cue, value in values.items():
            current[cue.value] = bool(value)
        return CueVector(**current)

    def to_dict(self) -> Dict[str, bool]:
        return {cue.value: value for cue, value in self}

    def as_tuple(self) -> Tuple[bool, ...]:
        return tuple(value for _, value in self)

    @classmethod
    def from_values(cls, values: Iterable[bool]) -> "CueVector":
        """Build from values given in cue order."""
        values = tuple(values)
        if len(values) != len(CUE_ORDER):
            raise ValidationError(f"Expected 8 cue values, got {len(values)}")
        return cls(*(bool(value) for value in values))

    @classmethod
    def from_mapping(cls, values: Mapping[Cue, bool]) -> "CueVector":
        """Build from a complete cue -> value mapping."""
        missing = [cue.name for cue in CUE_ORDER if cue not in values]
        if missing:
            raise ValidationError(f"Missing cues {', '.join(missing)}", field="cues")
        return cls(**{cue.value: bool(values[cue]) for cue in CUE_ORDER})

    @classmethod
    def from_dict(cls, data: Mapping[str, object]) -> "CueVector":
        """Parse the serialized form, requiring all eight boolean cues."""
        names = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ValidationError(f"Unknown cues {unknown}", field="cues")
        values = {}
        for name in names:
            if name not in data:
                raise ValidationError(f"Missing cue {name}", field="cues")
            value = data[name]
            if not isinstance(value, bool):
                raise ValidationError(
                    f"Cue {name} must be true or false, not {value!r}", field="cues"
                )
            values[name] = value
        return cls(**values)
