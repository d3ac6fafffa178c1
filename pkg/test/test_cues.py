# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.

import pytest

from socialcue.cues import (
    AUDIO_CUES,
    CUE_ORDER,
    QUESTIONS_PER_SEGMENT,
    VISUAL_CUES,
    Cue,
    CueVector,
)
from socialcue.errors import ValidationError


def test_cue_order():
    """Cues serialize in the documented order."""
    assert [cue.name for cue in CUE_ORDER] == [
        "OSAD", "STAD", "AUD", "UDSD", "PAD", "IGD", "OGD", "SFD",
    ]
    assert AUDIO_CUES | VISUAL_CUES == set(CUE_ORDER)
    assert not AUDIO_CUES & VISUAL_CUES
    assert QUESTIONS_PER_SEGMENT == 9


@pytest.mark.parametrize("name", ["osad", "OSAD", " Osad "])
def test_parse_cue(name):
    assert Cue.parse(name) is Cue.OSAD


def test_parse_cue_unknown():
    with pytest.raises(ValidationError):
        Cue.parse("xyz")


def test_questions():
    assert Cue.UDSD.question == "Am I talking?"
    assert Cue.SFD.question == "Am I focusing on something?"
    assert Cue.STAD.is_audio and not Cue.PAD.is_audio


def test_cue_vector_access():
    """Indexing, iteration and replacement follow the cue order."""
    cues = CueVector(aud=True, sfd=True)
    assert cues[Cue.AUD] and cues[Cue.SFD] and not cues[Cue.OSAD]
    assert cues.as_tuple() == (False, False, True, False, False, False, False, True)
    assert [cue for cue, _ in cues] == list(CUE_ORDER)
    changed = cues.replace({Cue.AUD: False, Cue.PAD: True})
    assert changed == CueVector(pad=True, sfd=True)
    assert cues == CueVector(aud=True, sfd=True)


def test_cue_vector_from_dict():
    data = {cue.value: cue is Cue.IGD for cue in CUE_ORDER}
    assert CueVector.from_dict(data) == CueVector(igd=True)
    assert CueVector.from_dict(data).to_dict() == data


@pytest.mark.parametrize(
    "change",
    [
        {"osad": 1},
        {"osad": "true"},
        {"extra": True},
    ],
)
def test_cue_vector_from_dict_strict(change):
    """Only booleans for exactly the eight cues are accepted."""
    data = {cue.value: False for cue in CUE_ORDER}
    data.update(change)
    with pytest.raises(ValidationError):
        CueVector.from_dict(data)


def test_cue_vector_missing_cue():
    data = {cue.value: False for cue in CUE_ORDER[1:]}
    with pytest.raises(ValidationError):
        CueVector.from_dict(data)
    with pytest.raises(ValidationError):
        CueVector.from_values([True] * 7)
    with pytest.raises(ValidationError):
        CueVector.from_mapping({Cue.OSAD: True})
