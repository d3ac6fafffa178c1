# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.

# pylint: disable=redefined-outer-name
import dataclasses
import itertools

import pytest

from socialcue.cues import CueVector
from socialcue.dataset import (
    WEARER,
    DatasetManifest,
    LabeledSegment,
    Provenance,
    Utterance,
    other,
    segmentize_clip,
)


@pytest.fixture(name="assignments", scope="session")
def fixture_assignments():
    """All 256 cue vectors."""
    return [CueVector.from_values(values) for values in itertools.product([False, True], repeat=8)]


@pytest.fixture(name="transcript")
def fixture_transcript():
    """A short conversation between the wearer and one other person."""
    return (
        Utterance(other(1), 0.5, 2.0, "hey, do you have a minute"),
        Utterance(WEARER, 2.5, 4.0, "sure, what is up"),
        Utterance(other(1), 4.5, 7.0, "can you pass me the salt"),
    )


@pytest.fixture(name="make_labeled")
def fixture_make_labeled(transcript):
    """Factory for valid labeled segments of a single clip."""

    def make(cues=CueVector(), index=0, with_transcript=True, clip="clip"):
        segment = segmentize_clip(clip, 10.0 * (index + 1))[index]
        if with_transcript:
            segment = dataclasses.replace(segment, transcript=transcript)
        return LabeledSegment.from_consensus(segment, cues, Provenance.IMPORTED)

    return make


@pytest.fixture(name="make_manifest")
def fixture_make_manifest():
    """Factory for a manifest with one segment per given cue vector."""

    def make(cue_vectors, name="test"):
        segments = segmentize_clip("clip", 10.0 * len(cue_vectors))
        labeled = tuple(
            LabeledSegment.from_consensus(segment, cues, Provenance.SYNTHETIC)
            for segment, cues in zip(segments, cue_vectors)
        )
        return DatasetManifest(name, labeled)

    return make
