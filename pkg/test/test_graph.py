# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.

import pytest
from hypothesis import given
from hypothesis import strategies as st

from socialcue.cues import AUDIO_CUES, CUE_ORDER, VISUAL_CUES, Cue, CueVector
from socialcue.errors import GraphEvaluationError
from socialcue.graph import (
    BeliefState,
    Decision,
    GatePolicy,
    StepReason,
    combine_beliefs,
    decide,
    decision_from_cues,
    evaluate,
    query_count,
)


def source(cues):
    return lambda cue: cues[cue]


def test_combine_beliefs(assignments):
    """The three belief formulas over every assignment."""
    for c in assignments:
        beliefs = combine_beliefs(c)
        assert beliefs.others_to_user == (c.pad and c.igd and c.aud)
        assert beliefs.user_to_others == (c.stad and c.udsd and c.ogd)
        assert beliefs.user_busy == c.sfd


@pytest.mark.parametrize(
    "beliefs,expected",
    [
        (BeliefState(False, False, False), (False, True)),
        (BeliefState(False, False, True), (False, False)),
        (BeliefState(True, False, False), (True, False)),
        (BeliefState(False, True, True), (True, False)),
    ],
)
def test_decide(beliefs, expected):
    assert decide(beliefs) == expected


def test_eager_asks_everything(assignments):
    for cues in assignments:
        decision = evaluate(source(cues), GatePolicy.EAGER)
        assert decision.trace.queried == list(CUE_ORDER)
        assert decision.trace.effective() == cues
        assert (decision.interacting, decision.intervene_ok) == decision_from_cues(cues)


def test_short_circuit_equals_eager(assignments):
    """Skipping irrelevant cues never changes the decision."""
    for cues in assignments:
        eager = evaluate(source(cues), GatePolicy.EAGER)
        lazy = evaluate(source(cues), GatePolicy.SHORT_CIRCUIT)
        assert (lazy.interacting, lazy.intervene_ok) == (eager.interacting, eager.intervene_ok)
        assert lazy.trace.query_count <= 7
        assert Cue.OSAD not in lazy.trace.queried


def test_hierarchical_is_conservative(assignments):
    """Gates only turn cues off, so a detected interaction is a real one."""
    for cues in assignments:
        eager = evaluate(source(cues), GatePolicy.EAGER)
        staged = evaluate(source(cues), GatePolicy.HIERARCHICAL)
        if staged.interacting:
            assert eager.interacting
        assert Cue.SFD in staged.trace.queried
        assert staged.beliefs.user_busy == cues.sfd


def test_hierarchical_agrees_when_filters_hold(assignments):
    """With the environment filters consistent with the cues, staging loses
    nothing."""
    for cues in assignments:
        consistent = (not (cues.stad or cues.aud or cues.udsd) or cues.osad) and (
            not (cues.igd or cues.ogd) or cues.pad
        )
        if not consistent:
            continue
        eager = evaluate(source(cues), GatePolicy.EAGER)
        staged = evaluate(source(cues), GatePolicy.HIERARCHICAL)
        if cues.stad or cues.igd:
            assert staged.interacting == eager.interacting


def staged_questions(cues):
    """Cues the staged policy must ask, worked out stage by stage."""
    asked = {Cue.OSAD, Cue.PAD, Cue.SFD}
    if cues.osad:
        asked.add(Cue.STAD)
    if cues.pad:
        asked.add(Cue.IGD)
    if (cues.osad and cues.stad) or (cues.pad and cues.igd):
        if cues.osad:
            asked |= {Cue.AUD, Cue.UDSD}
        if cues.pad:
            asked.add(Cue.OGD)
    return asked


def test_hierarchical_matches_stage_rules(assignments):
    for cues in assignments:
        decision = evaluate(source(cues), GatePolicy.HIERARCHICAL)
        asked = staged_questions(cues)
        assert set(decision.trace.queried) == asked
        assert decision.trace.effective() == CueVector.from_mapping(
            {cue: cues[cue] and cue in asked for cue in CUE_ORDER}
        )
        assert (decision.interacting, decision.intervene_ok) == decision_from_cues(
            decision.trace.effective()
        )


@pytest.mark.parametrize("policy", GatePolicy)
def test_trace_complete(assignments, policy):
    """Every cue appears once; queried cues keep their value, others are
    false."""
    for cues in assignments:
        trace = evaluate(source(cues), policy).trace
        assert sorted(step.cue.value for step in trace.steps) == sorted(c.value for c in CUE_ORDER)
        for step in trace.steps:
            if step.queried:
                assert step.reason is StepReason.QUERIED
                assert step.effective_value == cues[step.cue]
            else:
                assert step.effective_value is False


def test_gating_economy():
    """An empty scene costs three questions instead of eight."""
    nothing = CueVector()
    assert query_count(GatePolicy.HIERARCHICAL, nothing) == 3
    assert query_count(GatePolicy.EAGER, nothing) == 8
    decision = evaluate(source(nothing), GatePolicy.HIERARCHICAL)
    assert decision.trace.queried == [Cue.OSAD, Cue.PAD, Cue.SFD]
    assert decision.intervene_ok
    assert decision.trace.stage_transitions == [
        ("filters", "audio closed, visual closed"),
        ("engagement", "no engagement"),
        ("veto", "available"),
    ]


def test_hierarchical_full_scene():
    everything = CueVector.from_values([True] * 8)
    decision = evaluate(source(everything), GatePolicy.HIERARCHICAL)
    assert decision.trace.queried == [
        Cue.OSAD, Cue.PAD, Cue.STAD, Cue.IGD, Cue.AUD, Cue.UDSD, Cue.OGD, Cue.SFD,
    ]
    assert decision.interacting and not decision.intervene_ok


def test_hierarchical_audio_gate():
    """Without other speech the turn taking and addressing cues are not asked."""
    cues = CueVector(pad=True, igd=True, aud=True, udsd=True, ogd=True)
    decision = evaluate(source(cues), GatePolicy.HIERARCHICAL)
    gated = [s.cue for s in decision.trace.steps if s.reason is StepReason.GATED_DEFAULT_FALSE]
    assert set(gated) == {Cue.STAD, Cue.AUD, Cue.UDSD}
    assert not decision.beliefs.others_to_user


@pytest.mark.parametrize("masked", [VISUAL_CUES, AUDIO_CUES])
@pytest.mark.parametrize("policy", GatePolicy)
def test_masked_cues_never_asked(assignments, masked, policy):
    for cues in assignments:
        asked = []

        def counting(cue, cues=cues):
            asked.append(cue)
            return cues[cue]

        decision = evaluate(counting, policy, masked)
        assert not set(asked) & masked
        for step in decision.trace.steps:
            if step.cue in masked:
                assert step.reason is StepReason.MASKED_DEFAULT_FALSE
        if masked is VISUAL_CUES:
            assert not decision.beliefs.others_to_user
            assert not decision.beliefs.user_to_others


@given(
    st.lists(st.booleans(), min_size=8, max_size=8),
    st.frozensets(st.sampled_from(CUE_ORDER)),
)
def test_short_circuit_equals_eager_under_masks(values, masked):
    cues = CueVector.from_values(values)
    eager = evaluate(source(cues), GatePolicy.EAGER, masked)
    lazy = evaluate(source(cues), GatePolicy.SHORT_CIRCUIT, masked)
    assert (lazy.interacting, lazy.intervene_ok) == (eager.interacting, eager.intervene_ok)
    assert lazy.trace.query_count <= eager.trace.query_count


def test_query_error_keeps_trace():
    def failing(cue):
        if cue is Cue.STAD:
            raise RuntimeError("backend down")
        return True

    with pytest.raises(GraphEvaluationError) as error:
        evaluate(failing, GatePolicy.HIERARCHICAL)
    assert error.value.cue == "STAD"
    assert error.value.trace.queried == [Cue.OSAD, Cue.PAD]


def test_decision_serialization():
    decision = evaluate(source(CueVector(osad=True, stad=True)), GatePolicy.HIERARCHICAL, segment_id="s")
    assert Decision.from_dict(decision.to_dict()) == decision
    assert decision.to_dict()["trace"]["steps"][0] == {
        "cue": "osad",
        "queried": True,
        "effective_value": True,
        "reason": "QUERIED",
    }


def test_hierarchical_veto_without_engagement():
    """Speech and people nearby, but nobody takes turns or looks at the wearer."""
    cues = CueVector(osad=True, pad=True, sfd=True)
    decision = evaluate(source(cues), GatePolicy.HIERARCHICAL)
    assert decision.trace.queried == [Cue.OSAD, Cue.PAD, Cue.STAD, Cue.IGD, Cue.SFD]
    gated = {s.cue for s in decision.trace.steps if s.reason is StepReason.GATED_DEFAULT_FALSE}
    assert gated == {Cue.AUD, Cue.UDSD, Cue.OGD}
    assert not decision.interacting
    assert not decision.intervene_ok
