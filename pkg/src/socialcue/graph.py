# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.

"""
The social thinking graph.

Eight cues are combined into three belief variables

    others_to_user = PAD and IGD and AUD
    user_to_others = STAD and UDSD and OGD
    user_busy      = SFD

from which the decision follows: the wearer is interacting if either of the
first two holds, and may be interrupted only when not interacting and not
busy.

Cues are asked lazily through a callable, since every answer may cost a
model request. The gate policy decides which cues get asked:

EAGER          all eight.
SHORT_CIRCUIT  only cues that can still change the decision.
HIERARCHICAL   the staged filters: OSAD and PAD open the audio and visual
               branches, STAD or IGD unlock the role cues AUD, UDSD and OGD.
               SFD is always asked since it vetoes any interruption.
Cues behind a closed gate count as false.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, FrozenSet, Iterable, List, Mapping, Tuple

from .cues import CUE_ORDER, Cue, CueVector
from .errors import GraphEvaluationError

CueSource = Callable[[Cue], bool]

OTHERS_TO_USER: Tuple[Cue, ...] = (Cue.PAD, Cue.IGD, Cue.AUD)
USER_TO_OTHERS: Tuple[Cue, ...] = (Cue.STAD, Cue.UDSD, Cue.OGD)
SHORT_CIRCUIT_ORDER: Tuple[Cue, ...] = (
    Cue.OSAD,
    Cue.PAD,
    Cue.STAD,
    Cue.IGD,
    Cue.AUD,
    Cue.UDSD,
    Cue.OGD,
    Cue.SFD,
)


class GatePolicy(Enum):
    EAGER = "EAGER"
    SHORT_CIRCUIT = "SHORT_CIRCUIT"
    HIERARCHICAL = "HIERARCHICAL"


class StepReason(Enum):
    QUERIED = "QUERIED"
    GATED_DEFAULT_FALSE = "GATED_DEFAULT_FALSE"
    SKIPPED_IRRELEVANT = "SKIPPED_IRRELEVANT"
    MASKED_DEFAULT_FALSE = "MASKED_DEFAULT_FALSE"


@dataclass(frozen=True)
class TraceStep:
    cue: Cue
    queried: bool
    effective_value: bool
    reason: StepReason

    def to_dict(self) -> Dict[str, Any]:
        return {
            "cue": self.cue.value,
            "queried": self.queried,
            "effective_value": self.effective_value,
            "reason": self.reason.value,
        }


@dataclass
class EvalTrace:
    steps: List[TraceStep] = field(default_factory=list)
    stage_transitions: List[Tuple[str, str]] = field(default_factory=list)

    @property
    def query_count(self) -> int:
        return sum(step.queried for step in self.steps)

    @property
    def queried(self) -> List[Cue]:
        return [step.cue for step in self.steps if step.queried]

    def decided(self, cue: Cue) -> bool:
        return any(step.cue is cue for step in self.steps)

    def effective(self) -> CueVector:
        return CueVector.from_mapping({step.cue: step.effective_value for step in self.steps})

    def to_dict(self) -> Dict[str, Any]:
        return {
            "steps": [step.to_dict() for step in self.steps],
            "stage_transitions": [list(transition) for transition in self.stage_transitions],
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "EvalTrace":
        steps = [
            TraceStep(
                Cue.parse(step["cue"]),
                bool(step["queried"]),
                bool(step["effective_value"]),
                StepReason(step["reason"]),
            )
            for step in data.get("steps", [])
        ]
        transitions = [(str(stage), str(outcome)) for stage, outcome in data.get("stage_transitions", [])]
        return cls(steps, transitions)


@dataclass(frozen=True)
class BeliefState:
    others_to_user: bool
    user_to_others: bool
    user_busy: bool

    def to_dict(self) -> Dict[str, bool]:
        return {
            "others_to_user": self.others_to_user,
            "user_to_others": self.user_to_others,
            "user_busy": self.user_busy,
        }


@dataclass(frozen=True)
class Decision:
    segment_id: str
    beliefs: BeliefState
    interacting: bool
    intervene_ok: bool
    trace: EvalTrace

    def to_dict(self) -> Dict[str, Any]:
        return {
            "segment_id": self.segment_id,
            "beliefs": self.beliefs.to_dict(),
            "interacting": self.interacting,
            "intervene_ok": self.intervene_ok,
            "trace": self.trace.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Decision":
        return cls(
            segment_id=data["segment_id"],
            beliefs=BeliefState(**data["beliefs"]),
            interacting=bool(data["interacting"]),
            intervene_ok=bool(data["intervene_ok"]),
            trace=EvalTrace.from_dict(data["trace"]),
        )


def combine_beliefs(effective: CueVector) -> BeliefState:
    return BeliefState(
        others_to_user=effective.pad and effective.igd and effective.aud,
        user_to_others=effective.stad and effective.udsd and effective.ogd,
        user_busy=effective.sfd,
    )


def decide(beliefs: BeliefState) -> Tuple[bool, bool]:
    """Return (interacting, intervene_ok)."""
    interacting = beliefs.others_to_user or beliefs.user_to_others
    return interacting, not interacting and not beliefs.user_busy


class _Evaluation:
    """Book keeping of one evaluation: asks the source, records the trace."""

    def __init__(self, cue_source: CueSource, masked: FrozenSet[Cue]):
        self.cue_source = cue_source
        self.trace = EvalTrace()
        self.known: Dict[Cue, bool] = {}
        for cue in CUE_ORDER:
            if cue in masked:
                self.settle(cue, StepReason.MASKED_DEFAULT_FALSE)

    def settle(self, cue: Cue, reason: StepReason, value: bool = False):
        self.known[cue] = value
        self.trace.steps.append(TraceStep(cue, reason is StepReason.QUERIED, value, reason))

    def query(self, cue: Cue) -> bool:
        if cue in self.known:
            return self.known[cue]
        try:
            value = bool(self.cue_source(cue))
        except Exception as error:
            raise GraphEvaluationError(cue.name, self.trace, error) from error
        self.settle(cue, StepReason.QUERIED, value)
        return value

    def gate(self, cues: Iterable[Cue]):
        for cue in cues:
            if cue not in self.known:
                self.settle(cue, StepReason.GATED_DEFAULT_FALSE)

    def stage(self, name: str, outcome: str):
        self.trace.stage_transitions.append((name, outcome))


def _all_known_true(known: Mapping[Cue, bool], cues: Iterable[Cue]) -> bool:
    return all(known.get(cue) is True for cue in cues)


def _relevant(cue: Cue, known: Mapping[Cue, bool]) -> bool:
    """Whether some completion of the unknown cues makes the decision depend
    on this cue."""
    interacting_settled = _all_known_true(known, OTHERS_TO_USER) or _all_known_true(
        known, USER_TO_OTHERS
    )
    if cue is Cue.SFD:
        return not interacting_settled
    for branch, rest in ((OTHERS_TO_USER, USER_TO_OTHERS), (USER_TO_OTHERS, OTHERS_TO_USER)):
        if cue in branch:
            partners_open = all(known.get(c) is not False for c in branch if c is not cue)
            return partners_open and not _all_known_true(known, rest)
    return False


def _eager(run: _Evaluation):
    for cue in CUE_ORDER:
        run.query(cue)


def _short_circuit(run: _Evaluation):
    for cue in SHORT_CIRCUIT_ORDER:
        if cue in run.known:
            continue
        if _relevant(cue, run.known):
            run.query(cue)
        else:
            run.settle(cue, StepReason.SKIPPED_IRRELEVANT)


def _hierarchical(run: _Evaluation):
    audio_open = run.query(Cue.OSAD)
    visual_open = run.query(Cue.PAD)
    run.stage(
        "filters",
        f"audio {'open' if audio_open else 'closed'}, visual {'open' if visual_open else 'closed'}",
    )
    if not audio_open:
        run.gate((Cue.STAD, Cue.AUD, Cue.UDSD))
    if not visual_open:
        run.gate((Cue.IGD, Cue.OGD))

    turns = run.query(Cue.STAD) if audio_open else False
    gaze_in = run.query(Cue.IGD) if visual_open else False
    unlocked = turns or gaze_in
    run.stage("engagement", "possible interaction" if unlocked else "no engagement")
    if not unlocked:
        run.gate((Cue.AUD, Cue.UDSD, Cue.OGD))
    else:
        for cue in (Cue.AUD, Cue.UDSD, Cue.OGD):
            run.query(cue)
        run.stage("roles", "done")

    busy = run.query(Cue.SFD)
    run.stage("veto", "busy" if busy else "available")


_POLICIES = {
    GatePolicy.EAGER: _eager,
    GatePolicy.SHORT_CIRCUIT: _short_circuit,
    GatePolicy.HIERARCHICAL: _hierarchical,
}


def evaluate(
    cue_source: CueSource,
    policy: GatePolicy = GatePolicy.HIERARCHICAL,
    masked: Iterable[Cue] = (),
    segment_id: str = "",
) -> Decision:
    """Ask cues as the policy demands and decide.

    Masked cues are never asked and count as false.
    """
    run = _Evaluation(cue_source, frozenset(masked))
    _POLICIES[policy](run)
    effective = run.trace.effective()
    beliefs = combine_beliefs(effective)
    interacting, intervene_ok = decide(beliefs)
    return Decision(segment_id, beliefs, interacting, intervene_ok, run.trace)


def query_count(policy: GatePolicy, cues: CueVector, masked: Iterable[Cue] = ()) -> int:
    """How many cues evaluate would ask for these underlying values."""
    return evaluate(lambda cue: cues[cue], policy, masked).trace.query_count


def decision_from_cues(cues: CueVector) -> Tuple[bool, bool]:
    """The decision when every cue is known."""
    return decide(combine_beliefs(cues))

