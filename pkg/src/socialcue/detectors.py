# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.

"""
Cue prediction backends.

ORACLE   answers with the consensus labels.
NOISY    flips the consensus labels with per cue true positive and true
         negative rates, using a random draw that only depends on
         (seed, segment id, question).
REMOTE   asks a multimodal model over HTTP, one question per request, and
         caches the answers.
REPLAY   serves answers from a cache filled by an earlier REMOTE run.
"""

import hashlib
import logging
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, FrozenSet, Iterable, Mapping, Optional, Union

import numpy as np

from .cues import CUE_ORDER, Cue, DecisionQuery, Target
from .dataset import LabeledSegment
from .errors import BackendError, CacheMissError, ParseError, ValidationError
from .prompts import (
    TEMPLATE_VERSION,
    ModalityConfig,
    PromptVariant,
    build_prompt,
)
from .remote import RemoteClient, ResponseCache, TransportError
from .util import canonical_json

_UINT64 = 2 ** 64 - 1


class BackendKind(Enum):
    ORACLE = "ORACLE"
    NOISY = "NOISY"
    REMOTE = "REMOTE"
    REPLAY = "REPLAY"


def _rate(value: Any, name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(f"{name} must be a number", field=name)
    if not 0.0 <= value <= 1.0:
        raise ValidationError(f"{name} must lie in [0, 1], got {value}", field=name)
    return float(value)


def _per_cue_rates(value: Any, name: str) -> Dict[Cue, float]:
    """A single rate for every cue, or a mapping cue name -> rate."""
    if isinstance(value, dict):
        rates = {Cue.parse(key): _rate(rate, f"{name}.{key}") for key, rate in value.items()}
        missing = [cue.value for cue in CUE_ORDER if cue not in rates]
        if missing:
            raise ValidationError(f"{name} lacks cues {missing}", field=name)
        return rates
    rate = _rate(value, name)
    return {cue: rate for cue in CUE_ORDER}


@dataclass(frozen=True)
class NoisySpec:
    tpr: Mapping[Cue, float]
    tnr: Mapping[Cue, float]
    seed: int = 0
    # Rates for the decision questions
    decision_tpr: float = 1.0
    decision_tnr: float = 1.0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "tpr": {cue.value: self.tpr[cue] for cue in CUE_ORDER},
            "tnr": {cue.value: self.tnr[cue] for cue in CUE_ORDER},
            "seed": self.seed,
            "decision_tpr": self.decision_tpr,
            "decision_tnr": self.decision_tnr,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "NoisySpec":
        seed = data.get("seed", 0)
        if isinstance(seed, bool) or not isinstance(seed, int):
            raise ValidationError("seed must be an integer", field="noisy.seed")
        return cls(
            tpr=_per_cue_rates(data.get("tpr", 1.0), "noisy.tpr"),
            tnr=_per_cue_rates(data.get("tnr", 1.0), "noisy.tnr"),
            seed=seed,
            decision_tpr=_rate(data.get("decision_tpr", 1.0), "noisy.decision_tpr"),
            decision_tnr=_rate(data.get("decision_tnr", 1.0), "noisy.decision_tnr"),
        )


@dataclass(frozen=True)
class RemoteSpec:
    endpoint: str
    model: str
    timeout_s: float = 60.0
    max_retries: int = 3
    max_concurrent: int = 4
    cache_dir: Optional[Path] = None
    # Name of the environment variable holding the API key, never the key
    api_key_env: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "endpoint": self.endpoint,
            "model": self.model,
            "timeout_s": self.timeout_s,
            "max_retries": self.max_retries,
            "max_concurrent": self.max_concurrent,
            "cache_dir": None if self.cache_dir is None else str(self.cache_dir),
            "api_key_env": self.api_key_env,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], base_dir: Optional[Path] = None) -> "RemoteSpec":
        for key in ("endpoint", "model"):
            if not isinstance(data.get(key), str):
                raise ValidationError(f"remote.{key} is required", field=f"remote.{key}")
        if "api_key" in data:
            raise ValidationError(
                "Put the name of an environment variable in api_key_env instead of a key",
                field="remote.api_key",
            )
        cache_dir = data.get("cache_dir")
        if cache_dir is not None:
            cache_dir = Path(cache_dir)
            if base_dir is not None and not cache_dir.is_absolute():
                cache_dir = base_dir / cache_dir
        spec = cls(
            endpoint=data["endpoint"],
            model=data["model"],
            timeout_s=float(data.get("timeout_s", 60.0)),
            max_retries=int(data.get("max_retries", 3)),
            max_concurrent=int(data.get("max_concurrent", 4)),
            cache_dir=cache_dir,
            api_key_env=data.get("api_key_env"),
        )
        if spec.max_retries < 0 or spec.max_concurrent < 1 or spec.timeout_s <= 0:
            raise ValidationError("Invalid remote limits", field="remote")
        return spec


@dataclass(frozen=True)
class BackendSpec:
    kind: BackendKind
    noisy: Optional[NoisySpec] = None
    remote: Optional[RemoteSpec] = None

    def __post_init__(self):
        wants_noisy = self.kind is BackendKind.NOISY
        wants_remote = self.kind in (BackendKind.REMOTE, BackendKind.REPLAY)
        if wants_noisy != (self.noisy is not None):
            raise ValidationError(f"noisy settings do not fit a {self.kind.value} backend", field="backend.noisy")
        if wants_remote != (self.remote is not None):
            raise ValidationError(f"remote settings do not fit a {self.kind.value} backend", field="backend.remote")
        if self.kind is BackendKind.REPLAY and self.remote.cache_dir is None:  # type: ignore
            raise ValidationError("REPLAY needs remote.cache_dir", field="backend.remote.cache_dir")

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {"kind": self.kind.value}
        if self.noisy is not None:
            data["noisy"] = self.noisy.to_dict()
        if self.remote is not None:
            data["remote"] = self.remote.to_dict()
        return data

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], base_dir: Optional[Path] = None) -> "BackendSpec":
        try:
            kind = BackendKind(str(data.get("kind", "")).upper())
        except ValueError:
            raise ValidationError(f"Unknown backend kind {data.get('kind')!r}", field="backend.kind") from None
        noisy = data.get("noisy")
        remote = data.get("remote")
        return cls(
            kind=kind,
            noisy=None if noisy is None else NoisySpec.from_dict(noisy),
            remote=None if remote is None else RemoteSpec.from_dict(remote, base_dir),
        )


@dataclass
class CuePredictions:
    """Per cue answers of a backend for one segment. Cues never asked are
    absent."""

    segment_id: str
    backend_id: str
    values: Dict[Cue, bool] = field(default_factory=dict)
    confidence: Dict[Cue, float] = field(default_factory=dict)
    raw_responses: Dict[Cue, str] = field(default_factory=dict)
    # Cues whose answer could not be parsed and defaulted to false
    parse_failed: FrozenSet[Cue] = frozenset()

    def __post_init__(self):
        orphans = set(self.confidence) - set(self.values)
        if orphans:
            raise ValidationError(
                f"Confidence without value for {sorted(c.name for c in orphans)}",
                segment_id=self.segment_id,
                field="confidence",
            )

    def record(self, cue: Cue, answer: "Answer"):
        self.values[cue] = answer.value
        if answer.confidence is not None:
            self.confidence[cue] = answer.confidence
        if answer.raw is not None:
            self.raw_responses[cue] = answer.raw
        if answer.parse_failed:
            self.parse_failed = self.parse_failed | {cue}

    def to_dict(self) -> Dict[str, Any]:
        def ordered(mapping):
            return {cue.value: mapping[cue] for cue in CUE_ORDER if cue in mapping}

        return {
            "segment_id": self.segment_id,
            "backend_id": self.backend_id,
            "values": ordered(self.values),
            "confidence": ordered(self.confidence),
            "raw_responses": ordered(self.raw_responses),
            "parse_failed": [cue.value for cue in CUE_ORDER if cue in self.parse_failed],
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "CuePredictions":
        return cls(
            segment_id=data["segment_id"],
            backend_id=data["backend_id"],
            values={Cue.parse(k): bool(v) for k, v in data.get("values", {}).items()},
            confidence={Cue.parse(k): float(v) for k, v in data.get("confidence", {}).items()},
            raw_responses={Cue.parse(k): str(v) for k, v in data.get("raw_responses", {}).items()},
            parse_failed=frozenset(Cue.parse(k) for k in data.get("parse_failed", [])),
        )


@dataclass(frozen=True)
class Answer:
    value: bool
    confidence: Optional[float] = None
    raw: Optional[str] = None
    parse_failed: bool = False


_VERDICT = re.compile(r"\b(yes|no)\b(?!\s+one\b)", re.IGNORECASE)
_MARKED_VERDICT = re.compile(
    r"\b(?:final\s+)?(?:answer|verdict|decision)\b\s*(?:is\s*)?[:=\-]?\s*[*\"'`(\[]*\s*(yes|no)\b",
    re.IGNORECASE,
)


def parse_answer(raw: str) -> bool:
    """Extract the yes/no verdict of a model answer.

    An explicitly marked verdict ("Answer: no", "Final answer: YES") wins,
    the last one if there are several. Otherwise the last line mentioning yes
    or no decides, by the first verdict word on it.
    """
    marked = _MARKED_VERDICT.findall(raw)
    if marked:
        return marked[-1].lower() == "yes"
    lines = [line for line in raw.splitlines() if _VERDICT.search(line)]
    if not lines:
        raise ParseError(raw)
    return _VERDICT.search(lines[-1]).group(1).lower() == "yes"  # type: ignore


def render_answer(value: bool) -> str:
    return "Yes." if value else "No."


def cache_key(
    segment_id: str,
    target: Target,
    modality: ModalityConfig,
    variant: Optional[PromptVariant],
    model: str,
    prior: Optional[Mapping[Cue, bool]] = None,
) -> str:
    """SHA-256 of a canonical serialization of everything the prompt depends on."""
    payload = {
        "segment_id": segment_id,
        "target": target.value,
        "modality": modality.to_dict(),
        "variant": None if variant is None else variant.to_dict(),
        "model": model,
        "prior": None if prior is None else {c.value: prior[c] for c in CUE_ORDER if c in prior},
        "templates": TEMPLATE_VERSION,
    }
    return hashlib.sha256(canonical_json(payload).encode("utf-8")).hexdigest()


class Backend:
    """Answers yes/no questions about labeled segments."""

    kind: BackendKind

    def __init__(self, backend_id: str):
        self.backend_id = backend_id

    def answer(
        self,
        labeled: LabeledSegment,
        target: Target,
        modality: ModalityConfig,
        variant: PromptVariant,
        prior: Optional[Mapping[Cue, bool]] = None,
    ) -> Answer:
        raise NotImplementedError

    @staticmethod
    def truth(labeled: LabeledSegment, target: Target) -> bool:
        if isinstance(target, Cue):
            return labeled.consensus[target]
        return labeled.ground_truth_interaction


class OracleBackend(Backend):
    kind = BackendKind.ORACLE

    def __init__(self):
        super().__init__("oracle")

    def answer(self, labeled, target, modality, variant, prior=None):
        return Answer(self.truth(labeled, target), confidence=1.0)


def uniform_draw(seed: int, segment_id: str, target: Target) -> float:
    """A number in [0, 1) that only depends on its arguments."""
    digest = hashlib.blake2b(
        f"{segment_id}\x00{target.value}".encode("utf-8"), digest_size=16
    ).digest()
    words = [int.from_bytes(digest[i : i + 8], "little") for i in (0, 8)]
    return float(np.random.default_rng([seed & _UINT64, *words]).random())


class NoisyBackend(Backend):
    kind = BackendKind.NOISY

    def __init__(self, spec: NoisySpec):
        super().__init__(f"noisy-{spec.seed}")
        self.spec = spec

    def rates(self, target: Target):
        if isinstance(target, Cue):
            return self.spec.tpr[target], self.spec.tnr[target]
        return self.spec.decision_tpr, self.spec.decision_tnr

    def answer(self, labeled, target, modality, variant, prior=None):
        tpr, tnr = self.rates(target)
        draw = uniform_draw(self.spec.seed, labeled.segment_id, target)
        if self.truth(labeled, target):
            return Answer(draw < tpr)
        return Answer(not draw < tnr)


class RemoteBackend(Backend):
    kind = BackendKind.REMOTE

    def __init__(self, spec: RemoteSpec, client: Optional[RemoteClient] = None):
        super().__init__(f"remote-{spec.model}")
        self.spec = spec
        self.client = client or RemoteClient(
            spec.endpoint,
            spec.model,
            timeout_s=spec.timeout_s,
            max_retries=spec.max_retries,
            max_concurrent=spec.max_concurrent,
            api_key_env=spec.api_key_env,
        )
        self.cache = ResponseCache(spec.cache_dir) if spec.cache_dir else None

    def key(self, labeled, target, modality, variant, prior):
        # Per cue prompts ignore the variant, so their answers are shared
        return cache_key(
            labeled.segment_id,
            target,
            modality,
            variant if isinstance(target, DecisionQuery) else None,
            self.spec.model,
            prior if isinstance(target, DecisionQuery) else None,
        )

    def raw_answer(self, labeled, target, modality, variant, prior) -> str:
        if isinstance(target, Cue) and target.is_audio and not modality.mode.has_audio:
            raise ValidationError(
                f"{target} needs audio but the modality is {modality.mode.value}",
                segment_id=labeled.segment_id,
                field="modality",
            )
        key = self.key(labeled, target, modality, variant, prior)
        if self.cache is not None:
            cached = self.cache.get(key)
            if cached is not None:
                return cached
        prompt = build_prompt(labeled.segment, target, modality, variant, prior)
        try:
            text = self.client.complete(prompt)
        except TransportError as error:
            raise BackendError(str(error), labeled.segment_id, str(target)) from error
        if self.cache is not None:
            request = self.client.request_body(prompt)
            request["segment_id"] = labeled.segment_id
            request["target"] = target.value
            self.cache.put(key, text, request)
        return text

    def answer(self, labeled, target, modality, variant, prior=None):
        raw = self.raw_answer(labeled, target, modality, variant, prior)
        try:
            return Answer(parse_answer(raw), raw=raw)
        except ParseError:
            logging.warning(
                "Unparsable answer for %s of %s, using no", target, labeled.segment_id
            )
            return Answer(False, raw=raw, parse_failed=True)


class ReplayBackend(RemoteBackend):
    kind = BackendKind.REPLAY

    def __init__(self, spec: RemoteSpec):
        super().__init__(spec, client=None)
        self.backend_id = f"replay-{spec.model}"

    def raw_answer(self, labeled, target, modality, variant, prior) -> str:
        key = self.key(labeled, target, modality, variant, prior)
        cached = self.cache.get(key)  # type: ignore
        if cached is None:
            raise CacheMissError("No cached answer", labeled.segment_id, str(target))
        return cached


def make_backend(spec: BackendSpec) -> Backend:
    """Instantiate the backend a spec describes."""
    if spec.kind is BackendKind.ORACLE:
        return OracleBackend()
    if spec.kind is BackendKind.NOISY:
        return NoisyBackend(spec.noisy)  # type: ignore
    if spec.kind is BackendKind.REMOTE:
        return RemoteBackend(spec.remote)  # type: ignore
    return ReplayBackend(spec.remote)  # type: ignore


def predict(
    backend: Union[Backend, BackendSpec],
    labeled: LabeledSegment,
    cues_requested: Iterable[Cue],
    modality: ModalityConfig = ModalityConfig(),
    variant: PromptVariant = PromptVariant(),
) -> CuePredictions:
    """Ask the backend for each requested cue, one question per cue."""
    if isinstance(backend, BackendSpec):
        backend = make_backend(backend)
    requested = frozenset(cues_requested)
    predictions = CuePredictions(labeled.segment_id, backend.backend_id)
    for cue in CUE_ORDER:
        if cue in requested:
            predictions.record(cue, backend.answer(labeled, cue, modality, variant))
    return predictions

