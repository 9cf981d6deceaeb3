"""Precondition/effect inference: action text in, proposition list out.

Three interchangeable backends: a remote endpoint (the fine-tuned models or
any hosted chat model), a few-shot prompted model, and a corpus lookup that
replays gold annotations and serves as the deterministic oracle for
everything downstream.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

from .core import (
    ActionPlan,
    AnnotationIncomplete,
    Proposition,
    normalize_many,
    normalize_proposition,
)
from .gateway import Backend, BackendConfig, EmptyList, Prompt, build_prompt, parse_item_list
from .prompts import (
    FEWSHOT_INFER_EFFECTS,
    FEWSHOT_INFER_PRECONDITIONS,
    INFER_EFFECTS,
    INFER_PRECONDITIONS,
)

PRECONDITION = "precondition"
EFFECT = "effect"
DIRECTIONS = (PRECONDITION, EFFECT)


class UnknownAction(KeyError):
    """Corpus lookup has no entry for the queried action text."""


class InferenceEmpty(ValueError):
    """A backend produced no propositions for an action."""


def _check_direction(direction: str) -> None:
    if direction not in DIRECTIONS:
        raise ValueError(f"direction must be one of {DIRECTIONS}, got {direction!r}")


def inference_prompt(direction: str, action_text: str, task: str | None = None) -> Prompt:
    """The canonical inference prompt; also the fine-tuning input format."""
    _check_direction(direction)
    template = INFER_PRECONDITIONS if direction == PRECONDITION else INFER_EFFECTS
    slot = action_text if task is None else f"{action_text}\nTask context: {task}"
    return build_prompt(template, {"action": slot})


class CorpusLookupBackend:
    """Replays gold annotations from a reference corpus.

    Keys are normalized action texts; when the same action text occurs more
    than once, the first occurrence in corpus order wins.
    """

    kind = "corpus-lookup"

    def __init__(self, corpus: Iterable[ActionPlan]):
        self._table: dict[str, tuple[tuple[Proposition, ...], tuple[Proposition, ...]]] = {}
        for plan in corpus:
            for step in plan.steps:
                key = normalize_proposition(step.action_text)
                if key not in self._table:
                    self._table[key] = (step.preconditions, step.effects)

    def _lookup(self, action_text: str):
        key = normalize_proposition(action_text)
        if key not in self._table:
            raise UnknownAction(f"action not in reference corpus: {action_text!r}")
        return self._table[key]

    def preconditions(self, action_text: str) -> tuple[Proposition, ...]:
        return self._lookup(action_text)[0]

    def effects(self, action_text: str) -> tuple[Proposition, ...]:
        return self._lookup(action_text)[1]

    def __contains__(self, action_text: str) -> bool:
        return normalize_proposition(action_text) in self._table


class EndpointBackend:
    """Talks to a model endpoint using the canonical inference prompts."""

    kind = "finetuned-endpoint"

    def __init__(self, config: BackendConfig, task: str | None = None):
        self._backend = Backend(config)
        self._task = task

    def _infer(self, direction: str, action_text: str) -> tuple[Proposition, ...]:
        prompt = inference_prompt(direction, action_text, task=self._task)
        completion = self._backend.complete(prompt)
        try:
            items = parse_item_list(completion.text)
        except EmptyList:
            raise InferenceEmpty(
                f"backend returned no {direction}s for {action_text!r}"
            ) from None
        return normalize_many(items)

    def preconditions(self, action_text: str) -> tuple[Proposition, ...]:
        return self._infer(PRECONDITION, action_text)

    def effects(self, action_text: str) -> tuple[Proposition, ...]:
        return self._infer(EFFECT, action_text)


class FewshotBackend:
    """Prompts a chat model with worked examples drawn from a reference corpus."""

    kind = "fewshot-llm"

    def __init__(self, config: BackendConfig, reference: Iterable[ActionPlan], shots: int = 3):
        self._backend = Backend(config)
        steps = [step for plan in reference for step in plan.steps if step.annotated]
        self._shots = steps[: max(1, shots)]

    def _examples(self, direction: str) -> str:
        blocks = []
        for step in self._shots:
            items = step.preconditions if direction == PRECONDITION else step.effects
            listing = "\n".join(f"{i}. {p}" for i, p in enumerate(items, start=1))
            blocks.append(f"Action: {step.action_text}\n{listing}")
        return "\n\n".join(blocks)

    def _infer(self, direction: str, action_text: str) -> tuple[Proposition, ...]:
        template = (
            FEWSHOT_INFER_PRECONDITIONS if direction == PRECONDITION else FEWSHOT_INFER_EFFECTS
        )
        prompt = build_prompt(
            template, {"examples": self._examples(direction), "action": action_text}
        )
        completion = self._backend.complete(prompt)
        try:
            items = parse_item_list(completion.text)
        except EmptyList:
            raise InferenceEmpty(
                f"backend returned no {direction}s for {action_text!r}"
            ) from None
        return normalize_many(items)

    def preconditions(self, action_text: str) -> tuple[Proposition, ...]:
        return self._infer(PRECONDITION, action_text)

    def effects(self, action_text: str) -> tuple[Proposition, ...]:
        return self._infer(EFFECT, action_text)


def infer_preconditions(backend, action_text: str) -> tuple[Proposition, ...]:
    if not action_text.strip():
        raise ValueError("action_text must be non-empty")
    return backend.preconditions(action_text)


def infer_effects(backend, action_text: str) -> tuple[Proposition, ...]:
    if not action_text.strip():
        raise ValueError("action_text must be non-empty")
    return backend.effects(action_text)


@dataclass(frozen=True)
class TrainingPair:
    """One supervised example for the seq2seq inference models."""

    input: str
    target: str
    direction: str

    def __post_init__(self) -> None:
        _check_direction(self.direction)
        if not [line for line in self.target.splitlines() if line.strip()]:
            raise ValueError("training target holds no propositions")


def export_training_pairs(
    corpus: Iterable[ActionPlan], direction: str, include_task: bool = False
) -> Iterator[TrainingPair]:
    """One pair per (step, direction), ordered by (plan id, step index)."""
    _check_direction(direction)
    for plan in sorted(corpus, key=lambda p: p.id):
        for step in plan.steps:
            items = step.preconditions if direction == PRECONDITION else step.effects
            if not items:
                raise AnnotationIncomplete(step.id, f"no {direction}s in plan {plan.id!r}")
            prompt = inference_prompt(
                direction, step.action_text, task=plan.task_description if include_task else None
            )
            yield TrainingPair(input=prompt.text, target="\n".join(items), direction=direction)


def parse_training_input(text: str) -> tuple[str, str]:
    """Invert a training input back to (direction, action text)."""
    for direction, marker in ((PRECONDITION, "preconditions"), (EFFECT, "effects")):
        header = f"List the {marker} of the action:"
        if header in text:
            tail = text.split(header, 1)[1]
            action = tail.strip().splitlines()[0].strip()
            return direction, action
    raise ValueError("not a recognized training input")


def write_training_pairs(path: str | Path, pairs: Iterable[TrainingPair]) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for pair in pairs:
            fh.write(
                json.dumps(
                    {"input": pair.input, "target": pair.target, "direction": pair.direction},
                    ensure_ascii=False,
                )
                + "\n"
            )
            count += 1
    return count


def read_training_pairs(path: str | Path) -> list[TrainingPair]:
    pairs: list[TrainingPair] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                data = json.loads(line)
                pairs.append(TrainingPair(data["input"], data["target"], data["direction"]))
    return pairs
