"""Domain types and the deterministic state algebra everything else builds on.

World states, preconditions, and effects are free-text propositions.  There is
no structured fluent language: identity is normalized string equality, and
insertion order is preserved everywhere so corpus builds and state traces are
reproducible and diffable.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Iterator

# A proposition is a normalized sentence (see normalize_proposition).
Proposition = str


class EmptyProposition(ValueError):
    """A proposition was empty after normalization."""


class AnnotationIncomplete(ValueError):
    """A step is missing its precondition or effect list."""

    def __init__(self, step_id: str, detail: str = ""):
        super().__init__(f"step {step_id!r} lacks annotations{': ' + detail if detail else ''}")
        self.step_id = step_id


_LIST_MARKER = re.compile(r"^(?:\d+[.)]|[-*•])(?:\s+|$)")
_WS = re.compile(r"\s+")


def normalize_proposition(raw: str) -> Proposition:
    """Canonical proposition form.

    Lowercased, internal whitespace collapsed to single spaces, terminal
    periods stripped, leading list markers ("1.", "2)", "-", "*") removed.
    Idempotent: markers are stripped repeatedly so a re-normalized value is
    unchanged.

    Raises EmptyProposition if nothing is left.
    """
    text = _WS.sub(" ", raw).strip()
    while True:
        stripped = _LIST_MARKER.sub("", text).strip()
        if stripped == text:
            break
        text = stripped
    text = text.lower().rstrip(".").strip()
    if not text:
        raise EmptyProposition(f"proposition is empty after normalization: {raw!r}")
    return text


def normalize_many(raw_items: Iterable[str]) -> tuple[Proposition, ...]:
    """Normalize and deduplicate, preserving first-occurrence order."""
    out: list[Proposition] = []
    seen: set[str] = set()
    for raw in raw_items:
        text = normalize_proposition(raw)
        if text not in seen:
            seen.add(text)
            out.append(text)
    return tuple(out)


def _clean_sentence(raw: str) -> str:
    """Whitespace-collapsed sentence, case preserved (used for action text)."""
    return _WS.sub(" ", raw).strip()


@dataclass(frozen=True)
class ActionStep:
    """One action with its precondition and effect lists.

    Precondition/effect lists are normalized and duplicate-free; an
    unannotated step simply has empty lists.
    """

    id: str
    action_text: str
    preconditions: tuple[Proposition, ...] = ()
    effects: tuple[Proposition, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "action_text", _clean_sentence(self.action_text))
        if not self.action_text:
            raise ValueError(f"step {self.id!r} has empty action text")
        object.__setattr__(self, "preconditions", normalize_many(self.preconditions))
        object.__setattr__(self, "effects", normalize_many(self.effects))

    @property
    def annotated(self) -> bool:
        return bool(self.preconditions) and bool(self.effects)


@dataclass(frozen=True)
class Provenance:
    """How a plan was produced.

    stage: last pipeline stage applied (raw | pruned | annotated | rechained).
    pipeline: which pipeline variant ran (full | ablation-local | ablation-global | ...).
    filtered_out: set on plans discarded by the corpus-level filter.
    edits: structured edit log; dicts with keys op ("remove" | "add" |
        "regenerate"), stage, and step_id/text.
    """

    stage: str = "raw"
    pipeline: str = "full"
    filtered_out: bool = False
    edits: tuple[dict, ...] = ()

    def to_dict(self) -> dict:
        return {
            "stage": self.stage,
            "pipeline": self.pipeline,
            "filtered_out": self.filtered_out,
            "edits": [dict(e) for e in self.edits],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Provenance":
        return cls(
            stage=data.get("stage", "raw"),
            pipeline=data.get("pipeline", "full"),
            filtered_out=bool(data.get("filtered_out", False)),
            edits=tuple(data.get("edits", ())),
        )


@dataclass(frozen=True)
class ActionPlan:
    """Ordered action steps for one task; the corpus unit."""

    id: str
    task_description: str
    steps: tuple[ActionStep, ...] = ()
    provenance: Provenance = field(default_factory=Provenance)

    def __post_init__(self) -> None:
        object.__setattr__(self, "steps", tuple(self.steps))
        ids = [s.id for s in self.steps]
        if len(set(ids)) != len(ids):
            raise ValueError(f"plan {self.id!r} has duplicate step ids: {ids}")

    @property
    def annotated(self) -> bool:
        return all(s.annotated for s in self.steps)

    def step_by_id(self, step_id: str) -> ActionStep:
        for step in self.steps:
            if step.id == step_id:
                return step
        raise KeyError(step_id)


@dataclass(frozen=True)
class WorldState:
    """Ordered, duplicate-free set of propositions."""

    items: tuple[Proposition, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "items", normalize_many(self.items))

    def __contains__(self, item: str) -> bool:
        return normalize_proposition(item) in set(self.items)

    def __iter__(self) -> Iterator[Proposition]:
        return iter(self.items)

    def __len__(self) -> int:
        return len(self.items)

    def as_set(self) -> frozenset[Proposition]:
        return frozenset(self.items)


@dataclass(frozen=True)
class StateDelta:
    """Additions and deletions applied in one transition."""

    additions: tuple[Proposition, ...] = ()
    deletions: tuple[Proposition, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "additions", normalize_many(self.additions))
        object.__setattr__(self, "deletions", normalize_many(self.deletions))
        overlap = set(self.additions) & set(self.deletions)
        if overlap:
            raise ValueError(f"delta adds and deletes the same items: {sorted(overlap)}")

    @property
    def empty(self) -> bool:
        return not self.additions and not self.deletions


@dataclass(frozen=True)
class ApplyResult:
    """apply_delta outcome: the new state plus a trace of ignored deletions."""

    state: WorldState
    missing_deletions: tuple[Proposition, ...] = ()

    @property
    def warnings(self) -> tuple[str, ...]:
        return tuple(f"deletion not present in state: {d!r}" for d in self.missing_deletions)


def apply_delta(state: WorldState, delta: StateDelta) -> ApplyResult:
    """(state \\ deletions) followed by the additions, order-preserving.

    Deletions absent from the state are ignored and reported in the result;
    additions already present are deduplicated.  Pure and deterministic.
    """
    present = set(state.items)
    missing = tuple(d for d in delta.deletions if d not in present)
    doomed = set(delta.deletions)
    survivors = [item for item in state.items if item not in doomed]
    kept = set(survivors)
    new_items = survivors + [a for a in delta.additions if a not in kept]
    return ApplyResult(state=WorldState(tuple(new_items)), missing_deletions=missing)


def diff_states(old: WorldState, new: WorldState) -> StateDelta:
    """Delta turning old into new: additions = new \\ old, deletions = old \\ new."""
    old_set, new_set = set(old.items), set(new.items)
    return StateDelta(
        additions=tuple(i for i in new.items if i not in old_set),
        deletions=tuple(i for i in old.items if i not in new_set),
    )


# --- canonical corpus serialization (one plan per JSONL line) ---


def plan_to_dict(plan: ActionPlan) -> dict:
    return {
        "id": plan.id,
        "task_description": plan.task_description,
        "steps": [
            {
                "id": s.id,
                "action_text": s.action_text,
                "preconditions": list(s.preconditions),
                "effects": list(s.effects),
            }
            for s in plan.steps
        ],
        "provenance": plan.provenance.to_dict(),
    }


def plan_from_dict(data: dict) -> ActionPlan:
    return ActionPlan(
        id=data["id"],
        task_description=data["task_description"],
        steps=tuple(
            ActionStep(
                id=s["id"],
                action_text=s["action_text"],
                preconditions=tuple(s.get("preconditions", ())),
                effects=tuple(s.get("effects", ())),
            )
            for s in data["steps"]
        ),
        provenance=Provenance.from_dict(data.get("provenance", {})),
    )


def write_plans(path: str | Path, plans: Iterable[ActionPlan]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for plan in plans:
            fh.write(json.dumps(plan_to_dict(plan), ensure_ascii=False) + "\n")


def read_plans(path: str | Path) -> list[ActionPlan]:
    plans: list[ActionPlan] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                plans.append(plan_from_dict(json.loads(line)))
    return plans


def with_provenance(plan: ActionPlan, **changes) -> ActionPlan:
    """Copy of plan with updated provenance fields."""
    return replace(plan, provenance=replace(plan.provenance, **changes))
