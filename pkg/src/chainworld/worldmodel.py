"""The assembled world model: semantic matching plus precondition/effect
inference, answering "is this action valid here?" and "what state comes next?",
plus the corpus-to-state refactoring that turns annotated plans into
ground-truth state traces.

Matching is pluggable: an LLM judge for real runs, and two deterministic kinds
(normalized string equality, explicit fixture tables) that double as test
oracles.  Every verdict keeps its full per-item match trace.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from typing import Iterable, Protocol, Sequence

from .core import (
    ActionPlan,
    Proposition,
    StateDelta,
    WorldState,
    apply_delta,
    normalize_many,
    normalize_proposition,
)
from .gateway import Backend, BackendConfig, GatewayError, build_prompt, numbered
from .inference import infer_effects, infer_preconditions
from .prompts import CONTRADICTION_SCAN, SEMANTIC_COVERAGE

log = logging.getLogger(__name__)


class MalformedJudgment(GatewayError):
    """The matching judge's response could not be parsed."""


class InvalidAction(Exception):
    """A transition was requested for an action whose preconditions fail."""

    def __init__(self, action_text: str, verdict: "ValidityVerdict"):
        unmatched = ", ".join(verdict.unmatched)
        super().__init__(f"action {action_text!r} invalid; unmatched: {unmatched}")
        self.action_text = action_text
        self.verdict = verdict


class Matcher(Protocol):
    """Semantic equivalence/contradiction judge over proposition lists."""

    kind: str

    def match_indices(
        self, items: Sequence[Proposition], pool: Sequence[Proposition]
    ) -> list[list[int]]:
        """For each item, the indices of all pool items equivalent to it."""
        ...

    def contradiction_pairs(
        self, incoming: Sequence[Proposition], state: Sequence[Proposition]
    ) -> list[tuple[int, int]]:
        """All (state index, incoming index) pairs that cannot hold together."""
        ...


class ExactMatcher:
    """Equivalence iff normalized strings are equal; never contradicts."""

    kind = "exact-normalized"

    def match_indices(self, items, pool):
        pool_norm = [normalize_proposition(p) for p in pool]
        return [
            [j for j, p in enumerate(pool_norm) if p == normalize_proposition(item)]
            for item in items
        ]

    def contradiction_pairs(self, incoming, state):
        return []


class FixtureMatcher:
    """Explicit symmetric equivalence and contradiction tables for tests.

    Normalized-equal texts are always equivalent; a declared contradiction
    between normalized-equal texts is a construction error.
    """

    kind = "fixture-table"

    def __init__(
        self,
        equivalent: Iterable[tuple[str, str]] = (),
        contradictory: Iterable[tuple[str, str]] = (),
    ):
        self._equiv: set[frozenset[str]] = set()
        self._contra: set[frozenset[str]] = set()
        for a, b in equivalent:
            self._equiv.add(frozenset((normalize_proposition(a), normalize_proposition(b))))
        for a, b in contradictory:
            pair = frozenset((normalize_proposition(a), normalize_proposition(b)))
            if len(pair) == 1:
                raise ValueError(f"a text cannot contradict itself: {a!r}")
            self._contra.add(pair)

    def _equivalent(self, a: str, b: str) -> bool:
        return a == b or frozenset((a, b)) in self._equiv

    def match_indices(self, items, pool):
        pool_norm = [normalize_proposition(p) for p in pool]
        out = []
        for item in items:
            a = normalize_proposition(item)
            out.append([j for j, b in enumerate(pool_norm) if self._equivalent(a, b)])
        return out

    def contradiction_pairs(self, incoming, state):
        pairs = []
        state_norm = [normalize_proposition(s) for s in state]
        for j, inc in enumerate(incoming):
            b = normalize_proposition(inc)
            for i, a in enumerate(state_norm):
                if frozenset((a, b)) in self._contra:
                    pairs.append((i, j))
        return sorted(pairs)


_COVER_LINE = re.compile(
    r"^\s*(\d+)\s*[:.)-]\s*(covered(?:\s+by\s+(.*))?|uncovered)\s*$", re.IGNORECASE
)
_VERDICT_LINE = re.compile(r"^\s*(true|false)\s*\.?\s*$", re.IGNORECASE)
_CONTRA_LINE = re.compile(r"^\s*(\d+)\s*[:.)-]\s*(.*?)\s*$")


def _parse_index_list(raw: str, size: int, context: str) -> list[int]:
    found = re.findall(r"\d+", raw or "")
    if not found:
        raise MalformedJudgment(f"{context}: no reference numbers in {raw!r}")
    indices = []
    for token in found:
        idx = int(token) - 1
        if not 0 <= idx < size:
            raise MalformedJudgment(f"{context}: reference {token} out of range 1..{size}")
        indices.append(idx)
    return sorted(set(indices))


class LlmMatcher:
    """Batched LLM judgments: one call covers a whole item list.

    Coverage responses must carry one COVERED/UNCOVERED line per query item
    and a final TRUE/FALSE line consistent with them.
    """

    kind = "llm-judge"

    def __init__(self, config: BackendConfig):
        self._backend = Backend(config)

    def match_indices(self, items, pool):
        items = list(items)
        pool = list(pool)
        if not items:
            return []
        if not pool:
            return [[] for _ in items]
        prompt = build_prompt(
            SEMANTIC_COVERAGE,
            {"query_items": numbered(items), "reference_items": numbered(pool)},
        )
        text = self._backend.complete(prompt).text
        per_item: dict[int, list[int]] = {}
        verdict: bool | None = None
        for line in text.splitlines():
            vmatch = _VERDICT_LINE.match(line)
            if vmatch:
                verdict = vmatch.group(1).lower() == "true"
                continue
            cmatch = _COVER_LINE.match(line)
            if cmatch:
                item_idx = int(cmatch.group(1)) - 1
                if not 0 <= item_idx < len(items):
                    raise MalformedJudgment(f"query number {cmatch.group(1)} out of range")
                word = cmatch.group(2).lower()
                if word.startswith("covered"):
                    per_item[item_idx] = _parse_index_list(
                        cmatch.group(3), len(pool), f"item {item_idx + 1}"
                    )
                else:
                    per_item[item_idx] = []
        if verdict is None:
            raise MalformedJudgment("no final TRUE/FALSE line in coverage judgment")
        missing = [i + 1 for i in range(len(items)) if i not in per_item]
        if missing:
            raise MalformedJudgment(f"no coverage line for query items {missing}")
        all_covered = all(per_item[i] for i in range(len(items)))
        if verdict != all_covered:
            raise MalformedJudgment(
                f"final verdict {verdict} contradicts per-item coverage {per_item}"
            )
        return [per_item[i] for i in range(len(items))]

    def contradiction_pairs(self, incoming, state):
        incoming = list(incoming)
        state = list(state)
        if not incoming or not state:
            return []
        prompt = build_prompt(
            CONTRADICTION_SCAN,
            {"incoming_items": numbered(incoming), "state_items": numbered(state)},
        )
        text = self._backend.complete(prompt).text
        pairs: set[tuple[int, int]] = set()
        seen: set[int] = set()
        for line in text.splitlines():
            match = _CONTRA_LINE.match(line)
            if not match or not line.strip():
                continue
            inc_idx = int(match.group(1)) - 1
            if not 0 <= inc_idx < len(incoming):
                raise MalformedJudgment(f"incoming number {match.group(1)} out of range")
            seen.add(inc_idx)
            tail = match.group(2).strip()
            if tail.lower() in ("none", "n/a", "nothing", "-", ""):
                continue
            for idx in _parse_index_list(tail, len(state), f"incoming {inc_idx + 1}"):
                pairs.add((idx, inc_idx))
        missing = [i + 1 for i in range(len(incoming)) if i not in seen]
        if missing:
            raise MalformedJudgment(f"no contradiction line for incoming items {missing}")
        return sorted(pairs)


def make_matcher(kind: str, **kwargs) -> Matcher:
    if kind in ("exact", "exact-normalized"):
        return ExactMatcher()
    if kind in ("fixture", "fixture-table"):
        return FixtureMatcher(
            equivalent=kwargs.get("equivalent", ()),
            contradictory=kwargs.get("contradictory", ()),
        )
    if kind in ("llm", "llm-judge"):
        return LlmMatcher(kwargs["config"])
    raise ValueError(f"unknown matcher kind {kind!r}")


@dataclass(frozen=True)
class ValidityVerdict:
    """Validity of one action in one state, with its full match trace."""

    valid: bool
    preconditions: tuple[Proposition, ...]
    matched: tuple[tuple[Proposition, Proposition], ...]
    unmatched: tuple[Proposition, ...]

    def __post_init__(self) -> None:
        if self.valid != (not self.unmatched):
            raise ValueError("valid flag inconsistent with unmatched list")


@dataclass(frozen=True)
class TransitionResult:
    """Successor state plus the delta and contradiction pairs behind it."""

    new_state: WorldState
    delta: StateDelta
    contradictions: tuple[tuple[Proposition, Proposition], ...]


def check_preconditions(
    matcher: Matcher, preconditions: Sequence[str], state: WorldState
) -> ValidityVerdict:
    """Match each precondition independently against all state items.

    Matching is coverage, not consumption: several preconditions may match
    the same state item.  An empty precondition list is vacuously valid.
    """
    preconds = normalize_many(preconditions)
    matches = matcher.match_indices(preconds, state.items)
    matched: list[tuple[Proposition, Proposition]] = []
    unmatched: list[Proposition] = []
    for item, idxs in zip(preconds, matches):
        if idxs:
            matched.append((item, state.items[idxs[0]]))
        else:
            unmatched.append(item)
    return ValidityVerdict(
        valid=not unmatched,
        preconditions=preconds,
        matched=tuple(matched),
        unmatched=tuple(unmatched),
    )


def find_contradictions(
    matcher: Matcher, effects: Sequence[str], state: WorldState
) -> tuple[tuple[Proposition, Proposition], ...]:
    """All (state item, effect item) pairs the matcher declares contradictory.

    Normalized-equal pairs are dropped: a text never contradicts itself.
    """
    effs = normalize_many(effects)
    pairs = matcher.contradiction_pairs(effs, state.items)
    out = []
    for state_idx, eff_idx in sorted(pairs):
        state_item, eff_item = state.items[state_idx], effs[eff_idx]
        if state_item != eff_item:
            out.append((state_item, eff_item))
    return tuple(out)


def _transition_delta(
    additions: Sequence[Proposition],
    contradictions: Sequence[tuple[Proposition, Proposition]],
) -> StateDelta:
    # An item that is both contradicted and re-added keeps its new wording:
    # drop it from deletions so the delta stays well-formed.
    adds = normalize_many(additions)
    add_set = set(adds)
    deletions = []
    for state_item, _ in contradictions:
        if state_item not in add_set and state_item not in deletions:
            deletions.append(state_item)
    return StateDelta(additions=adds, deletions=tuple(deletions))


class WorldModel:
    """Inference backend plus matcher, wired into the two prediction tasks."""

    def __init__(self, inference_backend, matcher: Matcher):
        self.inference = inference_backend
        self.matcher = matcher

    def predict_valid_action(self, action_text: str, state: WorldState) -> ValidityVerdict:
        preconds = infer_preconditions(self.inference, action_text)
        return check_preconditions(self.matcher, preconds, state)

    def predict_transition(
        self, action_text: str, state: WorldState, force: bool = False
    ) -> TransitionResult:
        """Infer effects, delete contradicted state items, add the effects.

        Unless force is set, the action's preconditions are checked first and
        InvalidAction is raised when they fail (evaluation paths that replay
        gold-valid actions set force to skip the re-check).
        """
        if not force:
            verdict = self.predict_valid_action(action_text, state)
            if not verdict.valid:
                raise InvalidAction(action_text, verdict)
        effects = infer_effects(self.inference, action_text)
        contradictions = find_contradictions(self.matcher, effects, state)
        delta = _transition_delta(effects, contradictions)
        return TransitionResult(
            new_state=apply_delta(state, delta).state,
            delta=delta,
            contradictions=contradictions,
        )


def derive_initial_state(plan: ActionPlan, matcher: Matcher) -> WorldState:
    """Union of all preconditions minus those covered by any effect in the plan."""
    pooled_effects = [e for step in plan.steps for e in step.effects]
    preconds = normalize_many(p for step in plan.steps for p in step.preconditions)
    matches = matcher.match_indices(preconds, pooled_effects)
    initial = tuple(item for item, idxs in zip(preconds, matches) if not idxs)
    if preconds and not initial:
        log.warning("plan %s: every precondition is covered; initial state empty", plan.id)
    return WorldState(initial)


def derive_transitions(plan: ActionPlan, matcher: Matcher) -> list[TransitionResult]:
    """Ground-truth transition per step, chained from the derived initial state.

    Each step's delta adds its gold effects and deletes the old-state items
    the matcher finds contradicted by any of those additions.
    """
    state = derive_initial_state(plan, matcher)
    transitions: list[TransitionResult] = []
    for step in plan.steps:
        contradictions = find_contradictions(matcher, step.effects, state)
        delta = _transition_delta(step.effects, contradictions)
        state = apply_delta(state, delta).state
        transitions.append(
            TransitionResult(new_state=state, delta=delta, contradictions=contradictions)
        )
    return transitions


def derive_state_trace(plan: ActionPlan, matcher: Matcher) -> list[WorldState]:
    """Ground-truth states before/after each step; length is steps + 1."""
    initial = derive_initial_state(plan, matcher)
    return [initial] + [t.new_state for t in derive_transitions(plan, matcher)]


def trace_records(plan: ActionPlan, matcher: Matcher) -> list[dict]:
    """JSONL-ready trace rows: {plan_id, step_index, state, delta}.

    Row 0 is the derived initial state with an empty delta; row k holds the
    state after step k together with the delta that produced it.
    """
    rows = [
        {
            "plan_id": plan.id,
            "step_index": 0,
            "state": list(derive_initial_state(plan, matcher).items),
            "delta": {"additions": [], "deletions": []},
        }
    ]
    for k, result in enumerate(derive_transitions(plan, matcher), start=1):
        rows.append(
            {
                "plan_id": plan.id,
                "step_index": k,
                "state": list(result.new_state.items),
                "delta": {
                    "additions": list(result.delta.additions),
                    "deletions": list(result.delta.deletions),
                },
            }
        )
    return rows
