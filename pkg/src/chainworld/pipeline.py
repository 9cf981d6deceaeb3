"""The five-step corpus pipeline that manufactures chained action plans.

Per task: (1) generate a plan of mutually dependent steps, (2) discard or
replace isolated steps, (3) annotate every step with preconditions and
effects, (4) identify weakly chained steps, regenerate their annotations
once, and drop the ones that stay isolated, (5) score every plan by the
fraction of preconditions/effects left uncovered inside it and drop the
worst tail of the corpus.  Steps 2 and 4 are the local edits; step 5 is the
global filter; both can be ablated independently.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .core import (
    ActionPlan,
    ActionStep,
    AnnotationIncomplete,
    Proposition,
    Provenance,
    normalize_proposition,
    with_provenance,
)
from .gateway import (
    Backend,
    BackendConfig,
    EmptyList,
    build_prompt,
    numbered,
    parse_item_list,
    parse_optional_item_list,
)
from .prompts import (
    ANNOTATE_STEPS,
    CATEGORIZE_EXAMPLES,
    IDENTIFY_EXAMPLES,
    PLAN_STEPS,
    PRUNE_EXAMPLES,
    PRUNE_STEPS,
    RECHAIN_CATEGORIZE,
    RECHAIN_IDENTIFY,
    RECHAIN_REGENERATE,
    join_examples,
    parse_step_blocks,
    render_step_blocks,
)
from .worldmodel import ExactMatcher, Matcher

log = logging.getLogger(__name__)


class GenerationFailed(Exception):
    """The backend produced nothing usable for a pipeline stage."""


class UnparseableEdit(Exception):
    """An edit response could not be aligned with the plan's steps."""


@dataclass(frozen=True)
class ChainingReport:
    """How much of a plan's precondition/effect mass is uncovered in-plan."""

    plan_id: str
    uncovered_preconditions: tuple[Proposition, ...]
    uncovered_effects: tuple[Proposition, ...]
    pct_uncovered_pre: float
    pct_uncovered_eff: float
    score: float

    def to_dict(self) -> dict:
        return {
            "plan_id": self.plan_id,
            "uncovered_preconditions": list(self.uncovered_preconditions),
            "uncovered_effects": list(self.uncovered_effects),
            "pct_uncovered_pre": self.pct_uncovered_pre,
            "pct_uncovered_eff": self.pct_uncovered_eff,
            "score": self.score,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ChainingReport":
        return cls(
            plan_id=data["plan_id"],
            uncovered_preconditions=tuple(data["uncovered_preconditions"]),
            uncovered_effects=tuple(data["uncovered_effects"]),
            pct_uncovered_pre=data["pct_uncovered_pre"],
            pct_uncovered_eff=data["pct_uncovered_eff"],
            score=data["score"],
        )


@dataclass(frozen=True)
class PipelineConfig:
    """Pipeline behavior: ablations, filter strength, few-shot fixtures."""

    backend: BackendConfig = field(default_factory=BackendConfig)
    skip_local: bool = False
    skip_global: bool = False
    filter_fraction: float = 0.05
    generation_temperature: float = 0.7
    score_rule: str = "mean"
    prune_examples: tuple[str, ...] = PRUNE_EXAMPLES
    identify_examples: tuple[str, ...] = IDENTIFY_EXAMPLES
    categorize_examples: tuple[str, ...] = CATEGORIZE_EXAMPLES
    jobs: int = 1

    def __post_init__(self) -> None:
        if not 0 <= self.filter_fraction < 1:
            raise ValueError("filter_fraction must be in [0, 1)")
        if self.score_rule not in ("mean", "max"):
            raise ValueError(f"unknown score_rule {self.score_rule!r}")

    @property
    def label(self) -> str:
        if self.skip_local and self.skip_global:
            return "ablation-local-global"
        if self.skip_local:
            return "ablation-local"
        if self.skip_global:
            return "ablation-global"
        return "full"


@dataclass(frozen=True)
class PipelineResult:
    kept: tuple[ActionPlan, ...]
    discarded: tuple[ActionPlan, ...]
    reports: tuple[ChainingReport, ...]


def _next_step_id(steps: Sequence[ActionStep]) -> int:
    highest = 0
    for step in steps:
        if step.id.startswith("s") and step.id[1:].isdigit():
            highest = max(highest, int(step.id[1:]))
    return highest + 1


def _align(plan: ActionPlan, action_text: str, stage: str) -> ActionStep:
    key = normalize_proposition(action_text)
    for step in plan.steps:
        if normalize_proposition(step.action_text) == key:
            return step
    raise UnparseableEdit(
        f"{stage}: response step {action_text!r} matches nothing in plan {plan.id!r}"
    )


class CorpusPipeline:
    """Runs the five stages against one configured backend."""

    def __init__(self, config: PipelineConfig, backend: Backend | None = None):
        self.config = config
        self.backend = backend or Backend(config.backend)

    # -- stage 1 --

    def generate_plan(self, task: str, plan_id: str | None = None) -> ActionPlan:
        """Generate the raw step list for a task (no annotations yet)."""
        if not task.strip():
            raise ValueError("task must be non-empty")
        prompt = build_prompt(PLAN_STEPS, {"task": task.strip()})
        completion = self.backend.complete(
            prompt, temperature=self.config.generation_temperature
        )
        try:
            texts = parse_item_list(completion.text)
        except EmptyList as exc:
            raise GenerationFailed(f"no steps generated for task {task!r}") from exc
        if len(texts) < 2:
            raise GenerationFailed(f"only {len(texts)} step generated for task {task!r}")
        steps = tuple(
            ActionStep(id=f"s{i}", action_text=text) for i, text in enumerate(texts, start=1)
        )
        return ActionPlan(
            id=plan_id or f"plan-{normalize_proposition(task).replace(' ', '-')}",
            task_description=task.strip(),
            steps=steps,
            provenance=Provenance(stage="raw", pipeline=self.config.label),
        )

    # -- stage 2 --

    def prune_isolated_steps(self, plan: ActionPlan) -> ActionPlan:
        """Let the model discard isolated steps and optionally add better ones."""
        prompt = build_prompt(
            PRUNE_STEPS,
            {
                "examples": join_examples(self.config.prune_examples),
                "steps": numbered([s.action_text for s in plan.steps]),
            },
        )
        completion = self.backend.complete(prompt)
        try:
            texts = parse_item_list(completion.text)
        except EmptyList as exc:
            raise GenerationFailed(f"prune emptied plan {plan.id!r}") from exc

        by_key = {normalize_proposition(s.action_text): s for s in plan.steps}
        new_steps: list[ActionStep] = []
        edits: list[dict] = []
        seen: set[str] = set()
        next_id = _next_step_id(plan.steps)
        for text in texts:
            key = normalize_proposition(text)
            if key in seen:
                continue
            seen.add(key)
            if key in by_key:
                new_steps.append(by_key[key])
            else:
                new_steps.append(ActionStep(id=f"s{next_id}", action_text=text))
                edits.append({"op": "add", "stage": "pruned", "text": text})
                next_id += 1
        for key, step in by_key.items():
            if key not in seen:
                edits.append({"op": "remove", "stage": "pruned", "step_id": step.id})
        return replace(
            plan,
            steps=tuple(new_steps),
            provenance=replace(
                plan.provenance, stage="pruned", edits=plan.provenance.edits + tuple(edits)
            ),
        )

    # -- stage 3 --

    def annotate_preconditions_effects(self, plan: ActionPlan) -> ActionPlan:
        """Annotate every step; re-running overwrites with the latest response."""
        prompt = build_prompt(
            ANNOTATE_STEPS, {"steps": numbered([s.action_text for s in plan.steps])}
        )
        completion = self.backend.complete(prompt)
        blocks = {}
        for block in parse_step_blocks(completion.text):
            step = _align(plan, block.action_text, "annotate")
            blocks[step.id] = block
        new_steps = []
        for step in plan.steps:
            block = blocks.get(step.id)
            if block is None or not block.preconditions or not block.effects:
                raise AnnotationIncomplete(step.id, f"plan {plan.id!r}")
            new_steps.append(
                replace(step, preconditions=tuple(block.preconditions), effects=tuple(block.effects))
            )
        return replace(
            plan,
            steps=tuple(new_steps),
            provenance=replace(plan.provenance, stage="annotated"),
        )

    # -- stage 4 --

    def local_rechain(self, plan: ActionPlan) -> ActionPlan:
        """Identify weakly chained steps, regenerate their annotations once,
        and drop the ones judged still isolated."""
        annotated_blocks = render_step_blocks(plan.steps)
        identify_prompt = build_prompt(
            RECHAIN_IDENTIFY,
            {
                "examples": join_examples(self.config.identify_examples),
                "steps": annotated_blocks,
            },
        )
        identified_texts = parse_optional_item_list(
            self.backend.complete(identify_prompt).text
        )
        if not identified_texts:
            return with_provenance(plan, stage="rechained")
        identified = [_align(plan, text, "rechain-identify") for text in identified_texts]
        identified_ids = {step.id for step in identified}

        regen_prompt = build_prompt(
            RECHAIN_REGENERATE,
            {
                "steps": annotated_blocks,
                "identified": numbered([s.action_text for s in identified]),
            },
        )
        regenerated: dict[str, ActionStep] = {}
        for block in parse_step_blocks(self.backend.complete(regen_prompt).text):
            step = _align(plan, block.action_text, "rechain-regenerate")
            if step.id not in identified_ids:
                raise UnparseableEdit(
                    f"rechain-regenerate: {block.action_text!r} was not an identified step"
                )
            if not block.preconditions or not block.effects:
                raise AnnotationIncomplete(step.id, "regeneration")
            regenerated[step.id] = replace(
                step, preconditions=tuple(block.preconditions), effects=tuple(block.effects)
            )
        missing = identified_ids - set(regenerated)
        if missing:
            raise UnparseableEdit(f"rechain-regenerate: no new annotations for {sorted(missing)}")

        categorize_prompt = build_prompt(
            RECHAIN_CATEGORIZE,
            {
                "examples": join_examples(self.config.categorize_examples),
                "steps": annotated_blocks,
                "identified": numbered([s.action_text for s in identified]),
                "regenerated": render_step_blocks(
                    [regenerated[s.id] for s in identified]
                ),
            },
        )
        connected, isolated = _parse_categorization(
            self.backend.complete(categorize_prompt).text
        )
        drop_ids = {_align(plan, text, "rechain-categorize").id for text in isolated}
        keep_check = {_align(plan, text, "rechain-categorize").id for text in connected}
        stray = (drop_ids | keep_check) - identified_ids
        if stray:
            raise UnparseableEdit(f"rechain-categorize: {sorted(stray)} were not identified steps")

        edits: list[dict] = [
            {"op": "regenerate", "stage": "rechained", "step_id": sid} for sid in sorted(regenerated)
        ]
        new_steps = []
        for step in plan.steps:
            if step.id in drop_ids:
                edits.append({"op": "remove", "stage": "rechained", "step_id": step.id})
                continue
            new_steps.append(regenerated.get(step.id, step))
        return replace(
            plan,
            steps=tuple(new_steps),
            provenance=replace(
                plan.provenance, stage="rechained", edits=plan.provenance.edits + tuple(edits)
            ),
        )

    # -- whole pipeline --

    def build_plan(self, task: str, plan_id: str | None = None) -> ActionPlan:
        plan = self.generate_plan(task, plan_id)
        if not self.config.skip_local:
            plan = self.prune_isolated_steps(plan)
        plan = self.annotate_preconditions_effects(plan)
        if not self.config.skip_local:
            plan = self.local_rechain(plan)
        return plan

    def run(self, tasks: Sequence[str], matcher: Matcher | None = None) -> PipelineResult:
        """Build a corpus from task seeds; step 5 uses the given matcher."""
        matcher = matcher or ExactMatcher()
        ids = [f"plan-{i:04d}" for i in range(1, len(tasks) + 1)]
        if self.config.jobs > 1:
            with ThreadPoolExecutor(max_workers=self.config.jobs) as pool:
                plans = list(pool.map(self.build_plan, tasks, ids))
        else:
            plans = [self.build_plan(task, pid) for task, pid in zip(tasks, ids)]
        reports = tuple(
            chaining_report(plan, matcher, score_rule=self.config.score_rule) for plan in plans
        )
        if self.config.skip_global:
            return PipelineResult(kept=tuple(plans), discarded=(), reports=reports)
        kept, discarded = filter_corpus(plans, reports, fraction=self.config.filter_fraction)
        return PipelineResult(kept=kept, discarded=discarded, reports=reports)


def _parse_categorization(raw: str) -> tuple[list[str], list[str]]:
    """Split a two-section categorization response into (connected, isolated)."""
    sections: dict[str, list[str]] = {"connected": [], "isolated": []}
    current: str | None = None
    for line in raw.splitlines():
        lowered = line.strip().lower().rstrip(":")
        if lowered == "connected":
            current = "connected"
            continue
        if lowered in ("still isolated", "isolated"):
            current = "isolated"
            continue
        if current and line.strip():
            sections[current].append(line)
    if not sections["connected"] and not sections["isolated"]:
        raise UnparseableEdit("categorization response has no Connected/Still isolated sections")
    connected = parse_optional_item_list("\n".join(sections["connected"]))
    isolated = parse_optional_item_list("\n".join(sections["isolated"]))
    return connected, isolated


def chaining_report(
    plan: ActionPlan, matcher: Matcher, score_rule: str = "mean"
) -> ChainingReport:
    """Score a plan by its uncovered precondition/effect fractions.

    A precondition occurrence is covered when the matcher finds at least one
    equivalent item in the plan's pooled effects, and symmetrically for
    effects against pooled preconditions.  Percentages are over occurrences;
    a side with no items contributes 0.
    """
    pre_occurrences = [p for step in plan.steps for p in step.preconditions]
    eff_occurrences = [e for step in plan.steps for e in step.effects]

    def uncovered(items: list[str], pool: list[str]) -> list[str]:
        distinct = list(dict.fromkeys(items))
        matches = dict(zip(distinct, matcher.match_indices(distinct, pool)))
        return [item for item in items if not matches[item]]

    uncovered_pre = uncovered(pre_occurrences, eff_occurrences)
    uncovered_eff = uncovered(eff_occurrences, pre_occurrences)
    pct_pre = len(uncovered_pre) / len(pre_occurrences) if pre_occurrences else 0.0
    pct_eff = len(uncovered_eff) / len(eff_occurrences) if eff_occurrences else 0.0
    score = max(pct_pre, pct_eff) if score_rule == "max" else (pct_pre + pct_eff) / 2
    return ChainingReport(
        plan_id=plan.id,
        uncovered_preconditions=tuple(uncovered_pre),
        uncovered_effects=tuple(uncovered_eff),
        pct_uncovered_pre=pct_pre,
        pct_uncovered_eff=pct_eff,
        score=score,
    )


def filter_corpus(
    corpus: Sequence[ActionPlan],
    reports: Iterable[ChainingReport] | Mapping[str, ChainingReport],
    fraction: float = 0.05,
) -> tuple[tuple[ActionPlan, ...], tuple[ActionPlan, ...]]:
    """Drop the ceil(fraction * N) worst-chained plans.

    Plans are ranked by score; among equal scores, higher plan ids go first.
    The discard count uses exact decimal arithmetic so 0.05 of 40 is 2, not a
    float whisker above it.  Both outputs preserve corpus order; discarded
    plans carry the filtered-out provenance flag.
    """
    if not 0 <= fraction < 1:
        raise ValueError("fraction must be in [0, 1)")
    if isinstance(reports, Mapping):
        by_id = dict(reports)
    else:
        by_id = {r.plan_id: r for r in reports}
    missing = [p.id for p in corpus if p.id not in by_id]
    if missing:
        raise ValueError(f"no chaining report for plans: {missing}")
    count = math.ceil(Fraction(str(fraction)) * len(corpus))
    ranked = sorted(corpus, key=lambda p: (by_id[p.id].score, p.id))
    doomed = {p.id for p in ranked[len(ranked) - count :]} if count else set()
    kept = tuple(p for p in corpus if p.id not in doomed)
    discarded = tuple(
        with_provenance(p, filtered_out=True) for p in corpus if p.id in doomed
    )
    return kept, discarded


def load_tasks(path: str | Path) -> list[str]:
    """Task seeds: one per line, blank lines and #-comments skipped."""
    tasks = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            tasks.append(line)
    return tasks
