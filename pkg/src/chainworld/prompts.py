"""Prompt templates for corpus generation, annotation, and semantic judging.

Every template ends with an explicit output-format instruction so responses
parse with gateway.parse_item_list or the block/judgment parsers below.
Few-shot slots are filled from the fixtures at the bottom unless the caller
supplies its own.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .gateway import PromptTemplate, strip_item_marker

LIST_FORMAT_NOTE = 'Write one item per line, prefixed with its number like "1.". No other text.'

PLAN_STEPS = PromptTemplate(
    name="plan-steps",
    body=(
        "Write the action steps a person would carry out for this task.\n"
        "Each step must depend strongly on other steps, and all steps must take\n"
        "place in one concrete, specific environment.\n"
        "\n"
        "Task: $task\n"
        "\n"
        f"{LIST_FORMAT_NOTE}\n"
        "Action steps:\n"
    ),
    required_slots=("task",),
)

PRUNE_STEPS = PromptTemplate(
    name="prune-steps",
    body=(
        "You will be given the full action steps of a plan.\n"
        "Remove the steps that stand alone: steps that no other step depends on\n"
        "and that depend on no other step.\n"
        "If the remaining steps lose coherence, you may add replacement steps in\n"
        "the gaps, but any step you add must depend strongly on existing steps.\n"
        "\n"
        "Worked examples:\n"
        "$examples\n"
        "\n"
        "Full action steps:\n"
        "$steps\n"
        "\n"
        f"{LIST_FORMAT_NOTE}\n"
        "Revised action steps:\n"
    ),
    required_slots=("examples", "steps"),
)

ANNOTATE_STEPS = PromptTemplate(
    name="annotate-steps",
    body=(
        "You will be given the full action steps of a plan.\n"
        "For each step, independently work out every precondition and every effect.\n"
        "A precondition is a state that must hold before the step can run.\n"
        "An effect is a state that holds after the step has run.\n"
        "Be precise. A step's preconditions need not repeat the previous step's effects.\n"
        "\n"
        "Full action steps:\n"
        "$steps\n"
        "\n"
        "For every step output exactly this block:\n"
        "Step: <the step text>\n"
        "Preconditions:\n"
        "1. <one per line>\n"
        "Effects:\n"
        "1. <one per line>\n"
    ),
    required_slots=("steps",),
)

RECHAIN_IDENTIFY = PromptTemplate(
    name="rechain-identify",
    body=(
        "You will be given action steps annotated with preconditions and effects.\n"
        "Identify the steps whose preconditions and effects stand alone, with no\n"
        "dependency on the preconditions and effects of the other steps.\n"
        "\n"
        "Worked examples:\n"
        "$examples\n"
        "\n"
        "Annotated action steps:\n"
        "$steps\n"
        "\n"
        f"{LIST_FORMAT_NOTE}\n"
        "Identified steps:\n"
    ),
    required_slots=("examples", "steps"),
)

RECHAIN_REGENERATE = PromptTemplate(
    name="rechain-regenerate",
    body=(
        "You will be given action steps annotated with preconditions and effects,\n"
        "and a list of identified steps whose preconditions and effects stand alone.\n"
        "Rethink the identified steps and write new preconditions and effects for\n"
        "them that connect to the other steps' preconditions and effects.\n"
        "A precondition is a state that must hold before the step can run.\n"
        "An effect is a state that holds after the step has run.\n"
        "\n"
        "Annotated action steps:\n"
        "$steps\n"
        "\n"
        "Identified steps:\n"
        "$identified\n"
        "\n"
        "For every identified step output exactly this block:\n"
        "Step: <the step text>\n"
        "Preconditions:\n"
        "1. <one per line>\n"
        "Effects:\n"
        "1. <one per line>\n"
    ),
    required_slots=("steps", "identified"),
)

RECHAIN_CATEGORIZE = PromptTemplate(
    name="rechain-categorize",
    body=(
        "You will be given action steps annotated with preconditions and effects,\n"
        "the steps that were identified as standing alone, and the new preconditions\n"
        "and effects written for those identified steps.\n"
        "Sort the identified steps into two groups: steps whose new preconditions\n"
        "and effects now depend on the other steps, and steps that still stand alone.\n"
        "\n"
        "Worked examples:\n"
        "$examples\n"
        "\n"
        "Annotated action steps:\n"
        "$steps\n"
        "\n"
        "Identified steps:\n"
        "$identified\n"
        "\n"
        "Identified steps with new preconditions and effects:\n"
        "$regenerated\n"
        "\n"
        "Output exactly two sections, each listing step texts one per line with\n"
        'numeric prefixes (write "none" under an empty section):\n'
        "Connected:\n"
        "Still isolated:\n"
    ),
    required_slots=("examples", "steps", "identified", "regenerated"),
)

SEMANTIC_COVERAGE = PromptTemplate(
    name="semantic-coverage",
    body=(
        "You will be given numbered query items and numbered reference items.\n"
        "A query item is covered when at least one reference item expresses the\n"
        "same meaning.\n"
        "\n"
        "Query items:\n"
        "$query_items\n"
        "\n"
        "Reference items:\n"
        "$reference_items\n"
        "\n"
        'Answer one line per query item: "<query number>: COVERED by <reference\n'
        'numbers, comma separated>" or "<query number>: UNCOVERED".\n'
        "Finish with one line containing TRUE if every query item is covered,\n"
        "otherwise FALSE.\n"
    ),
    required_slots=("query_items", "reference_items"),
)

CONTRADICTION_SCAN = PromptTemplate(
    name="contradiction-scan",
    body=(
        "You will be given numbered incoming items and numbered state items.\n"
        "For each incoming item, find every state item that cannot be true once\n"
        "the incoming item is true.\n"
        "\n"
        "Incoming items:\n"
        "$incoming_items\n"
        "\n"
        "State items:\n"
        "$state_items\n"
        "\n"
        'Answer one line per incoming item: "<incoming number>: <state numbers,\n'
        'comma separated>" or "<incoming number>: NONE".\n'
    ),
    required_slots=("incoming_items", "state_items"),
)

INFER_PRECONDITIONS = PromptTemplate(
    name="infer-preconditions",
    body=(
        "List the preconditions of the action:\n"
        "$action\n"
        "\n"
        f"{LIST_FORMAT_NOTE}\n"
    ),
    required_slots=("action",),
)

INFER_EFFECTS = PromptTemplate(
    name="infer-effects",
    body=(
        "List the effects of the action:\n"
        "$action\n"
        "\n"
        f"{LIST_FORMAT_NOTE}\n"
    ),
    required_slots=("action",),
)

FEWSHOT_INFER_PRECONDITIONS = PromptTemplate(
    name="fewshot-infer-preconditions",
    body=(
        "Below are actions with their preconditions, the states that must hold\n"
        "before each action can run.\n"
        "\n"
        "$examples\n"
        "\n"
        "List the preconditions of the action:\n"
        "$action\n"
        "\n"
        f"{LIST_FORMAT_NOTE}\n"
    ),
    required_slots=("examples", "action"),
)

FEWSHOT_INFER_EFFECTS = PromptTemplate(
    name="fewshot-infer-effects",
    body=(
        "Below are actions with their effects, the states that hold after each\n"
        "action has run.\n"
        "\n"
        "$examples\n"
        "\n"
        "List the effects of the action:\n"
        "$action\n"
        "\n"
        f"{LIST_FORMAT_NOTE}\n"
    ),
    required_slots=("examples", "action"),
)


# --- annotated-step block rendering and parsing ---


@dataclass(frozen=True)
class StepBlock:
    """One parsed "Step:" block; None marks a missing section header."""

    action_text: str
    preconditions: list[str] | None
    effects: list[str] | None


def render_step_blocks(steps) -> str:
    """Render (action_text, preconditions, effects) triples as prompt blocks."""
    chunks = []
    for step in steps:
        lines = [f"Step: {step.action_text}", "Preconditions:"]
        lines += [f"{i}. {p}" for i, p in enumerate(step.preconditions, start=1)]
        lines.append("Effects:")
        lines += [f"{i}. {e}" for i, e in enumerate(step.effects, start=1)]
        chunks.append("\n".join(lines))
    return "\n\n".join(chunks)


_STEP_HEADER = re.compile(r"^\s*step\s*:\s*(.+?)\s*$", re.IGNORECASE)
_PRE_HEADER = re.compile(r"^\s*preconditions\s*:\s*$", re.IGNORECASE)
_EFF_HEADER = re.compile(r"^\s*effects\s*:\s*$", re.IGNORECASE)


def parse_step_blocks(raw: str) -> list[StepBlock]:
    """Parse "Step:/ Preconditions:/ Effects:" blocks back out of a response."""
    blocks: list[StepBlock] = []
    action: str | None = None
    sections: dict[str, list[str] | None] = {}
    current: list[str] | None = None

    def flush() -> None:
        if action is not None:
            blocks.append(
                StepBlock(
                    action_text=action,
                    preconditions=sections.get("pre"),
                    effects=sections.get("eff"),
                )
            )

    for line in raw.splitlines():
        header = _STEP_HEADER.match(line)
        if header:
            flush()
            action = header.group(1)
            sections = {}
            current = None
            continue
        if _PRE_HEADER.match(line):
            current = sections.setdefault("pre", [])
            continue
        if _EFF_HEADER.match(line):
            current = sections.setdefault("eff", [])
            continue
        if current is not None and line.strip():
            item = strip_item_marker(line)
            if item:
                current.append(item)
    flush()
    return blocks


# --- default few-shot fixtures (three worked examples per judged step) ---

PRUNE_EXAMPLES = (
    "Full action steps:\n"
    "1. Fill the kettle with water\n"
    "2. Check the weather outside\n"
    "3. Boil the kettle\n"
    "4. Pour the boiled water into the mug\n"
    "Revised action steps:\n"
    "1. Fill the kettle with water\n"
    "2. Boil the kettle\n"
    "3. Pour the boiled water into the mug",
    "Full action steps:\n"
    "1. Lay out the cutting board\n"
    "2. Chop the carrots on the board\n"
    "3. Hum a tune\n"
    "4. Put the chopped carrots in the pan\n"
    "Revised action steps:\n"
    "1. Lay out the cutting board\n"
    "2. Chop the carrots on the board\n"
    "3. Put the chopped carrots in the pan",
    "Full action steps:\n"
    "1. Preheat the oven\n"
    "2. Grease the baking tray\n"
    "3. Place the dough on the tray\n"
    "4. Bake the tray in the oven\n"
    "Revised action steps:\n"
    "1. Preheat the oven\n"
    "2. Grease the baking tray\n"
    "3. Place the dough on the tray\n"
    "4. Bake the tray in the oven",
)

IDENTIFY_EXAMPLES = (
    "Steps where one step's effects feed another step's preconditions are\n"
    "connected; a step is identified only when neither its preconditions nor\n"
    "its effects appear anywhere else.\n"
    "Example: a plan about brewing tea contains \"wipe the counter\" whose\n"
    "precondition (the counter is dirty) and effect (the counter is clean)\n"
    "touch no other step. Identified steps:\n"
    "1. wipe the counter",
    "Example: in a plan about frying eggs, \"crack the eggs into the bowl\"\n"
    "produces (the eggs are in the bowl), which \"whisk the eggs in the bowl\"\n"
    "requires. Neither is identified. Identified steps:\n"
    "none",
    "Example: a plan about making rice includes \"water the garden\"; nothing\n"
    "in the plan produces or consumes its states. Identified steps:\n"
    "1. water the garden",
)

CATEGORIZE_EXAMPLES = (
    "Example: \"wipe the counter\" was rewritten so its effect (the counter is\n"
    "clear) is required by \"lay out the tea set on the counter\".\n"
    "Connected:\n"
    "1. wipe the counter\n"
    "Still isolated:\n"
    "none",
    "Example: \"water the garden\" still has no state shared with the cooking\n"
    "steps after rewriting.\n"
    "Connected:\n"
    "none\n"
    "Still isolated:\n"
    "1. water the garden",
    "Example: of two rewritten steps, \"dry the pan\" now feeds \"heat the dry\n"
    "pan\" but \"feed the cat\" remains unrelated.\n"
    "Connected:\n"
    "1. dry the pan\n"
    "Still isolated:\n"
    "1. feed the cat",
)


def join_examples(examples) -> str:
    return "\n\n".join(examples)
