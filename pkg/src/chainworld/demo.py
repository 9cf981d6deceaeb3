"""Self-contained scripted fixtures for offline pipeline runs.

The responder below answers every pipeline prompt from fixed rules, so a
corpus build needs no network at all.  build_demo_script records a complete
fingerprint->response script by running the real pipeline (all ablation
variants) against the responder; the resulting JSON file then drives
byte-identical scripted reruns.
"""

from __future__ import annotations

import hashlib
from dataclasses import replace

from .core import normalize_proposition
from .gateway import Backend, Prompt, numbered, parse_item_list
from .pipeline import CorpusPipeline, PipelineConfig
from .prompts import parse_step_blocks

ISOLATED_STEP = "Check the weather forecast"


def _dish(task: str) -> str:
    return normalize_proposition(task).replace(" ", "-")


def _variant(dish: str) -> int:
    return int(hashlib.sha256(dish.encode("utf-8")).hexdigest()[:8], 16)


def demo_tasks(n: int) -> list[str]:
    """n distinct cooking task seeds."""
    base = [
        "make tomato soup",
        "brew loose leaf tea",
        "cook spaghetti with garlic oil",
        "fry an egg sandwich",
        "bake bread rolls",
        "simmer a vegetable stew",
        "prepare miso broth",
        "roast root vegetables",
        "steam a pot of rice",
        "grill halloumi skewers",
    ]
    tasks = []
    for i in range(n):
        suffix = "" if i < len(base) else f" (batch {i // len(base) + 1})"
        tasks.append(base[i % len(base)] + suffix)
    return tasks


def _raw_steps(task: str) -> list[str]:
    d = _dish(task)
    return [
        f"Place the {d} pot on the stove",
        f"Fill the {d} pot with water",
        ISOLATED_STEP,
        f"Turn on the burner under the {d} pot",
        f"Boil the water in the {d} pot",
    ]


def _annotation(step_text: str) -> tuple[list[str], list[str]]:
    text = normalize_proposition(step_text)
    if text == normalize_proposition(ISOLATED_STEP):
        return (["the window blinds are open"], ["the weather is known"])
    for verb, builder in _STEP_RULES.items():
        if text.startswith(verb):
            dish = text[len(verb):].split(" pot", 1)[0].strip()
            return builder(dish)
    raise KeyError(f"no demo annotation rule for step {step_text!r}")


def _rule_place(d: str):
    return (
        [f"the {d} pot is clean", "the stove top is clear"],
        [f"the {d} pot is on the stove"],
    )


def _rule_fill(d: str):
    return (
        [f"the {d} pot is on the stove", "the kitchen tap runs"],
        [f"the {d} pot contains water"],
    )


def _rule_fill_regenerated(d: str):
    return (
        [f"the {d} pot is on the stove", "the kitchen tap is open"],
        [f"the {d} pot contains water"],
    )


def _rule_burner(d: str):
    return (
        [f"the {d} pot is on the stove"],
        [f"the burner under the {d} pot is hot"],
    )


def _rule_boil(d: str):
    extras = [
        f"the spice jar {j} for the {d} pot is within reach"
        for j in range(1, _variant(d) % 3 + 1)
    ]
    return (
        [f"the {d} pot contains water", f"the burner under the {d} pot is hot"] + extras,
        [f"the water in the {d} pot is boiling"],
    )


_STEP_RULES = {
    "place the": _rule_place,
    "fill the": _rule_fill,
    "turn on the burner under the": _rule_burner,
    "boil the water in the": _rule_boil,
}


def _blocks_for(texts: list[str], annotate) -> str:
    chunks = []
    for text in texts:
        pres, effs = annotate(text)
        lines = [f"Step: {text}", "Preconditions:"]
        lines += [f"{i}. {p}" for i, p in enumerate(pres, start=1)]
        lines.append("Effects:")
        lines += [f"{i}. {e}" for i, e in enumerate(effs, start=1)]
        chunks.append("\n".join(lines))
    return "\n\n".join(chunks)


def _dish_of_steps(texts: list[str]) -> str:
    for text in texts:
        lowered = normalize_proposition(text)
        if lowered.startswith("fill the"):
            return lowered[len("fill the"):].split(" pot", 1)[0].strip()
    return ""


def demo_responder(prompt: Prompt) -> str:
    """Deterministic answers for every pipeline prompt kind."""
    bindings = dict(prompt.bindings)
    if prompt.template_name == "plan-steps":
        return numbered(_raw_steps(bindings["task"]))

    if prompt.template_name == "prune-steps":
        steps = parse_item_list(bindings["steps"])
        kept = [
            s for s in steps
            if normalize_proposition(s) != normalize_proposition(ISOLATED_STEP)
        ]
        return numbered(kept)

    if prompt.template_name == "annotate-steps":
        return _blocks_for(parse_item_list(bindings["steps"]), _annotation)

    if prompt.template_name == "rechain-identify":
        texts = [b.action_text for b in parse_step_blocks(bindings["steps"])]
        dish = _dish_of_steps(texts)
        if dish and _variant(dish) % 4 == 0:
            fill = next(t for t in texts if normalize_proposition(t).startswith("fill the"))
            return numbered([fill])
        return "none"

    if prompt.template_name == "rechain-regenerate":
        identified = parse_item_list(bindings["identified"])

        def regenerated(text: str) -> tuple[list[str], list[str]]:
            lowered = normalize_proposition(text)
            if lowered.startswith("fill the"):
                return _rule_fill_regenerated(lowered[len("fill the"):].split(" pot", 1)[0].strip())
            return _annotation(text)

        return _blocks_for(identified, regenerated)

    if prompt.template_name == "rechain-categorize":
        identified = parse_item_list(bindings["identified"])
        dish = _dish_of_steps(identified)
        if dish and _variant(dish) % 8 == 0:
            return "Connected:\nnone\nStill isolated:\n" + numbered(identified)
        return "Connected:\n" + numbered(identified) + "\nStill isolated:\nnone"

    raise KeyError(f"demo responder cannot answer template {prompt.template_name!r}")


def build_demo_script(tasks: list[str], config: PipelineConfig | None = None) -> dict[str, str]:
    """Record the full fingerprint->response script covering every pipeline
    variant (full, ablation-local, ablation-global) over the given tasks."""
    base = config or PipelineConfig()
    script: dict[str, str] = {}
    for skip_local, skip_global in ((False, False), (True, False), (False, True), (True, True)):
        variant = replace(base, skip_local=skip_local, skip_global=skip_global)
        backend = Backend(variant.backend, responder=demo_responder)
        CorpusPipeline(variant, backend=backend).run(tasks)
        script.update(backend.cache_snapshot())
    return script
