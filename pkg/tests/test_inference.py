import pytest

from chainworld.core import ActionPlan, ActionStep, AnnotationIncomplete
from chainworld.gateway import BackendConfig, fingerprint
from chainworld.inference import (
    CorpusLookupBackend,
    EndpointBackend,
    FewshotBackend,
    InferenceEmpty,
    TrainingPair,
    UnknownAction,
    export_training_pairs,
    infer_effects,
    infer_preconditions,
    inference_prompt,
    parse_training_input,
    read_training_pairs,
    write_training_pairs,
)


def plan_of(pid, steps):
    return ActionPlan(
        id=pid,
        task_description=f"task {pid}",
        steps=tuple(
            ActionStep(id=f"s{i}", action_text=t, preconditions=p, effects=e)
            for i, (t, p, e) in enumerate(steps, start=1)
        ),
    )


@pytest.fixture
def small_corpus():
    # 3 plans x 4 steps, fully annotated
    return [
        plan_of(
            f"plan-{n}",
            [
                (f"step {n}-{k}", (f"pre {n}-{k}",), (f"eff {n}-{k}",))
                for k in range(4)
            ],
        )
        for n in range(3)
    ]


class TestCorpusLookup:
    def test_returns_gold_lists(self, toy_corpus):
        backend = CorpusLookupBackend(toy_corpus)
        assert infer_preconditions(backend, "boil water") == (
            "pot with water is on the stove",
            "stove is on",
        )
        assert infer_effects(backend, "boil water") == ("water is boiling",)

    def test_lookup_normalizes_query(self, toy_corpus):
        backend = CorpusLookupBackend(toy_corpus)
        assert infer_effects(backend, "  Boil   Water. ") == ("water is boiling",)

    def test_unknown_action(self, toy_corpus):
        backend = CorpusLookupBackend(toy_corpus)
        with pytest.raises(UnknownAction):
            infer_preconditions(backend, "summon a dragon")

    def test_first_occurrence_wins(self):
        first = plan_of("a", [("stir the pot", ("x",), ("y",)), ("other", ("q",), ("r",))])
        second = plan_of("b", [("stir the pot", ("x2",), ("y2",)), ("more", ("m",), ("n",))])
        backend = CorpusLookupBackend([first, second])
        assert infer_preconditions(backend, "stir the pot") == ("x",)

    def test_empty_action_rejected(self, toy_corpus):
        with pytest.raises(ValueError):
            infer_preconditions(CorpusLookupBackend(toy_corpus), "  ")


def endpoint_with(direction, action, text):
    config = BackendConfig(kind="scripted")
    prompt = inference_prompt(direction, action)
    script = {fingerprint(prompt, config.model_name, config.temperature): text}
    return EndpointBackend(BackendConfig(kind="scripted", script=script))


class TestEndpointBackend:
    def test_parses_numbered_list(self):
        backend = endpoint_with("precondition", "boil water", "1. x\n2. y")
        assert infer_preconditions(backend, "boil water") == ("x", "y")

    def test_effect_direction(self):
        backend = endpoint_with("effect", "boil water", "1. water is boiling")
        assert infer_effects(backend, "boil water") == ("water is boiling",)

    def test_empty_output_raises(self):
        backend = endpoint_with("effect", "boil water", "   ")
        with pytest.raises(InferenceEmpty):
            infer_effects(backend, "boil water")

    def test_output_normalized_and_deduped(self):
        backend = endpoint_with(
            "precondition", "boil water", "1. The stove is ON.\n2. the stove is on\n3. Pot ready"
        )
        assert infer_preconditions(backend, "boil water") == ("the stove is on", "pot ready")


def test_fewshot_backend_queries_with_examples(toy_corpus):
    from chainworld.prompts import FEWSHOT_INFER_EFFECTS
    from chainworld.gateway import build_prompt

    shots = [s for p in toy_corpus for s in p.steps][:3]
    examples = "\n\n".join(
        f"Action: {s.action_text}\n" + "\n".join(f"{i}. {e}" for i, e in enumerate(s.effects, 1))
        for s in shots
    )
    config = BackendConfig(kind="scripted")
    prompt = build_prompt(FEWSHOT_INFER_EFFECTS, {"examples": examples, "action": "warm the bowl"})
    script = {fingerprint(prompt, config.model_name, config.temperature): "1. the bowl is warm"}
    backend = FewshotBackend(BackendConfig(kind="scripted", script=script), toy_corpus)
    assert infer_effects(backend, "warm the bowl") == ("the bowl is warm",)


class TestExportTrainingPairs:
    def test_counts_per_direction(self, small_corpus):
        pre = list(export_training_pairs(small_corpus, "precondition"))
        eff = list(export_training_pairs(small_corpus, "effect"))
        assert len(pre) == 12 and len(eff) == 12
        assert all(p.direction == "precondition" for p in pre)

    def test_deterministic_order(self, small_corpus):
        pairs = list(export_training_pairs(small_corpus, "precondition"))
        assert pairs == list(export_training_pairs(small_corpus, "precondition"))
        actions = [parse_training_input(p.input)[1] for p in pairs]
        assert actions[:4] == ["step 0-0", "step 0-1", "step 0-2", "step 0-3"]

    def test_unannotated_step_raises(self, small_corpus):
        broken = small_corpus + [plan_of("plan-x", [("bare step", (), ("eff",))])]
        with pytest.raises(AnnotationIncomplete):
            list(export_training_pairs(broken, "precondition"))

    def test_invertible(self, toy_corpus):
        for direction in ("precondition", "effect"):
            for pair in export_training_pairs(toy_corpus, direction):
                parsed_direction, action = parse_training_input(pair.input)
                assert parsed_direction == direction
                step = next(
                    s
                    for p in toy_corpus
                    for s in p.steps
                    if s.action_text.lower() == action.lower()
                )
                gold = step.preconditions if direction == "precondition" else step.effects
                assert tuple(pair.target.splitlines()) == gold

    def test_task_context_flag(self, small_corpus):
        pairs = list(export_training_pairs(small_corpus, "effect", include_task=True))
        assert "Task context: task plan-0" in pairs[0].input

    def test_jsonl_roundtrip(self, tmp_path, small_corpus):
        path = tmp_path / "pairs.jsonl"
        pairs = list(export_training_pairs(small_corpus, "effect"))
        assert write_training_pairs(path, pairs) == 12
        assert read_training_pairs(path) == pairs

    def test_empty_target_rejected(self):
        with pytest.raises(ValueError):
            TrainingPair(input="x", target="  \n ", direction="effect")

    def test_bad_direction_rejected(self):
        with pytest.raises(ValueError):
            TrainingPair(input="x", target="y", direction="sideways")
