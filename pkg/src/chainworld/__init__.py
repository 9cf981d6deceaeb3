"""World-model engine over natural-language states.

Decides whether an action is valid in a given world state and predicts the
successor state, backed by precondition/effect inference and semantic state
matching; ships the synthetic-corpus pipeline, evaluation harness, and
search-space analysis used to build and validate it.
"""

__version__ = "0.1.0"

import json as _json
from importlib import resources as _resources
from pathlib import Path as _Path

from .core import (
    ActionPlan,
    ActionStep,
    ApplyResult,
    Provenance,
    StateDelta,
    WorldState,
    apply_delta,
    diff_states,
    normalize_proposition,
    read_plans,
    write_plans,
)
from .gateway import (
    Backend,
    BackendConfig,
    Completion,
    Prompt,
    PromptTemplate,
    build_prompt,
    complete,
    parse_item_list,
    render_template,
)
from .inference import (
    CorpusLookupBackend,
    EndpointBackend,
    FewshotBackend,
    TrainingPair,
    export_training_pairs,
    infer_effects,
    infer_preconditions,
)
from .pipeline import (
    ChainingReport,
    CorpusPipeline,
    PipelineConfig,
    chaining_report,
    filter_corpus,
)
from .worldmodel import (
    ExactMatcher,
    FixtureMatcher,
    LlmMatcher,
    TransitionResult,
    ValidityVerdict,
    WorldModel,
    check_preconditions,
    derive_initial_state,
    derive_state_trace,
    find_contradictions,
)

def data_path(name: str) -> _Path:
    """Filesystem path of a bundled data file (toy corpus, task seeds)."""
    return _Path(str(_resources.files(__name__) / "data" / name))


def load_toy_corpus() -> list[ActionPlan]:
    """The bundled hand-annotated corpus used by tests and demos."""
    text = (_resources.files(__name__) / "data" / "toy_corpus.jsonl").read_text("utf-8")
    from .core import plan_from_dict

    return [plan_from_dict(_json.loads(line)) for line in text.splitlines() if line.strip()]


__all__ = [name for name in dir() if not name.startswith("_")]
