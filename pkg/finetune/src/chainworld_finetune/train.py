"""Training for the seq2seq inference models.

Defaults follow the reference recipe: AdamW, learning rate 5e-5 decaying
linearly to zero, 50 epochs, batch size 8, max length 256.  The base model is
FLAN-T5-large by name; the special name "tiny" builds a small random-weight
T5 with a word-level vocabulary fitted to the pairs, which is what the
offline tests train.  Five percent of pairs are held out for loss monitoring
only.
"""

from __future__ import annotations

import json
import logging
import random
from dataclasses import asdict, dataclass
from pathlib import Path

import torch
from torch.optim import AdamW
from torch.optim.lr_scheduler import LambdaLR
from transformers import T5Config, T5ForConditionalGeneration

from .data import Pair, WordTokenizer, load_pairs

log = logging.getLogger(__name__)

TINY = "tiny"


@dataclass(frozen=True)
class TrainSpec:
    pairs_path: str
    direction: str
    output_dir: str
    base_model: str = "google/flan-t5-large"
    learning_rate: float = 5e-5
    epochs: int = 50
    batch_size: int = 8
    max_length: int = 256
    seed: int = 0
    holdout_fraction: float = 0.05

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be > 0")
        if not 0 <= self.holdout_fraction < 1:
            raise ValueError("holdout_fraction must be in [0, 1)")


@dataclass(frozen=True)
class TrainResult:
    output_dir: str
    train_losses: tuple[float, ...]
    holdout_losses: tuple[float, ...]


def _tiny_model(tokenizer: WordTokenizer) -> T5ForConditionalGeneration:
    config = T5Config(
        vocab_size=tokenizer.vocab_size,
        d_model=128,
        d_kv=32,
        d_ff=256,
        num_layers=2,
        num_decoder_layers=2,
        num_heads=4,
        relative_attention_num_buckets=16,
        dropout_rate=0.0,
        pad_token_id=tokenizer.pad_id,
        eos_token_id=tokenizer.eos_id,
        decoder_start_token_id=tokenizer.pad_id,
    )
    return T5ForConditionalGeneration(config)


class HFTokenizer:
    """Duck-type adapter giving Hugging Face tokenizers the word-tokenizer API."""

    def __init__(self, inner):
        self.inner = inner
        self.pad_id = inner.pad_token_id
        self.eos_id = inner.eos_token_id

    def encode(self, text: str, add_eos: bool = True) -> list[int]:
        return self.inner.encode(text, add_special_tokens=add_eos)

    def decode(self, ids) -> str:
        return self.inner.decode(ids, skip_special_tokens=True)


def _load_base(spec: TrainSpec, pairs: list[Pair]):
    if spec.base_model == TINY:
        tokenizer = WordTokenizer.fit([p.input for p in pairs] + [p.target for p in pairs])
        return _tiny_model(tokenizer), tokenizer
    from transformers import AutoModelForSeq2SeqLM, AutoTokenizer

    tokenizer = AutoTokenizer.from_pretrained(spec.base_model)
    model = AutoModelForSeq2SeqLM.from_pretrained(spec.base_model)
    return model, HFTokenizer(tokenizer)


def _batch(tokenizer, pairs: list[Pair], max_length: int):
    inputs = [tokenizer.encode(p.input)[:max_length] for p in pairs]
    targets = [tokenizer.encode(p.target)[:max_length] for p in pairs]
    in_width = max(len(x) for x in inputs)
    out_width = max(len(x) for x in targets)
    input_ids = torch.full((len(pairs), in_width), tokenizer.pad_id, dtype=torch.long)
    attention = torch.zeros((len(pairs), in_width), dtype=torch.long)
    labels = torch.full((len(pairs), out_width), -100, dtype=torch.long)
    for row, (inp, out) in enumerate(zip(inputs, targets)):
        input_ids[row, : len(inp)] = torch.tensor(inp)
        attention[row, : len(inp)] = 1
        labels[row, : len(out)] = torch.tensor(out)
    return input_ids, attention, labels


def _epoch_loss(model, tokenizer, pairs, batch_size, max_length, optimizer=None, scheduler=None):
    total = 0.0
    batches = 0
    for start in range(0, len(pairs), batch_size):
        chunk = pairs[start : start + batch_size]
        input_ids, attention, labels = _batch(tokenizer, chunk, max_length)
        output = model(input_ids=input_ids, attention_mask=attention, labels=labels)
        if optimizer is not None:
            optimizer.zero_grad()
            output.loss.backward()
            optimizer.step()
            scheduler.step()
        total += float(output.loss.detach())
        batches += 1
    return total / batches


def train(spec: TrainSpec) -> TrainResult:
    """Train per the spec and save a servable artifact directory."""
    torch.manual_seed(spec.seed)
    pairs = load_pairs(spec.pairs_path, direction=spec.direction)
    shuffled = list(pairs)
    random.Random(spec.seed).shuffle(shuffled)
    holdout_count = int(len(shuffled) * spec.holdout_fraction)
    holdout, training = shuffled[:holdout_count], shuffled[holdout_count:]
    log.info("training on %d pairs, monitoring %d", len(training), len(holdout))

    model, tokenizer = _load_base(spec, pairs)
    model.train()
    optimizer = AdamW(model.parameters(), lr=spec.learning_rate)
    steps_per_epoch = max(1, (len(training) + spec.batch_size - 1) // spec.batch_size)
    total_steps = steps_per_epoch * spec.epochs
    scheduler = LambdaLR(optimizer, lambda step: max(0.0, 1.0 - step / total_steps))

    train_losses: list[float] = []
    holdout_losses: list[float] = []
    for epoch in range(spec.epochs):
        loss = _epoch_loss(
            model, tokenizer, training, spec.batch_size, spec.max_length, optimizer, scheduler
        )
        train_losses.append(loss)
        if holdout:
            model.eval()
            with torch.no_grad():
                holdout_losses.append(
                    _epoch_loss(model, tokenizer, holdout, spec.batch_size, spec.max_length)
                )
            model.train()
        if epoch == 0 or (epoch + 1) % 25 == 0:
            log.info("epoch %d/%d loss %.4f", epoch + 1, spec.epochs, loss)

    out = Path(spec.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    model.eval()
    model.save_pretrained(out / "model")
    meta = {"tokenizer": "word" if isinstance(tokenizer, WordTokenizer) else "hf", **asdict(spec)}
    if isinstance(tokenizer, WordTokenizer):
        tokenizer.save(out / "tokenizer.json")
    (out / "meta.json").write_text(json.dumps(meta, indent=2), encoding="utf-8")
    (out / "training_log.json").write_text(
        json.dumps(
            {"train_loss": train_losses, "holdout_loss": holdout_losses}, indent=2
        ),
        encoding="utf-8",
    )
    return TrainResult(str(out), tuple(train_losses), tuple(holdout_losses))


class Artifact:
    """A trained model directory, loaded for greedy-decoding inference."""

    def __init__(self, model_dir: str | Path):
        root = Path(model_dir)
        if not (root / "model").is_dir() or not (root / "meta.json").is_file():
            raise FileNotFoundError(
                f"{root} is not a trained artifact (expected model/ and meta.json)"
            )
        self.meta = json.loads((root / "meta.json").read_text(encoding="utf-8"))
        self.model = T5ForConditionalGeneration.from_pretrained(root / "model")
        self.model.eval()
        if self.meta.get("tokenizer") == "word":
            self.tokenizer = WordTokenizer.load(root / "tokenizer.json")
        else:
            from transformers import AutoTokenizer

            self.tokenizer = HFTokenizer(AutoTokenizer.from_pretrained(self.meta["base_model"]))
        self.max_length = int(self.meta.get("max_length", 256))

    def generate(self, text: str) -> str:
        """Greedy decoding only."""
        ids = self.tokenizer.encode(text)[: self.max_length]
        input_ids = torch.tensor([ids], dtype=torch.long)
        with torch.no_grad():
            output = self.model.generate(
                input_ids=input_ids,
                attention_mask=torch.ones_like(input_ids),
                max_new_tokens=self.max_length,
                num_beams=1,
                do_sample=False,
            )
        return self.tokenizer.decode(output[0].tolist())


def exact_match(model_dir: str | Path, pairs: list[Pair]) -> float:
    """Fraction of pairs whose greedy decoding reproduces the target exactly."""
    artifact = Artifact(model_dir)
    hits = sum(artifact.generate(pair.input) == pair.target for pair in pairs)
    return hits / len(pairs)
