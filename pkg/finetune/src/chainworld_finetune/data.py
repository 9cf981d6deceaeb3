"""Training-pair loading and the word-level tokenizer for tiny models.

Pairs arrive as JSONL with fields input/target/direction.  Targets are
newline-joined proposition lists; the tokenizer maps newlines to a dedicated
token so decoding reproduces targets byte-for-byte.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

NEWLINE_TOKEN = "<nl>"


class PairFormatError(ValueError):
    """A training-pair line is malformed; the message names the line."""


@dataclass(frozen=True)
class Pair:
    input: str
    target: str
    direction: str


def load_pairs(path: str | Path, direction: str | None = None) -> list[Pair]:
    """Read and validate TrainingPair JSONL, optionally filtered by direction."""
    pairs: list[Pair] = []
    with open(path, "r", encoding="utf-8") as fh:
        for number, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise PairFormatError(f"{path}, line {number}: not valid JSON ({exc})") from exc
            missing = {"input", "target", "direction"} - set(row)
            if missing:
                raise PairFormatError(f"{path}, line {number}: missing keys {sorted(missing)}")
            if not str(row["target"]).strip():
                raise PairFormatError(f"{path}, line {number}: empty target")
            pair = Pair(str(row["input"]), str(row["target"]), str(row["direction"]))
            if direction is None or pair.direction == direction:
                pairs.append(pair)
    if not pairs:
        raise PairFormatError(f"{path}: no training pairs" + (f" with direction {direction!r}" if direction else ""))
    return pairs


def _words(text: str) -> list[str]:
    return text.replace("\n", f" {NEWLINE_TOKEN} ").split()


def _detokenize(tokens: Sequence[str]) -> str:
    text = " ".join(tokens)
    text = text.replace(f" {NEWLINE_TOKEN} ", "\n")
    text = text.replace(f"{NEWLINE_TOKEN} ", "\n").replace(f" {NEWLINE_TOKEN}", "\n")
    return text.replace(NEWLINE_TOKEN, "\n")


class WordTokenizer:
    """Whitespace vocabulary with pad/eos/unk specials; ids are stable."""

    PAD, EOS, UNK = "<pad>", "</s>", "<unk>"

    def __init__(self, vocab: list[str]):
        if vocab[:3] != [self.PAD, self.EOS, self.UNK]:
            raise ValueError("vocab must start with the special tokens")
        self.vocab = list(vocab)
        self._ids = {token: i for i, token in enumerate(self.vocab)}

    pad_id = 0
    eos_id = 1
    unk_id = 2

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)

    @classmethod
    def fit(cls, texts: Iterable[str]) -> "WordTokenizer":
        words = sorted({w for text in texts for w in _words(text)})
        return cls([cls.PAD, cls.EOS, cls.UNK] + words)

    def encode(self, text: str, add_eos: bool = True) -> list[int]:
        ids = [self._ids.get(word, self.unk_id) for word in _words(text)]
        return ids + [self.eos_id] if add_eos else ids

    def decode(self, ids: Sequence[int]) -> str:
        tokens = []
        for token_id in ids:
            if token_id == self.eos_id:
                break
            if token_id == self.pad_id:
                continue
            tokens.append(self.vocab[token_id] if 0 <= token_id < len(self.vocab) else self.UNK)
        return _detokenize(tokens)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps({"vocab": self.vocab}, ensure_ascii=False, indent=2), encoding="utf-8"
        )

    @classmethod
    def load(cls, path: str | Path) -> "WordTokenizer":
        return cls(json.loads(Path(path).read_text(encoding="utf-8"))["vocab"])
