"""Seq2seq fine-tuning and serving for precondition/effect inference."""

__version__ = "0.1.0"

from .data import Pair, PairFormatError, WordTokenizer, load_pairs
from .serve import create_app, serve
from .train import Artifact, TrainResult, TrainSpec, exact_match, train

__all__ = [
    "Artifact",
    "Pair",
    "PairFormatError",
    "TrainResult",
    "TrainSpec",
    "WordTokenizer",
    "create_app",
    "exact_match",
    "load_pairs",
    "serve",
    "train",
]
