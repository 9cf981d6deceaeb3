"""Train and serve from the command line."""

from __future__ import annotations

import argparse
import logging
import sys

from .serve import serve
from .train import TrainSpec, train


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chainworld-finetune")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one inference model from TrainingPair JSONL")
    p.add_argument("--pairs", required=True)
    p.add_argument("--direction", required=True, choices=("precondition", "effect"))
    p.add_argument("--out", required=True)
    p.add_argument("--base-model", default="google/flan-t5-large",
                   help='model name or "tiny" for a small random-init model')
    p.add_argument("--lr", type=float, default=5e-5)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--max-length", type=int, default=256)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--holdout", type=float, default=0.05)

    q = sub.add_parser("serve", help="serve a trained artifact over chat completions")
    q.add_argument("--model-dir", required=True)
    q.add_argument("--port", type=int, required=True)
    q.add_argument("--host", default="127.0.0.1")
    return parser


def dispatch(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "train":
            result = train(
                TrainSpec(
                    pairs_path=args.pairs,
                    direction=args.direction,
                    output_dir=args.out,
                    base_model=args.base_model,
                    learning_rate=args.lr,
                    epochs=args.epochs,
                    batch_size=args.batch_size,
                    max_length=args.max_length,
                    seed=args.seed,
                    holdout_fraction=args.holdout,
                )
            )
            logging.getLogger(__name__).info(
                "final loss %.4f, artifact at %s", result.train_losses[-1], result.output_dir
            )
            return 0
        serve(args.model_dir, args.port, args.host)
        return 0
    except Exception as exc:
        logging.getLogger(__name__).error("%s: %s", type(exc).__name__, exc)
        return 1


def main() -> None:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="%(message)s")
    sys.exit(dispatch())
