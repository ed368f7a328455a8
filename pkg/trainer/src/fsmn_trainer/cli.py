"""fsmn-train: build a dataset from a labeled suite and export a model."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .data import build_dataset, compute_norm
from .export import export_model
from .train import TrainConfig, train


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="fsmn-train",
        description="train an FSMN mask model on an echoforge scenario suite")
    ap.add_argument("--suite", required=True, help="suite directory "
                    "(as produced by `echoforge synth`)")
    ap.add_argument("--out", required=True, help="output model file")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--epochs", type=int, default=100)
    ap.add_argument("--lr", type=float, default=3e-4)
    ap.add_argument("--batch-size", type=int, default=4)
    ap.add_argument("--val-split", type=float, default=0.2)
    ap.add_argument("--blocks", type=int, default=9)
    ap.add_argument("--hidden", type=int, default=256)
    ap.add_argument("--proj", type=int, default=256)
    ap.add_argument("--lookback", type=int, default=20)
    ap.add_argument("--work-dir", help="cache for engine dumps "
                    "(default: <suite>/_trainer_cache)")
    ap.add_argument("--history", help="loss history TSV "
                    "(default: <out>.history.tsv)")
    ap.add_argument("--checkpoint", help="checkpoint file, written per epoch")
    ap.add_argument("--resume", action="store_true",
                    help="continue from --checkpoint if it exists")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")

    clips = build_dataset(args.suite, args.work_dir)
    norm = compute_norm(clips)
    cfg = TrainConfig(learning_rate=args.lr, epochs=args.epochs,
                            batch_size=args.batch_size,
                            val_split=args.val_split, seed=args.seed,
                            n_blocks=args.blocks, hidden=args.hidden,
                            proj=args.proj, lookback=args.lookback)
    result = train(clips, cfg, norm, checkpoint=args.checkpoint,
                         resume=args.resume)

    size = export_model(result.net, result.norm_mean, result.norm_std,
                               args.out)
    history_path = Path(args.history or f"{args.out}.history.tsv")
    history_path.write_text(result.history_table())
    last = result.history[-1]
    print(f"trained {len(clips)} clips, {len(result.history)} epochs; "
          f"final train MSE {last['train_mse']:.5f}, "
          f"best val MSE {result.best_val:.5f}")
    print(f"model: {args.out} ({size} bytes); history: {history_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
