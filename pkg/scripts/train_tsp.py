"""Self-improved training of the featurized TSP policy from theta = 0.

    python scripts/train_tsp.py --nodes 10 --epochs 30 --out runs/tsp10
"""
import argparse
import logging
from pathlib import Path

from reconsider.decoder import DecodeConfig
from reconsider.sil import EpochConfig, SilConfig, run_sil


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--nodes", type=int, default=10)
    parser.add_argument("--epochs", type=int, default=30)
    parser.add_argument("--instances", type=int, default=512, help="pseudo-labels per epoch")
    parser.add_argument("--k", type=int, default=16)
    parser.add_argument("--s", type=int, default=2)
    parser.add_argument("--lr", type=float, default=0.05)
    parser.add_argument("--seed", type=int, default=9)
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--out", type=Path, default=Path("runs/tsp"))
    args = parser.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    epoch = EpochConfig(instances_per_epoch=args.instances, decode=DecodeConfig(k=args.k, s=args.s),
                        learning_rate=args.lr)
    config = SilConfig(problem="tsp", size={"nodes": args.nodes}, epochs=args.epochs,
                       seed=args.seed, epoch=epoch, workers=args.workers)
    state, history = run_sil(config, args.out)
    for m in history:
        gap = "" if m.best_gap is None else f"  best gap {m.best_gap:6.2f}%"
        print(f"epoch {m.epoch:3d}  validation {m.validation_score:.4f}{gap}")
    print(f"checkpoint: {args.out / 'theta_best.json'}")


if __name__ == "__main__":
    main()
