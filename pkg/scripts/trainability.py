"""Overfit check: epochs each architecture x loss needs to reach the target pairwise accuracy.

    python scripts/trainability.py --triples 50 --max-epochs 200
"""
import argparse

from genrank.experiments import trainability
from genrank.models import ARCHITECTURES
from genrank.training import LOSS_NAMES


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--triples", type=int, default=50)
    ap.add_argument("--max-epochs", type=int, default=200)
    ap.add_argument("--target", type=float, default=0.95)
    ap.add_argument("--batch-size", type=int, default=2)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    print("architecture\tloss\tepochs\taccuracy\tseconds")
    for arch in ARCHITECTURES:
        for loss in LOSS_NAMES:
            r = trainability(arch, loss, args.triples, args.max_epochs, args.target, args.seed,
                             args.batch_size)
            flag = "" if r.reached else "\tNOT REACHED"
            print(f"{arch}\t{loss}\t{r.epochs}\t{r.accuracy:.3f}\t{r.seconds:.1f}{flag}", flush=True)


if __name__ == "__main__":
    main()
