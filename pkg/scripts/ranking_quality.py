"""Held-out ranking quality: untrained vs trained generative ranker vs query likelihood.

    python scripts/ranking_quality.py --heldout 500 --epochs 200
"""
import argparse

from genrank.experiments import ranking_quality
from genrank.metrics import MetricReport
from genrank.models import ARCHITECTURES
from genrank.training import LOSS_NAMES


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--architecture", default="t_pgn", choices=ARCHITECTURES)
    ap.add_argument("--loss", default="nll", choices=LOSS_NAMES)
    ap.add_argument("--train-queries", type=int, default=150)
    ap.add_argument("--heldout", type=int, default=500)
    ap.add_argument("--epochs", type=int, default=200)
    ap.add_argument("--lr", type=float, default=None, help="default: per-architecture rate")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    rq = ranking_quality(args.architecture, args.loss, args.train_queries, args.heldout,
                         epochs=args.epochs, lr=args.lr, seed=args.seed)
    print(f"trained in {rq.train_seconds:.0f}s, final pairwise accuracy {rq.final_accuracy:.3f}")
    print("system\t" + "\t".join(MetricReport.METRICS))
    for name, report in rq.reports.items():
        print(name + "\t" + "\t".join(f"{report.mean(m):.4f}" for m in MetricReport.METRICS))
    for other in ("untrained", "ql"):
        diff, t, p = rq.compare("trained", other)
        print(f"trained - {other}: MRR {diff:+.4f}, t={t:.2f}, p={p:.2g}")


if __name__ == "__main__":
    main()
