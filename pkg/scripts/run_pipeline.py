"""Generate the toy corpus and run every CLI stage on it.

    python scripts/run_pipeline.py runs/demo --architecture pgn --loss marg --epochs 20

Extra ``--key value`` pairs are passed through as settings overrides.
"""
import argparse
import sys
from pathlib import Path

from genrank.cli import main as cli_main
from genrank.config import load_config
from genrank.toy import make_toy_corpus


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("root", type=Path, help="receives toy/, out/ and experiment.cfg")
    ap.add_argument("--seed", type=int, default=0)
    args, extra = ap.parse_known_args()
    corpus = make_toy_corpus(seed=args.seed).write(args.root / "toy")
    config = args.root / "experiment.cfg"
    config.write_text(f"collection = {corpus['collection']}\nqueries = {corpus['queries']}\n"
                      f"triples = {corpus['triples']}\nout = {args.root / 'out'}\nseed = {args.seed}\n")
    common = ["--config", str(config), *extra]
    cfg = load_config(config, _overrides(extra))
    dev = ["--queries", str(corpus["dev_queries"])]
    stages = [
        ["build-vocab"],
        ["train"],
        ["rerank", *dev, "--candidates", str(corpus["candidates"])],
        ["eval", "--qrels", str(corpus["qrels"]), "--baseline-run", str(cfg.subdir("runs") / "ql.run")],
        ["uncertainty", *dev],
        ["cutoff", *dev, "--qrels", str(corpus["qrels"])],
        ["generate", "--generate-limit", "10"],
    ]
    for stage in stages:
        print(f"== genrank {stage[0]}", flush=True)
        code = cli_main([*stage, *common])
        if code:
            sys.exit(code)
    print(f"outputs in {cfg.experiment_dir}")


def _overrides(extra):
    """``--key-name value`` pairs -> {key_name: value} for locating outputs."""
    pairs = {}
    for flag, value in zip(extra[::2], extra[1::2]):
        pairs[flag.lstrip("-").replace("-", "_")] = value
    return pairs


if __name__ == "__main__":
    main()
