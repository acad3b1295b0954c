"""Write the synthetic toy corpus to a directory.

    python scripts/make_toy_corpus.py data/toy --seed 0
"""
import argparse

from genrank.toy import make_toy_corpus


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("out_dir")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--entities", type=int, default=67, help="one query per entity")
    ap.add_argument("--docs-per-entity", type=int, default=3, help="passages per entity, at most 6")
    ap.add_argument("--train-queries", type=int, default=None, help="default: 3/4 of the queries")
    ap.add_argument("--candidates", type=int, default=20, help="planted candidates per held-out query")
    args = ap.parse_args()
    corpus = make_toy_corpus(n_entities=args.entities, docs_per_entity=args.docs_per_entity,
                             n_train_queries=args.train_queries, n_candidates=args.candidates,
                             seed=args.seed)
    paths = corpus.write(args.out_dir)
    print(f"{len(corpus.collection)} passages, {len(corpus.train_qids)} train / "
          f"{len(corpus.dev_qids)} held-out queries, {len(corpus.triples)} triples")
    for name, path in paths.items():
        print(f"  {name:12s} {path}")


if __name__ == "__main__":
    main()
