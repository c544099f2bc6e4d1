#!/usr/bin/env python3
"""Train one configuration on a prepared corpus and report test metrics.

Usage: train_and_evaluate.py MANIFEST CORPUS_DIR [--config B] [--features diff]
       [--epochs 10] [--seed 0] [--out model.ckpt]
"""

import argparse

from fallsense import checkpoint as ckpt, experiments as ex, manifest as mf
from fallsense import model as md, training as tr
from fallsense.cli import FEATURE_KINDS


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("manifest")
    ap.add_argument("corpus")
    ap.add_argument("--config", choices=("A", "B", "C"), default="B")
    ap.add_argument("--features", choices=sorted(FEATURE_KINDS), default="diff")
    ap.add_argument("--epochs", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="model.ckpt")
    args = ap.parse_args()

    man = mf.read_manifest(args.manifest)
    kind = FEATURE_KINDS[args.features]
    pipe = tr.FeaturePipeline(kind=kind, target_len=man.max_len_samples)
    dim, frames = pipe.input_dim(), pipe.max_frames() + 1
    factory = {"A": md.config_a, "B": md.config_b, "C": md.config_c}[args.config]
    cfg = factory(input_dim=dim, max_frames=frames)
    hyper = tr.Hyperparameters(epochs=args.epochs)

    params, history, _ = tr.train(man, args.corpus, kind, cfg=cfg, hyper=hyper,
                                  seed=args.seed, pipe=pipe,
                                  log=lambda r: print(r))
    ckpt.save_checkpoint(params, cfg, args.out, pipeline=vars(pipe))

    report = ex.evaluate(params, cfg, man, "test", args.corpus, pipe)
    print(f"test: acc={report.accuracy:.4f} precision={report.precision:.4f} "
          f"recall={report.recall:.4f} f1={report.f1:.4f}")
    pairs = ex.pairwise_analysis(params, cfg, man, args.corpus, pipe)
    for (f, n), r in sorted(pairs.items()):
        print(f"pair ({f},{n}): recall {r:.4f}")


if __name__ == "__main__":
    main()
