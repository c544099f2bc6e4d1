#!/usr/bin/env python3
"""Run every ablation grid over a prepared corpus.

Usage: run_ablations.py MANIFEST CORPUS_DIR [--out-dir ablations] [--epochs 10]
"""

import argparse

from fallsense import experiments as ex, manifest as mf
from fallsense import training as tr

AXES = (ex.AXIS_HEADS_LAYERS, ex.AXIS_MELS, ex.AXIS_HOP, ex.AXIS_TSEG, ex.AXIS_COMBINED)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("manifest")
    ap.add_argument("corpus")
    ap.add_argument("--out-dir", default="ablations")
    ap.add_argument("--epochs", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    man = mf.read_manifest(args.manifest)
    hyper = tr.Hyperparameters(epochs=args.epochs)
    for axis in AXES:
        print(f"== axis {axis} ==")
        ex.run_ablation(axis, man, args.corpus, seed=args.seed, hyper=hyper,
                        out_dir=args.out_dir,
                        log=lambda c: print(c.setting, c.accuracy, c.f1, c.error))


if __name__ == "__main__":
    main()
