#!/usr/bin/env python3
"""Build the full synthetic corpus: originals, augmented expansion, manifests.

Usage: make_corpus.py WORKDIR [SEED]
"""

import sys

from fallsense import augment as ag, manifest as mf, synth
from fallsense.manifest import write_manifest


def main():
    work = sys.argv[1] if len(sys.argv) > 1 else "corpus_work"
    seed = int(sys.argv[2]) if len(sys.argv) > 2 else 0

    orig = f"{work}/original"
    expanded = f"{work}/expanded"
    written = synth.synth_corpus(synth.DEFAULT_COUNTS, seed, orig)
    print(f"synthesized {len(written)} clips")

    man = mf.build_manifest(orig, seed)
    write_manifest(man, f"{work}/manifest_original.tsv")

    big = ag.expand_corpus(man, orig, ag.default_fall_plan(seed),
                           ag.default_nofall_plan(seed), expanded)
    write_manifest(big, f"{work}/manifest_expanded.tsv")

    # re-split the expanded corpus the way the published totals are counted
    resplit = mf.build_manifest(expanded, seed)
    write_manifest(resplit, f"{work}/manifest_resplit.tsv")
    print(f"expanded to {len(big.entries)} clips; split counts: {resplit.counts()}")


if __name__ == "__main__":
    main()
