"""Dataset manifests: stratified train/val/test splits over a corpus directory.

Corpus layout: one subdirectory per category id, WAV files inside, e.g.
corpus/1/clip_0003.wav. The manifest is line-delimited text with a header
record carrying the seed and the corpus-wide max length.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from . import audio_io
from .errors import DuplicatePath, EmptyCategory

SPLIT_TRAIN = "train"
SPLIT_VAL = "val"
SPLIT_TEST = "test"
SPLITS = (SPLIT_TRAIN, SPLIT_VAL, SPLIT_TEST)


@dataclass
class ManifestEntry:
    path: str
    category_id: int
    label: str
    split: str
    augment_tag: str = ""  # "" for original recordings


@dataclass
class DatasetManifest:
    entries: list
    max_len_samples: int
    seed: int

    def by_split(self, split):
        return [e for e in self.entries if e.split == split]

    def by_category(self, category_id):
        return [e for e in self.entries if e.category_id == category_id]

    def counts(self):
        """{(split, label): count} over all entries."""
        out = {}
        for e in self.entries:
            key = (e.split, e.label)
            out[key] = out.get(key, 0) + 1
        return out


def split_counts(n: int) -> tuple[int, int, int]:
    """Per-category (train, val, test) sizes for an 80:10:10 split.

    test = ceil(n/10), val = floor of a tenth of the remainder scaled back
    up (i.e. (n - test) // 9), train = rest. Reproduces the published
    684/84/87 fall and 2826/353/356 no-fall totals exactly.
    """
    test = -(-n // 10)
    val = (n - test) // 9
    return n - test - val, val, test


def assign_splits(paths: list, seed: int, category_id: int) -> dict:
    """Deterministic split assignment for one category's sorted file list."""
    paths = sorted(paths)
    rng = np.random.default_rng(np.random.SeedSequence([seed, category_id]))
    order = rng.permutation(len(paths))
    n_train, n_val, n_test = split_counts(len(paths))
    out = {}
    for rank, idx in enumerate(order):
        if rank < n_test:
            split = SPLIT_TEST
        elif rank < n_test + n_val:
            split = SPLIT_VAL
        else:
            split = SPLIT_TRAIN
        out[paths[idx]] = split
    return out


def _augment_tag_from_name(filename: str) -> str:
    # augmented files are written as <stem>__aug-<tag>.wav
    stem = os.path.splitext(filename)[0]
    if "__aug-" in stem:
        return stem.split("__aug-", 1)[1]
    return ""


def build_manifest(corpus_dir, seed: int) -> DatasetManifest:
    """Scan a category-per-directory corpus and split it 80:10:10 per category."""
    corpus_dir = os.fspath(corpus_dir)
    cat_dirs = sorted(
        d for d in os.listdir(corpus_dir) if os.path.isdir(os.path.join(corpus_dir, d))
    )
    categories = sorted(int(d) for d in cat_dirs if d.isdigit())
    if not categories:
        raise EmptyCategory(f"no category directories under {corpus_dir}")

    entries = []
    seen = set()
    max_len = 0
    for cat in categories:
        cdir = os.path.join(corpus_dir, str(cat))
        files = sorted(f for f in os.listdir(cdir) if f.lower().endswith(".wav"))
        if not files:
            raise EmptyCategory(f"category {cat} has no wav files")
        rel_paths = [os.path.join(str(cat), f) for f in files]
        for p in rel_paths:
            if p in seen:
                raise DuplicatePath(p)
            seen.add(p)
        splits = assign_splits(rel_paths, seed, cat)
        label = audio_io.label_for_category(cat)
        for p in rel_paths:
            n, rate, _ = audio_io.wav_info(os.path.join(corpus_dir, p))
            max_len = max(max_len, audio_io.resampled_length(n, rate, audio_io.SAMPLE_RATE))
            entries.append(
                ManifestEntry(
                    path=p,
                    category_id=cat,
                    label=label,
                    split=splits[p],
                    augment_tag=_augment_tag_from_name(os.path.basename(p)),
                )
            )
    return DatasetManifest(entries=entries, max_len_samples=max_len, seed=seed)


def write_manifest(manifest: DatasetManifest, path):
    with open(path, "w") as f:
        f.write(f"#manifest\tv1\tseed={manifest.seed}\tmax_len_samples={manifest.max_len_samples}\n")
        for e in manifest.entries:
            f.write(f"{e.path}\t{e.category_id}\t{e.label}\t{e.split}\t{e.augment_tag}\n")


def read_manifest(path) -> DatasetManifest:
    with open(path) as f:
        header = f.readline().rstrip("\n")
        if not header.startswith("#manifest\tv1"):
            raise ValueError(f"not a manifest file: {path}")
        fields = dict(p.split("=", 1) for p in header.split("\t")[2:])
        entries = []
        for line in f:
            line = line.rstrip("\n")
            if not line:
                continue
            p, cat, label, split, tag = line.split("\t")
            entries.append(ManifestEntry(p, int(cat), label, split, tag))
    return DatasetManifest(
        entries=entries,
        max_len_samples=int(fields["max_len_samples"]),
        seed=int(fields["seed"]),
    )
