import os

import numpy as np
import pytest

from fallsense import audio_io, features as ft, manifest as mf, model as md, synth
from fallsense import training as tr


@pytest.fixture(scope="module")
def toy_corpus(tmp_path_factory):
    """Small synthetic corpus + manifest, shared across this module."""
    root = tmp_path_factory.mktemp("toy")
    counts = {1: 5, 2: 5, 5: 4, 6: 4}
    synth.synth_corpus(counts, seed=11, out_dir=str(root))
    man = mf.build_manifest(str(root), seed=11)
    return str(root), man


def small_config(pipe):
    return md.ModelConfig("B", input_dim=pipe.input_dim(), d_model=32, n_layers=2,
                          n_heads=2, mlp_head=(16,), dropout=0.0,
                          max_frames=pipe.max_frames() + 1)


def test_overfits_small_set(toy_corpus):
    root, man = toy_corpus
    pipe = tr.FeaturePipeline(kind=ft.KIND_DIFF, target_len=man.max_len_samples,
                              t_seg_ms=500)
    cfg = small_config(pipe)
    hyper = tr.Hyperparameters(batch_size=6, epochs=40, lr=5e-4)
    params, history, _ = tr.train(man, root, ft.KIND_DIFF, cfg=cfg, hyper=hyper, seed=3,
                                  pipe=pipe)
    # with enough capacity and epochs the train split should be memorized
    assert history[-1]["train_acc"] >= 0.95
    assert len(history) == 40


def test_deterministic(toy_corpus):
    root, man = toy_corpus
    pipe = tr.FeaturePipeline(kind=ft.KIND_DIFF, target_len=man.max_len_samples,
                              t_seg_ms=500)
    cfg = small_config(pipe)
    hyper = tr.Hyperparameters(batch_size=6, epochs=3, lr=1e-4)
    p1, h1, _ = tr.train(man, root, ft.KIND_DIFF, cfg=cfg, hyper=hyper, seed=5, pipe=pipe)
    p2, h2, _ = tr.train(man, root, ft.KIND_DIFF, cfg=cfg, hyper=hyper, seed=5, pipe=pipe)
    assert h1 == h2
    for name in p1:
        assert np.array_equal(p1[name].data, p2[name].data)


def test_zero_epochs_returns_init(toy_corpus):
    root, man = toy_corpus
    pipe = tr.FeaturePipeline(kind=ft.KIND_DIFF, target_len=man.max_len_samples,
                              t_seg_ms=500)
    cfg = small_config(pipe)
    params, history, _ = tr.train(man, root, ft.KIND_DIFF, cfg=cfg,
                                  hyper=tr.Hyperparameters(epochs=0), seed=9, pipe=pipe)
    init = md.init_params(cfg, seed=9)
    assert history == []
    for name in init:
        assert np.array_equal(params[name].data, init[name].data)


def test_collate_truncates_to_longest_valid():
    d = 4
    a = ft.FeatureMatrix(np.ones((10, d), np.float32),
                         np.arange(10) < 3, ft.KIND_SEGMENTED_RAW, {})
    b = ft.FeatureMatrix(np.ones((10, d), np.float32),
                         np.arange(10) < 7, ft.KIND_SEGMENTED_RAW, {})
    x, mask = collated = tr.collate([a, b])
    assert x.shape == (2, 7, d)
    assert mask[0].sum() == 3 and mask[1].sum() == 7
    x_full, _ = tr.collate([a, b], truncate=False)
    assert x_full.shape == (2, 10, d)


def test_class_weights_from_train_split(toy_corpus):
    # 5+4 falls (cats 1,6) vs 5+4 no-falls (cats 2,5) at the corpus level;
    # just sanity-check that the trainer's weighting inputs line up
    root, man = toy_corpus
    train_entries = man.by_split("train")
    n_fall = sum(1 for e in train_entries if e.label == audio_io.LABEL_FALL)
    w = md.class_weights(n_fall, len(train_entries) - n_fall)
    assert min(w) == 1.0 and max(w) >= 1.0


def test_history_file_round_trip(toy_corpus, tmp_path):
    history = [
        {"epoch": 0, "train_acc": 0.5, "train_loss": 0.7, "val_acc": 0.4, "val_loss": 0.8},
        {"epoch": 1, "train_acc": 0.6, "train_loss": 0.6},
    ]
    path = tmp_path / "hist.tsv"
    tr.write_history(history, path)
    lines = path.read_text().strip().split("\n")
    assert len(lines) == 3
    assert lines[0].split("\t")[:2] == ["0", "train"]
    assert lines[1].split("\t")[:2] == ["0", "val"]
