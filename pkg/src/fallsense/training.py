"""Mini-batch Adam training of the encoder classifier over a manifest.

Clips are decoded and featurized per batch; batches are truncated to the
longest valid frame count in the batch (padding frames are masked out of
attention, so dropping them changes nothing about the learned function).
"""

from __future__ import annotations

import copy
import os
from dataclasses import dataclass, asdict, field

import numpy as np

from . import audio_io, features as ft, model as md
from .autodiff import Adam, Tensor
from .errors import DivergedTraining, NonFiniteActivation, NonFiniteGradient


@dataclass
class FeaturePipeline:
    """Everything needed to reproduce training-time featurization at inference."""

    kind: str
    target_len: int
    t_seg_ms: int = 100
    n_fft: int = 2048
    hop: int = 1600
    n_mels: int = 64

    def input_dim(self) -> int:
        d_seg = self.t_seg_ms * audio_io.SAMPLE_RATE // 1000
        return {
            ft.KIND_SEGMENTED_RAW: d_seg,
            ft.KIND_DIFF: d_seg,
            ft.KIND_LOG_MEL: self.n_mels,
            ft.KIND_COMBINED: d_seg + self.n_mels,
        }[self.kind]

    def max_frames(self) -> int:
        d_seg = self.t_seg_ms * audio_io.SAMPLE_RATE // 1000
        if self.kind == ft.KIND_LOG_MEL:
            return 1 + self.target_len // self.hop
        n = self.target_len // d_seg
        return n - 1 if self.kind == ft.KIND_DIFF else n

    def featurize(self, clip) -> ft.FeatureMatrix:
        padded = audio_io.pad_to_length(clip, self.target_len)
        return ft.extract(padded, self.kind, self.t_seg_ms, self.n_fft, self.hop, self.n_mels)


@dataclass
class Hyperparameters:
    batch_size: int = 20
    epochs: int = 10
    lr: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


LABEL_INDEX = {audio_io.LABEL_NOFALL: md.CLASS_NOFALL, audio_io.LABEL_FALL: md.CLASS_FALL}


def load_features(entries, corpus_dir, pipe: FeaturePipeline):
    """Featurized clips for manifest entries: list of (FeatureMatrix, label_idx)."""
    out = []
    for e in entries:
        clip = audio_io.decode_wav(os.path.join(corpus_dir, e.path), category_id=e.category_id)
        out.append((pipe.featurize(clip), LABEL_INDEX[e.label]))
    return out


class LazyFeatures:
    """Sequence view over manifest entries that decodes and featurizes on
    access, so big corpora never sit fully featurized in memory."""

    def __init__(self, entries, corpus_dir, pipe: FeaturePipeline):
        self.entries = list(entries)
        self.corpus_dir = corpus_dir
        self.pipe = pipe

    def __len__(self):
        return len(self.entries)

    def _one(self, e):
        clip = audio_io.decode_wav(os.path.join(self.corpus_dir, e.path),
                                   category_id=e.category_id)
        return self.pipe.featurize(clip), LABEL_INDEX[e.label]

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [self._one(e) for e in self.entries[i]]
        return self._one(self.entries[i])

    def __iter__(self):
        for e in self.entries:
            yield self._one(e)


def collate(fms, truncate=True):
    """Stack feature matrices into (B, L, D) + (B, L) mask, optionally
    truncating to the longest valid prefix in the batch."""
    if truncate:
        lengths = [max(int(np.count_nonzero(fm.mask)), 1) for fm in fms]
    else:
        lengths = [fm.n_frames for fm in fms]
    l_max = max(lengths)
    d = fms[0].n_dims
    x = np.zeros((len(fms), l_max, d), dtype=np.float32)
    mask = np.zeros((len(fms), l_max), dtype=bool)
    for i, (fm, n) in enumerate(zip(fms, lengths)):
        x[i, :n] = fm.data[:n]
        mask[i, :n] = fm.mask[:n]
    return x, mask


def evaluate_batched(params, cfg, data, batch_size=20):
    """(accuracy, mean_loss, predictions) over featurized data in eval mode."""
    preds, losses = [], []
    labels = np.array([y for _, y in data])
    weights = (1.0, 1.0)
    for i in range(0, len(data), batch_size):
        chunk = data[i : i + batch_size]
        x, mask = collate([fm for fm, _ in chunk])
        probs = md.forward_batch(params, cfg, x, mask, md.MODE_EVAL)
        preds.extend(np.argmax(probs.data, axis=1))
        y = np.array([lbl for _, lbl in chunk])
        losses.append(md.weighted_cross_entropy(probs, y, weights).data * len(chunk))
    preds = np.array(preds)
    return float(np.mean(preds == labels)), float(np.sum(losses) / len(data)), preds


def train(manifest, corpus_dir, feature_kind, cfg=None, hyper=None, seed=0,
          pipe: FeaturePipeline | None = None, log=None, preloaded=None,
          lazy=False):
    """Train on the manifest's train split, track val accuracy per epoch.

    Returns (best_params, history, pipeline). best_params is the best-val
    checkpoint (falls back to the final state when there is no val data).
    history is a list of per-epoch records.
    """
    hyper = hyper or Hyperparameters()
    pipe = pipe or FeaturePipeline(kind=feature_kind, target_len=manifest.max_len_samples)
    if cfg is None:
        cfg = _default_config(feature_kind, pipe)
    if cfg.input_dim != pipe.input_dim():
        raise md.ShapeMismatch(
            f"config input_dim {cfg.input_dim} vs pipeline {pipe.input_dim()}"
        )

    if preloaded is not None:
        train_data, val_data = preloaded
    elif lazy:
        train_data = LazyFeatures(manifest.by_split("train"), corpus_dir, pipe)
        val_data = LazyFeatures(manifest.by_split("val"), corpus_dir, pipe)
    else:
        train_data = load_features(manifest.by_split("train"), corpus_dir, pipe)
        val_data = load_features(manifest.by_split("val"), corpus_dir, pipe)
    if isinstance(train_data, LazyFeatures):
        n_fall = sum(1 for e in train_data.entries if e.label == audio_io.LABEL_FALL)
    else:
        n_fall = sum(1 for _, y in train_data if y == md.CLASS_FALL)
    weights = md.class_weights(n_fall, len(train_data) - n_fall)

    params = md.init_params(cfg, seed=seed)
    opt = Adam(params, lr=hyper.lr, beta1=hyper.beta1, beta2=hyper.beta2, eps=hyper.eps)
    dropout_rng = np.random.default_rng(np.random.SeedSequence([seed, 7]))

    history = []
    best = {"val_acc": -1.0, "params": None}
    try:
        for epoch in range(hyper.epochs):
            order = np.random.default_rng(np.random.SeedSequence([seed, epoch])).permutation(
                len(train_data)
            )
            correct = 0
            loss_sum = 0.0
            for start in range(0, len(order), hyper.batch_size):
                idx = order[start : start + hyper.batch_size]
                chunk = [train_data[i] for i in idx]
                x, mask = collate([fm for fm, _ in chunk])
                y = np.array([lbl for _, lbl in chunk])
                probs = md.forward_batch(params, cfg, x, mask, md.MODE_TRAIN, dropout_rng)
                loss = md.weighted_cross_entropy(probs, y, weights)
                opt.zero_grad()
                loss.backward()
                opt.step()
                correct += int(np.sum(np.argmax(probs.data, axis=1) == y))
                loss_sum += float(loss.data) * len(chunk)
            record = {
                "epoch": epoch,
                "train_acc": correct / len(train_data),
                "train_loss": loss_sum / len(train_data),
            }
            if val_data:
                val_acc, val_loss, _ = evaluate_batched(params, cfg, val_data, hyper.batch_size)
                record.update(val_acc=val_acc, val_loss=val_loss)
                if val_acc > best["val_acc"]:
                    best = {"val_acc": val_acc, "params": _copy_params(params)}
            history.append(record)
            if log:
                log(record)
    except (NonFiniteActivation, NonFiniteGradient) as exc:
        raise DivergedTraining(str(exc)) from exc

    best_params = best["params"] if best["params"] is not None else params
    return best_params, history, pipe


def _copy_params(params):
    return {k: Tensor(p.data.copy(), requires_grad=True) for k, p in params.items()}


def _default_config(feature_kind, pipe: FeaturePipeline):
    dim = pipe.input_dim()
    frames = pipe.max_frames() + 1  # plus the class token
    if feature_kind == ft.KIND_LOG_MEL:
        return md.config_c(input_dim=dim, max_frames=frames)
    cid = "B" if feature_kind == ft.KIND_DIFF else "A"
    return md.ModelConfig(cid, input_dim=dim, max_frames=frames)


def write_history(history, path):
    """Line-delimited epoch records: epoch, split, loss, accuracy."""
    with open(path, "w") as f:
        for rec in history:
            f.write(f"{rec['epoch']}\ttrain\t{rec['train_loss']:.6f}\t{rec['train_acc']:.6f}\n")
            if "val_acc" in rec:
                f.write(f"{rec['epoch']}\tval\t{rec['val_loss']:.6f}\t{rec['val_acc']:.6f}\n")
