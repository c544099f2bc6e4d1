"""Evaluation protocol: split metrics, pairwise category analysis, ablation
grids, and the DNN / SVM baselines."""

from __future__ import annotations

import itertools
import os
from dataclasses import dataclass, field

import numpy as np

from . import audio_io, features as ft, metrics as mt, model as md, svm as sv
from . import training as tr
from .autodiff import Adam, Tensor
from . import autodiff as ad
from .errors import MissingCategory, NonConvergence


def predict_split(params, cfg, manifest, split, corpus_dir, pipe):
    """Per-clip eval-mode inference: (preds, fall_probs, labels, categories).

    Each clip goes through a full-length single-clip forward, the same code
    path the sentinel uses, so probabilities agree bitwise between the two.
    """
    entries = manifest.by_split(split)
    preds, probs, labels, cats = [], [], [], []
    for e in entries:
        clip = audio_io.decode_wav(os.path.join(corpus_dir, e.path), category_id=e.category_id)
        fm = pipe.featurize(clip)
        p = md.forward(params, cfg, fm)
        preds.append(int(np.argmax(p)))
        probs.append(float(p[md.CLASS_FALL]))
        labels.append(tr.LABEL_INDEX[e.label])
        cats.append(e.category_id)
    return (np.array(preds), np.array(probs), np.array(labels), np.array(cats))


def evaluate(params, cfg, manifest, split, corpus_dir, pipe) -> mt.EvalReport:
    """EvalReport over one split: argmax decisions plus a threshold sweep."""
    preds, probs, labels, cats = predict_split(params, cfg, manifest, split, corpus_dir, pipe)
    report = mt.report_from_predictions(preds, labels)
    report.threshold_sweep = mt.threshold_sweep(probs, labels)
    report.per_pair_recall = _pair_recalls(preds, labels, cats)
    return report


def _pair_recalls(preds, labels, cats):
    out = {}
    for f, n in itertools.product(sorted(audio_io.FALL_CATEGORIES),
                                  sorted(audio_io.NOFALL_CATEGORIES)):
        sel = (cats == f) | (cats == n)
        if not (np.any(cats == f) and np.any(cats == n)):
            continue
        tp, tn, fp, fn = mt.confusion_counts(preds[sel], labels[sel])
        out[(f, n)] = tp / (tp + fn) if (tp + fn) else 0.0
    return out


def pairwise_analysis(params, cfg, manifest, corpus_dir, pipe, split="test"):
    """Fall recall for every (fall category, no-fall category) pair on a split."""
    entries = manifest.by_split(split)
    present = {e.category_id for e in entries}
    expected = audio_io.FALL_CATEGORIES | audio_io.NOFALL_CATEGORIES
    missing = sorted((expected & {e.category_id for e in manifest.entries}) - present)
    if missing:
        raise MissingCategory(f"categories {missing} absent from split '{split}'")
    preds, _, labels, cats = predict_split(params, cfg, manifest, split, corpus_dir, pipe)
    return _pair_recalls(preds, labels, cats)


# --- ablation grids -------------------------------------------------------

AXIS_HEADS_LAYERS = "heads-layers"
AXIS_MELS = "mels"
AXIS_HOP = "hop"
AXIS_TSEG = "tseg"
AXIS_COMBINED = "combined"

HEADS_GRID = (1, 3, 6, 12)
LAYERS_GRID = (3, 6, 12)
MELS_GRID = (32, 64, 128)
HOP_GRID = (1600, 1000, 500)
TSEG_GRID = (50, 100, 300, 500)


@dataclass
class AblationCell:
    setting: dict
    shape: tuple = ()
    accuracy: float = float("nan")
    f1: float = float("nan")
    history: list = field(default_factory=list)
    error: str = ""


def _cells_for_axis(axis, feature_kind):
    if axis == AXIS_HEADS_LAYERS:
        return [{"n_heads": h, "n_layers": l, "kind": feature_kind}
                for h, l in itertools.product(HEADS_GRID, LAYERS_GRID)]
    if axis == AXIS_MELS:
        return [{"n_mels": m, "kind": ft.KIND_LOG_MEL} for m in MELS_GRID]
    if axis == AXIS_HOP:
        return [{"hop": h, "kind": ft.KIND_LOG_MEL} for h in HOP_GRID]
    if axis == AXIS_TSEG:
        return [{"t_seg_ms": t, "kind": feature_kind} for t in TSEG_GRID]
    if axis == AXIS_COMBINED:
        return [{"kind": ft.KIND_COMBINED}]
    raise ValueError(f"unknown ablation axis: {axis}")


def run_ablation(axis, manifest, corpus_dir, feature_kind=ft.KIND_DIFF, seed=0,
                 hyper=None, model_kw=None, out_dir=None, log=None):
    """Train + evaluate one cell per grid setting with a shared seed.

    A cell that raises keeps its error string and the run continues. The
    TSV table and per-epoch plot data land in out_dir when given.
    """
    model_kw = dict(model_kw or {})
    cells = []
    for setting in _cells_for_axis(axis, feature_kind):
        cell = AblationCell(setting=dict(setting))
        try:
            pipe = tr.FeaturePipeline(
                kind=setting["kind"],
                target_len=manifest.max_len_samples,
                t_seg_ms=setting.get("t_seg_ms", 100),
                hop=setting.get("hop", 1600),
                n_mels=setting.get("n_mels", 64),
            )
            kw = dict(model_kw)
            if "n_heads" in setting:
                kw["n_heads"] = setting["n_heads"]
            if "n_layers" in setting:
                kw["n_layers"] = setting["n_layers"]
            cfg = _cell_config(setting["kind"], pipe, kw)
            cell.shape = (pipe.max_frames(), pipe.input_dim())
            params, history, _ = tr.train(manifest, corpus_dir, setting["kind"],
                                          cfg=cfg, hyper=hyper, seed=seed, pipe=pipe)
            report = evaluate(params, cfg, manifest, "test", corpus_dir, pipe)
            cell.accuracy, cell.f1 = report.accuracy, report.f1
            cell.history = history
        except Exception as exc:  # noqa: BLE001 - per-cell capture is the contract
            cell.error = f"{type(exc).__name__}: {exc}"
        cells.append(cell)
        if log:
            log(cell)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        write_ablation_table(cells, os.path.join(out_dir, f"ablation_{axis}.tsv"))
        write_plot_data(cells, os.path.join(out_dir, f"ablation_{axis}_epochs.tsv"))
    return cells


def _cell_config(kind, pipe, kw):
    kw = dict(kw)
    kw.setdefault("max_frames", pipe.max_frames() + 1)
    dim = pipe.input_dim()
    if kind == ft.KIND_LOG_MEL:
        kw.setdefault("n_heads", 6)
        return md.ModelConfig("C", input_dim=dim, d_model=kw.pop("d_model", dim),
                              mlp_head=(), use_projection=False, **kw)
    return md.ModelConfig("B" if kind == ft.KIND_DIFF else "A", input_dim=dim, **kw)


def write_ablation_table(cells, path):
    keys = sorted({k for c in cells for k in c.setting})
    with open(path, "w") as f:
        f.write("\t".join(keys + ["shape", "accuracy", "f1", "error"]) + "\n")
        for c in cells:
            row = [str(c.setting.get(k, "")) for k in keys]
            shape = "x".join(map(str, c.shape)) if c.shape else ""
            f.write("\t".join(row + [shape, f"{c.accuracy:.4f}", f"{c.f1:.4f}",
                                     c.error]) + "\n")


def write_plot_data(cells, path):
    """Accuracy-vs-epoch lines for every cell, one row per (cell, epoch)."""
    with open(path, "w") as f:
        f.write("cell\tepoch\ttrain_acc\tval_acc\n")
        for idx, c in enumerate(cells):
            for rec in c.history:
                f.write(f"{idx}\t{rec['epoch']}\t{rec['train_acc']:.6f}"
                        f"\t{rec.get('val_acc', float('nan')):.6f}\n")


# --- baselines ------------------------------------------------------------


def _flatten_features(data, pipe):
    """(n, N*D) matrix with masked frames zeroed, plus the label vector."""
    xs, ys = [], []
    for fm, y in data:
        z = fm.data.copy()
        z[~fm.mask] = 0.0
        xs.append(z.reshape(-1))
        ys.append(y)
    return np.stack(xs).astype(np.float32), np.array(ys)


def _dnn_init(in_dim, hidden, seed):
    rng = np.random.default_rng(seed)
    params = {}
    width = in_dim
    for j, h in enumerate(hidden + (2,)):
        bound = np.sqrt(6.0 / (width + h))
        params[f"fc{j}.w"] = Tensor(
            rng.uniform(-bound, bound, (width, h)).astype(np.float32), requires_grad=True)
        params[f"fc{j}.b"] = Tensor(np.zeros(h, np.float32), requires_grad=True)
        width = h
    return params


def _dnn_forward(params, x, n_layers):
    h = Tensor(x)
    for j in range(n_layers):
        h = ad.add(ad.matmul(h, params[f"fc{j}.w"]), params[f"fc{j}.b"])
        if j < n_layers - 1:
            h = ad.relu(h)
    return ad.masked_softmax(h)


def baseline_dnn(manifest, corpus_dir, feature_kind, hyper=None, seed=0,
                 hidden=(256, 64), pipe=None, preloaded=None, lazy=False,
                 log=None):
    """Fully connected baseline over flattened features; returns
    (EvalReport on the test split, params, pipe).

    Batches are flattened on the fly so the (clips x N*D) train matrix is
    never materialized; with `lazy` even featurization happens per batch.
    """
    hyper = hyper or tr.Hyperparameters()
    pipe = pipe or tr.FeaturePipeline(kind=feature_kind, target_len=manifest.max_len_samples)
    if preloaded is not None:
        train_data, test_data = preloaded
    elif lazy:
        train_data = tr.LazyFeatures(manifest.by_split("train"), corpus_dir, pipe)
        test_data = tr.LazyFeatures(manifest.by_split("test"), corpus_dir, pipe)
    else:
        train_data = tr.load_features(manifest.by_split("train"), corpus_dir, pipe)
        test_data = tr.load_features(manifest.by_split("test"), corpus_dir, pipe)
    x_test, y_test = _flatten_features(test_data, pipe)

    if isinstance(train_data, tr.LazyFeatures):
        y_train = np.array([tr.LABEL_INDEX[e.label] for e in train_data.entries])
    else:
        y_train = np.array([y for _, y in train_data])
    n_fall = int(np.sum(y_train == md.CLASS_FALL))
    weights = md.class_weights(n_fall, len(y_train) - n_fall)
    n_layers = len(hidden) + 1
    params = _dnn_init(x_test.shape[1], tuple(hidden), seed)
    opt = Adam(params, lr=hyper.lr, beta1=hyper.beta1, beta2=hyper.beta2, eps=hyper.eps)
    for epoch in range(hyper.epochs):
        order = np.random.default_rng(np.random.SeedSequence([seed, epoch])).permutation(
            len(train_data))
        correct = 0
        for start in range(0, len(order), hyper.batch_size):
            idx = order[start : start + hyper.batch_size]
            xb, yb = _flatten_features([train_data[int(i)] for i in idx], pipe)
            probs = _dnn_forward(params, xb, n_layers)
            loss = md.weighted_cross_entropy(probs, yb, weights)
            opt.zero_grad()
            loss.backward()
            opt.step()
            correct += int(np.sum(np.argmax(probs.data, axis=1) == yb))
        if log:
            log({"epoch": epoch, "train_acc": correct / len(train_data)})

    probs = _dnn_forward(params, x_test, n_layers).data
    preds = np.argmax(probs, axis=1)
    report = mt.report_from_predictions(preds, y_test)
    report.threshold_sweep = mt.threshold_sweep(probs[:, md.CLASS_FALL], y_test)
    return report, params, pipe


def baseline_svm(manifest, corpus_dir, feature_kind, kernel=sv.KERNEL_LINEAR,
                 c=1.0, gamma=None, seed=0, max_passes=40, pipe=None, preloaded=None):
    """SMO-trained SVM baseline; returns (EvalReport, SvmModel).

    A non-converged run is reported, not fatal: the partial model attached
    to the NonConvergence error is evaluated instead.
    """
    pipe = pipe or tr.FeaturePipeline(kind=feature_kind, target_len=manifest.max_len_samples)
    if preloaded is not None:
        train_data, test_data = preloaded
    else:
        train_data = tr.load_features(manifest.by_split("train"), corpus_dir, pipe)
        test_data = tr.load_features(manifest.by_split("test"), corpus_dir, pipe)
    x_train, y_train = _flatten_features(train_data, pipe)
    x_test, y_test = _flatten_features(test_data, pipe)
    y_signed = np.where(y_train == md.CLASS_FALL, 1.0, -1.0)
    try:
        model = sv.smo_train(x_train, y_signed, kernel=kernel, c=c, gamma=gamma,
                             max_passes=max_passes, seed=seed)
    except NonConvergence as exc:
        model = exc.model
    preds = np.where(model.predict(x_test) > 0, md.CLASS_FALL, md.CLASS_NOFALL)
    return mt.report_from_predictions(preds, y_test), model
