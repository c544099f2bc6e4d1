import numpy as np
import pytest

from fallsense import experiments as ex
from fallsense import features as ft, manifest as mf, model as md, synth
from fallsense import training as tr
from fallsense.errors import MissingCategory
from fallsense.features import FeatureMatrix


@pytest.fixture(scope="module")
def toy(tmp_path_factory):
    root = tmp_path_factory.mktemp("exp")
    synth.synth_corpus({1: 6, 2: 6, 5: 5, 6: 5}, seed=21, out_dir=str(root))
    man = mf.build_manifest(str(root), seed=21)
    pipe = tr.FeaturePipeline(kind=ft.KIND_DIFF, target_len=man.max_len_samples,
                              t_seg_ms=500)
    cfg = md.ModelConfig("B", input_dim=pipe.input_dim(), d_model=16, n_layers=1,
                         n_heads=2, mlp_head=(8,), dropout=0.0,
                         max_frames=pipe.max_frames() + 1)
    params = md.init_params(cfg, seed=21)
    return str(root), man, pipe, cfg, params


def constant_classifier(cfg, cls, seed=0):
    """Params whose output is always class `cls` regardless of input."""
    params = md.init_params(cfg, seed=seed)
    params["head.w"].data[:] = 0.0
    params["head.b"].data[:] = 0.0
    params["head.b"].data[cls] = 50.0
    return params


def test_evaluate_counts_and_sweep(toy):
    root, man, pipe, cfg, params = toy
    report = ex.evaluate(params, cfg, man, "test", root, pipe)
    assert report.total == len(man.by_split("test"))
    assert 0.0 <= report.accuracy <= 1.0
    assert len(report.threshold_sweep) == 19
    # sweep rows are (threshold, precision, recall)
    assert all(len(row) == 3 for row in report.threshold_sweep)


def test_evaluate_deterministic(toy):
    root, man, pipe, cfg, params = toy
    a = ex.evaluate(params, cfg, man, "test", root, pipe)
    b = ex.evaluate(params, cfg, man, "test", root, pipe)
    assert (a.tp, a.tn, a.fp, a.fn) == (b.tp, b.tn, b.fp, b.fn)
    assert a.threshold_sweep == b.threshold_sweep


def test_pairwise_always_fall_is_one(toy):
    root, man, pipe, cfg, _ = toy
    params = constant_classifier(cfg, md.CLASS_FALL)
    pairs = ex.pairwise_analysis(params, cfg, man, root, pipe)
    # corpus has fall cats {1, 6} and no-fall cats {2, 5}
    assert set(pairs) == {(1, 2), (1, 5), (6, 2), (6, 5)}
    assert all(v == 1.0 for v in pairs.values())


def test_pairwise_always_nofall_is_zero(toy):
    root, man, pipe, cfg, _ = toy
    params = constant_classifier(cfg, md.CLASS_NOFALL)
    pairs = ex.pairwise_analysis(params, cfg, man, root, pipe)
    assert all(v == 0.0 for v in pairs.values())


def test_pairwise_missing_category_raises(toy):
    root, man, pipe, cfg, params = toy
    pruned = mf.DatasetManifest(
        entries=[e for e in man.entries if not (e.split == "test" and e.category_id == 1)],
        max_len_samples=man.max_len_samples, seed=man.seed)
    with pytest.raises(MissingCategory):
        ex.pairwise_analysis(params, cfg, pruned, root, pipe)


def test_pair_recall_depends_only_on_pair():
    cats = np.array([1, 1, 2, 2, 6, 6, 5, 5])
    labels = np.array([1, 1, 0, 0, 1, 1, 0, 0])
    preds = np.array([1, 0, 0, 0, 1, 1, 0, 0])
    base = ex._pair_recalls(preds, labels, cats)
    assert base[(1, 2)] == 0.5 and base[(6, 5)] == 1.0
    # flipping predictions outside the pair leaves its recall alone
    mutated = preds.copy()
    mutated[cats == 6] = 0
    after = ex._pair_recalls(mutated, labels, cats)
    assert after[(1, 2)] == base[(1, 2)]
    assert after[(6, 5)] == 0.0


def test_ablation_heads_layers_grid(toy, tmp_path):
    root, man, pipe, cfg, _ = toy
    hyper = tr.Hyperparameters(batch_size=8, epochs=0)
    cells = ex.run_ablation(ex.AXIS_HEADS_LAYERS, man, root, feature_kind=ft.KIND_DIFF,
                            seed=1, hyper=hyper,
                            model_kw={"d_model": 24, "mlp_head": (8,)},
                            out_dir=str(tmp_path))
    assert len(cells) == 12
    assert {(c.setting["n_heads"], c.setting["n_layers"]) for c in cells} == {
        (h, l) for h in ex.HEADS_GRID for l in ex.LAYERS_GRID}
    assert all(not c.error for c in cells)
    table = (tmp_path / "ablation_heads-layers.tsv").read_text().strip().split("\n")
    assert len(table) == 13  # header + 12 cells


def test_ablation_error_capture_continues(toy):
    root, man, pipe, cfg, _ = toy
    hyper = tr.Hyperparameters(batch_size=8, epochs=0)
    # d_model 10 cannot host 12 heads; those cells must fail, the rest run
    cells = ex.run_ablation(ex.AXIS_HEADS_LAYERS, man, root, feature_kind=ft.KIND_DIFF,
                            seed=1, hyper=hyper, model_kw={"d_model": 10, "mlp_head": ()})
    failed = [c for c in cells if c.error]
    assert len(cells) == 12
    assert len(failed) == 3 and all(c.setting["n_heads"] == 12 for c in failed)
    assert all("ShapeMismatch" in c.error for c in failed)


def test_ablation_deterministic(toy):
    root, man, pipe, cfg, _ = toy
    hyper = tr.Hyperparameters(batch_size=8, epochs=1, lr=1e-4)
    kw = dict(feature_kind=ft.KIND_DIFF, seed=2, hyper=hyper,
              model_kw={"d_model": 12, "mlp_head": (), "n_heads": 2, "n_layers": 1})
    a = ex.run_ablation(ex.AXIS_COMBINED, toy[1], root, **kw)
    b = ex.run_ablation(ex.AXIS_COMBINED, toy[1], root, **kw)
    assert a[0].accuracy == b[0].accuracy and a[0].f1 == b[0].f1


def test_ablation_tseg_shapes(toy):
    root, man, pipe, cfg, _ = toy
    hyper = tr.Hyperparameters(epochs=0)
    cells = ex.run_ablation(ex.AXIS_TSEG, man, root, feature_kind=ft.KIND_DIFF,
                            seed=1, hyper=hyper,
                            model_kw={"d_model": 8, "n_heads": 2, "n_layers": 1,
                                      "mlp_head": ()})
    for c in cells:
        t = c.setting["t_seg_ms"]
        d = t * 16
        assert c.shape == (man.max_len_samples // d - 1, d)


def separable_feature_set(n_per_class, n_frames=3, dim=4, seed=0):
    rng = np.random.default_rng(seed)
    data = []
    for cls, loc in ((0, -1.0), (1, 1.0)):
        for _ in range(n_per_class):
            x = rng.normal(loc=loc, scale=0.2, size=(n_frames, dim)).astype(np.float32)
            data.append((FeatureMatrix(x, np.ones(n_frames, bool), ft.KIND_DIFF, {}), cls))
    return data


def test_baseline_dnn_separable_perfect():
    train = separable_feature_set(12, seed=3)
    test = separable_feature_set(4, seed=4)
    pipe = tr.FeaturePipeline(kind=ft.KIND_DIFF, target_len=0)
    hyper = tr.Hyperparameters(batch_size=8, epochs=30, lr=1e-2)
    report, params, _ = ex.baseline_dnn(None, None, ft.KIND_DIFF, hyper=hyper,
                                        seed=5, hidden=(8,), pipe=pipe,
                                        preloaded=(train, test))
    assert report.accuracy == 1.0
    assert report.total == 8


def test_baseline_dnn_on_corpus(toy):
    root, man, pipe, cfg, _ = toy
    hyper = tr.Hyperparameters(batch_size=8, epochs=1, lr=1e-3)
    report, _, _ = ex.baseline_dnn(man, root, ft.KIND_DIFF, hyper=hyper, seed=6,
                                   hidden=(16, 8), pipe=pipe)
    assert report.total == len(man.by_split("test"))


def test_baseline_svm_on_corpus(toy):
    root, man, pipe, cfg, _ = toy
    report, model = ex.baseline_svm(man, root, ft.KIND_DIFF, seed=7, pipe=pipe)
    assert report.total == len(man.by_split("test"))
    assert model.w is not None  # linear path keeps an explicit weight vector
