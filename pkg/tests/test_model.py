import numpy as np
import pytest

from fallsense import model as md
from fallsense.errors import NonFiniteActivation, ShapeMismatch
from fallsense.features import FeatureMatrix


def tiny_config(**kw):
    kw.setdefault("d_model", 8)
    kw.setdefault("n_layers", 2)
    kw.setdefault("n_heads", 2)
    kw.setdefault("mlp_head", (6, 4))
    kw.setdefault("max_frames", 12)
    kw.setdefault("dropout", 0.0)
    return md.ModelConfig("B", input_dim=12, **kw)


def to_float64(params):
    from fallsense.autodiff import Tensor
    return {k: Tensor(p.data.astype(np.float64), requires_grad=True)
            for k, p in params.items()}


def test_forward_shape_and_normalization():
    cfg = tiny_config()
    params = md.init_params(cfg, seed=0)
    rng = np.random.default_rng(1)
    x = rng.normal(size=(4, 9, 12)).astype(np.float32)
    mask = np.ones((4, 9), bool)
    mask[2, 5:] = False
    probs = md.forward_batch(params, cfg, x, mask)
    assert probs.shape == (4, 2)
    assert np.allclose(probs.data.sum(axis=1), 1.0, atol=1e-6)
    assert np.all(probs.data >= 0)


def test_input_shape_validation():
    cfg = tiny_config()
    params = md.init_params(cfg, seed=0)
    with pytest.raises(ShapeMismatch):
        md.forward_batch(params, cfg, np.zeros((2, 5, 7), np.float32), np.ones((2, 5), bool))
    with pytest.raises(ShapeMismatch):
        md.forward_batch(params, cfg, np.zeros((2, 40, 12), np.float32), np.ones((2, 40), bool))


def test_masked_frames_get_exactly_zero_attention():
    cfg = tiny_config()
    params = md.init_params(cfg, seed=2)
    rng = np.random.default_rng(3)
    x = rng.normal(size=(1, 8, 12)).astype(np.float32)
    mask = np.arange(8) < 5
    attn = []
    md.forward_batch(params, cfg, x, mask[None, :], collect_attn=attn)
    assert len(attn) == cfg.n_layers
    for a in attn:
        # key axis is last; positions 6.. (CLS shifts by one) are padding
        assert np.all(a[..., 6:] == 0.0)
        assert np.allclose(a.sum(axis=-1), 1.0, atol=1e-6)


def test_mask_invariance_is_bitwise():
    """Garbage in masked frames cannot change the output at all."""
    cfg = tiny_config()
    params = md.init_params(cfg, seed=4)
    rng = np.random.default_rng(5)
    x = rng.normal(size=(1, 10, 12)).astype(np.float32)
    mask = np.arange(10) < 6
    a = md.forward_batch(params, cfg, x, mask[None, :]).data
    y = x.copy()
    y[0, 6:] = 1e6 * rng.normal(size=(4, 12)).astype(np.float32)
    b = md.forward_batch(params, cfg, y, mask[None, :]).data
    assert np.array_equal(a, b)


def test_parameter_count_matches_actual():
    for cfg in (tiny_config(), md.config_c(max_frames=20), md.config_a(max_frames=20)):
        params = md.init_params(cfg, seed=0)
        actual = sum(p.data.size for p in params.values())
        assert actual == md.parameter_count(cfg)


def test_config_factories():
    a, b, c = md.config_a(), md.config_b(), md.config_c()
    assert a.d_model == b.d_model == 512 and a.n_heads == 12
    assert a.ff_dim == 1024 and a.mlp_head == (265, 64, 10)
    assert c.d_model == 64 and c.n_heads == 6 and c.mlp_head == ()
    assert not c.use_projection
    # 64 does not split evenly across 6 heads; the rounded-up head width
    # keeps every head the same size
    assert c.head_dim == 11 and c.attn_dim == 66


def test_positional_encoding_values():
    pe = positional = md.positional_encoding(5, 6)
    assert pe.shape == (5, 6)
    assert np.allclose(pe[0, 0::2], 0.0)
    assert np.allclose(pe[0, 1::2], 1.0)
    assert np.isclose(pe[3, 0], np.sin(3.0), atol=1e-6)
    assert np.isclose(pe[3, 1], np.cos(3.0), atol=1e-6)


def test_eval_forward_is_deterministic():
    cfg = tiny_config(dropout=0.3)
    params = md.init_params(cfg, seed=6)
    rng = np.random.default_rng(7)
    x = rng.normal(size=(2, 6, 12)).astype(np.float32)
    mask = np.ones((2, 6), bool)
    a = md.forward_batch(params, cfg, x, mask, md.MODE_EVAL).data
    b = md.forward_batch(params, cfg, x, mask, md.MODE_EVAL).data
    assert np.array_equal(a, b)


def test_batch_permutation_symmetry():
    """Permuting samples within a batch permutes outputs and leaves the
    summed gradient unchanged (loss is a mean over samples)."""
    cfg = tiny_config()
    params = to_float64(md.init_params(cfg, seed=8))
    rng = np.random.default_rng(9)
    x = rng.normal(size=(4, 7, 12))
    mask = np.ones((4, 7), bool)
    y = np.array([0, 1, 1, 0])
    perm = np.array([2, 0, 3, 1])

    def grads(xx, yy):
        for p in params.values():
            p.grad = None
        probs = md.forward_batch(params, cfg, xx, mask)
        md.weighted_cross_entropy(probs, yy, (1.0, 2.5)).backward()
        return {k: p.grad.copy() for k, p in params.items()}

    g1 = grads(x, y)
    g2 = grads(x[perm], y[perm])
    for k in g1:
        assert np.allclose(g1[k], g2[k], atol=1e-9)


def test_nonfinite_logits_raise():
    cfg = tiny_config()
    params = md.init_params(cfg, seed=10)
    params["head.b"].data[:] = np.nan
    x = np.zeros((1, 4, 12), np.float32)
    with pytest.raises(NonFiniteActivation):
        md.forward_batch(params, cfg, x, np.ones((1, 4), bool))


def _gradient_check(init_seed, data_seed, eps, probes_per_param=None):
    cfg = tiny_config()
    params = to_float64(md.init_params(cfg, seed=init_seed))
    rng = np.random.default_rng(data_seed)
    x = rng.normal(size=(2, 5, 12))
    mask = np.ones((2, 5), bool)
    mask[1, 3:] = False
    y = np.array([1, 0])

    def loss_value():
        probs = md.forward_batch(params, cfg, x, mask)
        return md.weighted_cross_entropy(probs, y, (1.0, 3.0))

    loss = loss_value()
    for p in params.values():
        p.grad = None
    loss.backward()

    worst = 0.0
    for name, p in params.items():
        flat = p.data.reshape(-1)
        gflat = p.grad.reshape(-1)
        if probes_per_param is None:
            probe = range(flat.size)
        else:
            probe = rng.choice(flat.size, size=min(probes_per_param, flat.size),
                               replace=False)
        for i in probe:
            keep = flat[i]
            flat[i] = keep + eps
            up = float(loss_value().data)
            flat[i] = keep - eps
            dn = float(loss_value().data)
            flat[i] = keep
            fd = (up - dn) / (2 * eps)
            # roundoff in the FD quotient is about eps_machine/eps in
            # absolute terms, so tiny gradients are judged absolutely
            if abs(fd - gflat[i]) < 1e-7:
                continue
            denom = max(abs(fd), abs(gflat[i]), 1e-8)
            worst = max(worst, abs(fd - gflat[i]) / denom)
    return worst


def test_full_model_gradient_check():
    """Central finite differences (eps 1e-3, float64) against the analytic
    gradient for every parameter of a small model.

    FD at eps 1e-3 is only valid when no ReLU input changes sign inside the
    probe interval, so the seeds here are ones where no probe straddles a
    kink; the companion test below covers other seeds at a finer step.
    """
    assert _gradient_check(init_seed=2, data_seed=3, eps=1e-3) < 1e-4


def test_gradient_check_fine_step_other_seeds():
    # near-kink parameters that fail the coarse-step FD pass cleanly once
    # the step is small enough to stay on one side of the kink
    assert _gradient_check(init_seed=11, data_seed=12, eps=1e-5,
                           probes_per_param=6) < 1e-4


def test_class_weights():
    assert md.class_weights(684, 2826) == (1.0, pytest.approx(2826 / 684))
    assert md.class_weights(10, 10) == (1.0, 1.0)
    assert md.class_weights(0, 5) == (1.0, 1.0)
    assert md.class_weights(30, 10) == (pytest.approx(3.0), 1.0)


def test_weighted_cross_entropy_value():
    from fallsense.autodiff import Tensor
    probs = Tensor(np.array([[0.8, 0.2], [0.3, 0.7]]))
    loss = md.weighted_cross_entropy(probs, np.array([0, 1]), (1.0, 4.0))
    expected = -(np.log(0.8) + 4.0 * np.log(0.7)) / 2
    assert np.isclose(loss.data, expected)


def test_single_clip_forward_matches_batch():
    cfg = tiny_config()
    params = md.init_params(cfg, seed=13)
    rng = np.random.default_rng(14)
    data = rng.normal(size=(6, 12)).astype(np.float32)
    mask = np.arange(6) < 4
    fm = FeatureMatrix(data, mask, "diff", {})
    single = md.forward(params, cfg, fm)
    batched = md.forward_batch(params, cfg, data[None], mask[None]).data[0]
    assert np.array_equal(single, batched)
