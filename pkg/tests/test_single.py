import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from manet.envs.nav import nav_render, nav_reset
from manet.errors import ConfigError
from manet.nn import Parameter, gradient_check, matmul, mlp_forward, tensor_sum
from manet.single import (
    DqnBaseline,
    ManetSingle,
    SegmentationSpec,
    attention,
    extract_features,
    grid_index_features,
    q_head,
    reassemble,
    regularizers,
    segment,
    segment_batch,
)

SPEC = SegmentationSpec()


def small_model(n_attention=2, rng=0, **kw):
    spec = SegmentationSpec(10, 10, 3, 5, 5)
    return ManetSingle(spec, 4, n_attention, kw.pop("ff_hidden", (6,)), 4, 5, 7,
                       rng=np.random.default_rng(rng))


def test_segment_nav_image():
    image = np.random.default_rng(0).random((40, 40, 3))
    patches, index = segment(image, SPEC)
    assert patches.shape == (64, 75)
    assert index[0].tolist() == [0, 0] and index[1].tolist() == [0, 1] and index[8].tolist() == [1, 0]
    assert np.array_equal(patches[9].reshape(5, 5, 3), image[5:10, 5:10])
    assert np.array_equal(reassemble(patches, SPEC), image)


def test_segment_rejects_single_patch_and_bad_shapes():
    with pytest.raises(ConfigError):
        SegmentationSpec(10, 10, 1, 10, 10)
    with pytest.raises(ConfigError):
        SegmentationSpec(40, 40, 3, 6, 5)
    with pytest.raises(ConfigError):
        segment(np.zeros((40, 35, 3)), SPEC)


def test_grid_index_is_normalized():
    idx = grid_index_features(SPEC)
    assert idx[0].tolist() == [0.0, 0.0] and idx[63].tolist() == [1.0, 1.0]
    assert idx[8 * 3 + 5].tolist() == [3 / 7, 5 / 7]


def test_identical_patches_share_embedding_not_common_feature():
    model = ManetSingle(rng=np.random.default_rng(1))
    patch = np.random.default_rng(2).random(75)
    partials = np.random.default_rng(3).random((1, 64, 75))
    partials[0, 4] = partials[0, 40] = patch
    common, keys, values = extract_features(partials, model.index_features, model)
    assert np.array_equal(common.data[0, 4, :64], common.data[0, 40, :64])
    assert not np.array_equal(common.data[0, 4], common.data[0, 40])
    expected_key = matmul(common.data, model.w_key.data).data
    assert np.allclose(keys.data, expected_key, rtol=0, atol=1e-12)
    raw = matmul(common.data, model.w_val.data).data
    assert np.allclose(values.data, np.maximum(raw, 0.01 * raw), rtol=0, atol=1e-12)


def test_zero_value_weights_give_zero_values():
    model = ManetSingle(rng=np.random.default_rng(1))
    model.w_val.data[...] = 0.0
    _, _, values = extract_features(np.random.default_rng(0).random((2, 64, 75)),
                                    model.index_features, model)
    assert np.array_equal(values.data, np.zeros((2, 64, 32)))


def test_keys_are_linear_in_patches_for_linear_feature_net():
    model = ManetSingle(ff_hidden=(8,), rng=np.random.default_rng(4))
    w, _, _ = model.ff_layers[0]
    model.ff_layers = [(w, None, "identity")]
    s = np.random.default_rng(5).random((1, 64, 75))

    def keys(x):
        return extract_features(x, model.index_features, model)[1].data

    offset = keys(np.zeros_like(s))  # grid-index contribution only
    for alpha in (2.0, -0.5, 3.25):
        assert np.allclose(keys(alpha * s) - offset, alpha * (keys(s) - offset), rtol=0, atol=1e-12)


def test_attention_examples():
    equal = attention(np.ones((5, 3)), np.array([[0.2, -1.0, 0.4], [1.0, 2.0, 3.0]])).data
    assert np.allclose(equal, 0.2, rtol=0, atol=1e-15)
    keys = np.zeros((4, 1))
    keys[2, 0] = 50.0
    assert attention(keys, np.array([[1.0]])).data[0, 2] > 1 - 1e-15
    keys = np.array([[0.0], [math.log(2)], [math.log(4)]])
    row = attention(keys, np.array([[1.0]])).data[0]
    assert np.allclose(row, [1 / 7, 2 / 7, 4 / 7], rtol=0, atol=1e-15)
    with pytest.raises(ConfigError):
        attention(np.ones((3, 2)), np.ones((1, 3)))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.01, 30))
def test_attention_rows_stochastic_for_arbitrary_parameters(seed, scale):
    rng = np.random.default_rng(seed)
    k, d, n = rng.integers(2, 12), rng.integers(1, 6), rng.integers(1, 4)
    a = attention(scale * rng.standard_normal((3, k, d)), scale * rng.standard_normal((n, d))).data
    assert a.shape == (3, n, k)
    assert np.all((a >= 0) & (a <= 1))
    assert np.all(np.abs(a.sum(-1) - 1) <= 1e-12)


def test_regularizer_examples():
    onehot = np.eye(4)[[1, 3]]
    r_e, _ = regularizers(Parameter(onehot), 1.0, 1.0)
    assert float(r_e.data) == 0.0
    uniform = np.full((2, 4), 0.25)
    r_e, r_d = regularizers(Parameter(uniform), 1.0, 1.0)
    assert float(r_e.data) == pytest.approx(2 * math.log(4), abs=1e-12)
    assert float(r_d.data) == 1.0
    _, r_d = regularizers(Parameter(np.array([[1.0, 0.0], [0.0, 1.0]])), 0.0, 1.0)
    assert float(r_d.data) == pytest.approx(math.exp(-2), abs=1e-15)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_regularizer_ranges(seed):
    rng = np.random.default_rng(seed)
    n, k = rng.integers(1, 4), rng.integers(2, 8)
    logits = rng.standard_normal((n, k)) * rng.uniform(0.1, 10)
    a = np.exp(logits) / np.exp(logits).sum(-1, keepdims=True)
    lam_d = rng.uniform(0.1, 2)
    r_e, r_d = regularizers(Parameter(a), 1.0, lam_d)
    assert float(r_e.data) >= 0
    assert 0 < float(r_d.data) <= lam_d
    same = np.repeat(a[:1], n, axis=0)
    assert float(regularizers(Parameter(same), 0.0, lam_d)[1].data) == lam_d


def test_batched_regularizers_average_over_batch():
    a = np.stack([np.full((2, 4), 0.25), np.eye(4)[[0, 1]]])
    r_e, r_d = regularizers(Parameter(a), 1.0, 1.0)
    assert float(r_e.data) == pytest.approx(math.log(4), abs=1e-12)
    assert float(r_d.data) == pytest.approx((1 + math.exp(-2)) / 2, abs=1e-15)


def pooled(att, values):
    return matmul(att, values).data


def test_pooling_selection_and_average():
    vals = np.random.default_rng(0).standard_normal((6, 3))
    onehot = np.zeros((1, 6))
    onehot[0, 4] = 1.0
    assert np.array_equal(pooled(onehot, vals)[0], vals[4])
    assert np.allclose(pooled(np.full((1, 6), 1 / 6), vals)[0], vals.mean(0), rtol=0, atol=1e-15)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_pooling_matches_double_loop(seed):
    rng = np.random.default_rng(seed)
    n, k, d = rng.integers(1, 4), rng.integers(1, 9), rng.integers(1, 6)
    att = rng.dirichlet(np.ones(k), size=n)
    vals = rng.standard_normal((k, d))
    brute = np.zeros((n, d))
    for i in range(n):
        for j in range(k):
            brute[i] += vals[j] * att[i, j]
    assert np.allclose(pooled(att, vals), brute, rtol=0, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_permutation_equivariance(seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(2, 10))
    keys, vals = rng.standard_normal((k, 4)), rng.standard_normal((k, 3))
    sel = rng.standard_normal((2, 4))
    perm = rng.permutation(k)
    att = attention(keys, sel).data
    att_p = attention(keys[perm], sel).data
    assert np.allclose(att_p, att[:, perm], rtol=0, atol=1e-15)
    assert np.allclose(pooled(att_p, vals[perm]), pooled(att, vals), rtol=0, atol=1e-12)


def test_single_attention_baseline_is_manet_with_one_layer():
    model = ManetSingle(n_attention=1, rng=np.random.default_rng(0))
    assert model.model_id == "single-attn" and model.selectors.shape == (1, 16)
    images = np.random.default_rng(1).random((2, 40, 40, 3))
    q, aux = model.forward(images)
    _, keys, values = extract_features(segment_batch(images, SPEC), model.index_features, model)
    manual = q_head(attention(keys, model.selectors), values, model)
    assert np.array_equal(q.data, manual.data)
    assert aux["attention"].shape == (2, 1, 64)


def test_forward_shapes_and_determinism():
    model = ManetSingle(rng=np.random.default_rng(0))
    images = np.stack([nav_render(nav_reset(np.random.default_rng(s))) for s in range(3)])
    q1, a1 = model.forward(images)
    q2, a2 = model.forward(images)
    assert q1.shape == (3, 4) and a1["attention"].shape == (3, 2, 64)
    assert np.array_equal(q1.data, q2.data)
    assert np.array_equal(a1["attention"].data, a2["attention"].data)
    assert model.arch == dict(n_attention=2, ff_hidden=(64, 64), key_dim=16, val_dim=32, q_hidden=128)


def test_q_head_has_one_hidden_layer():
    model = ManetSingle(rng=np.random.default_rng(0))
    assert [w.shape for w, _, _ in model.q_layers] == [(64, 128), (128, 4)]
    assert [act for _, _, act in model.q_layers] == ["leaky_relu", "identity"]


@pytest.mark.parametrize("source", ["random", "rendered"])
def test_full_model_gradient_check(source):
    model = ManetSingle(rng=np.random.default_rng(2))
    rng = np.random.default_rng(3)
    if source == "random":
        images = rng.random((2, 40, 40, 3))
    else:  # many duplicated patches exercise the shared-row path
        images = np.stack([nav_render(nav_reset(np.random.default_rng(s))) for s in range(2)])
    weights = rng.standard_normal((2, 4))

    def loss():
        q, aux = model.forward(images)
        r_e, r_d = regularizers(aux["attention"], 0.3, 0.7)
        return tensor_sum(q * weights) + r_e + r_d

    err = gradient_check(loss, model.params, max_entries=12, rng=np.random.default_rng(0))
    assert err < 1e-6


def test_small_model_exhaustive_gradient_check():
    model = small_model(3)
    images = np.random.default_rng(0).random((2, 10, 10, 3))
    w = np.random.default_rng(1).standard_normal((2, 4))

    def loss():
        q, aux = model.forward(images)
        r_e, r_d = regularizers(aux["attention"], 0.5, 2.0)
        return tensor_sum(q * w) + r_e + r_d

    assert gradient_check(loss, model.params) < 1e-6


def test_dqn_baseline():
    model = DqnBaseline(rng=np.random.default_rng(0))
    images = np.random.default_rng(1).random((3, 40, 40, 3))
    q, aux = model.forward(images)
    assert q.shape == (3, 4) and aux == {}
    assert np.array_equal(q.data, model.forward(images)[0].data)
    with pytest.raises(ConfigError):
        model.forward(np.zeros((1, 40, 40, 1)))
    small = DqnBaseline((4, 4, 3), 4, (5,), rng=np.random.default_rng(2))
    x = np.random.default_rng(3).random((2, 4, 4, 3))
    w = np.random.default_rng(4).standard_normal((2, 4))
    assert gradient_check(lambda: tensor_sum(small.forward(x)[0] * w), small.params) < 1e-6
    err = gradient_check(lambda: tensor_sum(model.forward(images[:1])[0] * w[:1]), model.params,
                         max_entries=10)
    assert err < 1e-6


def test_patch_width_mismatch_is_rejected():
    model = ManetSingle(rng=np.random.default_rng(0))
    with pytest.raises(ConfigError):
        extract_features(np.zeros((1, 64, 74)), model.index_features, model)


def test_mlp_forward_reference_matches_patch_embedding():
    model = ManetSingle(rng=np.random.default_rng(0))
    partials = np.random.default_rng(1).random((1, 64, 75))
    common, _, _ = extract_features(partials, model.index_features, model)
    direct = mlp_forward(partials, model.ff_layers).data
    assert np.allclose(common.data[..., :64], direct, rtol=0, atol=1e-12)
