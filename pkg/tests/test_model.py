import numpy as np
import pytest

from nrtsi.kernel import Tape, Tensor, backward, ops
from nrtsi.model import (DESK, FULL, ModelConfig, attention_mask, check_params, encode_inputs,
                         export_attention, forward, forward_batch, init_params, param_shapes,
                         preset, sample)
from nrtsi.series import SeriesSet
from oracles import numeric_grad, rel_err

SMALL = ModelConfig(data_dim=2, hidden_dim=16, blocks=2, heads=2, head_dim=8, ff_dim=32)


def random_case(rng, cfg=SMALL, n_obs=None, n_tgt=None):
    n_obs = n_obs or int(rng.integers(1, 8))
    n_tgt = n_tgt or int(rng.integers(1, 6))
    t = rng.permutation(np.arange(n_obs + n_tgt, dtype=float) * 1.3)
    obs = SeriesSet.complete(t[:n_obs], rng.normal(size=(n_obs, cfg.data_dim)))
    return obs, t[n_obs:]


def test_permutation_laws():
    rng = np.random.default_rng(0)
    params = init_params(SMALL, 1)
    for _ in range(100):
        obs, tgt = random_case(rng)
        base = forward(*encode_inputs(obs, tgt, SMALL), params, SMALL).mean
        po = rng.permutation(len(obs))
        pt = rng.permutation(len(tgt))
        out = forward(*encode_inputs(obs.subset(po), tgt[pt], SMALL), params, SMALL).mean
        assert np.max(np.abs(out - base[pt])) < 1e-10


def test_mask_isolates_targets_in_first_block():
    rng = np.random.default_rng(2)
    params = init_params(SMALL, 3)
    obs, tgt = random_case(rng, n_obs=4, n_tgt=3)
    elems, idx = encode_inputs(obs, tgt, SMALL)
    w1 = export_attention(elems, params, SMALL, idx)[0]
    # rows of targets put zero weight on other targets
    for i in idx:
        for j in idx:
            if i != j:
                assert np.all(w1[:, i, j] == 0.0)
    # perturbing one target's input leaves other targets' first-block reads unchanged
    elems2 = elems.copy()
    elems2[idx[0], :SMALL.tau] += 0.37
    w2 = export_attention(elems2, params, SMALL, idx)[0]
    np.testing.assert_array_equal(w1[:, idx[1:]], w2[:, idx[1:]])


def test_attention_mask_shape_and_diagonal():
    active = np.array([[True, True, True, False]])
    target = np.array([[False, True, True, False]])
    m = attention_mask(active, target)[0, 0]
    assert m.shape == (4, 4)
    assert m[1, 1] and not m[1, 2] and not m[0, 3] and m[3, 3]


def test_attention_rows_sum_to_one():
    rng = np.random.default_rng(4)
    params = init_params(SMALL, 0)
    obs, tgt = random_case(rng)
    elems, idx = encode_inputs(obs, tgt, SMALL)
    for w in export_attention(elems, params, SMALL, idx):
        np.testing.assert_allclose(w.sum(axis=-1), 1.0, atol=1e-12)


def test_end_to_end_gradient_three_elements():
    cfg = ModelConfig(data_dim=1, hidden_dim=6, blocks=2, heads=2, head_dim=3, ff_dim=8,
                      stochastic_head=True)
    params = init_params(cfg, 7)
    rng = np.random.default_rng(8)
    obs = SeriesSet.complete([0.0, 2.0], rng.normal(size=(2, 1)))
    elems, idx = encode_inputs(obs, [1.0], cfg)
    x, active = elems[None], np.ones((1, 3), bool)
    target = np.zeros((1, 3), bool)
    target[0, idx] = True
    y = np.zeros((1, 3, 1))
    y[0, idx, 0] = 0.4
    w = target.astype(float)

    def loss():
        mu, ls = forward_batch(params, cfg, x, active, target)
        return ops.weighted_sum(ops.gaussian_nll(y, mu, ls, target[..., None].astype(float)), w)

    with Tape() as tape:
        L = loss()
    grads = backward(tape, L)
    for name, p in params.items():
        num = numeric_grad(lambda: float(loss().value), p.value)
        if np.abs(num).max() < 1e-9 and np.abs(grads.get(name, 0)).max() < 1e-9:
            continue
        assert rel_err(grads[name], num) < 1e-3, name


def test_param_shapes_and_presets():
    assert set(param_shapes(DESK)) == set(init_params(DESK, 0))
    assert FULL.hidden_dim == 1024 and FULL.blocks == 8 and FULL.heads == 12
    n_full = sum(int(np.prod(s)) for s in param_shapes(FULL).values())
    assert 40e6 < n_full < 120e6
    assert preset("desk", blocks=3).blocks == 3
    with pytest.raises(ValueError):
        ModelConfig(hidden_dim=64, ff_dim=32)


def test_glorot_init_and_zero_bias():
    p = init_params(DESK, 0)
    W = p["block0.q.W"].value
    lim = np.sqrt(6 / sum(W.shape))
    assert np.abs(W).max() <= lim and np.abs(W).max() > 0.9 * lim
    assert not p["block0.q.b"].value.any()


def test_check_params_rejects_mismatch():
    p = init_params(SMALL, 0)
    with pytest.raises(ValueError):
        check_params(p, DESK)
    del p["f_out.b"]
    with pytest.raises(ValueError):
        check_params(p, SMALL)


def test_forward_validation_and_sampling():
    params = init_params(SMALL, 0)
    with pytest.raises(ValueError):
        forward(np.zeros((3, 5)), [0], params, SMALL)
    res = forward(*encode_inputs(SeriesSet.complete([0.0], [[1.0, 2.0]]), [1.0], SMALL), params, SMALL)
    with pytest.raises(ValueError, match="no distribution head"):
        sample(res)
    cfg = ModelConfig(data_dim=1, hidden_dim=8, heads=2, head_dim=4, ff_dim=16, stochastic_head=True)
    res = forward(*encode_inputs(SeriesSet.complete([0.0], [[1.0]]), [1.0, 2.0], cfg),
                  init_params(cfg, 0), cfg)
    a, b = sample(res, 5), sample(res, 5)
    assert a.tobytes() == b.tobytes()
    assert not np.array_equal(a, sample(res, 6))


def test_partial_encoding():
    cfg = ModelConfig(data_dim=2, partial_dims=True, hidden_dim=8, heads=2, head_dim=4, ff_dim=16)
    s = SeriesSet([0.0, 1.0], [[1.0, 2.0], [3.0, 0.0]], [[True, True], [True, False]], [True, False])
    elems, idx = encode_inputs(s, [1.0], cfg)
    assert elems.shape == (2, cfg.input_dim)
    np.testing.assert_array_equal(elems[1, 8:], [3.0, 0.0, 1.0, 0.0])
    assert idx.tolist() == [1]
    with pytest.raises(ValueError):
        encode_inputs(s, [5.0], cfg)


def test_no_grad_without_tape():
    params = init_params(SMALL, 0)
    obs = SeriesSet.complete([0.0], [[1.0, 2.0]])
    h, _ = forward_batch(params, SMALL, encode_inputs(obs, [1.0], SMALL)[0][None],
                         np.ones((1, 2), bool), np.array([[False, True]]))
    assert isinstance(h, Tensor) and h.is_leaf
