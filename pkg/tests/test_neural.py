import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hcmvrd.graphs import EdgeList
from hcmvrd.neural import (
    LayerParams,
    Linear,
    MeanAggregator,
    ModelDims,
    OptimizerState,
    Tensor,
    TrainingDiverged,
    conv_stack,
    focal_loss,
    focal_loss_with_logits,
    gated_fusion,
    grad_check,
    graph_conv,
    init_params,
    load_checkpoint,
    mlp_head,
    optimizer_step,
    parameter,
    relation_feature,
    save_checkpoint,
)
from hcmvrd.neural import autodiff as ad
from hcmvrd.neural.params import ARCHITECTURES


def layer(rng, fin, fout, scale=0.5):
    return LayerParams(
        parameter(rng.normal(scale=scale, size=(fin, fout))),
        parameter(rng.normal(scale=scale, size=(fin, fout))),
        parameter(rng.normal(scale=0.1, size=(1, fout))),
    )


def linear(rng, fin, fout, scale=0.5):
    return Linear(parameter(rng.normal(scale=scale, size=(fin, fout))), parameter(rng.normal(scale=0.1, size=(1, fout))))


def test_graph_conv_self_loop_doubles_input():
    eye = LayerParams(parameter(np.eye(3)), parameter(np.eye(3)), parameter(np.zeros((1, 3))))
    x = Tensor([[1.0, -2.0, 3.0]])
    out = graph_conv(x, EdgeList.from_triples([(0, 0, 1.0)], 1), eye, activation=False)
    assert np.array_equal(out.data, 2 * x.data)


def test_graph_conv_without_edges_is_self_transform():
    rng = np.random.default_rng(0)
    p = layer(rng, 4, 3)
    x = Tensor(rng.normal(size=(5, 4)))
    out = graph_conv(x, EdgeList.empty(5), p, activation=False)
    np.testing.assert_allclose(out.data, x.data @ p.self_weight.data + p.bias.data, rtol=0, atol=1e-14)


def test_uniform_in_edges_equal_average_neighbour():
    rng = np.random.default_rng(1)
    p = layer(rng, 3, 2)
    x = rng.normal(size=(3, 3))
    two = graph_conv(Tensor(x), EdgeList.from_triples([(0, 2, 0.7), (1, 2, 0.7)], 3), p, activation=False)
    avg = np.vstack([x[:2], (x[0] + x[1]) / 2, x[2:]])
    one = graph_conv(Tensor(avg), EdgeList.from_triples([(2, 3, 1.0)], 4), p, activation=False)
    np.testing.assert_allclose(two.data[2], one.data[3], rtol=0, atol=1e-14)


def brute_force_mean(x, triples):
    out = np.zeros_like(x)
    for v in range(len(x)):
        ins = [(u, w) for u, d, w in triples if d == v]
        if ins:
            out[v] = sum(w * x[u] for u, w in ins) / sum(w for _, w in ins)
    return out


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_mean_aggregation_oracle_and_edge_order(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 7))
    m = int(rng.integers(0, 15))
    triples = [(int(rng.integers(n)), int(rng.integers(n)), float(rng.uniform(0.05, 1))) for _ in range(m)]
    x = rng.normal(size=(n, 3))
    agg = MeanAggregator(EdgeList.from_triples(triples, n))
    got = agg(Tensor(x)).data
    np.testing.assert_allclose(got, brute_force_mean(x, triples), rtol=1e-12, atol=1e-12)
    perm = rng.permutation(m)
    shuffled = EdgeList(
        np.array([triples[i][0] for i in perm], dtype=np.int64),
        np.array([triples[i][1] for i in perm], dtype=np.int64),
        np.array([triples[i][2] for i in perm]),
        n,
    )
    np.testing.assert_allclose(MeanAggregator(shuffled)(Tensor(x)).data, got, rtol=1e-12, atol=1e-15)


def test_aggregator_rejects_bad_edges():
    with pytest.raises(ValueError, match="positive"):
        MeanAggregator(EdgeList.from_triples([(0, 1, 0.0)], 2))
    with pytest.raises(ValueError, match="range"):
        MeanAggregator(EdgeList.from_triples([(0, 5, 1.0)], 2))


def test_graph_conv_shape_errors():
    rng = np.random.default_rng(2)
    with pytest.raises(ValueError):
        graph_conv(Tensor(np.zeros((3, 4))), EdgeList.empty(2), layer(rng, 4, 2))
    with pytest.raises(ValueError):
        graph_conv(Tensor(np.zeros((2, 5))), EdgeList.empty(2), layer(rng, 4, 2))


def test_gated_fusion_cases():
    rng = np.random.default_rng(3)
    fp, fs = Tensor(rng.normal(size=(4, 3))), Tensor(rng.normal(size=(4, 2)))
    fuse = linear(rng, 5, 6)
    half = gated_fusion(fp, fs, Linear(parameter(np.zeros((5, 6))), parameter(np.zeros((1, 6)))), fuse)
    joint = np.hstack([fp.data, fs.data])
    np.testing.assert_allclose(half.data, 0.5 * (joint @ fuse.weight.data + fuse.bias.data), rtol=0, atol=1e-15)
    shut = gated_fusion(fp, fs, Linear(parameter(np.zeros((5, 6))), parameter(np.full((1, 6), -60.0))), fuse)
    assert np.max(np.abs(shut.data)) < 1e-20
    assert half.shape == (4, 6)
    with pytest.raises(ValueError):
        gated_fusion(fp, Tensor(np.zeros((3, 2))), fuse, fuse)


def test_relation_feature_cases():
    rng = np.random.default_rng(4)
    zero = Linear(parameter(np.zeros((4, 3))), parameter(np.zeros((1, 3))))
    zero_r = Linear(parameter(np.zeros((13, 2))), parameter(np.zeros((1, 2))))
    out = relation_feature(Tensor(np.zeros((2, 2))), np.array([0]), np.array([1]), np.zeros((1, 10)), zero, zero_r)
    assert np.array_equal(out.data, np.zeros((1, 2)))

    # identity projections reproduce the plain concatenation
    f = rng.normal(size=(2, 2))
    rp = rng.normal(size=(1, 10))
    ident = Linear(parameter(np.eye(4)), parameter(np.zeros((1, 4))))
    ident_r = Linear(parameter(np.eye(14)), parameter(np.zeros((1, 14))))
    out = relation_feature(Tensor(f), np.array([1]), np.array([0]), rp, ident, ident_r)
    np.testing.assert_array_equal(out.data[0], np.concatenate([f[1], f[0], rp[0]]))

    pair, rel = linear(rng, 4, 3), linear(rng, 13, 5)
    f = Tensor(rng.normal(size=(2, 2)))
    ij = relation_feature(f, np.array([0]), np.array([1]), rp, pair, rel)
    ji = relation_feature(f, np.array([1]), np.array([0]), rp, pair, rel)
    assert not np.allclose(ij.data, ji.data)


def test_mlp_head_zero_weights_give_bias():
    hidden = Linear(parameter(np.zeros((3, 4))), parameter(np.zeros((1, 4))))
    out = Linear(parameter(np.zeros((4, 2))), parameter(np.array([[0.3, -1.0]])))
    logits = mlp_head(Tensor(np.ones((5, 3))), hidden, out)
    assert np.array_equal(logits.data, np.tile([[0.3, -1.0]], (5, 1)))
    probs = ad.sigmoid(Tensor(np.array([[-800.0, 0.0, 800.0]]) * 0.01))
    assert np.all((probs.data > 0) & (probs.data < 1))


def test_focal_loss_hand_value():
    loss = focal_loss(Tensor([[0.5]]), np.array([[1.0]]), gamma=2.0, balance=0.25)
    assert loss.item() == pytest.approx(0.25 * 0.25 * math.log(2), rel=1e-14)
    assert round(loss.item(), 5) == 0.04332


def test_focal_reduces_to_half_bce():
    rng = np.random.default_rng(5)
    p = rng.uniform(0.01, 0.99, size=(6, 4))
    y = (rng.random((6, 4)) < 0.3).astype(float)
    bce = -np.mean(y * np.log(p) + (1 - y) * np.log(1 - p))
    assert focal_loss(Tensor(p), y, gamma=0.0, balance=0.5).item() == pytest.approx(0.5 * bce, rel=1e-13)
    assert focal_loss(Tensor(p), y, gamma=0.0, balance=None).item() == pytest.approx(bce, rel=1e-13)


def test_focal_perfect_prediction_near_zero():
    y = np.array([[1.0, 0.0]])
    assert focal_loss(Tensor([[1.0, 0.0]]), y).item() < 1e-12


@given(st.floats(0.001, 0.998), st.floats(0.0005, 0.001), st.sampled_from([0.0, 1.0]), st.sampled_from([0.0, 0.5, 2.0]))
def test_focal_monotone_in_pt(pt, step, target, gamma):
    def value(q):
        s = q if target == 1.0 else 1.0 - q
        return focal_loss(Tensor([[s]]), np.array([[target]]), gamma=gamma).item()

    lo, hi = value(pt), value(pt + step)
    assert lo >= 0.0 and hi >= 0.0
    assert hi < lo


def test_focal_shape_mismatch():
    with pytest.raises(ValueError):
        focal_loss(Tensor(np.zeros((2, 2)) + 0.5), np.zeros((2, 3)))


def test_optimizer_zero_grad_no_decay_is_noop():
    p = parameter(np.arange(6.0).reshape(2, 3))
    before = p.data.copy()
    optimizer_step([p], OptimizerState(lr=0.1, weight_decay=0.0))
    assert np.array_equal(p.data, before)


def test_optimizer_decoupled_decay():
    p = parameter(np.array([[2.0, -4.0]]))
    state = OptimizerState(lr=0.1, weight_decay=0.5)
    optimizer_step([p], state)
    np.testing.assert_allclose(p.data, [[2.0 * 0.95, -4.0 * 0.95]], rtol=0, atol=1e-15)
    assert state.step == 1


def test_optimizer_reduces_quadratic():
    p = parameter(np.array([[3.0, -1.0]]))
    state = OptimizerState(lr=0.01, weight_decay=0.0)

    def loss():
        return ad.tensor_sum(p * p)

    first = loss().item()
    p.zero_grad()
    loss().backward()
    optimizer_step([p], state)
    assert loss().item() < first


def test_optimizer_reports_divergence():
    p = parameter(np.zeros((1, 1)))
    p.grad = np.array([[np.nan]])
    with pytest.raises(TrainingDiverged, match="diverged"):
        optimizer_step([p], OptimizerState())


@pytest.mark.parametrize("gamma,balance", [(2.0, 0.25), (0.0, None), (1.0, 0.5)])
def test_logit_focal_matches_score_focal(gamma, balance):
    rng = np.random.default_rng(11)
    z = rng.normal(scale=3.0, size=(7, 5))
    y = (rng.random((7, 5)) < 0.3).astype(float)
    via_scores = focal_loss(ad.sigmoid(Tensor(z)), y, gamma=gamma, balance=balance).item()
    assert focal_loss_with_logits(Tensor(z), y, gamma=gamma, balance=balance).item() == pytest.approx(via_scores, rel=1e-12)


@pytest.mark.parametrize("gamma,balance", [(2.0, 0.25), (0.0, None)])
def test_logit_focal_gradient(gamma, balance):
    rng = np.random.default_rng(12)
    z = parameter(rng.normal(scale=4.0, size=(6, 3)))
    y = (rng.random((6, 3)) < 0.4).astype(float)
    assert grad_check(lambda: focal_loss_with_logits(z, y, gamma=gamma, balance=balance), [z]) < 1e-7


def test_logit_focal_keeps_precision_when_confident():
    y = np.array([[0.0]])
    mid = focal_loss_with_logits(Tensor([[12.0]]), y, gamma=0.0, balance=None).item()
    assert mid == pytest.approx(12.0 + math.log1p(math.exp(-12.0)), rel=1e-15)
    # beyond the score clamp both paths agree on -log(1e-7)
    far = focal_loss_with_logits(Tensor([[30.0]]), y, gamma=0.0, balance=None).item()
    assert far == pytest.approx(-math.log(1e-7), rel=1e-12)


def test_logit_focal_clamped_entries_have_zero_gradient():
    z = parameter(np.array([[40.0, -40.0, 0.3]]))
    y = np.array([[0.0, 1.0, 1.0]])
    focal_loss_with_logits(z, y).backward()
    assert z.grad[0, 0] == 0.0 and z.grad[0, 1] == 0.0 and z.grad[0, 2] != 0.0


def test_grad_check_entry_mode_is_stricter():
    # a coordinate with a tiny true gradient sits under the finite-difference noise
    w = parameter(np.array([[1.0, 1e-9]]))
    big = Tensor(np.array([[1e3, 1.0]]))

    def fn():
        return ad.tensor_sum(w * w * big)

    assert grad_check(fn, [w], per="tensor") < 1e-6
    assert grad_check(fn, [w], per="entry") > 1e-4
    with pytest.raises(ValueError):
        grad_check(fn, [w], per="column")


def test_grad_check_linear_is_exact():
    rng = np.random.default_rng(6)
    w = parameter(rng.normal(size=(3, 2)))
    x = rng.normal(size=(4, 3))
    assert grad_check(lambda: ad.tensor_sum(ad.matmul(Tensor(x), w)), [w]) < 1e-9


def _shifted_away_from_zero(rng, shape):
    v = rng.normal(size=shape)
    return np.where(np.abs(v) < 0.05, v + np.sign(v + 1e-12) * 0.1, v)


OPS = {
    "add_broadcast": lambda a, b: ad.tensor_sum((a + ad.take_rows(b, np.array([0]))) * a),
    "mul": lambda a, b: ad.tensor_sum(a * b * a),
    "matmul": lambda a, b: ad.tensor_mean(ad.matmul(a, b) * a),
    "relu": lambda a, b: ad.tensor_sum(ad.relu(a) * b),
    "sigmoid": lambda a, b: ad.tensor_sum(ad.sigmoid(a) * b),
    "concat": lambda a, b: ad.tensor_sum(ad.concat([a, b], axis=1) * ad.concat([b, a], axis=1)),
    "take_rows": lambda a, b: ad.tensor_sum(ad.take_rows(a, np.array([2, 0, 2])) * ad.take_rows(b, np.array([1, 1, 0]))),
    "sub": lambda a, b: ad.tensor_sum((a - b) * (1.0 - a)),
}


@pytest.mark.parametrize("name", sorted(OPS))
def test_operation_gradients(name):
    rng = np.random.default_rng(abs(hash(name)) % 1000)
    a = parameter(_shifted_away_from_zero(rng, (3, 3)))
    b = parameter(_shifted_away_from_zero(rng, (3, 3)))
    assert grad_check(lambda: OPS[name](a, b), [a, b]) < 1e-6


def test_matmul_gradient_both_sides():
    rng = np.random.default_rng(7)
    a, b = parameter(rng.normal(size=(3, 4))), parameter(rng.normal(size=(4, 2)))
    assert grad_check(lambda: ad.tensor_sum(ad.sigmoid(ad.matmul(a, b))), [a, b]) < 1e-6


def test_layer_gradients():
    rng = np.random.default_rng(8)
    x = parameter(rng.normal(size=(5, 3)))
    edges = EdgeList.from_triples([(0, 1, 0.5), (2, 1, 1.0), (3, 4, 0.3), (1, 0, 0.8)], 5)
    layers = [layer(rng, 3, 4), layer(rng, 4, 2)]
    gate, fuse = linear(rng, 4, 3), linear(rng, 4, 3)
    head_h, head_o = linear(rng, 3, 4), linear(rng, 4, 2)
    targets = (rng.random((5, 2)) < 0.4).astype(float)
    params = [x] + [t for lp in layers for t in (lp.self_weight, lp.neighbor_weight, lp.bias)]
    params += [gate.weight, gate.bias, fuse.weight, fuse.bias, head_h.weight, head_o.weight]

    def loss():
        h = conv_stack(x, edges, layers)
        fused = gated_fusion(h, h * h, gate, fuse)
        return focal_loss(ad.sigmoid(mlp_head(fused, head_h, head_o)), targets)

    record = []
    conv_stack(x, edges, layers, relu_record=record)
    assert min(np.min(np.abs(z)) for z in record) > 1e-3
    assert grad_check(loss, params) < 1e-4


def test_checkpoint_round_trip_is_bit_exact(tmp_path):
    for arch in ARCHITECTURES:
        params = init_params(ModelDims(6, 5, 3, depth=2, architecture=arch), seed=11)
        save_checkpoint(params, tmp_path / f"{arch}.json", extra={"seed": 11})
        back, manifest = load_checkpoint(tmp_path / f"{arch}.json")
        assert manifest["seed"] == 11
        assert [k for k, _ in back.named()] == [k for k, _ in params.named()]
        for (_, a), (_, b) in zip(params.named(), back.named()):
            assert a.data.tobytes() == b.data.tobytes()


def test_init_is_seeded_and_glorot_bounded():
    dims = ModelDims(8, 6, 4)
    a, b = init_params(dims, 3), init_params(dims, 3)
    for (name, x), (_, y) in zip(a.named(), b.named()):
        assert np.array_equal(x.data, y.data)
        fin, fout = x.shape
        if not name.endswith(("bias", ".b")):
            assert np.max(np.abs(x.data)) <= math.sqrt(6 / (fin + fout))
    assert not np.array_equal(init_params(dims, 4).tensors["pos.0.self"].data, a.tensors["pos.0.self"].data)


def test_unknown_architecture():
    with pytest.raises(ValueError):
        ModelDims(4, 4, 2, architecture="transformer")
