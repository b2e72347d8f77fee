import numpy as np
import pytest

from lassoviz.network import (
    FeatureId, Hyperparams, ModelFormatError, Network, ReLU, Softmax, accuracy, flower_net, forward,
    mnist_net, model_bytes, parse_model, train, zero_filters,
)
from lassoviz.tensor import ShapeError

from conftest import small_net


def test_feature_id_str_and_order():
    assert str(FeatureId(3, 12)) == "L3F12"
    assert sorted([FeatureId(2, 0), FeatureId(0, 5), FeatureId(0, 1)]) == [
        FeatureId(0, 1), FeatureId(0, 5), FeatureId(2, 0)]


def test_shapes_and_feature_layers():
    net = flower_net(6)
    assert net.shapes()[-1] == (6,)
    assert net.feature_layers == [0, 3, 7]
    assert net.response_layer(0) == 1
    assert mnist_net().shapes()[0] == (16, 24, 24)


def test_forward_captures_every_layer(rng):
    net = small_net()
    x = rng.random((3, 2, 12, 12), dtype=np.float32)
    tr = forward(net, x)
    assert len(tr.outputs) == len(net.layers)
    np.testing.assert_allclose(tr.probs.sum(axis=1), 1, rtol=1e-5)
    assert forward(net, x, capture=False).captured is False


def test_predicted_ties_pick_lowest_index():
    net = small_net()
    for layer in net.layers:
        if layer.kind in ("conv", "fc"):
            layer.weight[:] = 0
            layer.bias[:] = 0
    tr = forward(net, np.zeros((1, 2, 12, 12), np.float32))
    assert tr.predicted[0] == 0


def test_validate_requires_softmax_tail():
    net = small_net()
    with pytest.raises(ShapeError):
        Network(net.layers[:-1] + [ReLU()], 12, 2, 3)
    with pytest.raises(ShapeError):
        forward(net, np.zeros((1, 2, 10, 10), np.float32))


def test_zero_filters_is_a_copy(rng):
    net = small_net()
    z = zero_filters(net, [FeatureId(0, 1), FeatureId(6, 2)])
    assert not z.layers[0].weight[1].any() and z.layers[0].bias[1] == 0
    assert not z.layers[6].weight[2].any()
    assert net.layers[0].weight[1].any()
    with pytest.raises((IndexError, ValueError)):
        zero_filters(net, [FeatureId(1, 0)])


def test_zeroing_everything_gives_constant_predictor(rng):
    net = small_net()
    feats = [FeatureId(p, q) for p in (0, 3, 6, 8) for q in range(net.layers[p].units)]
    z = zero_filters(net, feats)
    x = rng.random((20, 2, 12, 12), dtype=np.float32)
    labels = np.array([0] * 12 + [1] * 8)
    assert accuracy(z, x, labels) == pytest.approx(12 / 20)  # everything predicted as class 0


def test_training_learns_separable_toy_task(rng):
    net = small_net(seed=3, classes=2)
    x = rng.random((64, 2, 12, 12), dtype=np.float32) * 0.2
    y = rng.integers(0, 2, 64)
    x[y == 1, 0] += 0.8
    trained = train(net, x, y, Hyperparams(epochs=15, batch_size=16, lr=0.05), seed=0)
    assert accuracy(trained, x, y) == 1.0
    assert trained.history[-1][0] < trained.history[0][0]
    again = train(net, x, y, Hyperparams(epochs=15, batch_size=16, lr=0.05), seed=0)
    assert model_bytes(again) == model_bytes(trained)


def test_model_round_trip_is_byte_exact():
    net = small_net()
    blob = model_bytes(net)
    back = parse_model(blob)
    assert model_bytes(back) == blob
    for a, b in zip(net.layers, back.layers):
        assert a.kind == b.kind
        if a.kind in ("conv", "fc"):
            np.testing.assert_array_equal(a.weight, b.weight)


def test_truncated_model_reports_offset():
    blob = model_bytes(small_net())
    cut = blob[:-7]
    with pytest.raises(ModelFormatError, match=r"offset \d+: truncated blob, expected \d+ bytes, found"):
        parse_model(cut)
    with pytest.raises(ModelFormatError, match="offset 0"):
        parse_model(b"XXNET1\n" + blob[7:])
    with pytest.raises(ModelFormatError, match="trailing"):
        parse_model(blob + b"\0")
