from __future__ import annotations

import numpy as np
import pytest

from heatvol.errors import DivergenceError
from heatvol.net3d import build_pose_slowonly
from heatvol.net3d.train import (
    ArrayDataset,
    History,
    TrainConfig,
    evaluate,
    predict_logits,
    train,
)


def tiny_net(seed=0, classes=2):
    return build_pose_slowonly(in_channels=3, frames=2, size=8, base_channels=2,
                               num_classes=classes, seed=seed)


def tiny_data(rng, n=8, classes=2):
    labels = np.arange(n) % classes
    x = rng.random((n, 3, 2, 8, 8)).astype(np.float32) * 0.1
    x[labels == 1, 0] += 1.0
    return ArrayDataset(x, labels)


def params(net):
    return [t.values.copy() for t in net.parameters()]


def test_zero_lr_leaves_weights(rng):
    net = tiny_net()
    before = params(net)
    train(net, tiny_data(rng), TrainConfig(epochs=2, batch_size=4, lr=0.0))
    for a, t in zip(before, net.parameters()):
        np.testing.assert_array_equal(a, t.values)


def test_memorizes_small_set(rng):
    net = tiny_net()
    data = tiny_data(rng)
    hist = train(net, data, TrainConfig(epochs=15, batch_size=4, lr=0.05), val_data=data)
    assert hist.final.train_acc == 1.0 or hist.final.val_acc == 1.0
    assert hist.records[-1].loss < hist.records[0].loss


def test_same_seed_same_history(rng):
    data = tiny_data(rng)
    cfg = TrainConfig(epochs=2, batch_size=3, lr=0.05)
    a, b = tiny_net(), tiny_net()
    ha, hb = train(a, data, cfg, seed=5), train(b, data, cfg, seed=5)
    assert [r.loss for r in ha.records] == [r.loss for r in hb.records]
    for x, y in zip(params(a), params(b)):
        np.testing.assert_array_equal(x, y)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_raises(rng):
    data = tiny_data(rng)
    data.x[0, 0, 0, 0, 0] = np.inf
    with pytest.raises(DivergenceError) as info:
        train(tiny_net(), data, TrainConfig(epochs=1, batch_size=8))
    assert info.value.epoch == 1


def test_early_stop(rng):
    data = tiny_data(rng)
    hist = train(tiny_net(), data, TrainConfig(epochs=5, lr=0.0, stop_at=0.0), val_data=data)
    assert len(hist.records) == 1


def test_lr_schedule():
    cfg = TrainConfig(lr=0.1, lr_steps=(2, 4))
    assert [cfg.lr_at(e) for e in range(5)] == pytest.approx([0.1, 0.1, 0.01, 0.01, 0.001])


@pytest.mark.parametrize("bad", [dict(epochs=-1), dict(batch_size=0), dict(lr=-1.0),
                                 dict(momentum=1.0), dict(weight_decay=-0.1)])
def test_config_validation(bad):
    with pytest.raises(ValueError):
        TrainConfig(**bad)


def test_history_csv(tmp_path, rng):
    hist = train(tiny_net(), tiny_data(rng), TrainConfig(epochs=2, batch_size=4, lr=0.01))
    path = tmp_path / "h.csv"
    hist.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "epoch,loss,train_acc,val_acc"
    assert len(lines) == 3 and lines[1].startswith("1,") and lines[1].endswith(",")


def test_history_final_empty():
    assert History().final is None


def test_predict_and_evaluate(rng):
    net, data = tiny_net(classes=3), tiny_data(rng, n=5, classes=3)
    logits = predict_logits(net, data, batch_size=2)
    assert logits.shape == (5, 3)
    assert 0.0 <= evaluate(net, data) <= 1.0


def test_dataset_validation():
    with pytest.raises(ValueError):
        ArrayDataset(np.zeros((2, 1)), [0])
    with pytest.raises(ValueError):
        train(tiny_net(), type("E", (), {"__len__": lambda s: 0, "labels": []})())
