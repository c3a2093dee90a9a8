import json

import numpy as np
import pytest

from ferretnet.data import ArrayDataset, PerturbationSpec
from ferretnet.lpd import NeighborhoodSpec, lpd_map
from ferretnet.model import build_ferretnet
from ferretnet.nn.checkpoint import CheckpointError
from ferretnet.training import (
    TrainConfig,
    evaluate,
    load_trained,
    model_input,
    predict_logits,
    save_trained,
    sidecar_path,
    train,
)


def tiny_dataset(n=8, size=32, seed=0):
    rng = np.random.default_rng(seed)
    images = rng.random((n, 3, size, size), dtype=np.float32)
    labels = np.arange(n) % 2
    return ArrayDataset(images, labels)


def test_config_defaults_and_validation():
    cfg = TrainConfig()
    assert (cfg.lr, cfg.betas, cfg.weight_decay, cfg.batch_size, cfg.crop_size) == (2e-4, (0.937, 0.999), 5e-4, 32, 224)
    for bad in (dict(lr=0), dict(weight_decay=-1), dict(betas=(1.0, 0.9)), dict(batch_size=0), dict(epochs=0),
                dict(seed=-1), dict(crop_size=0)):
        with pytest.raises(ValueError):
            TrainConfig(**bad)
    assert TrainConfig(betas=[0.9, 0.99]).to_dict()["betas"] == [0.9, 0.99]


def test_model_input_switches_between_lpd_and_raw():
    img = np.random.default_rng(0).random((3, 8, 8), dtype=np.float32)
    np.testing.assert_array_equal(model_input(img, None), img)
    np.testing.assert_array_equal(model_input(img, NeighborhoodSpec()), lpd_map(img, NeighborhoodSpec()))


def test_overfits_eight_samples():
    ds = tiny_dataset()
    model = build_ferretnet("S", dropout_p=0.0, seed=0)
    cfg = TrainConfig(lr=1e-3, batch_size=8, epochs=200, crop_size=32, seed=0)
    result = train(model, ds, cfg)
    assert len(result.history) == 200
    assert result.history[-1]["loss"] < 0.05
    assert result.history[-1]["acc"] == 1.0
    assert not model.training


def test_training_is_deterministic():
    def run():
        model = build_ferretnet("S", seed=1)
        train(model, tiny_dataset(seed=2), TrainConfig(batch_size=4, epochs=2, crop_size=24, seed=3))
        return [p.data.copy() for p in model.parameters()]

    for a, b in zip(run(), run()):
        np.testing.assert_array_equal(a, b)


def test_single_class_is_rejected():
    ds = ArrayDataset(np.zeros((4, 3, 16, 16), np.float32), [1, 1, 1, 1])
    with pytest.raises(ValueError, match="single-class"):
        train(build_ferretnet("S"), ds, TrainConfig(epochs=1, crop_size=16))


def test_progress_callback_sees_every_epoch():
    seen = []
    train(build_ferretnet("S"), tiny_dataset(4, 16), TrainConfig(epochs=3, crop_size=16), progress=seen.append)
    assert [r["epoch"] for r in seen] == [1, 2, 3]


def test_evaluate_reports_counts_and_perturbation():
    ds = tiny_dataset(6, 40)
    model = build_ferretnet("S", seed=0)
    res = evaluate(model, ds, NeighborhoodSpec(), PerturbationSpec.parse("jpeg:75"), crop_size=32)
    assert res["n"] == 6 and res["n_real"] == 3 and res["n_fake"] == 3
    assert res["perturbation"] == "jpeg:75"
    assert 0 <= res["acc"] <= 1 and 0 < res["ap"] <= 1


def test_predict_logits_is_batch_size_independent():
    model = build_ferretnet("S", seed=0)
    x = np.random.default_rng(1).random((5, 3, 32, 32), dtype=np.float32)
    np.testing.assert_allclose(predict_logits(model, x, 2), predict_logits(model, x, 5), rtol=1e-5, atol=1e-6)
    assert predict_logits(model, x[:0]).shape == (0,)


@pytest.mark.parametrize("spec", [NeighborhoodSpec(5, "exclude", "avg"), None])
def test_checkpoint_and_sidecar_round_trip(tmp_path, spec):
    model = build_ferretnet("S", dropout_p=0.1, seed=4)
    cfg = TrainConfig(epochs=1, crop_size=16, seed=4)
    history = [{"epoch": 1, "loss": 0.5, "acc": 0.75}]
    path = tmp_path / "m.npz"
    save_trained(path, model, cfg, spec, history)
    loaded, loaded_spec = load_trained(path)
    assert loaded_spec == spec
    x = np.random.default_rng(0).random((2, 3, 32, 32), dtype=np.float32)
    np.testing.assert_array_equal(predict_logits(loaded, x), predict_logits(model, x))
    side = json.loads(sidecar_path(path).read_text())
    assert side["history"] == history and side["seed"] == 4
    assert side["train"]["crop_size"] == 16 and side["model"]["variant"] == "S"


def test_load_trained_rejects_garbage(tmp_path):
    bad = tmp_path / "bad.npz"
    bad.write_bytes(b"not a checkpoint")
    with pytest.raises(CheckpointError):
        load_trained(bad)
