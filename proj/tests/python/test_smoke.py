import json
import math

import numpy as np
import pytest

import dfkd


def test_tinynet_forward_shapes_and_determinism():
    model = dfkd.make_tinynet(in_channels=3, image_size=16, num_classes=4, seed=7)
    rng = np.random.default_rng(0)
    x = rng.standard_normal((5, 3, 16, 16), dtype=np.float32)
    logits = model.forward(x)
    assert logits.shape == (5, 4)
    assert np.array_equal(logits, model.forward(x))
    assert model.num_classes == 4
    assert model.input_chw == (3, 16, 16)
    assert len(model.bn_batch_stats(x)) == 3


def test_loss_values():
    uniform = np.full((1, 10), 0.1, dtype=np.float32)
    assert dfkd.entropy_loss(uniform) == pytest.approx(math.log(10), abs=1e-5)

    img = np.array([[[[0.0, 1.0], [2.0, 3.0]]]], dtype=np.float32)
    assert dfkd.tv_loss(img) == 6.0

    z = np.random.default_rng(1).standard_normal((3, 4)).astype(np.float32)
    assert dfkd.kd_loss(z, z, temperature=3.0, alpha=1.0) == 0.0

    probs = dfkd.softmax(np.zeros((2, 4), dtype=np.float32))
    assert np.allclose(probs, 0.25)


def test_prune_exactness_and_sparsity():
    model = dfkd.make_tinynet(seed=3)
    mask = dfkd.compute_mask(model, 0.75)
    total = mask.total_elements
    assert mask.pruned_elements == math.floor(0.75 * total)
    dfkd.apply_mask(model, mask)
    rows = dfkd.sparsity_report(model, mask)
    name, layer_total, zeros, fraction = rows[-1]
    assert name == "global"
    assert abs(fraction - 0.75) <= 1.0 / total

    assert math.isinf(dfkd.global_l1_threshold(model, 0.0))


def test_checkpoint_round_trip(tmp_path):
    model = dfkd.make_tinynet(seed=5)
    mask = dfkd.compute_mask(model, 0.5)
    dfkd.apply_mask(model, mask)
    path = str(tmp_path / "model.ckpt")
    dfkd.save_checkpoint(model, path, mask)
    loaded, loaded_mask = dfkd.load_checkpoint(path)
    assert loaded_mask is not None
    assert loaded_mask.pruned_elements == mask.pruned_elements

    x = np.random.default_rng(2).standard_normal((2, 3, 16, 16)).astype(np.float32)
    assert np.array_equal(model.forward(x), loaded.forward(x))
    assert model.hash == loaded.hash


def test_synthesize_and_distill_smoke():
    data = dfkd.generate_shapes(classes=4, image_size=16, train_count=256, test_count=128, seed=0)
    teacher = dfkd.make_tinynet(seed=0)
    dfkd.train_classifier(teacher, data["train_images"], data["train_labels"], epochs=3, seed=0)

    images, logits = dfkd.synthesize(teacher, n_images=32, batch=16, iters=4, seed=0)
    assert images.shape == (32, 3, 16, 16)
    assert logits.shape == (32, 4)
    assert np.all(images >= -3.0) and np.all(images <= 3.0)

    # determinism of the synthesis stream
    images2, logits2 = dfkd.synthesize(teacher, n_images=32, batch=16, iters=4, seed=0)
    assert np.array_equal(images, images2)
    assert np.array_equal(logits, logits2)


def test_distill_preserves_mask(tmp_path):
    data = dfkd.generate_shapes(classes=4, train_count=256, test_count=128, seed=1)
    teacher = dfkd.make_tinynet(seed=1)
    dfkd.train_classifier(teacher, data["train_images"], data["train_labels"], epochs=3, seed=1)

    path = str(tmp_path / "teacher.ckpt")
    dfkd.save_checkpoint(teacher, path)
    student, _ = dfkd.load_checkpoint(path)
    mask = dfkd.compute_mask(student, 0.6)
    dfkd.apply_mask(student, mask)

    images, logits = dfkd.synthesize(teacher, n_images=32, batch=16, iters=4, seed=1)
    dfkd.distill(student, mask, teacher, images, logits, epochs=1, batch=16, seed=1)

    rows = dfkd.sparsity_report(student)  # counts exact zeros in the weights
    total = mask.total_elements
    assert rows[-1][2] >= mask.pruned_elements

    report = dfkd.evaluate(student, data["test_images"], data["test_labels"])
    assert 0.0 <= report["top1"] <= 1.0
    assert report["sample_count"] == 128


def test_run_pipeline_tiny(tmp_path):
    config = {
        "dataset": {"train_count": 300, "test_count": 150, "seed": 2},
        "teacher": {"epochs": 4},
        "dream": {"n_images": 32, "batch": 16, "iters": 10, "seed": 2},
        "distill": {"epochs": 2, "seed": 2},
        "io": {"workdir": str(tmp_path / "wd")},
    }
    result = dfkd.run_pipeline(json.dumps(config))
    assert result["model"] == "tinynet"
    for key in ("teacher", "pruned", "recovered", "improvement"):
        assert isinstance(result[key], float)
    assert (tmp_path / "wd" / "ledger.csv").exists()
    assert (tmp_path / "wd" / "dreams.dfks").exists()
