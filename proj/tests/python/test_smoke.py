import math

import numpy as np
import pytest

import vtcc


def small_overrides(**extra):
    overrides = {"data.per_class": "16", "train.batch_size": "16", "train.epochs": "1", "train.checkpoint_every": "0"}
    overrides.update(extra)
    return overrides


def test_config_round_trip():
    text = vtcc.desk_config()
    assert vtcc.normalize_config(text) == text
    assert "model.clusters=10" in vtcc.large_config()
    changed = vtcc.normalize_config("", {"train.epochs": "7"})
    assert "train.epochs=7" in changed
    with pytest.raises(vtcc.ConfigError):
        vtcc.normalize_config("model.widht=3")


def test_synthetic_dataset_and_records(tmp_path):
    images, labels = vtcc.synthetic_dataset(per_class=8)
    assert images.shape == (32, 1, 32, 32)
    assert images.dtype == np.uint8
    assert sorted(np.bincount(labels)) == [8, 8, 8, 8]
    path = str(tmp_path / "d.bin")
    vtcc.write_records(path, images, labels)
    back_images, back_labels = vtcc.read_records(path)
    assert np.array_equal(back_images, images)
    assert np.array_equal(back_labels, labels)


def test_losses_match_closed_forms():
    z = np.array([[1.0, 2.0, 3.0], [1.0, 2.0, 3.0]])
    assert vtcc.instance_contrastive_loss(z, z) == pytest.approx(math.log(3), abs=1e-12)
    y = np.array([[1, 0], [1, 0], [0, 1], [0, 1]], dtype=float)
    e = math.e
    expected = -math.log(e / (e + 2)) - 2 * math.log(2)
    assert vtcc.cluster_contrastive_loss(y, y) == pytest.approx(expected, abs=1e-12)
    with pytest.raises(vtcc.ContractError):
        vtcc.instance_contrastive_loss(z[:1], z[:1])


def test_metrics():
    truth = np.array([0, 0, 1, 1, 2, 2])
    pred = np.array([2, 2, 0, 0, 1, 1])
    assert vtcc.nmi(pred, truth) == 1.0
    assert vtcc.acc(pred, truth) == 1.0
    assert vtcc.ari(pred, truth) == 1.0
    assert vtcc.acc(np.array([0, 0, 1, 1]), np.array([0, 1, 1, 1])) == 0.75
    points = np.array([[0.0, 0.0], [0.1, 0.0], [5.0, 5.0], [5.1, 5.0]])
    labels, inertia = vtcc.kmeans(points, 2, seed=1)
    assert labels[0] == labels[1] != labels[2] == labels[3]
    assert inertia == pytest.approx(0.01)


def test_training_is_deterministic_and_resumable(tmp_path):
    vtcc.set_threads(1)
    overrides = small_overrides(**{"train.out": str(tmp_path)})
    a = vtcc.Trainer(overrides=overrides)
    b = vtcc.Trainer(overrides=overrides)
    first = [a.step() for _ in range(3)]
    assert first == [b.step() for _ in range(3)]
    assert all(math.isfinite(s["total_loss"]) for s in first)

    ckpt = str(tmp_path / "split.ckpt")
    a.save(ckpt)
    resumed = vtcc.Trainer.resume(ckpt)
    assert resumed.step_count == 3
    assert resumed.step() == b.step()


def test_train_evaluate_and_infer(tmp_path):
    images, labels = vtcc.synthetic_dataset(per_class=16)
    trainer = vtcc.Trainer(overrides=small_overrides(**{"train.out": str(tmp_path)}), images=images, labels=labels)
    report = trainer.train()
    assert '"epochs"' in report
    metrics = trainer.evaluate()
    assert set(metrics) >= {"nmi", "acc", "ari", "mass_entropy", "cluster_sizes"}
    assert sum(metrics["cluster_sizes"]) == 64

    out = vtcc.infer(str(tmp_path / "final.ckpt"), images)
    assert out["probabilities"].shape == (64, 4)
    assert np.allclose(out["probabilities"].sum(axis=1), 1.0, atol=1e-5)
    assert np.array_equal(out["assignments"], out["probabilities"].argmax(axis=1))


def test_unlabeled_evaluation_is_refused(tmp_path):
    images, _ = vtcc.synthetic_dataset(per_class=16)
    trainer = vtcc.Trainer(overrides=small_overrides(**{"train.out": str(tmp_path)}), images=images)
    with pytest.raises(vtcc.ContractError):
        trainer.evaluate()


def test_gradcheck():
    passed, rows = vtcc.gradcheck()
    assert passed
    assert all(err < tol for _, err, tol in rows)
