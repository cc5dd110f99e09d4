import json
import math

import numpy as np
import pytest

import mlml


def test_default_config_has_every_section():
    cfg = mlml.default_config()
    assert set(cfg) == {"synthetic", "encoder", "train", "eval", "paths"}
    assert cfg["train"]["regime"] == "ml2plus"


def test_overlap_tau_and_nmi():
    assert mlml.overlap_tau([1, 2], [1, 2]) == 0.0
    assert mlml.overlap_tau([1], [2]) == 1.0
    assert mlml.overlap_tau([1, 2], [1]) == 0.5
    want = (4 / 3) * math.log(2) / (math.log(2) + math.log(3))
    assert mlml.nmi([0, 0, 0, 1, 1, 1], [0, 0, 1, 1, 2, 2]) == pytest.approx(want, abs=1e-12)


def test_kmeans_objective_is_monotone():
    rng = np.random.default_rng(0)
    pts = rng.normal(size=(80, 3))
    assign, history = mlml.kmeans(pts, 4, seed=2)
    assert len(assign) == 80
    assert all(b <= a + 1e-12 for a, b in zip(history, history[1:]))


def test_recall_matches_numpy_brute_force():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(60, 4))
    labels = [[int(v)] for v in rng.integers(0, 3, size=60)]
    d = ((x[:, None, :] - x[None, :, :]) ** 2).sum(-1)
    np.fill_diagonal(d, np.inf)
    nearest = np.argmin(d, axis=1)
    want = np.mean([labels[i] == labels[j] for i, j in enumerate(nearest)])
    assert mlml.recall_at_k(x, labels, 1) == pytest.approx(want)


def test_config_errors_surface_as_exceptions(tmp_path):
    with pytest.raises(mlml.ConfigError):
        mlml.gen_data(tmp_path, {"synthetic": {"noise": 1.0}})
    with pytest.raises(mlml.Error):
        mlml.load_model(tmp_path / "missing.ckpt")


def test_end_to_end(tmp_path):
    data, run = tmp_path / "data", tmp_path / "run"
    mlml.gen_data(data, {"synthetic": {"train_size": 200, "validation_size": 60, "test_size": 60}})
    report = mlml.train(
        {
            "train": {"iterations": 20, "eval_every": 10},
            "paths": {"data_dir": str(data), "run_dir": str(run)},
        }
    )
    assert [r["iteration"] for r in report["records"]] == [10, 20]

    model = mlml.load_model(run / "best.ckpt")
    feats = np.array(
        [json.loads(line)["features"] for line in (data / "test.jsonl").read_text().splitlines()]
    )
    emb = mlml.embed(model, feats)
    assert emb.shape == (60, model.embedding_dim)
    np.testing.assert_allclose(np.linalg.norm(emb, axis=1), 1.0, atol=1e-12)

    metrics = mlml.evaluate(run / "best.ckpt", data)
    assert 0.0 <= metrics["nmi"] <= 1.0
    assert set(metrics["recall_at"]) == {"1", "2", "4", "8"}

    with pytest.raises(mlml.DimensionError):
        model.embed(np.zeros((2, model.input_dim + 1)))

    coords, ratio, degenerate = mlml.project_2d(emb)
    assert coords.shape == (60, 2) and not degenerate
    assert ratio[0] >= ratio[1]
