import json
import math

import numpy as np
import pytest

import cagnet


def test_resolve_votes():
    assert cagnet.resolve_votes([0, 0, 1]) == {"status": "Majority", "label": 0, "tally": [2, 1, 0]}
    assert cagnet.resolve_votes([0, 1, 2], 1)["status"] == "TieBroken"
    discarded = cagnet.resolve_votes([0, 1, 2])
    assert discarded["status"] == "Discarded"
    assert discarded["label"] is None
    with pytest.raises(cagnet.CagnetError):
        cagnet.resolve_votes([0, 0, 1], 2)


def test_remap_emotion():
    assert cagnet.remap_emotion("Excitement") == "Happy"
    assert cagnet.remap_emotion("Frustrated") == "Anger"
    with pytest.raises(cagnet.CagnetError, match="Peaceful"):
        cagnet.remap_emotion("Bored")


def test_kappa():
    report = cagnet.kappa_from_counts([[20, 5], [10, 15]])
    assert report["kappa"] == pytest.approx(0.4, abs=1e-9)
    assert report["observed"] == pytest.approx(0.7)
    same = cagnet.cohens_kappa(["P", "N", "P"], ["P", "N", "P"], ["P", "N", "Ne"])
    assert same["kappa"] == 1.0


def test_metrics_and_fusion():
    m = cagnet.compute_metrics([0, 0, 1, 2], [0, 1, 1, 2], 3)
    assert m["accuracy"] == 0.75
    assert m["macro_f1"] == pytest.approx(7 / 9)
    probs, label = cagnet.fuse_block_probabilities([0.6, 0.2, 0.2], [0.5, 0.3, 0.2], [0.4, 0.4, 0.2])
    assert label == 0
    assert probs == pytest.approx([0.5, 0.3, 0.2])


def test_segment_plan():
    windows, warning = cagnet.segment_plan(23)
    assert windows == [(0.0, 5.0), (5.0, 10.0), (10.0, 15.0), (15.0, 20.0)]
    assert warning is None
    windows, _ = cagnet.segment_plan(200)
    assert len(windows) == 35


def test_masked_softmax():
    p = cagnet.masked_softmax(np.array([[1000.0, 1001.0, 1002.0]]))
    assert p[0] == pytest.approx([0.09003057, 0.24472847, 0.66524096])
    masked = cagnet.masked_softmax(np.array([[1.0, 5.0, 2.0]]), [True, False, True])
    assert masked[0, 1] == 0.0
    assert masked.sum() == pytest.approx(1.0, abs=1e-12)


def test_embedding_round_trip(tmp_path):
    values = np.random.default_rng(0).standard_normal((4, 6)).astype(np.float32)
    values[3] = np.nan
    path = tmp_path / "clip_visual.gved"
    cagnet.write_embedding(path, "visual", values, [True, True, True, False])
    modality, back, valid = cagnet.read_embedding(path, 6)
    assert modality == "visual"
    assert valid == [True, True, True, False]
    assert np.array_equal(back[:3], values[:3])
    assert np.isnan(back[3]).all()
    with pytest.raises(cagnet.CagnetError, match="D=6"):
        cagnet.read_embedding(path, 8)


def test_cli_pipeline(tmp_path):
    data = tmp_path / "data"
    code, out, err = cagnet.run(["synth", "--out-dir", str(data), "--clips", "24", "--dim", "8"])
    assert code == 0, err
    run_dir = tmp_path / "run"
    code, out, err = cagnet.run(
        ["train", "--config", str(data / "train.cfg"), "--out-dir", str(run_dir), "--set", "max_epochs=3"]
    )
    assert code == 0, err
    assert "best epoch" in out
    log = [json.loads(line) for line in (run_dir / "train_log.jsonl").read_text().splitlines()]
    assert [row["epoch"] for row in log] == list(range(1, len(log) + 1))

    rows = cagnet.predict(str(run_dir / "model.ckpt"), str(data / "manifest.jsonl"), "a")
    assert len(rows) == 24
    for row in rows:
        assert math.isclose(sum(row["probabilities"]), 1.0, abs_tol=1e-6)
        assert len(row["block_probabilities"]) == 3

    code, _, _ = cagnet.run(["eval", "--checkpoint", str(run_dir / "model.ckpt"), "--manifest",
                             str(data / "manifest.jsonl"), "--missing", "q"])
    assert code == 2


def test_make_synthetic(tmp_path):
    manifest = cagnet.make_synthetic(tmp_path, clips=6, dim=4, visual_only=True)
    lines = open(manifest).read().splitlines()
    assert len(lines) == 6
    assert {"clip_id", "source_video_id", "paths"} <= set(json.loads(lines[0]))
