"""Manifest validation, the embedding container, configuration loading, the
full mock pipeline (determinism included), plot-data emission, and CLI exit
codes."""

import json
from pathlib import Path

import numpy as np
import pytest

from vsum import cli
from vsum.config import ConfigError, load_config
from vsum.dataset import load_manifest
from vsum.embedding_io import load_embeddings, write_embeddings
from vsum.errors import FormatError, ManifestError, StageError, StageMissing
from vsum.pipeline import load_record, run_pipeline
from vsum.plot_data import PLOT_FILES, emit_plot_data

from synthetic import write_manifest, write_video_assets

rng = np.random.default_rng(31)


def minimal_video(n_frames=4, fps=2.0):
    return {
        "id": "v0",
        "fps": fps,
        "n_frames": n_frames,
        "annotations": [[0.5] * n_frames],
    }


# ---------------------------------------------------------------- manifest

def test_manifest_minimal_loads(tmp_path):
    path = write_manifest(tmp_path, [minimal_video()])
    manifest = load_manifest(path)
    assert manifest.dataset_tag == "tvsum"
    assert manifest.video("v0").n_frames == 4


def test_manifest_annotation_length_mismatch_names_video(tmp_path):
    video = minimal_video()
    video["annotations"] = [[0.5] * 3]
    path = write_manifest(tmp_path, [video])
    with pytest.raises(ManifestError, match=r"v0.*length 3 != n_frames 4"):
        load_manifest(path)


def test_manifest_nonpositive_fps_rejected(tmp_path):
    video = minimal_video(fps=0.0)
    path = write_manifest(tmp_path, [video])
    with pytest.raises(ManifestError, match="fps"):
        load_manifest(path)


def test_manifest_unknown_dataset_rejected(tmp_path):
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps({"dataset": "other", "videos": [minimal_video()]}))
    with pytest.raises(ManifestError, match="unknown tag"):
        load_manifest(path)


def test_manifest_resolves_relative_paths(tmp_path):
    video = minimal_video()
    video["embeddings_path"] = "sub/emb.vsem"
    path = write_manifest(tmp_path, [video])
    manifest = load_manifest(path)
    assert manifest.video("v0").embeddings_path == tmp_path / "sub/emb.vsem"


def test_manifest_out_of_range_annotations(tmp_path):
    video = minimal_video()
    video["annotations"] = [[0.5, 0.5, 0.5, 1.5]]
    path = write_manifest(tmp_path, [video])
    with pytest.raises(ManifestError, match="0, 1"):
        load_manifest(path)


# -------------------------------------------------------------- embeddings

def test_embeddings_roundtrip_identity(tmp_path):
    matrix = rng.normal(size=(3, 2)).astype(np.float32)
    path = write_embeddings(tmp_path / "m.vsem", matrix)
    loaded = load_embeddings(path)
    np.testing.assert_array_equal(loaded.matrix, matrix.astype(np.float64))
    # write -> read -> write yields identical bytes
    second = write_embeddings(tmp_path / "m2.vsem", loaded.matrix)
    assert path.read_bytes() == second.read_bytes()


def test_embeddings_bad_magic(tmp_path):
    path = tmp_path / "bad.vsem"
    path.write_bytes(b"NOPE!" + b"\x00" * 20)
    with pytest.raises(FormatError, match="magic"):
        load_embeddings(path)


def test_embeddings_truncated_payload(tmp_path):
    path = write_embeddings(tmp_path / "t.vsem", np.zeros((10, 4), dtype=np.float32))
    data = path.read_bytes()
    path.write_bytes(data[: len(data) - 16])  # drop one row
    with pytest.raises(FormatError, match="truncated"):
        load_embeddings(path)


def test_embeddings_trailing_bytes(tmp_path):
    path = write_embeddings(tmp_path / "t.vsem", np.zeros((2, 2), dtype=np.float32))
    path.write_bytes(path.read_bytes() + b"xx")
    with pytest.raises(FormatError, match="trailing"):
        load_embeddings(path)


def test_embeddings_file_size_invariant(tmp_path):
    path = write_embeddings(tmp_path / "s.vsem", np.zeros((7, 5), dtype=np.float32))
    assert path.stat().st_size == 5 + 2 + 4 + 4 + 7 * 5 * 4


# ------------------------------------------------------------------ config

def test_config_defaults_and_overrides():
    config = load_config(None, seed=9, budget_fraction=0.2)
    assert config.seed == 9 and config.budget_fraction == 0.2
    assert config.caption_backend == "mock"


def test_config_unknown_field_rejected(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"not_a_field": 1}))
    with pytest.raises(ConfigError, match="not_a_field"):
        load_config(path)


def test_config_http_requires_endpoint(monkeypatch):
    monkeypatch.delenv("VSUM_LLM_ENDPOINT", raising=False)
    with pytest.raises(ConfigError, match="VSUM_LLM_ENDPOINT"):
        load_config(None, llm_backend="http")


def test_config_env_endpoint(monkeypatch):
    monkeypatch.setenv("VSUM_LLM_ENDPOINT", "http://example/score")
    config = load_config(None, llm_backend="http")
    assert config.llm_endpoint == "http://example/score"


def test_config_missing_rubric_file():
    with pytest.raises(ConfigError, match="rubric"):
        load_config(None, rubric="/nonexistent/path.rubric")


def test_config_secret_redacted_in_snapshot():
    config = load_config(None, llm_api_key="secret-token")
    assert config.snapshot()["llm_api_key"] == "***"


# ---------------------------------------------------------------- pipeline

def test_run_pipeline_mock_end_to_end(tiny_manifest, tmp_path):
    config = load_config(None, seed=3)
    manifest = load_manifest(tiny_manifest)
    record = run_pipeline(config, manifest, "vid0", tmp_path / "runs")
    for stage in ("segment", "captions", "score", "frames", "select", "eval"):
        assert record.artifact_path(stage).is_file()
    eval_doc = record.load_artifact("eval")
    assert 0.0 <= eval_doc["aggregate_f1"] <= 1.0
    seg_doc = record.load_artifact("segment")
    assert seg_doc["refined"] is not None
    curve_doc = record.load_artifact("frames")
    assert len(curve_doc["weighted"]) == manifest.video("vid0").n_frames
    for name in PLOT_FILES:
        assert (record.run_dir / name).is_file()


def test_run_pipeline_single_scene_video(tmp_path):
    video = write_video_assets(tmp_path, "solo", blocks=[(200, 5)], fps=30.0)
    manifest = load_manifest(write_manifest(tmp_path, [video]))
    record = run_pipeline(load_config(None), manifest, "solo", tmp_path / "runs")
    score_doc = record.load_artifact("score")
    assert [s["mode"] for s in score_doc["scores"]] == ["boundary"]


def test_run_pipeline_missing_embeddings_names_path(tmp_path):
    video = write_video_assets(tmp_path, "v", blocks=[(160, 1), (40, 2)], fps=30.0)
    Path(tmp_path / video["embeddings_path"]).unlink()
    manifest = load_manifest(write_manifest(tmp_path, [video]))
    with pytest.raises(StageError, match=r"refine.*v\.vsem"):
        run_pipeline(load_config(None), manifest, "v", tmp_path / "runs")


def test_run_pipeline_deterministic_artifacts(tiny_manifest, tmp_path):
    config = load_config(None, seed=11)
    manifest = load_manifest(tiny_manifest)
    rec1 = run_pipeline(config, manifest, "vid1", tmp_path / "a")
    rec2 = run_pipeline(config, manifest, "vid1", tmp_path / "b")
    names = sorted(p.name for p in rec1.run_dir.iterdir())
    assert names == sorted(p.name for p in rec2.run_dir.iterdir())
    for name in names:
        b1 = (rec1.run_dir / name).read_bytes()
        b2 = (rec2.run_dir / name).read_bytes()
        if name == "record.json":
            d1, d2 = json.loads(b1), json.loads(b2)
            d1["wall_clock"] = d2["wall_clock"] = None
            assert d1 == d2
        else:
            assert b1 == b2, f"{name} differs between identical runs"


def test_run_pipeline_seed_changes_results(tiny_manifest, tmp_path):
    manifest = load_manifest(tiny_manifest)
    rec1 = run_pipeline(load_config(None, seed=1), manifest, "vid2", tmp_path / "a")
    rec2 = run_pipeline(load_config(None, seed=2), manifest, "vid2", tmp_path / "b")
    s1 = [s["value"] for s in rec1.load_artifact("score")["scores"]]
    s2 = [s["value"] for s in rec2.load_artifact("score")["scores"]]
    assert s1 != s2


def test_run_pipeline_pseudo_label_stage(tiny_manifest, tmp_path):
    config = load_config(None, enable_pseudo_label=True)
    manifest = load_manifest(tiny_manifest)
    record = run_pipeline(config, manifest, "vid0", tmp_path / "runs")
    doc = record.load_artifact("pseudo_label")
    assert set(doc["reasons"]) == {
        "reason_positive", "reason_negative", "reason_difference",
    }
    assert len(doc["segment_scores"]) == len(
        record.load_artifact("segment")["refined"]
    )


def test_run_pipeline_selects_within_budget(tiny_manifest, tmp_path):
    # 0.35 of ~480 frames admits one ~150-frame scene; the summary must be
    # non-empty and within the cap
    config = load_config(None, budget_fraction=0.35)
    manifest = load_manifest(tiny_manifest)
    record = run_pipeline(config, manifest, "vid0", tmp_path / "runs")
    mask = np.array(record.load_artifact("select")["mask"])
    n_frames = manifest.video("vid0").n_frames
    assert 0 < mask.sum() <= int(0.35 * n_frames)


def test_run_pipeline_summe_mask_annotations(tmp_path):
    video = write_video_assets(tmp_path, "sm", blocks=[(160, 3), (160, 4)], fps=30.0)
    mask_a = [1.0 if i < 160 else 0.0 for i in range(320)]
    mask_b = [0.0 if i < 160 else 1.0 for i in range(320)]
    video["annotations"] = [mask_a, mask_b]
    video["annotation_type"] = "keyshot_masks"
    manifest = load_manifest(write_manifest(tmp_path, [video], dataset="summe"))
    config = load_config(None, budget_fraction=0.5)
    record = run_pipeline(config, manifest, "sm", tmp_path / "runs")
    eval_doc = record.load_artifact("eval")
    # the summary is one whole block, matching exactly one of the two users;
    # SumMe reports the max over users
    assert eval_doc["aggregate_f1"] == pytest.approx(1.0)
    assert sorted(u["f1"] for u in eval_doc["per_user"]) == [0.0, 1.0]


def test_run_pipeline_qfvs_shot_protocol(tmp_path):
    video = write_video_assets(
        tmp_path, "qv", blocks=[(150, 1), (150, 2), (150, 3), (150, 4)], fps=30.0
    )
    # oracle covers shots 0 and 2 of the four 5 s (150-frame) shots
    oracle = [1.0] * 150 + [0.0] * 150 + [1.0] * 150 + [0.0] * 150
    video["annotations"] = [oracle]
    video["annotation_type"] = "keyshot_masks"
    video["query"] = "show the first activity"
    manifest = load_manifest(write_manifest(tmp_path, [video], dataset="qfvs"))
    config = load_config(None, budget_absolute=2)
    record = run_pipeline(config, manifest, "qv", tmp_path / "runs")
    mask = np.array(record.load_artifact("select")["mask"])
    assert mask.sum() == 300  # exactly two whole shots
    eval_doc = record.load_artifact("eval")
    # reference budget equals the oracle's two shots; F1 is the shot overlap
    assert eval_doc["per_user"][0]["f1"] in (0.0, 0.5, 1.0)


def test_run_pipeline_caches_scores(tiny_manifest, tmp_path):
    cache_dir = tmp_path / "cache"
    config = load_config(None, cache_dir=str(cache_dir))
    manifest = load_manifest(tiny_manifest)
    run_pipeline(config, manifest, "vid0", tmp_path / "a")
    assert any((cache_dir / "scores").iterdir())
    record = run_pipeline(config, manifest, "vid0", tmp_path / "b")
    score_doc = record.load_artifact("score")
    assert all(s["attempt_count"] == 0 for s in score_doc["scores"])


# --------------------------------------------------------------- plot data

def test_plot_data_files_and_idempotence(tiny_manifest, tmp_path):
    manifest = load_manifest(tiny_manifest)
    record = run_pipeline(load_config(None), manifest, "vid0", tmp_path / "runs")
    out = tmp_path / "plots"
    paths = emit_plot_data(record, out)
    assert [p.name for p in paths] == list(PLOT_FILES)
    n_frames = manifest.video("vid0").n_frames
    for name in PLOT_FILES[2:]:
        rows = (out / name).read_text().strip().splitlines()
        assert len(rows) == n_frames + 1  # header + one row per frame
    first = {p.name: p.read_bytes() for p in paths}
    again = emit_plot_data(record, out)
    assert {p.name: p.read_bytes() for p in again} == first


def test_plot_data_incomplete_record_raises(tiny_manifest, tmp_path):
    from vsum.pipeline import VideoRunner

    manifest = load_manifest(tiny_manifest)
    runner = VideoRunner(load_config(None), manifest, "vid0", tmp_path / "runs")
    runner.stage_segment()
    with pytest.raises(StageMissing):
        emit_plot_data(runner.record, tmp_path / "plots")


# --------------------------------------------------------------------- cli

def test_cli_pipeline_mock_exit_zero(tiny_manifest, tmp_path, capsys):
    code = cli.main([
        "pipeline", "--manifest", str(tiny_manifest), "--video", "vid0",
        "--mock", "--out", str(tmp_path / "runs"), "--seed", "5",
    ])
    assert code == 0
    assert "aggregate_f1" in capsys.readouterr().out
    record = load_record(tmp_path / "runs" / "vid0")
    assert "eval" in record.stages


def test_cli_segment_stage_only(tiny_manifest, tmp_path):
    code = cli.main([
        "segment", "--manifest", str(tiny_manifest), "--video", "vid1",
        "--out", str(tmp_path / "runs"),
    ])
    assert code == 0
    seg = json.loads((tmp_path / "runs/vid1/segmentation.json").read_text())
    assert seg["refined"] is None and len(seg["initial"]) >= 1


def test_cli_stage_resume_skips_done_prerequisites(tiny_manifest, tmp_path):
    out = str(tmp_path / "runs")
    assert cli.main([
        "segment", "--manifest", str(tiny_manifest), "--video", "vid0", "--out", out,
    ]) == 0
    record_one = json.loads((tmp_path / "runs/vid0/record.json").read_text())
    assert set(record_one["stages"]) == {"segment"}
    assert cli.main([
        "refine", "--manifest", str(tiny_manifest), "--video", "vid0", "--out", out,
    ]) == 0
    seg = json.loads((tmp_path / "runs/vid0/segmentation.json").read_text())
    assert seg["refined"] is not None
    record_two = json.loads((tmp_path / "runs/vid0/record.json").read_text())
    assert set(record_two["stages"]) == {"segment", "refine"}


def test_cli_bad_manifest_exit_two(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    code = cli.main(["pipeline", "--manifest", str(bad), "--out", str(tmp_path)])
    assert code == 2


def test_cli_missing_run_dir_exit_three(tiny_manifest, tmp_path):
    code = cli.main([
        "plot-data", "--manifest", str(tiny_manifest), "--video", "vid0",
        "--out", str(tmp_path / "nothing"),
    ])
    assert code == 3


def test_cli_eval_dataset_summary(tiny_manifest, tmp_path, capsys):
    code = cli.main([
        "eval", "--manifest", str(tiny_manifest), "--mock",
        "--out", str(tmp_path / "runs"),
    ])
    assert code == 0
    summary = json.loads((tmp_path / "runs/eval_summary.json").read_text())
    assert set(summary["per_video_f1"]) == {"vid0", "vid1", "vid2"}
    assert 0.0 <= summary["split_f1"] <= 1.0


def test_cli_mine_reasons(tiny_manifest, tmp_path):
    code = cli.main([
        "mine-reasons", "--manifest", str(tiny_manifest), "--mock",
        "--out", str(tmp_path / "runs"),
    ])
    assert code == 0
    doc = json.loads((tmp_path / "runs/mined/reasons.json").read_text())
    assert len(doc["sampled_videos"]) == 1  # ceil(0.1 * 3)
    assert "rubric_response" in doc
