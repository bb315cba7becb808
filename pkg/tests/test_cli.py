import json
import subprocess
import sys

import pytest

from egohand.cli import main

from synthdata import write_synthetic_set


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    manifest, _ = write_synthetic_set(tmp_path_factory.mktemp("cli"), 77, 4)
    return manifest


def test_help_runs_as_module():
    proc = subprocess.run([sys.executable, "-m", "egohand", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "detect" in proc.stdout and "eval-det" in proc.stdout


def test_usage_errors_exit_one(capsys):
    with pytest.raises(SystemExit) as info:
        main(["detect", "--config"])
    assert info.value.code == 1
    with pytest.raises(SystemExit) as info:
        main(["no-such-command"])
    assert info.value.code == 1


def test_missing_config_exits_one(tmp_path, dataset, capsys):
    code = main(["detect", "--config", str(tmp_path / "none.json"), "--manifest", str(dataset), "--out", str(tmp_path / "d")])
    assert code == 1
    assert "none.json" in capsys.readouterr().err


def test_bad_manifest_exits_one(tmp_path, small_models, capsys):
    (tmp_path / "m.jsonl").write_text('{"frame_id": "a"}\n')
    code = main(["propose", "--config", str(small_models / "config.json"), "--manifest", str(tmp_path / "m.jsonl"), "--out", str(tmp_path / "p")])
    assert code == 1
    assert "m.jsonl:1" in capsys.readouterr().err


def test_synth_then_train_skin(tmp_path):
    assert main(["synth", "--out", str(tmp_path / "ds"), "--n", "3", "--seed", "1", "--height", "90", "--width", "120"]) == 0
    lines = (tmp_path / "ds" / "manifest.jsonl").read_text().splitlines()
    assert len(lines) == 3
    rec = json.loads(lines[0])
    assert set(rec) >= {"frame_id", "image", "setting", "boxes", "hands_present"}
    args = ["train-skin", "--manifest", str(tmp_path / "ds" / "manifest.jsonl"), "--trees", "2", "--depth", "4", "--samples", "200"]
    assert main(args + ["--out", str(tmp_path / "a.json")]) == 0
    assert main(args + ["--out", str(tmp_path / "b.json")]) == 0
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_train_hand(tmp_path, small_models, dataset):
    code = main(["train-hand", "--config", str(small_models / "config.json"), "--manifest", str(dataset), "--out", str(tmp_path / "h.json"), "--epochs", "2"])
    assert code == 0
    assert json.loads((tmp_path / "h.json").read_text())["kind"] == "baseline"


def test_propose_output_format(tmp_path, small_models, dataset):
    out = tmp_path / "p.jsonl"
    assert main(["propose", "--config", str(small_models / "config.json"), "--manifest", str(dataset), "--out", str(out)]) == 0
    rows = [json.loads(line) for line in out.read_text().splitlines()]
    assert len(rows) == 4
    for row in rows:
        assert set(row) == {"frame", "proposals"}
        for p in row["proposals"]:
            assert set(p) == {"x", "y", "w", "h", "wrist_fraction", "blob_id"}
    assert any(row["proposals"] for row in rows)


def test_detect_and_evaluate(tmp_path, small_models, dataset, capsys):
    dets = tmp_path / "d.jsonl"
    args = ["detect", "--config", str(small_models / "config.json"), "--manifest", str(dataset), "--out", str(dets)]
    assert main(args + ["--timing", str(tmp_path / "t.json"), "--workers", "1"]) == 0
    timing = json.loads((tmp_path / "t.json").read_text())
    assert timing["frames"] == 4 and timing["failed"] == 0
    for row in map(json.loads, dets.read_text().splitlines()):
        assert set(row) == {"frame", "detections"}
        for d in row["detections"]:
            assert set(d) == {"x", "y", "w", "h", "score"} and 0 <= d["score"] <= 1
    code = main(
        ["eval-det", "--dets", str(dets), "--manifest", str(dataset), "--iou", "0.3,0.5", "--ap-mode", "eleven_point",
         "--out", str(tmp_path / "r.json"), "--csv", str(tmp_path / "r.csv")]
    )
    assert code == 0
    report = json.loads((tmp_path / "r.json").read_text())
    assert report["ap_mode"] == "eleven_point" and set(report["ap"]) == {"0.3", "0.5"}
    assert "IoU 0.5: AP (eleven_point)" in capsys.readouterr().out


def test_eval_det_rejects_unknown_frames(tmp_path, dataset, capsys):
    (tmp_path / "d.jsonl").write_text(json.dumps({"frame": "zzz", "detections": []}) + "\n")
    assert main(["eval-det", "--dets", str(tmp_path / "d.jsonl"), "--manifest", str(dataset)]) == 1


def test_eval_det_rejects_bad_iou_list(tmp_path, dataset):
    with pytest.raises(SystemExit) as info:
        main(["eval-det", "--dets", "x", "--manifest", str(dataset), "--iou", "0.5,big"])
    assert info.value.code == 1


def test_eval_skin(tmp_path, small_models, dataset, capsys):
    code = main(["eval-skin", "--config", str(small_models / "config.json"), "--manifest", str(dataset), "--out", str(tmp_path / "s.json")])
    assert code == 0
    metrics = json.loads((tmp_path / "s.json").read_text())
    assert "total" in metrics
    for v in metrics.values():
        assert v["tp_rate"] is None or 0 <= v["tp_rate"] <= 1


def test_partial_failure_exits_two(tmp_path, small_models, dataset):
    bad = tmp_path / "bad.png"
    bad.write_bytes(b"garbage")
    lines = dataset.read_text().splitlines()[:1]
    lines.append(json.dumps({"frame_id": "bad", "image": str(bad)}))
    manifest = dataset.parent / "with_bad.jsonl"
    manifest.write_text("\n".join(lines) + "\n")
    out = tmp_path / "d.jsonl"
    assert main(["detect", "--config", str(small_models / "config.json"), "--manifest", str(manifest), "--out", str(out)]) == 2
    rows = [json.loads(line) for line in out.read_text().splitlines()]
    assert [r["frame"] for r in rows] == ["frame_0000", "bad"] and "error" in rows[1]


def test_render(tmp_path, small_models, dataset):
    out = tmp_path / "viz"
    assert main(["render", "--config", str(small_models / "config.json"), "--manifest", str(dataset), "--out-dir", str(out)]) == 0
    assert len(list(out.glob("*.png"))) == 4
    dets = tmp_path / "d.jsonl"
    dets.write_text(json.dumps({"frame": "frame_0000", "detections": [{"x": 1, "y": 1, "w": 5, "h": 5, "score": 0.9}]}) + "\n")
    assert main(["render", "--config", str(small_models / "config.json"), "--manifest", str(dataset), "--out-dir", str(out), "--dets", str(dets)]) == 0
