import hashlib
import json
from pathlib import Path

import numpy as np
import pytest

from splatstream.cli import EXIT_INTERNAL, EXIT_OK, EXIT_USER, run


def _digest_tree(root: Path) -> str:
    h = hashlib.sha256()
    for p in sorted(root.rglob("*")):
        if p.is_file():
            h.update(p.read_bytes())
    return h.hexdigest()


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("cli")
    assert run(["synth", "--out", str(tmp / "ds"), "--seed", "7", "--frames", "5",
                "--views", "2", "--gaussians", "20", "--size", "24"]) == EXIT_OK
    assert run([
        "train", "--dataset", str(tmp / "ds"), "--out", str(tmp / "c.swin"),
        "--set", "swin_size=2", "--set", "num_gs=20",
        "--set", "genesis_iterations=10", "--set", "window_iterations=5",
        "--set", "relocate_period=50", "--set", "rng_seed=1",
    ]) == EXIT_OK
    from splatstream.dataset import FrameDataset
    from splatstream.player import save_camera_path

    ds = FrameDataset(tmp / "ds")
    save_camera_path(tmp / "cams.json", [ds.cameras[0]])
    return tmp


class TestSynth:
    def test_same_seed_same_checksums(self, tmp_path):
        args = ["synth", "--seed", "3", "--frames", "3", "--views", "1",
                "--gaussians", "10", "--size", "16"]
        assert run(args + ["--out", str(tmp_path / "a")]) == EXIT_OK
        assert run(args + ["--out", str(tmp_path / "b")]) == EXIT_OK
        assert _digest_tree(tmp_path / "a") == _digest_tree(tmp_path / "b")


class TestTrainInspect:
    def test_inspect_reports_payload_and_bandwidth(self, workspace, capsys):
        assert run(["inspect", "--container", str(workspace / "c.swin"),
                    "--json"]) == EXIT_OK
        info = json.loads(capsys.readouterr().out)
        # Arithmetic audit: payload = slice_size x record bytes, bandwidth per
        # the fps x slice_size x bytes formula.
        m = info["manifest"]
        slice_size = m["num_gs"] // m["swin_size"]
        assert info["per_frame_payload_bytes"] == slice_size * m["bytes_per_record"]
        assert info["bandwidth_payload_Bps"] == m["fps"] * slice_size * m["bytes_per_record"]
        assert info["uniform_slice_bytes"] is True
        assert info["complete"] is True

    def test_config_file_with_overrides(self, workspace, tmp_path):
        cfg = {"swin_size": 2, "num_gs": 20, "genesis_iterations": 5,
               "window_iterations": 3, "rng_seed": 2}
        (tmp_path / "cfg.json").write_text(json.dumps(cfg))
        assert run(["train", "--dataset", str(workspace / "ds"),
                    "--out", str(tmp_path / "c2.swin"),
                    "--config", str(tmp_path / "cfg.json"),
                    "--set", "genesis_iterations=6"]) == EXIT_OK
        assert (tmp_path / "c2.swin").exists()


class TestPlay:
    def test_play_writes_frames_and_stats(self, workspace, tmp_path):
        stats_path = tmp_path / "stats.jsonl"
        assert run(["play", "--file", str(workspace / "c.swin"),
                    "--camera-path", str(workspace / "cams.json"),
                    "--out-dir", str(tmp_path / "frames"),
                    "--fps", "500", "--stats", str(stats_path)]) == EXIT_OK
        pngs = sorted((tmp_path / "frames").glob("*.png"))
        assert len(pngs) == 5
        rows = [json.loads(line) for line in stats_path.read_text().splitlines()]
        assert all("frame" in r for r in rows)

    def test_end_to_end_play_equals_offline_renders(self, workspace, tmp_path):
        assert run(["play", "--file", str(workspace / "c.swin"),
                    "--camera-path", str(workspace / "cams.json"),
                    "--out-dir", str(tmp_path / "live"), "--fps", "500"]) == EXIT_OK
        assert run(["inspect", "--container", str(workspace / "c.swin"),
                    "--render-all", "--camera-path", str(workspace / "cams.json"),
                    "--out-dir", str(tmp_path / "offline")]) == EXIT_OK
        for f in range(5):
            live = (tmp_path / "live" / f"frame{f:05d}.png").read_bytes()
            off = (tmp_path / "offline" / f"frame{f:05d}.png").read_bytes()
            assert live == off, f"frame {f} differs"


class TestExitCodes:
    def test_missing_file_is_user_error(self):
        assert run(["inspect", "--container", "/nonexistent.swin"]) == EXIT_USER

    def test_bad_flags_are_user_error(self):
        assert run(["train", "--dataset", "x"]) == EXIT_USER  # missing --out
        assert run(["frobnicate"]) == EXIT_USER

    def test_bad_config_value_is_user_error(self, workspace):
        assert run(["train", "--dataset", str(workspace / "ds"),
                    "--out", "/tmp/x.swin", "--set", "bogus_field=1"]) == EXIT_USER

    def test_corrupt_container_is_user_error(self, tmp_path):
        bad = tmp_path / "bad.swin"
        bad.write_bytes(b"this is not a container")
        assert run(["inspect", "--container", str(bad)]) == EXIT_USER


class TestBench:
    def test_bench_smoke(self, capsys):
        assert run(["bench", "--gaussians", "50", "--size", "16",
                    "--iters", "2"]) == EXIT_OK
        out = capsys.readouterr().out
        assert "render forward" in out and "decode" in out
