import hashlib
from pathlib import Path

import numpy as np
import pytest

from splatstream.dataset import DatasetError, FrameDataset, load_frame
from splatstream.raster import linear_to_srgb, render_arrays
from splatstream.synth import synth_scene


def _tree_digest(root: Path) -> str:
    h = hashlib.sha256()
    for path in sorted(root.rglob("*")):
        if path.is_file():
            h.update(str(path.relative_to(root)).encode())
            h.update(path.read_bytes())
    return h.hexdigest()


class TestSynthScene:
    def test_same_seed_bit_identical(self, tmp_path):
        synth_scene(3, 5, 2, 30, tmp_path / "a", width=24, height=24)
        synth_scene(3, 5, 2, 30, tmp_path / "b", width=24, height=24)
        assert _tree_digest(tmp_path / "a") == _tree_digest(tmp_path / "b")

    def test_frame_zero_matches_direct_render(self, tmp_path):
        scene, dataset = synth_scene(5, 4, 2, 25, tmp_path / "ds", width=24, height=24)
        direct = scene.render(0, 1)
        loaded = dataset.load(0, 1)
        # Loading goes through the 8-bit sRGB round trip; compare there.
        a = np.rint(linear_to_srgb(direct.pixels) * 255)
        b = np.rint(linear_to_srgb(loaded.pixels) * 255)
        np.testing.assert_array_equal(a, b)

    def test_exited_blob_contributes_nothing(self, tmp_path):
        scene, _ = synth_scene(11, 12, 1, 40, tmp_path / "ds", width=16, height=16)
        transient = np.nonzero(scene.active_window[:, 1] < scene.total_frames)[0]
        assert len(transient) > 0, "scene should contain exiting blobs"
        g = transient[0]
        exit_frame = int(scene.active_window[g, 1])
        for frame in range(exit_frame, scene.total_frames):
            assert not scene.active_mask(frame)[g]
            assert len(scene.gaussians_at(frame)) == int(scene.active_mask(frame).sum())

    def test_entering_blob_absent_before_enter(self, tmp_path):
        scene, _ = synth_scene(13, 12, 1, 40, tmp_path / "ds", width=16, height=16)
        entering = np.nonzero(scene.active_window[:, 0] > 0)[0]
        assert len(entering) > 0
        g = entering[0]
        enter = int(scene.active_window[g, 0])
        assert not scene.active_mask(enter - 1)[g]
        assert scene.active_mask(enter)[g]


class TestFrameDataset:
    def test_cache_hit_returns_identical_pixels(self, tmp_path):
        _, dataset = synth_scene(1, 3, 2, 10, tmp_path / "ds", width=16, height=16)
        first = load_frame(dataset, 1, 0)
        decodes = dataset.decode_count
        second = load_frame(dataset, 1, 0)
        assert dataset.decode_count == decodes  # served from cache
        assert np.array_equal(first.pixels, second.pixels)

    def test_lru_eviction_order(self, tmp_path):
        _, dataset = synth_scene(1, 4, 1, 10, tmp_path / "ds", width=16, height=16)
        dataset.max_cached_frames = 2
        a, b, c = (0, 0), (1, 0), (2, 0)
        dataset.load(*a)
        dataset.load(*b)
        dataset.load(*c)  # evicts a
        decodes = dataset.decode_count
        dataset.load(*a)
        assert dataset.decode_count == decodes + 1  # a was re-decoded
        assert set(dataset.cached_keys()) == {c, a}

    def test_result_independent_of_cache_history(self, tmp_path):
        _, big = synth_scene(2, 4, 2, 10, tmp_path / "ds", width=16, height=16,
                             max_cached_frames=64)
        small = FrameDataset(tmp_path / "ds", max_cached_frames=1)
        pattern = [(0, 0), (1, 1), (0, 0), (3, 1), (2, 0), (0, 0)]
        for key in pattern:
            assert np.array_equal(big.load(*key).pixels, small.load(*key).pixels)
        assert len(small.cached_keys()) == 1

    def test_missing_frame_has_context(self, tmp_path):
        _, dataset = synth_scene(1, 3, 1, 10, tmp_path / "ds", width=16, height=16)
        with pytest.raises(DatasetError, match="frame 7"):
            dataset.load(7, 0)
        with pytest.raises(DatasetError, match="view 3"):
            dataset.load(0, 3)

    def test_corrupt_file_has_path_context(self, tmp_path):
        _, dataset = synth_scene(1, 3, 1, 10, tmp_path / "ds", width=16, height=16)
        victim = tmp_path / "ds" / "frames" / "00001" / "cam00.png"
        victim.write_bytes(b"not a png at all")
        with pytest.raises(DatasetError, match="cam00.png"):
            dataset.load(1, 0)
