import threading
import time

import numpy as np
import pytest

from splatstream.codec import ContainerReader
from splatstream.core import GaussianArrays, is_active
from splatstream.player import (
    FileSource,
    PlayerBuffer,
    ProtocolError,
    UpdateEvent,
    apply_update,
    render_frame,
    render_offline,
    start_player,
)
from splatstream.raster import render_arrays
from splatstream.synth import synth_scene
from splatstream.train import TrainConfig, train_video


@pytest.fixture(scope="module")
def toy_container(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("toy")
    scene, dataset = synth_scene(seed=4, total_frames=8, n_views=2, n_gaussians=40,
                                 out_dir=tmp / "ds", width=24, height=24)
    cfg = TrainConfig(swin_size=4, num_gs=40, genesis_iterations=40,
                      window_iterations=15, relocate_period=50, rng_seed=3,
                      profile_id=1, max_cached_frames=4)
    train_video(dataset, cfg, tmp / "c.swin")
    return tmp / "c.swin", dataset


class TestPlayerBuffer:
    def test_slot_discipline(self, toy_container):
        path, _ = toy_container
        with ContainerReader(path) as reader:
            init = reader.read_init()
            swin = reader.manifest.swin_size
            buffer = PlayerBuffer(init, swin)
            first = reader.read_slice()
        ev = UpdateEvent(first.header.target_frame,
                         first.header.target_frame % swin, first)
        apply_update(buffer, ev)
        bad = UpdateEvent(first.header.target_frame,
                          (first.header.target_frame + 1) % swin, first)
        with pytest.raises(ProtocolError):
            apply_update(buffer, bad)

    def test_frame_counter_monotone(self, toy_container):
        path, _ = toy_container
        with ContainerReader(path) as reader:
            buffer = PlayerBuffer(reader.read_init(), reader.manifest.swin_size)
        buffer.advance(3)
        with pytest.raises(ProtocolError):
            buffer.advance(2)

    def test_buffer_is_exactly_num_gs_records(self, toy_container):
        path, _ = toy_container
        with ContainerReader(path) as reader:
            buffer = PlayerBuffer(reader.read_init(), reader.manifest.swin_size)
            total = sum(len(s.arrays) for s in buffer.slots)
            assert total == reader.manifest.num_gs

    def test_frame0_equals_genesis_render(self, toy_container):
        path, dataset = toy_container
        with ContainerReader(path) as reader:
            init = reader.read_init()
            buffer = PlayerBuffer(init, reader.manifest.swin_size)
        cam = dataset.cameras[0]
        img = render_frame(buffer, cam)
        parts = [s.gaussians.take(np.nonzero(s.valid)[0]) for s in init
                 if is_active(s.lifespan, 0)]
        ref = render_arrays(cam, GaussianArrays.concat(parts))
        assert np.array_equal(img.pixels, ref.pixels)

    def test_update_sequence_reproduces_schedule(self, toy_container):
        # Applying updates in order leaves, at every frame f, exactly the
        # generation set with start <= f < expire (simulation oracle over the
        # container's own lifespans).
        path, _ = toy_container
        with ContainerReader(path) as reader:
            manifest = reader.manifest
            buffer = PlayerBuffer(reader.read_init(), manifest.swin_size)
            gens = reader.all_generations()
            reader2 = ContainerReader(path)
            for frame in range(manifest.total_frames):
                if frame > 0:
                    dec = reader2.read_slice()
                    apply_update(buffer, UpdateEvent(
                        dec.header.target_frame,
                        dec.header.target_frame % manifest.swin_size, dec))
                    buffer.advance(frame)
                expected = [g.lifespan for g in gens if is_active(g.lifespan, frame)]
                got = [s.lifespan for s in buffer.slots if is_active(s.lifespan, frame)]
                assert sorted((l.birth, l.expire) for l in got) == \
                    sorted((l.birth, l.expire) for l in expected)
                n_active = len(buffer.active_arrays(frame))
                n_expected = sum(int(g.valid.sum()) for g in gens
                                 if is_active(g.lifespan, frame))
                assert n_active == n_expected == manifest.num_gs
            reader2.close()

    def test_all_padding_renders_black(self, toy_container):
        path, dataset = toy_container
        with ContainerReader(path) as reader:
            init = reader.read_init()
            for s in init:
                s.valid[:] = False
            buffer = PlayerBuffer(init, reader.manifest.swin_size)
        img = render_frame(buffer, dataset.cameras[0])
        assert np.all(img.pixels == 0.0)


class TestStartPlayer:
    def test_single_frame_clean_termination(self, tmp_path):
        _, dataset = synth_scene(9, 1, 1, 10, tmp_path / "ds", width=16, height=16)
        cfg = TrainConfig(swin_size=2, num_gs=10, genesis_iterations=3,
                          window_iterations=2, rng_seed=0)
        train_video(dataset, cfg, tmp_path / "one.swin")
        frames = {}
        stats = start_player(FileSource(tmp_path / "one.swin"), [dataset.cameras[0]],
                             fps=1000.0, frame_sink=lambda f, i: frames.setdefault(f, i))
        assert stats.frames_rendered == 1
        assert list(frames) == [0]
        assert stats.stalls == 0

    def test_playback_matches_offline_renders(self, toy_container):
        path, dataset = toy_container
        with ContainerReader(path) as reader:
            gens = reader.all_generations()
            total = reader.manifest.total_frames
        cam = dataset.cameras[1]
        frames = {}
        stats = start_player(FileSource(path), [cam], fps=2000.0,
                             frame_sink=lambda f, i: frames.setdefault(f, i))
        assert stats.frames_rendered == total
        for f in range(total):
            ref = render_offline(gens, cam, f)
            assert np.array_equal(frames[f].pixels, ref.pixels), f"frame {f}"

    def test_bytes_per_frame_constant(self, toy_container):
        path, dataset = toy_container
        rows = []
        start_player(FileSource(path), [dataset.cameras[0]], fps=2000.0,
                     stats_sink=rows.append)
        per_frame = [r["bytes"] for r in rows if "bytes" in r and r["frame"] > 0]
        with ContainerReader(path) as reader:
            expected = 16 + reader.manifest.slice_size * reader.profile.bytes_per_record
        assert per_frame and all(b == expected for b in per_frame)

    def test_underrun_stalls_does_not_skip(self, toy_container):
        path, dataset = toy_container

        class SlowSource(FileSource):
            def __init__(self, p):
                super().__init__(p)
                self.served = 0

            def next_slice(self):
                self.served += 1
                if self.served == 2:
                    time.sleep(0.25)  # starve the updater once
                return super().next_slice()

        rows = []
        frames = {}
        stats = start_player(SlowSource(path), [dataset.cameras[0]], fps=2000.0,
                             stats_sink=rows.append,
                             frame_sink=lambda f, i: frames.setdefault(f, i),
                             queue_depth=1)
        assert stats.stalls >= 1
        assert any(r.get("event") == "stall" for r in rows)
        # No frame skipped despite the stall.
        with ContainerReader(path) as reader:
            assert sorted(frames) == list(range(reader.manifest.total_frames))

    def test_wall_clock_pacing(self, toy_container):
        path, dataset = toy_container
        fps = 50.0
        t0 = time.monotonic()
        stats = start_player(FileSource(path), [dataset.cameras[0]], fps=fps)
        elapsed = time.monotonic() - t0
        # 7 frame advances at 20 ms each.
        assert elapsed >= (stats.frames_rendered - 1) / fps

    def test_corrupt_slice_fails_with_frame_context(self, toy_container, tmp_path):
        from splatstream.core import SplatError

        path, dataset = toy_container
        data = bytearray(path.read_bytes())
        with ContainerReader(path) as reader:
            # Flip a payload byte inside the frame-2 slice section.
            section_len = 16 + reader.manifest.slice_size * reader.profile.bytes_per_record
            offset = data.index(b"SWGS", 56)  # first genesis header
            offset += (reader.manifest.swin_size + 1) * (section_len + 4)
        data[offset + 20] ^= 0xFF
        bad = tmp_path / "corrupt.swin"
        bad.write_bytes(bytes(data))
        with pytest.raises(SplatError, match="frame"):
            start_player(FileSource(bad), [dataset.cameras[0]], fps=2000.0)
