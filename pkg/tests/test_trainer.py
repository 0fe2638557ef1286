import copy
import math

import numpy as np
import pytest

from splatstream.codec import ContainerReader, PROFILES, pack_slice
from splatstream.core import GaussianArrays, InvalidParameterError, Lifespan, StateError
from splatstream.raster import psnr, render_arrays
from splatstream.synth import synth_scene
from splatstream.train import (
    SliceGen,
    TrainConfig,
    _sigmoid,
    gradient_scale,
    init_state,
    mature,
    relocate,
    schedule_expire,
    sgld_perturb,
    train_swin,
    train_video,
)

from conftest import identity_camera, random_arrays, random_unit_quats


def _gen_from_arrays(arrays: GaussianArrays, lifespan=None, slot=0) -> SliceGen:
    if lifespan is None:
        lifespan = Lifespan(0, 0, 5)
    params = {
        "mean": arrays.means.copy(),
        "quat": arrays.quats.copy(),
        "log_scale": np.log(arrays.scales),
        "opacity_logit": np.log(arrays.opacities / (1 - arrays.opacities)),
        "color": arrays.colors.copy(),
    }
    return SliceGen(slot=slot, lifespan=lifespan, params=params)


def _snapshot(state):
    return [
        {k: v.copy() for k, v in gen.params.items()} for gen in state.slices
    ]


def _same(snap_a, snap_b) -> bool:
    return all(
        np.array_equal(a[k], b[k])
        for a, b in zip(snap_a, snap_b)
        for k in a
    )


class TestConfig:
    def test_defaults_follow_contract(self):
        cfg = TrainConfig()
        assert cfg.noise_lr == 5e4
        assert cfg.scale_reg == 1e-2
        assert cfg.opacity_reg == 2e-2
        assert cfg.ssim_weight == 0.2
        assert cfg.gradient_scale_decay == 0.5
        assert cfg.dead_opacity_threshold == 0.005

    def test_validation(self):
        with pytest.raises(InvalidParameterError):
            TrainConfig(num_gs=10, swin_size=3)
        with pytest.raises(InvalidParameterError):
            TrainConfig(window_iterations=0)
        with pytest.raises(InvalidParameterError):
            TrainConfig(dead_opacity_threshold=1.5)

    def test_from_file_json_and_toml(self, tmp_path):
        (tmp_path / "c.json").write_text('{"swin_size": 2, "num_gs": 20}')
        cfg = TrainConfig.from_file(tmp_path / "c.json")
        assert cfg.swin_size == 2 and cfg.num_gs == 20
        (tmp_path / "c.toml").write_text("swin_size = 4\nnum_gs = 40\noptimizer = 'sgd'\n")
        cfg = TrainConfig.from_file(tmp_path / "c.toml")
        assert cfg.swin_size == 4 and cfg.optimizer == "sgd"
        (tmp_path / "bad.json").write_text('{"not_a_field": 1}')
        with pytest.raises(InvalidParameterError):
            TrainConfig.from_file(tmp_path / "bad.json")


class TestSgldPerturb:
    def test_opaque_splats_unmoved(self, rng):
        arrays = random_arrays(rng, 20, opacity_lo=0.999, opacity_hi=0.9999)
        gen = _gen_from_arrays(arrays)
        before = gen.params["mean"].copy()
        sgld_perturb([gen], 1.6e-4, 5e4, np.random.default_rng(0))
        # Gate saturates: movement is ~1e-12 of the ungated step size.
        step_scale = 5e4 * 1.6e-4 * np.max(arrays.scales)
        assert np.max(np.abs(gen.params["mean"] - before)) < 1e-12 * step_scale * 1e3

    def test_zero_noise_lr_is_noop(self, rng):
        arrays = random_arrays(rng, 20, opacity_lo=0.001, opacity_hi=0.004)
        gen = _gen_from_arrays(arrays)
        before = gen.params["mean"].copy()
        sgld_perturb([gen], 1.6e-4, 0.0, np.random.default_rng(0))
        np.testing.assert_array_equal(gen.params["mean"], before)

    def test_only_means_touched(self, rng):
        arrays = random_arrays(rng, 10, opacity_lo=0.001, opacity_hi=0.004)
        gen = _gen_from_arrays(arrays)
        before = {k: v.copy() for k, v in gen.params.items()}
        sgld_perturb([gen], 1.6e-4, 5e4, np.random.default_rng(0))
        for key in ("quat", "log_scale", "opacity_logit", "color"):
            np.testing.assert_array_equal(gen.params[key], before[key])
        assert not np.array_equal(gen.params["mean"], before["mean"])

    def test_noise_covariance_proportional_to_splat_covariance(self, rng):
        # Monte-Carlo oracle: the sample covariance of 1e4 draws must match
        # the splat covariance up to the (deterministic) scalar gain.
        from splatstream.core import covariance

        q = random_unit_quats(rng, 1)[0]
        s = np.array([0.3, 0.1, 0.05])
        alpha = 0.002
        n_draws = 10_000
        arrays = GaussianArrays(
            np.zeros((1, 3)), q[None], s[None], np.array([alpha]), np.zeros((1, 3))
        )
        draw_rng = np.random.default_rng(99)
        deltas = np.empty((n_draws, 3))
        lr, noise_lr = 1.6e-4, 5e4
        for i in range(n_draws):
            gen = _gen_from_arrays(arrays)
            before = gen.params["mean"].copy()
            sgld_perturb([gen], lr, noise_lr, draw_rng)
            deltas[i] = gen.params["mean"][0] - before[0]
        gate = 1.0 / (1.0 + math.exp(100.0 * (alpha - 0.005)))
        gain = noise_lr * lr * gate
        sample_cov = (deltas.T @ deltas) / n_draws / gain ** 2
        sigma = covariance(q, s)
        frob = np.linalg.norm(sample_cov - sigma) / np.linalg.norm(sigma)
        assert frob < 0.10


class TestRelocate:
    def test_no_dead_is_noop(self, rng):
        arrays = random_arrays(rng, 30, opacity_lo=0.2, opacity_hi=0.9)
        gen = _gen_from_arrays(arrays)
        before = {k: v.copy() for k, v in gen.params.items()}
        moved = relocate([gen], 0.005, np.random.default_rng(0))
        assert moved == 0
        for k, v in before.items():
            np.testing.assert_array_equal(gen.params[k], v)

    def test_single_dead_single_target_opacity_formula(self):
        # One dead, one alive: both end at 1 - sqrt(1 - 0.9).
        arrays = GaussianArrays(
            np.array([[0.0, 0, 2.0], [0.3, 0, 2.0]]),
            np.tile([1.0, 0, 0, 0], (2, 1)),
            np.full((2, 3), 0.05),
            np.array([0.001, 0.9]),
            np.array([[1.0, 0, 0], [0, 1.0, 0]]),
        )
        gen = _gen_from_arrays(arrays)
        moved = relocate([gen], 0.005, np.random.default_rng(0))
        assert moved == 1
        alpha = _sigmoid(gen.params["opacity_logit"])
        expected = 1.0 - math.sqrt(1.0 - 0.9)
        assert alpha[0] == pytest.approx(expected, abs=1e-12)
        assert alpha[1] == pytest.approx(expected, abs=1e-12)
        np.testing.assert_array_equal(gen.params["mean"][0], gen.params["mean"][1])
        # Clone scale shrinks by sqrt(N+1).
        np.testing.assert_allclose(
            np.exp(gen.params["log_scale"][0]),
            np.exp(gen.params["log_scale"][1]) / math.sqrt(2.0), rtol=1e-12,
        )

    def test_opacity_formula_exact_for_multiple_clones(self, rng):
        # Force N dead onto the single alive target.
        n_dead = 4
        opac = np.array([0.8] + [0.001] * n_dead)
        arrays = GaussianArrays(
            rng.normal(size=(n_dead + 1, 3)),
            random_unit_quats(rng, n_dead + 1),
            np.full((n_dead + 1, 3), 0.05),
            opac,
            rng.uniform(0, 1, (n_dead + 1, 3)),
        )
        gen = _gen_from_arrays(arrays)
        relocate([gen], 0.005, np.random.default_rng(1))
        alpha = _sigmoid(gen.params["opacity_logit"])
        expected = 1.0 - (1.0 - 0.8) ** (1.0 / (n_dead + 1))
        np.testing.assert_allclose(alpha, expected, atol=1e-12)
        # Stacked transmittance at the shared center is preserved.
        assert (1 - expected) ** (n_dead + 1) == pytest.approx(0.2, abs=1e-12)

    def test_count_and_membership_conserved(self, rng):
        gens = [
            _gen_from_arrays(random_arrays(rng, 15, opacity_lo=0.001, opacity_hi=0.9),
                             Lifespan(i, i, i + 5), slot=i)
            for i in range(3)
        ]
        sizes = [len(g.params["mean"]) for g in gens]
        spans = [g.lifespan for g in gens]
        relocate(gens, 0.05, np.random.default_rng(2))
        assert [len(g.params["mean"]) for g in gens] == sizes
        assert [g.lifespan for g in gens] == spans

    def test_no_alive_is_noop_with_warning(self, rng, caplog):
        arrays = random_arrays(rng, 5, opacity_lo=0.0001, opacity_hi=0.001)
        gen = _gen_from_arrays(arrays)
        before = gen.params["mean"].copy()
        with caplog.at_level("WARNING"):
            moved = relocate([gen], 0.005, np.random.default_rng(0))
        assert moved == 0
        np.testing.assert_array_equal(gen.params["mean"], before)
        assert any("relocation" in r.message for r in caplog.records)

    def test_render_preservation_within_1db(self, rng):
        # Render-before/after oracle at 64x64.  The reference is the scene
        # before a quarter of its splats faded out (what training produces);
        # the faded model sits at a finite PSNR from it, and relocating the
        # dead splats may not cost more than 1 dB of that quality.
        cam = identity_camera(64, 64, f=80.0)
        n = 120
        reference_arrays = random_arrays(rng, n, opacity_lo=0.3, opacity_hi=0.9)
        gt = render_arrays(cam, reference_arrays)
        dead = rng.choice(n, size=30, replace=False)
        opac = reference_arrays.opacities.copy()
        opac[dead] = 0.0015
        faded = GaussianArrays(reference_arrays.means, reference_arrays.quats,
                               reference_arrays.scales, opac, reference_arrays.colors)
        gen = _gen_from_arrays(faded)
        pre = render_arrays(cam, gen.arrays())
        relocate([gen], 0.005, np.random.default_rng(5))
        post = render_arrays(cam, gen.arrays())
        psnr_pre = psnr(pre, gt)
        psnr_post = psnr(post, gt)
        assert psnr_pre - psnr_post <= 1.0


class TestGradientScale:
    def test_pure_values(self):
        assert gradient_scale(0, 0.5) == 1.0
        assert gradient_scale(2, 0.5) == 0.25
        assert gradient_scale(3, 0.7) == pytest.approx(0.343)
        with pytest.raises(InvalidParameterError):
            gradient_scale(-1, 0.5)

    def test_paired_run_scales_mean_updates(self, tmp_path):
        # Paired-run oracle with plain SGD (where gradient scaling is exactly
        # learning-rate scaling): a slice in its second window (w=1) moves its
        # means by gamma^1 times the unscaled control run, with identical rng.
        _, dataset = synth_scene(3, 8, 2, 30, tmp_path / "ds", width=24, height=24)

        def run(scaling: bool):
            cfg = TrainConfig(
                swin_size=2, num_gs=20, genesis_iterations=2, window_iterations=1,
                relocate_period=10_000, rng_seed=11, optimizer="sgd",
                noise_lr=0.0, gradient_scaling=scaling, gradient_scale_decay=0.5,
            )
            state = init_state(cfg)
            train_swin(0, cfg.swin_size, state, dataset)
            schedule_expire(state)
            mature(1, state, writer=None)  # every slot reborn with w=0
            train_swin(1, 3, state, dataset, iterations=1)  # all at w=0: runs agree
            mature(2, state, writer=None)
            # The surviving generation [2, 4) is now in its second window.
            target = [g for g in state.slices if g.lifespan.start == 2][0]
            assert target.windows_trained == 1
            before = target.params["mean"].copy()
            train_swin(2, 4, state, dataset, iterations=1)
            return target.params["mean"] - before

        delta_scaled = run(True)
        delta_control = run(False)
        mask = np.abs(delta_control) > 1e-12
        assert mask.any()
        ratio = delta_scaled[mask] / delta_control[mask]
        # Ratio is 0.5 exactly; the residual is f64 cancellation from reading
        # a ~1e-9 update off a ~0.5-magnitude parameter.
        np.testing.assert_allclose(ratio, 0.5, rtol=1e-6)


class TestScheduleAndMature:
    def _trained_state(self, dataset, cfg):
        state = init_state(cfg)
        train_swin(0, cfg.swin_size, state, dataset, iterations=2)
        return state

    def test_schedule_expire_staggers(self, tmp_path):
        _, dataset = synth_scene(1, 8, 1, 20, tmp_path / "ds", width=16, height=16)
        cfg = TrainConfig(swin_size=5, num_gs=20, genesis_iterations=2,
                          window_iterations=1)
        state = self._trained_state(dataset, cfg)
        schedule_expire(state)
        assert [g.lifespan.expire for g in state.slices] == [1, 2, 3, 4, 5]
        assert all(g.lifespan.start == 0 and g.lifespan.birth == 0 for g in state.slices)
        with pytest.raises(StateError):
            schedule_expire(state)

    def test_schedule_requires_genesis(self, tmp_path):
        cfg = TrainConfig(swin_size=2, num_gs=10, genesis_iterations=1,
                          window_iterations=1)
        state = init_state(cfg)
        with pytest.raises(StateError):
            schedule_expire(state)

    def test_swin_one_degenerates_to_full_model_per_frame(self, tmp_path):
        _, dataset = synth_scene(1, 4, 1, 10, tmp_path / "ds", width=16, height=16)
        cfg = TrainConfig(swin_size=1, num_gs=12, genesis_iterations=2,
                          window_iterations=1)
        state = self._trained_state(dataset, cfg)
        schedule_expire(state)
        assert len(state.slices) == 1
        assert state.slices[0].lifespan.expire == 1
        n = mature(1, state, writer=None)
        assert n == 1  # the whole model matures every frame

    def test_partition_after_rebirth(self, tmp_path):
        # Schedule simulation oracle: after mature(1), frames [1, 6) are
        # covered by exactly num_gs active splats (optimizable + matured).
        _, dataset = synth_scene(1, 10, 1, 20, tmp_path / "ds", width=16, height=16)
        cfg = TrainConfig(swin_size=5, num_gs=20, genesis_iterations=2,
                          window_iterations=1)
        state = self._trained_state(dataset, cfg)
        schedule_expire(state)
        mature(1, state, writer=None)
        for frame in range(1, 6):
            n_opt = sum(len(g.params["mean"]) for g in state.slices
                        if g.lifespan.start <= frame < g.lifespan.expire)
            n_mat = sum(len(m.arrays) for m in state.matured
                        if m.lifespan.start <= frame < m.lifespan.expire)
            assert n_opt + n_mat == cfg.num_gs

    def test_mature_counts_and_rebirth_arithmetic(self, tmp_path):
        _, dataset = synth_scene(1, 12, 1, 20, tmp_path / "ds", width=16, height=16)
        cfg = TrainConfig(swin_size=5, num_gs=20, genesis_iterations=2,
                          window_iterations=1)
        state = self._trained_state(dataset, cfg)
        schedule_expire(state)
        emitted = []
        n = mature(1, state, writer=None, emitted=emitted)
        assert n == cfg.swin_size  # init block: all num_gs splats
        assert sum(cfg.slice_size for _ in range(n)) == cfg.num_gs
        # Every optimizable generation now satisfies the rebirth arithmetic.
        for gen in state.slices:
            ls = gen.lifespan
            assert ls.birth == ls.start
            assert ls.expire - ls.start == cfg.swin_size
            assert gen.windows_trained == 0
        # A generation expiring at 6 is reborn as [6, 11).
        train_swin(1, 6, state, dataset, iterations=1)
        reborn_from_6 = [g for g in state.slices if g.lifespan.expire == 6][0]
        mature(2, state, writer=None)
        # After maturing start<2, the slot whose old expire was 6 only moves
        # when its own start passes; check the one that just matured instead.
        newest = [g for g in state.slices if g.lifespan.start == 6][0]
        assert newest.lifespan == Lifespan(6, 6, 11)
        for st in range(3, 6):
            assert mature(st, state, writer=None) == 1

    def test_matured_archive_bounded(self, tmp_path):
        _, dataset = synth_scene(1, 16, 1, 20, tmp_path / "ds", width=16, height=16)
        cfg = TrainConfig(swin_size=4, num_gs=20, genesis_iterations=2,
                          window_iterations=1)
        state = self._trained_state(dataset, cfg)
        schedule_expire(state)
        for st in range(1, 12):
            mature(st, state, writer=None)
            assert state.matured_gaussian_count() <= cfg.num_gs
            train_swin(st, st + 4, state, dataset, iterations=1)


class TestTrainSwin:
    def test_zero_iterations_is_noop(self, tmp_path):
        _, dataset = synth_scene(1, 4, 1, 10, tmp_path / "ds", width=16, height=16)
        cfg = TrainConfig(swin_size=2, num_gs=10, genesis_iterations=5,
                          window_iterations=5)
        state = init_state(cfg)
        before = _snapshot(state)
        wt = [g.windows_trained for g in state.slices]
        train_swin(0, 2, state, dataset, iterations=0)
        assert _same(before, _snapshot(state))
        assert [g.windows_trained for g in state.slices] == wt

    def test_genesis_recovers_single_frame_scene(self, tmp_path):
        # Self-render oracle: ground truth comes from this repo's rasterizer.
        scene, dataset = synth_scene(2, 1, 3, 200, tmp_path / "ds", width=64, height=64)
        cfg = TrainConfig(swin_size=5, num_gs=300, genesis_iterations=1500,
                          window_iterations=50, relocate_period=100, rng_seed=0)
        state = init_state(cfg)
        train_swin(0, cfg.swin_size, state, dataset)
        for view in range(dataset.n_views):
            active = GaussianArrays.concat([g.arrays() for g in state.slices])
            pred = render_arrays(dataset.cameras[view], active)
            assert psnr(pred, scene.render(0, view)) >= 30.0

    def test_frozen_frames_render_bit_identical(self, tmp_path):
        _, dataset = synth_scene(4, 8, 2, 30, tmp_path / "ds", width=24, height=24)
        cfg = TrainConfig(swin_size=3, num_gs=30, genesis_iterations=30,
                          window_iterations=20, relocate_period=10, rng_seed=1)
        state = init_state(cfg)
        train_swin(0, 3, state, dataset)
        schedule_expire(state)
        mature(1, state, writer=None)
        train_swin(1, 4, state, dataset)
        mature(2, state, writer=None)

        def render_frame(frame):
            opt = [g.arrays() for g in state.slices
                   if g.lifespan.start <= frame < g.lifespan.expire]
            mat = [m.arrays for m in state.matured
                   if m.lifespan.start <= frame < m.lifespan.expire]
            return render_arrays(dataset.cameras[0], GaussianArrays.concat(opt + mat))

        before = [render_frame(f).pixels for f in range(2)]
        train_swin(2, 5, state, dataset)
        after = [render_frame(f).pixels for f in range(2)]
        for b, a in zip(before, after):
            assert np.array_equal(b, a)


class TestTrainVideo:
    def _fast_cfg(self, **kw):
        base = dict(swin_size=5, num_gs=50, genesis_iterations=3, window_iterations=2,
                    relocate_period=1000, rng_seed=0, max_cached_frames=4)
        base.update(kw)
        return TrainConfig(**base)

    def test_single_frame_video(self, tmp_path):
        _, dataset = synth_scene(1, 1, 2, 10, tmp_path / "ds", width=16, height=16)
        res = train_video(dataset, self._fast_cfg(), tmp_path / "c.swin")
        with ContainerReader(res.container_path) as reader:
            assert reader.complete
            assert reader.num_sections == 5  # init block only
            assert reader.slice_targets == []

    def test_record_count_audit(self, tmp_path):
        # Oracle: num_gs + (F-1) * slice_size per-frame records plus the
        # (swin-1) * slice_size tail generations born past the video's end.
        total_frames = 10
        _, dataset = synth_scene(1, total_frames, 1, 10, tmp_path / "ds",
                                 width=16, height=16)
        cfg = self._fast_cfg(num_gs=1000, swin_size=5, genesis_iterations=1,
                             window_iterations=1)
        res = train_video(dataset, cfg, tmp_path / "c.swin")
        with ContainerReader(res.container_path) as reader:
            gens = reader.all_generations()
            records = sum(int(g.valid.sum()) for g in gens)
            expected = 1000 + (total_frames - 1) * 200 + (5 - 1) * 200
            assert records == expected
            # Every generation appears exactly once.
            keys = [(g.lifespan.birth, g.header.slice_index, p)
                    for p, g in enumerate(gens[:5])]
            targets = [g.header.target_frame for g in gens[5:]]
            assert targets == sorted(targets)
            assert len(set(targets)) == len(targets)

    def test_schedule_simulation_matches(self, tmp_path):
        # Simulated schedule: genesis slots then one slice per target frame.
        total_frames = 7
        swin = 3
        _, dataset = synth_scene(2, total_frames, 1, 10, tmp_path / "ds",
                                 width=16, height=16)
        cfg = self._fast_cfg(num_gs=30, swin_size=swin)
        res = train_video(dataset, cfg, tmp_path / "c.swin")
        expected_targets = list(range(1, total_frames - 1 + swin))
        assert [e.target_frame for e in res.emitted[swin:]] == expected_targets
        assert [e.slot for e in res.emitted[swin:]] == [t % swin for t in expected_targets]
        # Genesis written in slot order.
        assert [e.slot for e in res.emitted[:swin]] == list(range(swin))

    def test_deterministic_container_bytes(self, tmp_path):
        _, dataset = synth_scene(3, 5, 2, 10, tmp_path / "ds", width=16, height=16)
        train_video(dataset, self._fast_cfg(num_gs=20, swin_size=2), tmp_path / "a.swin")
        dataset2 = type(dataset)(tmp_path / "ds", max_cached_frames=4)
        train_video(dataset2, self._fast_cfg(num_gs=20, swin_size=2), tmp_path / "b.swin")
        assert (tmp_path / "a.swin").read_bytes() == (tmp_path / "b.swin").read_bytes()

    def test_cache_size_does_not_change_model(self, tmp_path):
        # Paired-run oracle: lazy loading is invisible to the optimizer.
        _, _ = synth_scene(4, 6, 2, 10, tmp_path / "ds", width=16, height=16)
        from splatstream.dataset import FrameDataset

        small = FrameDataset(tmp_path / "ds", max_cached_frames=1)
        train_video(small, self._fast_cfg(num_gs=20, swin_size=2), tmp_path / "a.swin")
        big = FrameDataset(tmp_path / "ds", max_cached_frames=1000)
        train_video(big, self._fast_cfg(num_gs=20, swin_size=2), tmp_path / "b.swin")
        assert (tmp_path / "a.swin").read_bytes() == (tmp_path / "b.swin").read_bytes()

    def test_count_conservation_every_frame(self, tmp_path):
        total_frames = 8
        _, dataset = synth_scene(5, total_frames, 1, 10, tmp_path / "ds",
                                 width=16, height=16)
        cfg = self._fast_cfg(num_gs=40, swin_size=4)
        res = train_video(dataset, cfg, tmp_path / "c.swin", keep_archive=True)
        for frame in range(total_frames):
            active = sum(len(m.arrays) for m in res.archive
                         if m.lifespan.start <= frame < m.lifespan.expire)
            assert active == cfg.num_gs

    def test_freeze_correctness_bytes(self, tmp_path):
        # Re-encoding every archived generation after training reproduces the
        # exact bytes streamed at its mature() call.
        _, dataset = synth_scene(6, 6, 2, 10, tmp_path / "ds", width=16, height=16)
        cfg = self._fast_cfg(num_gs=20, swin_size=2, profile_id=1,
                             genesis_iterations=5, window_iterations=3)
        res = train_video(dataset, cfg, tmp_path / "c.swin", keep_archive=True)
        with ContainerReader(res.container_path) as reader:
            stored = reader.genesis_bytes()
            stored += [reader.slice_bytes_by_frame(t) for t in reader.slice_targets]
        assert len(stored) == len(res.archive)
        profile = PROFILES[cfg.profile_id]
        for frozen, blob in zip(res.archive, stored):
            again = pack_slice(frozen.arrays, frozen.lifespan, profile,
                               cfg.swin_size)
            assert again == blob

    def test_failure_leaves_partial_container(self, tmp_path):
        _, dataset = synth_scene(7, 6, 1, 10, tmp_path / "ds", width=16, height=16)
        cfg = self._fast_cfg(num_gs=20, swin_size=2)
        dataset.total_frames = 99  # sampling frame 6+ raises DatasetError
        with pytest.raises(Exception):
            train_video(dataset, cfg, tmp_path / "broken.swin")
        reader = ContainerReader(tmp_path / "broken.swin")
        assert not reader.complete
        reader.close()
