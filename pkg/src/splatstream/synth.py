"""Deterministic synthetic splat animations rendered into on-disk datasets.

These scenes are the ground-truth oracles for trainer and player tests:
the animation is an explicit Gaussian set (rigid drift, per-splat jitter,
and blobs that enter and exit mid-video), rendered by this package's own
rasterizer from fixed cameras.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from .core import Camera, GaussianArrays
from .dataset import DatasetWriter, FrameDataset
from .raster import Image, render_arrays

SCENE_BOUNDS = (-1.0, -1.0, -1.0, 1.0, 1.0, 1.0)


def arc_cameras(n_views: int, width: int, height: int, radius: float = 3.0,
                focal: float = 70.0, arc_degrees: float = 50.0) -> List[Camera]:
    """Cameras on a horizontal arc, all looking at the origin."""
    cams = []
    if n_views == 1:
        angles = [0.0]
    else:
        half = np.radians(arc_degrees) / 2.0
        angles = np.linspace(-half, half, n_views)
    for i, ang in enumerate(angles):
        # Camera center orbits in the xz-plane with a touch of elevation.
        cy_off = 0.25 * np.sin(2.1 * ang)
        center = np.array([radius * np.sin(ang), cy_off, -radius * np.cos(ang)])
        fwd = -center
        fwd = fwd / np.linalg.norm(fwd)
        up = np.array([0.0, 1.0, 0.0])
        right = np.cross(up, fwd)
        right /= np.linalg.norm(right)
        cam_up = np.cross(fwd, right)
        rot = np.stack([right, cam_up, fwd])  # world-to-camera rows
        trans = -rot @ center
        cams.append(Camera(width, height, focal, focal, width / 2.0, height / 2.0, rot, trans))
    return cams


@dataclass
class SyntheticScene:
    """Reproducible animated Gaussian set; regenerate with the same seed."""

    seed: int
    total_frames: int
    cameras: List[Camera]
    base_means: np.ndarray
    quats: np.ndarray
    scales: np.ndarray
    opacities: np.ndarray
    colors: np.ndarray
    jitter_amp: np.ndarray  # (n, 3)
    jitter_freq: np.ndarray  # (n,)
    jitter_phase: np.ndarray  # (n, 3)
    active_window: np.ndarray  # (n, 2) [enter, exit)
    drift_amp: float = 0.12

    def _drift(self, frame: int) -> np.ndarray:
        t = 2.0 * np.pi * frame / max(self.total_frames, 1)
        return self.drift_amp * np.array(
            [np.sin(t + 0.7), 0.6 * np.sin(0.5 * t + 1.3), 0.5 * np.sin(t + 2.1)]
        )

    def active_mask(self, frame: int) -> np.ndarray:
        return (self.active_window[:, 0] <= frame) & (frame < self.active_window[:, 1])

    def gaussians_at(self, frame: int) -> GaussianArrays:
        """Ground-truth splats active at `frame`; exited blobs contribute nothing."""
        mask = self.active_mask(frame)
        t = 2.0 * np.pi * frame / max(self.total_frames, 1)
        wiggle = self.jitter_amp * np.sin(
            self.jitter_freq[:, None] * t + self.jitter_phase
        )
        means = self.base_means + self._drift(frame)[None, :] + wiggle
        return GaussianArrays(
            means[mask], self.quats[mask], self.scales[mask],
            self.opacities[mask], self.colors[mask],
        )

    def render(self, frame: int, view: int) -> Image:
        return render_arrays(self.cameras[view], self.gaussians_at(frame))


def synth_scene(
    seed: int,
    total_frames: int,
    n_views: int,
    n_gaussians: int,
    out_dir,
    width: int = 64,
    height: int = 64,
    max_cached_frames: int = 16,
    transient_fraction: float = 0.12,
    arc_degrees: float = 36.0,
    opacity_range: Tuple[float, float] = (0.7, 0.98),
    scale_range: Tuple[float, float] = (0.045, 0.1),
    drift_amp: float = 0.12,
) -> Tuple[SyntheticScene, FrameDataset]:
    """Build the animation, render every (frame, view), and write the dataset."""
    rng = np.random.default_rng(seed)
    cams = arc_cameras(n_views, width, height, arc_degrees=arc_degrees)

    base = rng.uniform(-0.75, 0.75, size=(n_gaussians, 3))
    base[:, 2] *= 0.6  # keep depth spread modest so all views see the volume
    quats = rng.normal(size=(n_gaussians, 4))
    quats /= np.linalg.norm(quats, axis=1, keepdims=True)
    scales = np.exp(rng.uniform(np.log(scale_range[0]), np.log(scale_range[1]),
                                size=(n_gaussians, 3)))
    opac = rng.uniform(opacity_range[0], opacity_range[1], size=n_gaussians)
    colors = rng.uniform(0.15, 1.0, size=(n_gaussians, 3))

    jitter_amp = rng.uniform(0.0, 0.02, size=(n_gaussians, 3))
    jitter_freq = rng.uniform(0.5, 1.5, size=n_gaussians)
    jitter_phase = rng.uniform(0.0, 2.0 * np.pi, size=(n_gaussians, 3))

    window = np.zeros((n_gaussians, 2), dtype=np.int64)
    window[:, 0] = 0
    window[:, 1] = total_frames
    n_transient = int(round(transient_fraction * n_gaussians))
    if n_transient and total_frames >= 6:
        which = rng.choice(n_gaussians, size=n_transient, replace=False)
        for g in which:
            span = int(rng.integers(5, max(6, total_frames // 2) + 1))
            enter = int(rng.integers(0, total_frames - span + 1))
            window[g] = (enter, enter + span)

    scene = SyntheticScene(
        seed=seed, total_frames=total_frames, cameras=cams,
        base_means=base, quats=quats, scales=scales, opacities=opac, colors=colors,
        jitter_amp=jitter_amp, jitter_freq=jitter_freq, jitter_phase=jitter_phase,
        active_window=window, drift_amp=drift_amp,
    )

    writer = DatasetWriter(out_dir, cams, total_frames)
    for frame in range(total_frames):
        for view in range(n_views):
            writer.write_frame(frame, view, scene.render(frame, view))
    dataset = FrameDataset(out_dir, max_cached_frames=max_cached_frames)
    return scene, dataset
