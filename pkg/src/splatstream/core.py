"""Domain types and closed-form Gaussian math shared by every other module.

All functions here are pure and operate on immutable inputs; they are safe
to call from any number of concurrent tasks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Smallest permitted scale component, in scene units.  Keeps the covariance
# invertible; anything below is rejected (or clamped by decoders).
SCALE_FLOOR = 1e-6


class SplatError(Exception):
    """Base class for errors raised by this package."""


class InvalidParameterError(SplatError):
    """A Gaussian/camera parameter violates its invariant."""


class StateError(SplatError):
    """An operation was called in the wrong lifecycle state."""


def _as_f64(x, shape, name):
    a = np.asarray(x, dtype=np.float64)
    if a.shape != shape:
        raise InvalidParameterError(f"{name}: expected shape {shape}, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidParameterError(f"{name}: non-finite values")
    return a


@dataclass(frozen=True)
class Gaussian:
    """One splat: position, orientation, per-axis extent, opacity, color.

    The rotation is stored as a unit quaternion (w, x, y, z); the scale vector
    holds the ellipsoid semi-axis lengths.  Color is the view-independent
    linear-RGB term only.
    """

    mean: np.ndarray
    rotation: np.ndarray
    scale: np.ndarray
    opacity: float
    color: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", _as_f64(self.mean, (3,), "mean"))
        q = _as_f64(self.rotation, (4,), "rotation")
        n = float(np.linalg.norm(q))
        if n < 1e-8:
            raise InvalidParameterError("rotation: zero quaternion")
        object.__setattr__(self, "rotation", q / n)
        s = _as_f64(self.scale, (3,), "scale")
        if np.any(s <= 0.0):
            raise InvalidParameterError("scale: components must be > 0")
        object.__setattr__(self, "scale", s)
        op = float(self.opacity)
        if not (0.0 <= op <= 1.0):
            raise InvalidParameterError(f"opacity {op} outside [0, 1]")
        object.__setattr__(self, "opacity", op)
        c = _as_f64(self.color, (3,), "color")
        if np.any(c < 0.0) or np.any(c > 1.0):
            raise InvalidParameterError("color: components outside [0, 1]")
        object.__setattr__(self, "color", c)


@dataclass(frozen=True)
class Lifespan:
    """Frame interval [start, expire) during which a splat renders.

    `birth` marks the creation frame and determines the stream slot.
    """

    birth: int
    start: int
    expire: int

    def __post_init__(self):
        if self.start > self.expire:
            raise InvalidParameterError(f"lifespan start {self.start} > expire {self.expire}")
        if self.birth > self.start:
            raise InvalidParameterError(f"lifespan birth {self.birth} > start {self.start}")
        if min(self.birth, self.start) < 0:
            raise InvalidParameterError("lifespan indices must be non-negative")


@dataclass(frozen=True)
class Camera:
    """Pinhole camera: intrinsics in pixels plus a world-to-camera rigid transform."""

    width: int
    height: int
    fx: float
    fy: float
    cx: float
    cy: float
    rotation: np.ndarray  # (3, 3) world-to-camera rotation
    translation: np.ndarray  # (3,) world-to-camera translation

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise InvalidParameterError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise InvalidParameterError("principal point outside image")
        object.__setattr__(self, "rotation", _as_f64(self.rotation, (3, 3), "rotation"))
        object.__setattr__(self, "translation", _as_f64(self.translation, (3,), "translation"))

    @property
    def world_to_camera(self) -> np.ndarray:
        """4x4 row-major rigid transform."""
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    @classmethod
    def from_matrix(cls, width, height, fx, fy, cx, cy, world_to_camera) -> "Camera":
        m = _as_f64(world_to_camera, (4, 4), "world_to_camera")
        return cls(width, height, fx, fy, cx, cy, m[:3, :3].copy(), m[:3, 3].copy())


@dataclass(frozen=True)
class StreamParams:
    """Stream-wide constants shared by trainer, codec, server, and player."""

    swin_size: int
    num_gs: int
    fps: float
    bytes_per_gaussian: int
    total_frames: int

    def __post_init__(self):
        if self.swin_size <= 0 or self.num_gs <= 0:
            raise InvalidParameterError("swin_size and num_gs must be positive")
        if self.num_gs % self.swin_size != 0:
            raise InvalidParameterError(
                f"num_gs {self.num_gs} not divisible by swin_size {self.swin_size}"
            )

    @property
    def slice_size(self) -> int:
        return self.num_gs // self.swin_size


class GaussianArrays:
    """Structure-of-arrays view of N splats (float64).

    The array form is what the rasterizer, trainer, and codec operate on;
    `Gaussian` objects are the one-record convenience view.
    """

    __slots__ = ("means", "quats", "scales", "opacities", "colors")

    def __init__(self, means, quats, scales, opacities, colors):
        self.means = np.ascontiguousarray(means, dtype=np.float64)
        self.quats = np.ascontiguousarray(quats, dtype=np.float64)
        self.scales = np.ascontiguousarray(scales, dtype=np.float64)
        self.opacities = np.ascontiguousarray(opacities, dtype=np.float64)
        self.colors = np.ascontiguousarray(colors, dtype=np.float64)
        n = len(self.means)
        if not (
            self.means.shape == (n, 3)
            and self.quats.shape == (n, 4)
            and self.scales.shape == (n, 3)
            and self.opacities.shape == (n,)
            and self.colors.shape == (n, 3)
        ):
            raise InvalidParameterError("inconsistent array shapes")

    def __len__(self):
        return len(self.means)

    @classmethod
    def empty(cls) -> "GaussianArrays":
        return cls(
            np.zeros((0, 3)), np.zeros((0, 4)), np.zeros((0, 3)), np.zeros((0,)), np.zeros((0, 3))
        )

    @classmethod
    def from_gaussians(cls, gaussians) -> "GaussianArrays":
        gs = list(gaussians)
        if not gs:
            return cls.empty()
        return cls(
            np.stack([g.mean for g in gs]),
            np.stack([g.rotation for g in gs]),
            np.stack([g.scale for g in gs]),
            np.array([g.opacity for g in gs]),
            np.stack([g.color for g in gs]),
        )

    def to_gaussians(self):
        return [
            Gaussian(self.means[i], self.quats[i], self.scales[i], self.opacities[i], self.colors[i])
            for i in range(len(self))
        ]

    def take(self, idx) -> "GaussianArrays":
        return GaussianArrays(
            self.means[idx], self.quats[idx], self.scales[idx], self.opacities[idx], self.colors[idx]
        )

    def copy(self) -> "GaussianArrays":
        return GaussianArrays(
            self.means.copy(), self.quats.copy(), self.scales.copy(),
            self.opacities.copy(), self.colors.copy(),
        )

    @staticmethod
    def concat(parts) -> "GaussianArrays":
        parts = list(parts)
        if not parts:
            return GaussianArrays.empty()
        return GaussianArrays(
            np.concatenate([p.means for p in parts]),
            np.concatenate([p.quats for p in parts]),
            np.concatenate([p.scales for p in parts]),
            np.concatenate([p.opacities for p in parts]),
            np.concatenate([p.colors for p in parts]),
        )


def quat_to_rotmat(q) -> np.ndarray:
    """Rotation matrix of a unit quaternion (w, x, y, z).

    Accepts (4,) or (N, 4); returns (3, 3) or (N, 3, 3).  The input is assumed
    normalized; callers that optimize raw quaternions normalize first.
    """
    q = np.asarray(q, dtype=np.float64)
    single = q.ndim == 1
    qs = q[None, :] if single else q
    w, x, y, z = qs[:, 0], qs[:, 1], qs[:, 2], qs[:, 3]
    r = np.empty((len(qs), 3, 3))
    r[:, 0, 0] = 1 - 2 * (y * y + z * z)
    r[:, 0, 1] = 2 * (x * y - w * z)
    r[:, 0, 2] = 2 * (x * z + w * y)
    r[:, 1, 0] = 2 * (x * y + w * z)
    r[:, 1, 1] = 1 - 2 * (x * x + z * z)
    r[:, 1, 2] = 2 * (y * z - w * x)
    r[:, 2, 0] = 2 * (x * z - w * y)
    r[:, 2, 1] = 2 * (y * z + w * x)
    r[:, 2, 2] = 1 - 2 * (x * x + y * y)
    return r[0] if single else r


def covariance(rotation, scale) -> np.ndarray:
    """3x3 covariance R * diag(s) * diag(s) * R^T of one splat."""
    s = _as_f64(scale, (3,), "scale")
    if np.any(s <= 0.0):
        raise InvalidParameterError("scale: components must be > 0")
    q = _as_f64(rotation, (4,), "rotation")
    n = float(np.linalg.norm(q))
    if n < 1e-8:
        raise InvalidParameterError("rotation: zero quaternion")
    r = quat_to_rotmat(q / n)
    m = r * s[None, :]
    return m @ m.T


def intensity(gaussian: Gaussian, point) -> float:
    """Unnormalized Gaussian density exp(-1/2 (x-mu)^T Sigma^-1 (x-mu)) at a 3D point."""
    if np.any(gaussian.scale < SCALE_FLOOR):
        raise InvalidParameterError(f"scale below floor {SCALE_FLOOR}")
    p = _as_f64(point, (3,), "point")
    d = p - gaussian.mean
    # Sigma^-1 = R S^-2 R^T, so the Mahalanobis term is |S^-1 R^T d|^2.
    r = quat_to_rotmat(gaussian.rotation)
    local = (r.T @ d) / gaussian.scale
    return float(np.exp(-0.5 * np.dot(local, local)))


def is_active(lifespan: Lifespan, frame: int) -> bool:
    """True iff `start <= frame < expire`."""
    return lifespan.start <= frame < lifespan.expire


def slice_slot(birth: int, swin_size: int) -> int:
    """Player-buffer slot addressed by a slice born at `birth`."""
    if swin_size <= 0:
        raise InvalidParameterError("swin_size must be positive")
    return birth % swin_size


def count_active(lifespans, frame: int, sizes=None) -> int:
    """Number of splats active at `frame` across generations.

    `lifespans` is an iterable of Lifespan; `sizes` optionally gives the splat
    count of each generation (defaults to 1 each).  Trainer tests use this to
    check that active generations partition the model exactly.
    """
    spans = list(lifespans)
    if sizes is None:
        sizes = [1] * len(spans)
    return sum(int(n) for ls, n in zip(spans, sizes) if is_active(ls, frame))
