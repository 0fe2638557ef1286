"""Multi-view frame datasets on disk, loaded lazily through a bounded LRU cache.

Layout:

    root/cameras.json                  per-view intrinsics + world-to-camera
    root/frames/{frame:05d}/cam{view:02d}.png

Decoded frames are cached up to `max_cached_frames` (frame, view) entries;
repeated access always returns identical pixel data regardless of cache
history.
"""

from __future__ import annotations

import json
import os
from collections import OrderedDict
from pathlib import Path
from typing import List

import numpy as np

from .core import Camera, SplatError
from .raster import Image, read_png, write_png


class DatasetError(SplatError):
    """Missing or corrupt dataset content."""


def _camera_to_dict(cam: Camera) -> dict:
    return {
        "width": cam.width,
        "height": cam.height,
        "fx": cam.fx,
        "fy": cam.fy,
        "cx": cam.cx,
        "cy": cam.cy,
        "world_to_camera": [float(v) for v in cam.world_to_camera.reshape(-1)],
    }


def _camera_from_dict(d: dict) -> Camera:
    m = np.asarray(d["world_to_camera"], dtype=np.float64).reshape(4, 4)
    return Camera.from_matrix(d["width"], d["height"], d["fx"], d["fy"], d["cx"], d["cy"], m)


def frame_image_path(root, frame: int, view: int) -> Path:
    return Path(root) / "frames" / f"{frame:05d}" / f"cam{view:02d}.png"


class FrameDataset:
    """Lazy access to (frame, view) images with LRU-bounded decoding."""

    def __init__(self, root, max_cached_frames: int = 16):
        self.root = Path(root)
        meta_path = self.root / "cameras.json"
        if not meta_path.exists():
            raise DatasetError(f"no cameras.json under {self.root}")
        with open(meta_path, "r", encoding="utf-8") as fh:
            meta = json.load(fh)
        self.cameras: List[Camera] = [_camera_from_dict(d) for d in meta["views"]]
        self.total_frames: int = int(meta["total_frames"])
        if max_cached_frames <= 0:
            raise DatasetError("max_cached_frames must be positive")
        self.max_cached_frames = max_cached_frames
        self._cache: "OrderedDict[tuple, np.ndarray]" = OrderedDict()
        self.decode_count = 0  # diagnostics: how many PNG decodes happened

    @property
    def n_views(self) -> int:
        return len(self.cameras)

    def load(self, frame: int, view: int) -> Image:
        if not (0 <= frame < self.total_frames):
            raise DatasetError(f"frame {frame} out of range [0, {self.total_frames})")
        if not (0 <= view < self.n_views):
            raise DatasetError(f"view {view} out of range [0, {self.n_views})")
        key = (frame, view)
        if key in self._cache:
            self._cache.move_to_end(key)
            return Image(self._cache[key])
        path = frame_image_path(self.root, frame, view)
        if not path.exists():
            raise DatasetError(f"missing frame image {path} (frame={frame}, view={view})")
        try:
            img = read_png(path)
        except Exception as exc:  # corrupt file: surface with path context
            raise DatasetError(f"cannot decode {path} (frame={frame}, view={view}): {exc}") from exc
        self.decode_count += 1
        self._cache[key] = img.pixels
        while len(self._cache) > self.max_cached_frames:
            self._cache.popitem(last=False)
        return img

    def cached_keys(self):
        return list(self._cache.keys())


def load_frame(dataset: FrameDataset, frame: int, view: int) -> Image:
    """Decoded image for (frame, view); served from cache when resident."""
    return dataset.load(frame, view)


class DatasetWriter:
    """Writes the on-disk dataset layout."""

    def __init__(self, root, cameras: List[Camera], total_frames: int):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        meta = {
            "total_frames": total_frames,
            "views": [_camera_to_dict(c) for c in cameras],
        }
        with open(self.root / "cameras.json", "w", encoding="utf-8") as fh:
            json.dump(meta, fh, indent=1)

    def write_frame(self, frame: int, view: int, image: Image) -> None:
        path = frame_image_path(self.root, frame, view)
        os.makedirs(path.parent, exist_ok=True)
        write_png(image, path)
