"""Headless slice-update player.

Playback keeps exactly num_gs decoded records resident: the buffer has
swin_size slots of slice_size splats, and advancing one frame replaces
exactly one slot.  A reader thread prefetches and decodes slices ahead of
the wall-clock updater; on underrun the player stalls at the current frame
(skipping would desynchronize the slot schedule) and reports a stall event.
"""

from __future__ import annotations

import json
import queue
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, List, Optional, Sequence

import numpy as np

from .codec import (
    HEADER_SIZE,
    ContainerReader,
    DecodedSlice,
    Manifest,
    PROFILES,
    unpack_slice,
)
from .core import Camera, GaussianArrays, SplatError, is_active, slice_slot
from .raster import Image, render_arrays, write_png


class ProtocolError(SplatError):
    """A slice arrived for the wrong slot or out of order."""


@dataclass
class UpdateEvent:
    target_frame: int
    slot: int
    payload: DecodedSlice


@dataclass
class _Slot:
    arrays: GaussianArrays
    valid: np.ndarray
    lifespan: object


class PlayerBuffer:
    """swin_size slots of slice_size decoded splats plus a frame counter.

    Slot replacement is atomic with respect to rendering: a render sees each
    slot entirely old or entirely new.
    """

    def __init__(self, init_slices: Sequence[DecodedSlice], swin_size: int):
        if len(init_slices) != swin_size:
            raise ProtocolError(
                f"genesis block has {len(init_slices)} slices, expected {swin_size}"
            )
        self.swin_size = swin_size
        self._lock = threading.Lock()
        self.slots: List[_Slot] = [
            _Slot(s.gaussians, s.valid, s.lifespan) for s in init_slices
        ]
        self.frame = 0

    def apply(self, event: UpdateEvent) -> None:
        if event.slot != slice_slot(event.target_frame, self.swin_size):
            raise ProtocolError(
                f"slot {event.slot} does not match target frame {event.target_frame} "
                f"mod {self.swin_size}"
            )
        s = event.payload
        new = _Slot(s.gaussians, s.valid, s.lifespan)
        with self._lock:
            self.slots[event.slot] = new

    def advance(self, frame: int) -> None:
        with self._lock:
            if frame < self.frame:
                raise ProtocolError("frame counter may not move backwards")
            self.frame = frame

    def active_arrays(self, frame: Optional[int] = None) -> GaussianArrays:
        """Active, non-padding splats across slots in canonical (birth, slot)
        order; identical to the offline archive ordering."""
        with self._lock:
            frame = self.frame if frame is None else frame
            entries = [
                (s.lifespan.birth, slot_idx, s)
                for slot_idx, s in enumerate(self.slots)
                if is_active(s.lifespan, frame)
            ]
        entries.sort(key=lambda e: (e[0], e[1]))
        parts = [e[2].arrays.take(np.nonzero(e[2].valid)[0]) for e in entries]
        return GaussianArrays.concat(parts)


def apply_update(buffer: PlayerBuffer, event: UpdateEvent) -> None:
    buffer.apply(event)


def render_frame(buffer: PlayerBuffer, camera: Camera) -> Image:
    return render_arrays(camera, buffer.active_arrays())


def render_offline(generations: Sequence[DecodedSlice], camera: Camera, frame: int) -> Image:
    """Reference render of a frame straight from a container's generation set."""
    parts = [
        g.gaussians.take(np.nonzero(g.valid)[0])
        for g in generations
        if is_active(g.lifespan, frame)
    ]
    return render_arrays(camera, GaussianArrays.concat(parts))


class FileSource:
    """Stream source over a local container file."""

    def __init__(self, path):
        self.reader = ContainerReader(path)
        self.manifest: Manifest = self.reader.manifest

    def read_init(self) -> List[DecodedSlice]:
        return self.reader.read_init()

    def init_byte_length(self) -> int:
        return len(self.reader.init_bytes())

    def next_slice(self) -> Optional[DecodedSlice]:
        return self.reader.read_slice()

    def close(self):
        self.reader.close()


class HttpSource:
    """Stream source over the HTTP slice endpoints."""

    def __init__(self, base_url: str, quality: float = 1.0, timeout: float = 10.0):
        import requests

        self._requests = requests
        self.base_url = base_url.rstrip("/")
        self.quality = quality
        self.timeout = timeout
        r = requests.get(f"{self.base_url}/manifest", timeout=timeout)
        r.raise_for_status()
        self.manifest = Manifest.from_json_dict(r.json())
        self._params = self.manifest.stream_params()
        self._profile = PROFILES[self.manifest.profile_id]
        self._next_target = 1
        self._init_len = 0

    def read_init(self) -> List[DecodedSlice]:
        r = self._requests.get(f"{self.base_url}/init", timeout=self.timeout)
        r.raise_for_status()
        data = r.content
        self._init_len = len(data)
        out = []
        offset = 0
        from .codec import HEADER_SIZE, SliceHeader, genesis_lifespan

        for pos in range(self.manifest.swin_size):
            header = SliceHeader.from_bytes(data[offset:])
            length = HEADER_SIZE + header.kept_count * self._profile.bytes_per_record
            dec = unpack_slice(data[offset:offset + length], self._profile, self._params)
            dec.lifespan = genesis_lifespan(pos, self.manifest.swin_size)
            out.append(dec)
            offset += length
        return out

    def init_byte_length(self) -> int:
        return self._init_len

    def next_slice(self) -> Optional[DecodedSlice]:
        url = f"{self.base_url}/slice/{self._next_target}"
        r = self._requests.get(url, params={"q": self.quality}, timeout=self.timeout)
        if r.status_code == 404:
            return None
        r.raise_for_status()
        self._next_target += 1
        return unpack_slice(r.content, self._profile, self._params)

    def close(self):
        pass


def load_camera_path(path) -> List[Camera]:
    """Scripted per-frame camera poses from a JSON list."""
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    cams = []
    for d in data:
        m = np.asarray(d["world_to_camera"], dtype=np.float64).reshape(4, 4)
        cams.append(Camera.from_matrix(
            d["width"], d["height"], d["fx"], d["fy"], d["cx"], d["cy"], m
        ))
    if not cams:
        raise SplatError("camera path file holds no cameras")
    return cams


def save_camera_path(path, cameras: Sequence[Camera]) -> None:
    data = [
        {
            "width": c.width, "height": c.height, "fx": c.fx, "fy": c.fy,
            "cx": c.cx, "cy": c.cy,
            "world_to_camera": [float(v) for v in c.world_to_camera.reshape(-1)],
        }
        for c in cameras
    ]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=1)


@dataclass
class PlaybackStats:
    frames_rendered: int
    stalls: int
    bytes_ingested: int


def start_player(
    source,
    camera_path: Sequence[Camera],
    fps: float,
    out_dir: Optional[Path] = None,
    stats_sink: Optional[Callable[[dict], None]] = None,
    frame_sink: Optional[Callable[[int, Image], None]] = None,
    queue_depth: Optional[int] = None,
    stall_poll_s: float = 0.01,
) -> PlaybackStats:
    """Play a stream headlessly: one slot update and one render per frame tick.

    The camera for frame f is camera_path[min(f, len-1)].  Per-frame stats go
    to `stats_sink` as dicts (the CLI serializes them as JSON lines); rendered
    frames go to out_dir as PNGs and/or to `frame_sink`.
    """
    manifest = source.manifest
    params = manifest.stream_params()
    total = manifest.total_frames
    if queue_depth is None:
        queue_depth = manifest.swin_size
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)

    init_slices = source.read_init()
    buffer = PlayerBuffer(init_slices, manifest.swin_size)
    # Snapshot before the reader thread starts: the source owns one
    # sequential handle and must not be touched concurrently.
    init_bytes = source.init_byte_length()

    events: "queue.Queue" = queue.Queue(maxsize=queue_depth)
    reader_error: List[BaseException] = []

    def reader():
        try:
            while True:
                dec = source.next_slice()
                if dec is None:
                    break
                ev = UpdateEvent(
                    target_frame=dec.header.target_frame,
                    slot=slice_slot(dec.header.target_frame, manifest.swin_size),
                    payload=dec,
                )
                events.put(ev)
        except BaseException as exc:  # surfaced on the consumer side
            reader_error.append(exc)
        finally:
            events.put(None)

    reader_thread = threading.Thread(target=reader, name="slice-reader", daemon=True)
    reader_thread.start()

    def emit(frame: int, image: Image, nbytes: int, active: int, render_ms: float,
             stalled: bool) -> None:
        if out_dir is not None:
            write_png(image, out_dir / f"frame{frame:05d}.png")
        if frame_sink is not None:
            frame_sink(frame, image)
        if stats_sink is not None:
            stats_sink({
                "frame": frame,
                "bytes": nbytes,
                "active": active,
                "render_ms": round(render_ms, 3),
                "stall": stalled,
            })

    stalls = 0
    total_bytes = init_bytes

    def cam_for(frame: int) -> Camera:
        return camera_path[min(frame, len(camera_path) - 1)]

    t0 = time.perf_counter()
    active0 = buffer.active_arrays(0)
    img = render_arrays(cam_for(0), active0)
    emit(0, img, total_bytes, len(active0), (time.perf_counter() - t0) * 1e3, False)

    tick = 1.0 / fps if fps > 0 else 0.0
    next_tick = time.monotonic() + tick
    frames_rendered = 1
    for frame in range(1, total):
        # Pace: at most one frame advance per 1/fps wall-clock interval.
        now = time.monotonic()
        if now < next_tick:
            time.sleep(next_tick - now)
        next_tick = max(next_tick + tick, time.monotonic())

        stalled = False
        while True:
            try:
                ev = events.get_nowait()
                break
            except queue.Empty:
                if not stalled:
                    stalled = True
                    stalls += 1
                    if stats_sink is not None:
                        stats_sink({"frame": frame, "event": "stall"})
                time.sleep(stall_poll_s)
        if ev is None:
            if reader_error:
                raise SplatError(
                    f"stream failed while reading slice for frame {frame}: {reader_error[0]}"
                ) from reader_error[0]
            break  # end of stream before the video's nominal end
        if ev.target_frame != frame:
            raise ProtocolError(
                f"expected slice for frame {frame}, got target {ev.target_frame}"
            )
        buffer.apply(ev)
        buffer.advance(frame)
        nbytes = (
            HEADER_SIZE
            + ev.payload.header.kept_count * PROFILES[manifest.profile_id].bytes_per_record
        )
        total_bytes += nbytes
        t0 = time.perf_counter()
        active = buffer.active_arrays(frame)
        img = render_arrays(cam_for(frame), active)
        emit(frame, img, nbytes, len(active), (time.perf_counter() - t0) * 1e3, stalled)
        frames_rendered = frame + 1

    # Drain the queue so the reader can finish, then join.
    try:
        while events.get_nowait() is not None:
            pass
    except queue.Empty:
        pass
    reader_thread.join(timeout=5.0)
    source.close()
    return PlaybackStats(frames_rendered=frames_rendered, stalls=stalls,
                         bytes_ingested=total_bytes)
