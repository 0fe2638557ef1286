"""Bit-exact wire format: fixed-size little-endian records, framed slices,
and the container layout consumed by both the native player and the browser
viewer.

Container layout:

    "SWGV" manifest | genesis slices | per-frame slices | tail slices | "SWGE"

Every slice section is `header(16) + kept_count records + crc32(4)`.  The
CRC is container framing; HTTP endpoints serve the slice bytes without it.
Genesis slices carry target_frame 0 / slice_index 0; their staggered
lifespans are reconstructed from their position in the init block.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from typing import Iterable, List, Optional

import numpy as np

from .core import GaussianArrays, Lifespan, SCALE_FLOOR, SplatError, StreamParams

CONTAINER_MAGIC = b"SWGV"
SLICE_MAGIC = b"SWGS"
END_MAGIC = b"SWGE"
FORMAT_VERSION = 1

_MANIFEST_FMT = "<4sIIIfIB3x6fI"
_MANIFEST_SIZE = struct.calcsize(_MANIFEST_FMT)
_HEADER_FMT = "<4sIBI3x"
HEADER_SIZE = struct.calcsize(_HEADER_FMT)
_CRC_SIZE = 4


class CodecError(SplatError):
    """Malformed or inconsistent wire data."""


@dataclass(frozen=True)
class QuantProfile:
    """Per-attribute encodings of one fixed-size record layout."""

    profile_id: int
    bytes_per_record: int
    dtype: np.dtype


PROFILE_FULL = QuantProfile(
    profile_id=0,
    bytes_per_record=56,
    dtype=np.dtype([
        ("mean", "<f4", (3,)),
        ("rot", "<f4", (4,)),
        ("scale", "<f4", (3,)),
        ("opacity", "<f4"),
        ("color", "<f4", (3,)),
    ]),
)

PROFILE_QUANT = QuantProfile(
    profile_id=1,
    bytes_per_record=30,
    dtype=np.dtype([
        ("mean", "<f2", (3,)),
        ("rot", "u1", (4,)),
        ("scale", "<f2", (3,)),
        ("opacity", "u1"),
        ("color", "<f4", (3,)),
        ("pad", "u1"),
    ]),
)

PROFILES = {0: PROFILE_FULL, 1: PROFILE_QUANT}

assert PROFILE_FULL.dtype.itemsize == PROFILE_FULL.bytes_per_record
assert PROFILE_QUANT.dtype.itemsize == PROFILE_QUANT.bytes_per_record


@dataclass(frozen=True)
class SliceHeader:
    target_frame: int
    slice_index: int
    kept_count: int

    def to_bytes(self) -> bytes:
        return struct.pack(
            _HEADER_FMT, SLICE_MAGIC, self.target_frame, self.slice_index, self.kept_count
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "SliceHeader":
        if len(data) < HEADER_SIZE:
            raise CodecError("truncated slice header")
        magic, target, idx, kept = struct.unpack(_HEADER_FMT, data[:HEADER_SIZE])
        if magic != SLICE_MAGIC:
            raise CodecError(f"bad slice magic {magic!r}")
        return cls(target_frame=target, slice_index=idx, kept_count=kept)


@dataclass(frozen=True)
class Manifest:
    num_gs: int
    swin_size: int
    fps: float
    total_frames: int
    profile_id: int
    scene_bounds: tuple  # (xmin, ymin, zmin, xmax, ymax, zmax)
    camera_count: int
    format_version: int = FORMAT_VERSION

    @property
    def profile(self) -> QuantProfile:
        return PROFILES[self.profile_id]

    @property
    def slice_size(self) -> int:
        return self.num_gs // self.swin_size

    def stream_params(self) -> StreamParams:
        return StreamParams(
            swin_size=self.swin_size,
            num_gs=self.num_gs,
            fps=self.fps,
            bytes_per_gaussian=self.profile.bytes_per_record,
            total_frames=self.total_frames,
        )

    def to_bytes(self) -> bytes:
        return struct.pack(
            _MANIFEST_FMT, CONTAINER_MAGIC, self.format_version, self.num_gs,
            self.swin_size, self.fps, self.total_frames, self.profile_id,
            *[float(v) for v in self.scene_bounds], self.camera_count,
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "Manifest":
        if len(data) < _MANIFEST_SIZE:
            raise CodecError("truncated manifest")
        fields = struct.unpack(_MANIFEST_FMT, data[:_MANIFEST_SIZE])
        magic, version, num_gs, swin, fps, total, profile = fields[:7]
        bounds = fields[7:13]
        cameras = fields[13]
        if magic != CONTAINER_MAGIC:
            raise CodecError(f"bad container magic {magic!r}")
        if version != FORMAT_VERSION:
            raise CodecError(f"unsupported format version {version}")
        if profile not in PROFILES:
            raise CodecError(f"unknown quantization profile {profile}")
        return cls(
            num_gs=num_gs, swin_size=swin, fps=fps, total_frames=total,
            profile_id=profile, scene_bounds=bounds, camera_count=cameras,
            format_version=version,
        )

    def to_json_dict(self) -> dict:
        return {
            "format_version": self.format_version,
            "num_gs": self.num_gs,
            "swin_size": self.swin_size,
            "slice_size": self.slice_size,
            "fps": self.fps,
            "total_frames": self.total_frames,
            "profile": self.profile_id,
            "bytes_per_record": self.profile.bytes_per_record,
            "scene_bounds": [float(v) for v in self.scene_bounds],
            "camera_count": self.camera_count,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "Manifest":
        return cls(
            num_gs=d["num_gs"], swin_size=d["swin_size"], fps=d["fps"],
            total_frames=d["total_frames"], profile_id=d["profile"],
            scene_bounds=tuple(d["scene_bounds"]), camera_count=d["camera_count"],
            format_version=d.get("format_version", FORMAT_VERSION),
        )


def _require_finite(arrays: GaussianArrays) -> None:
    for a in (arrays.means, arrays.quats, arrays.scales, arrays.opacities, arrays.colors):
        if not np.all(np.isfinite(a)):
            raise CodecError("non-finite values cannot be encoded")


def _quat_norms(quats: np.ndarray) -> np.ndarray:
    # Fixed left-to-right summation order; the browser decoder mirrors this
    # exactly so both sides renormalize to bit-identical values.
    q = quats
    return np.sqrt(q[:, 0] * q[:, 0] + q[:, 1] * q[:, 1] + q[:, 2] * q[:, 2] + q[:, 3] * q[:, 3])


def _quantize_rot_u8(quats: np.ndarray) -> np.ndarray:
    """Map [-1, 1] quaternions to u8 so that decode (which renormalizes) and
    re-encode reproduce the same bytes.

    A plain round is byte-stable for almost all unit quaternions but not all:
    renormalizing the decoded lattice point can cross a rounding boundary.
    Iterating quantize(normalize(decode(b))) reaches a fixed point within a
    couple of steps, and fixed points are idempotent by construction.
    """
    b = np.clip(np.rint((quats + 1.0) * 127.5), 0, 255).astype(np.uint8)
    for _ in range(4):
        raw = b.astype(np.float64) / 127.5 - 1.0
        norms = np.maximum(_quat_norms(raw), 1e-12)
        b2 = np.clip(np.rint((raw / norms[:, None] + 1.0) * 127.5), 0, 255).astype(np.uint8)
        if np.array_equal(b2, b):
            break
        b = b2
    return b


def encode_records(arrays: GaussianArrays, profile: QuantProfile) -> bytes:
    """Encode N splats as N fixed-size little-endian records."""
    _require_finite(arrays)
    n = len(arrays)
    rec = np.zeros(n, dtype=profile.dtype)
    if profile.profile_id == 0:
        rec["mean"] = arrays.means.astype("<f4")
        rec["rot"] = arrays.quats.astype("<f4")
        rec["scale"] = arrays.scales.astype("<f4")
        rec["opacity"] = arrays.opacities.astype("<f4")
        rec["color"] = arrays.colors.astype("<f4")
    else:
        rec["mean"] = arrays.means.astype("<f2")
        rec["rot"] = _quantize_rot_u8(arrays.quats)
        rec["scale"] = arrays.scales.astype("<f2")
        rec["opacity"] = np.clip(np.rint(arrays.opacities * 255.0), 0, 255).astype("u1")
        rec["color"] = arrays.colors.astype("<f4")
    return rec.tobytes()


def decode_records(data: bytes, profile: QuantProfile, count: Optional[int] = None) -> GaussianArrays:
    """Decode fixed-size records; quaternions are renormalized and scales
    clamped to the floor so the Gaussian invariants hold."""
    if len(data) % profile.bytes_per_record != 0:
        raise CodecError(
            f"payload length {len(data)} not a multiple of record size "
            f"{profile.bytes_per_record} (profile mismatch?)"
        )
    rec = np.frombuffer(data, dtype=profile.dtype)
    if count is not None and len(rec) != count:
        raise CodecError(f"expected {count} records, found {len(rec)}")
    means = rec["mean"].astype(np.float64)
    colors = rec["color"].astype(np.float64)
    if profile.profile_id == 0:
        quats = rec["rot"].astype(np.float64)
        scales = rec["scale"].astype(np.float64)
        opac = rec["opacity"].astype(np.float64)
    else:
        quats = rec["rot"].astype(np.float64) / 127.5 - 1.0
        scales = rec["scale"].astype(np.float64)
        opac = rec["opacity"].astype(np.float64) / 255.0
    norms = _quat_norms(quats)
    # Full-precision records encoded from unit quaternions already satisfy the
    # norm invariant; renormalizing them would only churn the last ulp and
    # break byte-for-byte re-encoding, so renormalize only when actually off.
    need = np.abs(norms - 1.0) > 1e-6
    safe = np.where(need, np.maximum(norms, 1e-12), 1.0)
    quats = quats / safe[:, None]
    quats[norms < 1e-12] = np.array([1.0, 0.0, 0.0, 0.0])
    scales = np.maximum(scales, SCALE_FLOOR)
    opac = np.clip(opac, 0.0, 1.0)
    return GaussianArrays(means, quats, scales, opac, colors)


def encode_record(gaussian, profile: QuantProfile) -> bytes:
    """One-record convenience wrapper around encode_records."""
    return encode_records(GaussianArrays.from_gaussians([gaussian]), profile)


def decode_record(data: bytes, profile: QuantProfile):
    from .core import Gaussian  # local import avoids cycle at module load

    arrays = decode_records(data, profile, count=1)
    return Gaussian(
        arrays.means[0], arrays.quats[0], arrays.scales[0],
        float(arrays.opacities[0]), arrays.colors[0],
    )


@dataclass
class DecodedSlice:
    """One slice materialized to slice_size logical records.

    `valid` is False for the inert padding appended when kept_count is below
    slice_size; padding never reaches the rasterizer's sorter.
    """

    header: SliceHeader
    gaussians: GaussianArrays
    lifespan: Lifespan
    valid: np.ndarray  # (slice_size,) bool


def pack_slice(
    gaussians: GaussianArrays,
    lifespan: Lifespan,
    profile: QuantProfile,
    swin_size: int,
    kept_count: Optional[int] = None,
    slice_index: Optional[int] = None,
) -> bytes:
    """Frame kept records behind a slice header.

    The lifespan rides in the header (slices share lifespans); `slice_index`
    defaults to birth mod swin_size.
    """
    if kept_count is None:
        kept_count = len(gaussians)
    if kept_count != len(gaussians):
        raise CodecError(f"kept_count {kept_count} != records given {len(gaussians)}")
    if slice_index is None:
        slice_index = lifespan.birth % swin_size
    header = SliceHeader(
        target_frame=lifespan.birth, slice_index=slice_index, kept_count=kept_count
    )
    return header.to_bytes() + encode_records(gaussians, profile)


def unpack_slice(data: bytes, profile: QuantProfile, params: StreamParams) -> DecodedSlice:
    """Inverse of pack_slice; pads to slice_size with inert records."""
    header = SliceHeader.from_bytes(data)
    slice_size = params.slice_size
    if header.kept_count > slice_size:
        raise CodecError(f"kept_count {header.kept_count} exceeds slice size {slice_size}")
    payload = data[HEADER_SIZE:]
    expected = header.kept_count * profile.bytes_per_record
    if len(payload) < expected:
        raise CodecError(f"truncated slice payload: {len(payload)} < {expected}")
    kept = decode_records(payload[:expected], profile, count=header.kept_count)
    pad_n = slice_size - header.kept_count
    if pad_n:
        pad_bytes = b"\x00" * (pad_n * profile.bytes_per_record)
        padding = decode_records(pad_bytes, profile, count=pad_n)
        gaussians = GaussianArrays.concat([kept, padding])
    else:
        gaussians = kept
    valid = np.zeros(slice_size, dtype=bool)
    valid[: header.kept_count] = True
    lifespan = Lifespan(
        birth=header.target_frame,
        start=header.target_frame,
        expire=header.target_frame + params.swin_size,
    )
    return DecodedSlice(header=header, gaussians=gaussians, lifespan=lifespan, valid=valid)


def genesis_lifespan(position: int, swin_size: int) -> Lifespan:
    """Staggered lifespan of the genesis slice at `position` in the init block.

    Positions are slot indices; the slice in slot j expires at frame j (slot 0
    holds the one expiring at swin_size), so exactly one slot is replaced per
    frame once per-frame updates begin.
    """
    expire = swin_size if position == 0 else position
    return Lifespan(birth=0, start=0, expire=expire)


class ContainerWriter:
    """Sequential container writer; streams sections as training emits them.

    Without `finalize()` the file has no end marker and readers treat it as
    partial.
    """

    def __init__(self, path, manifest: Manifest):
        self.path = path
        self.manifest = manifest
        self._fh = open(path, "wb")
        self._fh.write(manifest.to_bytes())
        self._finalized = False
        self.sections_written = 0

    def write_slice(self, slice_bytes: bytes) -> None:
        if self._finalized:
            raise CodecError("container already finalized")
        crc = zlib.crc32(slice_bytes) & 0xFFFFFFFF
        self._fh.write(slice_bytes)
        self._fh.write(struct.pack("<I", crc))
        self.sections_written += 1

    def finalize(self) -> None:
        if not self._finalized:
            self._fh.write(END_MAGIC)
            self._finalized = True
            self._fh.flush()
            self._fh.close()

    def abort(self) -> None:
        if not self._finalized:
            self._fh.flush()
            self._fh.close()
            self._finalized = True

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            self.finalize()
        else:
            self.abort()
        return False


def write_container(manifest: Manifest, genesis_slices: Iterable[bytes],
                    slices: Iterable[bytes], path) -> None:
    """One-shot container write from pre-packed slice bytes."""
    with ContainerWriter(path, manifest) as w:
        for s in genesis_slices:
            w.write_slice(s)
        for s in slices:
            w.write_slice(s)


@dataclass
class _SectionRef:
    target_frame: int
    offset: int  # offset of the slice bytes (header) within the file
    length: int  # slice bytes length, CRC excluded


class ContainerReader:
    """Random and sequential access to a container file.

    One reader supports one sequential consumer; open independent readers for
    concurrent use.
    """

    def __init__(self, path):
        self.path = path
        self._fh = open(path, "rb")
        head = self._fh.read(_MANIFEST_SIZE)
        self.manifest = Manifest.from_bytes(head)
        self.params = self.manifest.stream_params()
        self.profile = self.manifest.profile
        self._sections: List[_SectionRef] = []
        self.complete = False
        self._scan()
        self._cursor = 0  # sequential slice cursor (post-genesis)

    def _scan(self) -> None:
        fh = self._fh
        record_size = self.profile.bytes_per_record
        while True:
            offset = fh.tell()
            head = fh.read(HEADER_SIZE)
            if len(head) == 0:
                break  # no end marker: partial container
            if head[:4] == END_MAGIC:
                self.complete = True
                break
            header = SliceHeader.from_bytes(head)
            length = HEADER_SIZE + header.kept_count * record_size
            self._sections.append(_SectionRef(header.target_frame, offset, length))
            fh.seek(offset + length + _CRC_SIZE)
        swin = self.manifest.swin_size
        if self.complete and len(self._sections) < swin:
            raise CodecError("container missing genesis slices")
        self._by_frame = {}
        for ref in self._sections[swin:]:
            self._by_frame[ref.target_frame] = ref

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        self.close()
        return False

    @property
    def num_sections(self) -> int:
        return len(self._sections)

    @property
    def slice_targets(self) -> List[int]:
        return [r.target_frame for r in self._sections[self.manifest.swin_size:]]

    def _read_section(self, ref: _SectionRef, verify: bool = True) -> bytes:
        self._fh.seek(ref.offset)
        data = self._fh.read(ref.length)
        if len(data) != ref.length:
            raise CodecError("truncated slice section")
        if verify:
            crc_raw = self._fh.read(_CRC_SIZE)
            if len(crc_raw) != _CRC_SIZE:
                raise CodecError("missing section checksum")
            (crc,) = struct.unpack("<I", crc_raw)
            if crc != (zlib.crc32(data) & 0xFFFFFFFF):
                raise CodecError(f"checksum failure in section at offset {ref.offset}")
        return data

    def genesis_bytes(self) -> List[bytes]:
        return [self._read_section(r) for r in self._sections[: self.manifest.swin_size]]

    def init_bytes(self) -> bytes:
        return b"".join(self.genesis_bytes())

    def read_init(self) -> List[DecodedSlice]:
        """The num_gs-record genesis block as swin_size slices, with the
        staggered lifespans restored from slot position."""
        out = []
        for pos, raw in enumerate(self.genesis_bytes()):
            dec = unpack_slice(raw, self.profile, self.params)
            dec.lifespan = genesis_lifespan(pos, self.manifest.swin_size)
            out.append(dec)
        return out

    def slice_bytes_by_frame(self, target_frame: int) -> bytes:
        ref = self._by_frame.get(target_frame)
        if ref is None:
            raise KeyError(target_frame)
        return self._read_section(ref)

    def read_slice(self) -> Optional[DecodedSlice]:
        """Next per-frame slice in emission order; None at end of stream."""
        idx = self.manifest.swin_size + self._cursor
        if idx >= len(self._sections):
            return None
        self._cursor += 1
        return unpack_slice(self._read_section(self._sections[idx]), self.profile, self.params)

    def iter_slices(self):
        while True:
            dec = self.read_slice()
            if dec is None:
                return
            yield dec

    def all_generations(self) -> List[DecodedSlice]:
        """Every generation in the container with its true lifespan, in
        emission order; the offline reference for playback equivalence."""
        gens = list(self.read_init())
        saved = self._cursor
        self._cursor = 0
        gens.extend(self.iter_slices())
        self._cursor = saved
        return gens


def read_container(path) -> ContainerReader:
    """Open a container for reading; the returned reader exposes the init
    block and slice-at-a-time sequential reads."""
    return ContainerReader(path)


@dataclass(frozen=True)
class BandwidthReport:
    """Steady-state streaming cost split into payload and framing."""

    payload_bytes_per_s: float
    header_bytes_per_s: float

    @property
    def total_bytes_per_s(self) -> float:
        return self.payload_bytes_per_s + self.header_bytes_per_s


def bandwidth(params: StreamParams) -> BandwidthReport:
    """Per-second streaming cost: fps x slice_size x bytes per record, with
    slice-header amortization reported separately."""
    payload = params.fps * params.slice_size * params.bytes_per_gaussian
    header = params.fps * HEADER_SIZE
    return BandwidthReport(payload_bytes_per_s=payload, header_bytes_per_s=header)
