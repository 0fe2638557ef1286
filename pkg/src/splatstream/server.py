"""HTTP streaming service over a container file with server-side tail-drop
subsampling: a quality fraction q keeps the ceil(q * slice_size)
highest-opacity records of each slice and the decoder pads the rest.

The container on disk is never rewritten; subsampling happens per request,
optionally cached per quality tier.  Responses are deterministic (fixed
opacity tie-break), so they are cacheable.
"""

from __future__ import annotations

import json
import math
import threading
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Optional, Tuple
from urllib.parse import parse_qs, urlparse

import numpy as np

from .codec import HEADER_SIZE, ContainerReader, SliceHeader
from .core import GaussianArrays, InvalidParameterError


@dataclass
class ServeConfig:
    container: str
    host: str = "127.0.0.1"
    port: int = 8080
    default_quality: float = 1.0
    cache_subsampled: bool = True

    def __post_init__(self):
        if not (0.0 < self.default_quality <= 1.0):
            raise InvalidParameterError("default quality must be in (0, 1]")


def abr_keep_indices(opacities: np.ndarray, fraction: float) -> np.ndarray:
    """Indices (ascending, so wire order is preserved) of the
    ceil(fraction * n) highest-opacity records; opacity ties keep the lower
    index."""
    if not (0.0 < fraction <= 1.0):
        raise InvalidParameterError(f"fraction {fraction} outside (0, 1]")
    n = len(opacities)
    kept_n = int(math.ceil(fraction * n))
    if kept_n >= n:
        return np.arange(n)
    ranked = np.argsort(-np.asarray(opacities, dtype=np.float64), kind="stable")
    return np.sort(ranked[:kept_n])


def abr_subsample(records: GaussianArrays, fraction: float) -> Tuple[GaussianArrays, int]:
    """Tail-drop a decoded slice; returns (kept records, kept_count)."""
    keep = abr_keep_indices(records.opacities, fraction)
    return records.take(keep), len(keep)


def subsample_slice_bytes(slice_bytes: bytes, fraction: float, profile) -> bytes:
    """Tail-drop at the wire level: select original record bytes so the kept
    records are bit-identical to the full-quality slice."""
    header = SliceHeader.from_bytes(slice_bytes)
    payload = slice_bytes[HEADER_SIZE:]
    rec = np.frombuffer(payload, dtype=profile.dtype)
    if len(rec) != header.kept_count:
        raise InvalidParameterError("slice payload does not match its header")
    if fraction >= 1.0:
        return slice_bytes
    if profile.profile_id == 0:
        opac = rec["opacity"].astype(np.float64)
    else:
        opac = rec["opacity"].astype(np.float64) / 255.0
    keep = abr_keep_indices(opac, fraction)
    new_header = SliceHeader(
        target_frame=header.target_frame,
        slice_index=header.slice_index,
        kept_count=len(keep),
    )
    return new_header.to_bytes() + rec[keep].tobytes()


class StreamServer:
    """Read-only HTTP front end over one container."""

    def __init__(self, config: ServeConfig):
        self.config = config
        self.reader = ContainerReader(config.container)
        self.partial = not self.reader.complete
        self._cache: dict = {}
        self._cache_lock = threading.Lock()
        self._lock = threading.Lock()  # serializes reads on the shared handle
        self._httpd: Optional[ThreadingHTTPServer] = None
        self._thread: Optional[threading.Thread] = None

    # -- data plane -----------------------------------------------------

    def manifest_json(self) -> bytes:
        return json.dumps(self.reader.manifest.to_json_dict()).encode("utf-8")

    def init_payload(self) -> bytes:
        with self._lock:
            return self.reader.init_bytes()

    def slice_payload(self, frame: int, q: float) -> Optional[bytes]:
        key = (frame, round(q, 6))
        if self.config.cache_subsampled:
            with self._cache_lock:
                hit = self._cache.get(key)
            if hit is not None:
                return hit
        try:
            with self._lock:
                raw = self.reader.slice_bytes_by_frame(frame)
        except KeyError:
            return None
        out = subsample_slice_bytes(raw, q, self.reader.profile)
        if self.config.cache_subsampled:
            with self._cache_lock:
                self._cache[key] = out  # atomic publish: absent or complete
        return out

    def stream_chunks(self, q: float):
        yield self.init_payload()
        for frame in self.reader.slice_targets:
            yield self.slice_payload(frame, q)

    # -- lifecycle ------------------------------------------------------

    def start(self) -> None:
        server = self

        class Handler(BaseHTTPRequestHandler):
            protocol_version = "HTTP/1.1"

            def log_message(self, fmt, *args):  # quiet by default
                pass

            def _headers(self, code, ctype, length=None, extra=None):
                self.send_response(code)
                self.send_header("Content-Type", ctype)
                self.send_header("Access-Control-Allow-Origin", "*")
                if length is not None:
                    self.send_header("Content-Length", str(length))
                for k, v in (extra or {}).items():
                    self.send_header(k, v)
                self.end_headers()

            def _error(self, code, message):
                body = json.dumps({"error": message}).encode("utf-8")
                self._headers(code, "application/json", len(body))
                self.wfile.write(body)

            def _parse_q(self, qs) -> Optional[float]:
                vals = qs.get("q")
                if not vals:
                    return server.config.default_quality
                try:
                    q = float(vals[0])
                except ValueError:
                    return None
                if not (0.0 < q <= 1.0):
                    return None
                return q

            def do_GET(self):  # noqa: N802 (http.server API)
                url = urlparse(self.path)
                qs = parse_qs(url.query)
                parts = [p for p in url.path.split("/") if p]

                if server.partial:
                    self._error(503, "container is partial (no end marker)")
                    return

                if parts == ["manifest"]:
                    body = server.manifest_json()
                    self._headers(200, "application/json", len(body))
                    self.wfile.write(body)
                    return

                if parts == ["init"]:
                    body = server.init_payload()
                    self._headers(200, "application/octet-stream", len(body))
                    self.wfile.write(body)
                    return

                if len(parts) == 2 and parts[0] == "slice":
                    try:
                        frame = int(parts[1])
                    except ValueError:
                        self._error(400, "frame index must be an integer")
                        return
                    q = self._parse_q(qs)
                    if q is None:
                        self._error(400, "q must be a float in (0, 1]")
                        return
                    body = server.slice_payload(frame, q)
                    if body is None:
                        self._error(404, f"no slice for frame {frame}")
                        return
                    rng = self.headers.get("Range")
                    if rng:
                        span = _parse_range(rng, len(body))
                        if span is None:
                            self._error(416, "unsatisfiable range")
                            return
                        lo, hi = span
                        part = body[lo:hi + 1]
                        self._headers(
                            206, "application/octet-stream", len(part),
                            {"Content-Range": f"bytes {lo}-{hi}/{len(body)}"},
                        )
                        self.wfile.write(part)
                        return
                    self._headers(200, "application/octet-stream", len(body))
                    self.wfile.write(body)
                    return

                if parts == ["stream"]:
                    q = self._parse_q(qs)
                    if q is None:
                        self._error(400, "q must be a float in (0, 1]")
                        return
                    self.send_response(200)
                    self.send_header("Content-Type", "application/octet-stream")
                    self.send_header("Access-Control-Allow-Origin", "*")
                    self.send_header("Transfer-Encoding", "chunked")
                    self.end_headers()
                    for chunk in server.stream_chunks(q):
                        self.wfile.write(f"{len(chunk):x}\r\n".encode("ascii"))
                        self.wfile.write(chunk)
                        self.wfile.write(b"\r\n")
                    self.wfile.write(b"0\r\n\r\n")
                    return

                self._error(404, f"unknown path {url.path}")

        self._httpd = ThreadingHTTPServer((self.config.host, self.config.port), Handler)
        self._httpd.daemon_threads = True
        self._thread = threading.Thread(
            target=self._httpd.serve_forever, name="stream-server", daemon=True
        )
        self._thread.start()

    @property
    def port(self) -> int:
        return self._httpd.server_address[1]

    @property
    def url(self) -> str:
        return f"http://{self.config.host}:{self.port}"

    def shutdown(self) -> None:
        if self._httpd is not None:
            self._httpd.shutdown()
            self._httpd.server_close()
        self.reader.close()

    def serve_forever(self) -> None:
        self._thread.join()


def _parse_range(value: str, length: int) -> Optional[Tuple[int, int]]:
    if not value.startswith("bytes="):
        return None
    spec = value[len("bytes="):].split(",")[0].strip()
    if "-" not in spec:
        return None
    lo_s, hi_s = spec.split("-", 1)
    try:
        if lo_s == "":
            n = int(hi_s)
            if n <= 0:
                return None
            lo, hi = max(0, length - n), length - 1
        else:
            lo = int(lo_s)
            hi = int(hi_s) if hi_s else length - 1
    except ValueError:
        return None
    if lo > hi or lo >= length:
        return None
    return lo, min(hi, length - 1)


def serve(config: ServeConfig) -> StreamServer:
    """Open the container and start serving; returns the running server."""
    server = StreamServer(config)
    server.start()
    return server
