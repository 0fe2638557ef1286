"""Command-line entry point: synth, train, inspect, serve, play, bench.

Exit codes: 0 ok, 1 user error (bad flags, missing files), 2 internal error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import fields as dataclass_fields
from pathlib import Path

import numpy as np

from .core import SplatError

EXIT_OK = 0
EXIT_USER = 1
EXIT_INTERNAL = 2


class UserError(Exception):
    """Invalid usage or inputs; reported without a stack trace."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UserError(message)


def _build_parser() -> _Parser:
    p = _Parser(prog="splatstream", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("synth", help="write a deterministic synthetic dataset")
    sp.add_argument("--out", required=True, help="dataset directory")
    sp.add_argument("--seed", type=int, default=7)
    sp.add_argument("--frames", type=int, default=20)
    sp.add_argument("--views", type=int, default=4)
    sp.add_argument("--gaussians", type=int, default=300)
    sp.add_argument("--size", type=int, default=64, help="image width and height")

    tp = sub.add_parser("train", help="train a dataset into a stream container")
    tp.add_argument("--dataset", required=True)
    tp.add_argument("--out", required=True, help="container file path")
    tp.add_argument("--config", help="TOML/JSON config file mirroring TrainConfig")
    tp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                    help="override a single config field (repeatable)")
    tp.add_argument("--progress", action="store_true")

    ip = sub.add_parser("inspect", help="audit a container")
    ip.add_argument("--container", required=True)
    ip.add_argument("--fps", type=float, help="bandwidth at this fps (default: manifest)")
    ip.add_argument("--render-all", action="store_true",
                    help="render every frame offline from the archived generations")
    ip.add_argument("--camera-path", help="camera path JSON (required for --render-all)")
    ip.add_argument("--out-dir", help="PNG output directory for --render-all")
    ip.add_argument("--json", action="store_true", help="machine-readable output")

    vp = sub.add_parser("serve", help="serve a container over HTTP")
    vp.add_argument("--container", required=True)
    vp.add_argument("--addr", default="127.0.0.1:8080")
    vp.add_argument("--quality", type=float, default=1.0)

    pp = sub.add_parser("play", help="headless playback to a PNG sequence")
    src = pp.add_mutually_exclusive_group(required=True)
    src.add_argument("--file", help="container file")
    src.add_argument("--url", help="server base URL")
    pp.add_argument("--camera-path", required=True)
    pp.add_argument("--out-dir", help="PNG output directory")
    pp.add_argument("--fps", type=float, default=30.0)
    pp.add_argument("--quality", type=float, default=1.0)
    pp.add_argument("--stats", help="line-delimited JSON stats file ('-' for stderr)")

    bp = sub.add_parser("bench", help="render/encode/decode throughput report")
    bp.add_argument("--gaussians", type=int, default=1000)
    bp.add_argument("--size", type=int, default=64)
    bp.add_argument("--iters", type=int, default=20)
    return p


def _apply_overrides(cfg_kwargs: dict, overrides) -> dict:
    from .train import TrainConfig

    field_types = {f.name: f for f in dataclass_fields(TrainConfig)}
    for item in overrides:
        if "=" not in item:
            raise UserError(f"--set expects KEY=VALUE, got {item!r}")
        key, raw = item.split("=", 1)
        key = key.strip()
        if key not in field_types:
            raise UserError(f"unknown config field {key!r}")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw  # bare strings (e.g. optimizer=sgd)
        if key in ("scene_bounds", "train_views") and value is not None:
            value = tuple(value)
        cfg_kwargs[key] = value
    return cfg_kwargs


def _cmd_synth(args) -> int:
    from .synth import synth_scene

    synth_scene(args.seed, args.frames, args.views, args.gaussians, args.out,
                width=args.size, height=args.size)
    print(f"dataset written to {args.out} "
          f"({args.frames} frames x {args.views} views, seed {args.seed})")
    return EXIT_OK


def _cmd_train(args) -> int:
    from .dataset import FrameDataset
    from .train import TrainConfig, train_video

    if args.config:
        cfg = TrainConfig.from_file(args.config)
        kwargs = {f.name: getattr(cfg, f.name) for f in dataclass_fields(TrainConfig)}
    else:
        kwargs = {}
    kwargs = _apply_overrides(kwargs, args.set)
    config = TrainConfig(**kwargs)
    dataset = FrameDataset(args.dataset, max_cached_frames=config.max_cached_frames)
    result = train_video(dataset, config, args.out, show_progress=args.progress)
    per_frame = result.emitted[0].byte_length if result.emitted else 0
    print(f"container written to {result.container_path} "
          f"({len(result.emitted)} generations, genesis slice bytes {per_frame})")
    return EXIT_OK


def _cmd_inspect(args) -> int:
    from .codec import ContainerReader, bandwidth
    from .player import load_camera_path, render_offline
    from .raster import write_png

    with ContainerReader(args.container) as reader:
        m = reader.manifest
        params = m.stream_params()
        fps = args.fps if args.fps is not None else m.fps
        params_at_fps = type(params)(
            swin_size=params.swin_size, num_gs=params.num_gs, fps=fps,
            bytes_per_gaussian=params.bytes_per_gaussian, total_frames=params.total_frames,
        )
        bw = bandwidth(params_at_fps)
        from .codec import HEADER_SIZE

        per_frame_payload = m.slice_size * m.profile.bytes_per_record
        record_counts = {}
        for target in reader.slice_targets:
            record_counts[target] = len(reader.slice_bytes_by_frame(target))
        info = {
            "manifest": m.to_json_dict(),
            "complete": reader.complete,
            "sections": reader.num_sections,
            "genesis_records": m.num_gs,
            "per_frame_slices": len(reader.slice_targets),
            "per_frame_payload_bytes": per_frame_payload,
            "per_frame_section_bytes": per_frame_payload + HEADER_SIZE,
            "bandwidth_payload_Bps": bw.payload_bytes_per_s,
            "bandwidth_header_Bps": bw.header_bytes_per_s,
            "uniform_slice_bytes": len(set(record_counts.values())) <= 1,
        }
        if args.json:
            print(json.dumps(info, indent=1))
        else:
            print(f"container {args.container} (complete: {reader.complete})")
            print(f"  num_gs={m.num_gs} swin_size={m.swin_size} slice_size={m.slice_size} "
                  f"profile={m.profile_id} total_frames={m.total_frames}")
            print(f"  sections: {reader.num_sections} "
                  f"(genesis {m.swin_size} + {len(reader.slice_targets)} slices)")
            print(f"  per-frame payload: {per_frame_payload} B + {HEADER_SIZE} B header")
            print(f"  bandwidth @ {fps} fps: {bw.payload_bytes_per_s:,.0f} B/s payload "
                  f"+ {bw.header_bytes_per_s:,.0f} B/s headers")
            uniform = "yes" if info["uniform_slice_bytes"] else "NO"
            print(f"  uniform per-frame slice bytes: {uniform}")

        if args.render_all:
            if not args.camera_path or not args.out_dir:
                raise UserError("--render-all needs --camera-path and --out-dir")
            cams = load_camera_path(args.camera_path)
            gens = reader.all_generations()
            out = Path(args.out_dir)
            out.mkdir(parents=True, exist_ok=True)
            for frame in range(m.total_frames):
                cam = cams[min(frame, len(cams) - 1)]
                write_png(render_offline(gens, cam, frame), out / f"frame{frame:05d}.png")
            print(f"  {m.total_frames} offline frames rendered to {out}")
    return EXIT_OK


def _cmd_serve(args) -> int:
    from .server import ServeConfig, serve

    host, _, port = args.addr.rpartition(":")
    if not host or not port.isdigit():
        raise UserError(f"--addr must be HOST:PORT, got {args.addr!r}")
    server = serve(ServeConfig(
        container=args.container, host=host, port=int(port),
        default_quality=args.quality,
    ))
    print(f"serving {args.container} at {server.url} "
          f"(endpoints: /manifest /init /slice/{{frame}} /stream)")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.shutdown()
    return EXIT_OK


def _cmd_play(args) -> int:
    from .player import FileSource, HttpSource, load_camera_path, start_player

    cams = load_camera_path(args.camera_path)
    if args.file:
        source = FileSource(args.file)
    else:
        source = HttpSource(args.url, quality=args.quality)

    sink = None
    close = None
    if args.stats == "-":
        sink = lambda d: print(json.dumps(d), file=sys.stderr)  # noqa: E731
    elif args.stats:
        fh = open(args.stats, "w", encoding="utf-8")
        close = fh.close
        sink = lambda d: fh.write(json.dumps(d) + "\n")  # noqa: E731
    try:
        stats = start_player(source, cams, args.fps, out_dir=args.out_dir,
                             stats_sink=sink)
    finally:
        if close:
            close()
    print(f"played {stats.frames_rendered} frames, {stats.stalls} stalls, "
          f"{stats.bytes_ingested:,} bytes ingested")
    return EXIT_OK


def _cmd_bench(args) -> int:
    from .codec import PROFILE_QUANT, decode_records, encode_records
    from .core import Camera, GaussianArrays
    from .raster import render_arrays, render_arrays_backward

    rng = np.random.default_rng(0)
    n = args.gaussians
    size = args.size
    cam = Camera(size, size, size * 1.1, size * 1.1, size / 2, size / 2,
                 np.eye(3), np.array([0.0, 0.0, 3.0]))
    quats = rng.normal(size=(n, 4))
    quats /= np.linalg.norm(quats, axis=1, keepdims=True)
    arrays = GaussianArrays(
        rng.uniform(-1, 1, (n, 3)), quats,
        np.exp(rng.uniform(np.log(0.02), np.log(0.1), (n, 3))),
        rng.uniform(0.2, 0.9, n), rng.uniform(0, 1, (n, 3)),
    )
    render_arrays(cam, arrays)  # warm the jit
    t0 = time.perf_counter()
    for _ in range(args.iters):
        img = render_arrays(cam, arrays)
    fwd = (time.perf_counter() - t0) / args.iters
    grad = np.ones((size, size, 3))
    render_arrays_backward(cam, arrays, grad)
    t0 = time.perf_counter()
    for _ in range(args.iters):
        render_arrays_backward(cam, arrays, grad)
    bwd = (time.perf_counter() - t0) / args.iters
    t0 = time.perf_counter()
    for _ in range(args.iters):
        blob = encode_records(arrays, PROFILE_QUANT)
    enc = (time.perf_counter() - t0) / args.iters
    t0 = time.perf_counter()
    for _ in range(args.iters):
        decode_records(blob, PROFILE_QUANT)
    dec = (time.perf_counter() - t0) / args.iters
    print(f"bench: {n} splats at {size}x{size} ({args.iters} iters)")
    print(f"  render forward : {fwd * 1e3:8.2f} ms/frame ({1 / fwd:6.1f} fps)")
    print(f"  render backward: {bwd * 1e3:8.2f} ms/frame")
    print(f"  encode (quant) : {enc * 1e6:8.1f} us ({n / enc / 1e6:6.1f} M rec/s)")
    print(f"  decode (quant) : {dec * 1e6:8.1f} us ({n / dec / 1e6:6.1f} M rec/s)")
    return EXIT_OK


_COMMANDS = {
    "synth": _cmd_synth,
    "train": _cmd_train,
    "inspect": _cmd_inspect,
    "serve": _cmd_serve,
    "play": _cmd_play,
    "bench": _cmd_bench,
}


def run(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except UserError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER
    except (FileNotFoundError, PermissionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER
    except SplatError as exc:  # bad inputs (malformed containers, configs, ...)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER
    except KeyboardInterrupt:
        return EXIT_USER
    except Exception as exc:  # internal: keep the trace for bug reports
        import traceback

        traceback.print_exc()
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
