"""Generate the shared golden fixtures the viewer tests consume.

Produces, under test/fixtures/:
  golden_manifest.json   manifest as served by /manifest
  golden_stream.bin      init block + every slice (the /stream body at q=1)
  golden_decode.json     native decoder output for every generation (full
                         f64 precision via repr round-trip)
  golden_camera.json     one camera pose
  golden_render.bin      native render of one frame from that camera (f64)
  golden_render.json     frame/size metadata for the render
  abr_slice.bin          one slice subsampled at q=0.5 plus its decode
"""

import json
import struct
import sys
import tempfile
from pathlib import Path

import numpy as np

HERE = Path(__file__).resolve().parent
FIXTURES = HERE.parent / "test" / "fixtures"

sys.path.insert(0, str(HERE.parent.parent / "src"))

from splatstream.codec import ContainerReader  # noqa: E402
from splatstream.player import render_offline  # noqa: E402
from splatstream.server import subsample_slice_bytes  # noqa: E402
from splatstream.synth import synth_scene  # noqa: E402
from splatstream.train import TrainConfig, train_video  # noqa: E402


def main() -> None:
    FIXTURES.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix="viewer_fixtures_"))
    scene, dataset = synth_scene(seed=21, total_frames=6, n_views=2, n_gaussians=60,
                                 out_dir=tmp / "ds", width=48, height=48)
    config = TrainConfig(swin_size=3, num_gs=90, genesis_iterations=250,
                         window_iterations=60, relocate_period=100, rng_seed=5,
                         profile_id=1, train_views=(0,))
    train_video(dataset, config, tmp / "golden.swin")

    with ContainerReader(tmp / "golden.swin") as reader:
        manifest = reader.manifest
        (FIXTURES / "golden_manifest.json").write_text(
            json.dumps(manifest.to_json_dict(), indent=1))

        stream = reader.init_bytes()
        for target in reader.slice_targets:
            stream += reader.slice_bytes_by_frame(target)
        (FIXTURES / "golden_stream.bin").write_bytes(stream)

        gens = reader.all_generations()
        decode_dump = []
        for g in gens:
            decode_dump.append({
                "target_frame": g.header.target_frame,
                "slice_index": g.header.slice_index,
                "kept_count": g.header.kept_count,
                "lifespan": [g.lifespan.birth, g.lifespan.start, g.lifespan.expire],
                "means": g.gaussians.means.reshape(-1).tolist(),
                "quats": g.gaussians.quats.reshape(-1).tolist(),
                "scales": g.gaussians.scales.reshape(-1).tolist(),
                "opacities": g.gaussians.opacities.tolist(),
                "colors": g.gaussians.colors.reshape(-1).tolist(),
                "valid": g.valid.astype(int).tolist(),
            })
        (FIXTURES / "golden_decode.json").write_text(json.dumps(decode_dump))

        cam = dataset.cameras[1]
        frame = 3
        (FIXTURES / "golden_camera.json").write_text(json.dumps({
            "width": cam.width, "height": cam.height,
            "fx": cam.fx, "fy": cam.fy, "cx": cam.cx, "cy": cam.cy,
            "world_to_camera": [float(v) for v in cam.world_to_camera.reshape(-1)],
        }))
        img = render_offline(gens, cam, frame)
        (FIXTURES / "golden_render.bin").write_bytes(img.pixels.astype("<f8").tobytes())
        (FIXTURES / "golden_render.json").write_text(json.dumps({
            "frame": frame, "width": cam.width, "height": cam.height,
        }))

        raw = reader.slice_bytes_by_frame(2)
        sub = subsample_slice_bytes(raw, 0.5, reader.profile)
        (FIXTURES / "abr_slice.bin").write_bytes(sub)
        kept = struct.unpack("<I", sub[9:13])[0]
        (FIXTURES / "abr_slice.json").write_text(json.dumps({
            "target_frame": 2, "q": 0.5, "kept_count": kept,
        }))

    print(f"fixtures written to {FIXTURES}")


if __name__ == "__main__":
    main()
