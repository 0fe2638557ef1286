"""Adaptive-bitrate walkthrough: serve a container and sweep the quality knob.

For each quality fraction q the server tail-drops the lowest-opacity records
per slice; this prints the resulting rate/distortion table (bytes per frame
vs PSNR against the synthetic ground truth).
"""

import tempfile
from pathlib import Path

import numpy as np
import requests

from splatstream.codec import ContainerReader, unpack_slice
from splatstream.player import render_offline
from splatstream.raster import psnr
from splatstream.server import ServeConfig, serve
from splatstream.synth import synth_scene
from splatstream.train import TrainConfig, train_video

root = Path(tempfile.mkdtemp(prefix="splatstream_abr_"))
scene, dataset = synth_scene(seed=7, total_frames=8, n_views=2, n_gaussians=100,
                             out_dir=root / "ds", width=48, height=48)
config = TrainConfig(swin_size=4, num_gs=160, genesis_iterations=500,
                     window_iterations=120, relocate_period=100, rng_seed=0,
                     profile_id=1)
train_video(dataset, config, root / "video.swin", show_progress=True)

server = serve(ServeConfig(container=str(root / "video.swin"), port=0))
print("serving at", server.url)
try:
    manifest = requests.get(server.url + "/manifest").json()
    with ContainerReader(root / "video.swin") as reader:
        genesis = reader.read_init()
        targets = [t for t in reader.slice_targets if t < manifest["total_frames"]]
        profile, params = reader.profile, reader.params

    print(f"{'q':>5} {'bytes/frame':>12} {'PSNR (dB)':>10}")
    for q in (1.0, 0.8, 0.6, 0.4, 0.2):
        gens = list(genesis)
        total = 0
        for t in targets:
            body = requests.get(f"{server.url}/slice/{t}", params={"q": q}).content
            total += len(body)
            gens.append(unpack_slice(body, profile, params))
        vals = [
            psnr(render_offline(gens, dataset.cameras[v], f), dataset.load(f, v))
            for f in range(1, manifest["total_frames"])
            for v in range(dataset.n_views)
        ]
        print(f"{q:>5.1f} {total // len(targets):>12,} {np.mean(vals):>10.2f}")
finally:
    server.shutdown()
