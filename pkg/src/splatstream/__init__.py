"""Sliding-window Gaussian-splat video toolkit.

Trains, packages, serves, and plays arbitrarily long splat video streams:
a CPU differentiable rasterizer, a sliding-window continuous trainer, a
fixed-record binary slice codec, an HTTP streaming server with tail-drop
subsampling, and a headless slice-update player.
"""

from .codec import (
    ContainerReader,
    ContainerWriter,
    Manifest,
    PROFILE_FULL,
    PROFILE_QUANT,
    bandwidth,
    decode_records,
    encode_records,
    pack_slice,
    read_container,
    unpack_slice,
)
from .core import (
    Camera,
    Gaussian,
    GaussianArrays,
    InvalidParameterError,
    Lifespan,
    SplatError,
    StateError,
    StreamParams,
    covariance,
    intensity,
    is_active,
    slice_slot,
)
from .dataset import FrameDataset, load_frame
from .loss import loss
from .player import FileSource, HttpSource, PlayerBuffer, render_offline, start_player
from .raster import Image, Splat2D, project, psnr, read_png, render, render_backward, write_png
from .server import ServeConfig, abr_subsample, serve
from .synth import synth_scene
from .train import TrainConfig, train_video

__all__ = [
    "Camera",
    "ContainerReader",
    "ContainerWriter",
    "FileSource",
    "FrameDataset",
    "Gaussian",
    "GaussianArrays",
    "HttpSource",
    "Image",
    "InvalidParameterError",
    "Lifespan",
    "Manifest",
    "PROFILE_FULL",
    "PROFILE_QUANT",
    "PlayerBuffer",
    "ServeConfig",
    "Splat2D",
    "SplatError",
    "StateError",
    "StreamParams",
    "TrainConfig",
    "abr_subsample",
    "bandwidth",
    "covariance",
    "decode_records",
    "encode_records",
    "intensity",
    "is_active",
    "load_frame",
    "loss",
    "pack_slice",
    "project",
    "psnr",
    "read_container",
    "read_png",
    "render",
    "render_backward",
    "render_offline",
    "serve",
    "slice_slot",
    "start_player",
    "synth_scene",
    "train_video",
    "unpack_slice",
    "write_png",
]

__version__ = "0.1.0"
