"""Sliding-window continuous training.

An outer loop slides a window of `swin_size` frames across the video; the
inner loop optimizes the window's splats with Adam plus covariance-shaped
Langevin noise and periodic dead-splat relocation.  Each time the window
advances, the generation whose lifespan begins before the window is frozen,
encoded to the stream, archived for rendering, and its slot reborn for
future frames.  Peak resident state (splats + cached frames) is independent
of video length.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np
from scipy.spatial import cKDTree

from .codec import ContainerWriter, Manifest, PROFILES, pack_slice
from .core import (
    GaussianArrays,
    InvalidParameterError,
    Lifespan,
    SCALE_FLOOR,
    StateError,
    quat_to_rotmat,
)
from .dataset import FrameDataset, load_frame
from .loss import loss as loss_fn
from .raster import render_arrays, render_arrays_backward

log = logging.getLogger(__name__)

PARAM_GROUPS = ("mean", "quat", "log_scale", "opacity_logit", "color")


@dataclass
class TrainConfig:
    swin_size: int = 5
    num_gs: int = 500
    genesis_iterations: int = 30000
    window_iterations: int = 2000
    relocate_period: int = 100
    noise_lr: float = 5e4
    scale_reg: float = 1e-2
    opacity_reg: float = 2e-2
    ssim_weight: float = 0.2
    lr_mean: float = 1.6e-4
    lr_quat: float = 1e-3
    lr_log_scale: float = 5e-3
    lr_opacity_logit: float = 5e-2
    lr_color: float = 2.5e-3
    gradient_scale_decay: float = 0.5
    gradient_scaling: bool = True
    dead_opacity_threshold: float = 0.005
    noise_gate_sharpness: float = 100.0
    noise_gate_center: float = 0.005
    max_cached_frames: int = 16
    rng_seed: int = 0
    profile_id: int = 0
    fps: float = 30.0
    scene_bounds: tuple = (-1.0, -1.0, -1.0, 1.0, 1.0, 1.0)
    train_views: Optional[tuple] = None  # None = all views
    init_points: Optional[str] = None  # x y z r g b rows; overrides random init
    init_opacity: float = 0.1
    warm_start_rebirth: bool = True
    optimizer: str = "adam"  # "sgd" available for gradient-scale ablations
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-15

    def __post_init__(self):
        for name in ("swin_size", "num_gs", "genesis_iterations", "window_iterations",
                     "relocate_period"):
            if getattr(self, name) <= 0:
                raise InvalidParameterError(f"{name} must be positive")
        if self.num_gs % self.swin_size != 0:
            raise InvalidParameterError("num_gs must be divisible by swin_size")
        if not (0.0 < self.dead_opacity_threshold < 1.0):
            raise InvalidParameterError("dead_opacity_threshold must be in (0, 1)")
        if not (0.0 <= self.ssim_weight < 1.0):
            raise InvalidParameterError("ssim_weight must be in [0, 1)")
        if self.optimizer not in ("adam", "sgd"):
            raise InvalidParameterError(f"unknown optimizer {self.optimizer!r}")
        if self.profile_id not in PROFILES:
            raise InvalidParameterError(f"unknown profile {self.profile_id}")

    @property
    def slice_size(self) -> int:
        return self.num_gs // self.swin_size

    def group_lr(self, group: str) -> float:
        return {
            "mean": self.lr_mean,
            "quat": self.lr_quat,
            "log_scale": self.lr_log_scale,
            "opacity_logit": self.lr_opacity_logit,
            "color": self.lr_color,
        }[group]

    @classmethod
    def from_file(cls, path) -> "TrainConfig":
        """Load a TOML or JSON key-value file mirroring the field names."""
        path = Path(path)
        text = path.read_text(encoding="utf-8")
        if path.suffix.lower() == ".json":
            data = json.loads(text)
        else:
            try:
                import tomllib  # py311+
            except ModuleNotFoundError:
                import tomli as tomllib
            data = tomllib.loads(text)
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise InvalidParameterError(f"unknown config keys: {sorted(unknown)}")
        for key in ("scene_bounds", "train_views"):
            if key in data and data[key] is not None:
                data[key] = tuple(data[key])
        return cls(**data)


def _logit(p):
    p = np.clip(p, 1e-9, 1.0 - 1e-9)
    return np.log(p / (1.0 - p))


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


@dataclass
class SliceGen:
    """One optimizable slice generation: parameters in optimization space."""

    slot: int
    lifespan: Lifespan
    params: dict
    windows_trained: int = 0
    adam_m: dict = field(default_factory=dict)
    adam_v: dict = field(default_factory=dict)
    adam_t: int = 0

    def __post_init__(self):
        if not self.adam_m:
            self.adam_m = {k: np.zeros_like(v) for k, v in self.params.items()}
            self.adam_v = {k: np.zeros_like(v) for k, v in self.params.items()}

    def arrays(self) -> GaussianArrays:
        """Direct-space view (scales/opacities mapped out of log/logit space)."""
        p = self.params
        return GaussianArrays(
            p["mean"], p["quat"], np.exp(p["log_scale"]),
            _sigmoid(p["opacity_logit"]), p["color"],
        )

    def reset_rows(self, rows) -> None:
        for k in PARAM_GROUPS:
            self.adam_m[k][rows] = 0.0
            self.adam_v[k][rows] = 0.0


@dataclass
class MaturedGen:
    """A frozen generation: immutable snapshot used for rendering and audit."""

    arrays: GaussianArrays
    lifespan: Lifespan
    slot: int


@dataclass
class TrainState:
    config: TrainConfig
    slices: List[SliceGen]
    matured: List[MaturedGen] = field(default_factory=list)
    rng: np.random.Generator = None
    schedule_done: bool = False
    genesis_done: bool = False

    def matured_gaussian_count(self) -> int:
        return sum(len(m.arrays) for m in self.matured)


def _load_point_file(path, num_gs: int, rng: np.random.Generator):
    pts = np.loadtxt(path, dtype=np.float64, ndmin=2)
    if pts.shape[1] < 6:
        raise InvalidParameterError(f"point file {path} needs x y z r g b columns")
    if len(pts) >= num_gs:
        pts = pts[:num_gs]
    else:
        extra = pts[rng.integers(0, len(pts), size=num_gs - len(pts))]
        pts = np.concatenate([pts, extra])
    xyz = pts[:, :3]
    rgb = pts[:, 3:6]
    if rgb.max() > 1.0:
        rgb = rgb / 255.0
    return xyz, np.clip(rgb, 0.0, 1.0)


def init_state(config: TrainConfig) -> TrainState:
    """Genesis model: every slice alive on frames [0, swin_size)."""
    rng = np.random.default_rng(config.rng_seed)
    if config.init_points:
        xyz, rgb = _load_point_file(config.init_points, config.num_gs, rng)
    else:
        lo = np.asarray(config.scene_bounds[:3], dtype=np.float64)
        hi = np.asarray(config.scene_bounds[3:], dtype=np.float64)
        xyz = rng.uniform(lo, hi, size=(config.num_gs, 3))
        rgb = rng.uniform(0.0, 1.0, size=(config.num_gs, 3))
    # Isotropic scale from the nearest-neighbor distance of the init points.
    if len(xyz) > 1:
        dist, _ = cKDTree(xyz).query(xyz, k=2)
        nn = np.maximum(dist[:, 1], SCALE_FLOOR * 10)
    else:
        nn = np.full(len(xyz), 0.1)
    sl = config.slice_size
    slices = []
    for i in range(config.swin_size):
        rows = slice(i * sl, (i + 1) * sl)
        params = {
            "mean": xyz[rows].copy(),
            "quat": np.tile([1.0, 0.0, 0.0, 0.0], (sl, 1)),
            "log_scale": np.log(np.repeat(nn[rows][:, None], 3, axis=1)),
            "opacity_logit": np.full(sl, float(_logit(config.init_opacity))),
            "color": rgb[rows].copy(),
        }
        slices.append(SliceGen(slot=i, lifespan=Lifespan(0, 0, config.swin_size), params=params))
    return TrainState(config=config, slices=slices, rng=rng)


def gradient_scale(windows_trained: int, gamma: float) -> float:
    """Multiplier on position gradients for a slice trained `windows_trained`
    windows; newer splats move freely, older ones are damped."""
    if windows_trained < 0:
        raise InvalidParameterError("windows_trained must be >= 0")
    return gamma ** windows_trained


def sgld_perturb(active: List[SliceGen], current_mean_lr: float, noise_lr: float,
                 rng: np.random.Generator,
                 gate_center: float = 0.005, gate_sharpness: float = 100.0) -> None:
    """Covariance-shaped Langevin noise on the positions of optimizable splats.

    Each position receives noise_lr * lr * g(alpha) * L @ eta with eta ~ N(0, I)
    and L a matrix square root of the splat's covariance; the logistic gate
    g(alpha) switches noise off for opaque splats so only near-dead ones roam.
    """
    for gen in active:
        p = gen.params
        n = len(p["mean"])
        eta = rng.standard_normal((n, 3))
        alpha = _sigmoid(p["opacity_logit"])
        gate = _sigmoid(-gate_sharpness * (alpha - gate_center))
        rot = quat_to_rotmat(p["quat"])
        lmat = rot * np.exp(p["log_scale"])[:, None, :]  # L = R diag(s)
        step = np.einsum("nij,nj->ni", lmat, eta)
        p["mean"] += (noise_lr * current_mean_lr) * gate[:, None] * step


def relocate(active: List[SliceGen], threshold: float, rng: np.random.Generator) -> int:
    """Move dead splats (alpha < threshold) onto alive ones sampled by opacity.

    A target hit by N clones shares its geometry with them; all N+1 get
    opacity 1-(1-o)^(1/(N+1)) so stacked transmittance at the target is
    preserved, and clones get the target's scale shrunk by sqrt(N+1).  Splat
    count, slice membership, and lifespans never change.  Returns the number
    of relocated splats.
    """
    if not active:
        return 0
    counts = [len(g.params["mean"]) for g in active]
    offsets = np.cumsum([0] + counts)
    alpha = np.concatenate([_sigmoid(g.params["opacity_logit"]) for g in active])
    dead = np.nonzero(alpha < threshold)[0]
    if len(dead) == 0:
        return 0
    alive = np.nonzero(alpha >= threshold)[0]
    if len(alive) == 0:
        log.warning("relocation skipped: no alive splats above threshold %.4g", threshold)
        return 0

    def locate(flat_idx):
        gi = int(np.searchsorted(offsets, flat_idx, side="right") - 1)
        return gi, int(flat_idx - offsets[gi])

    probs = alpha[alive] / alpha[alive].sum()
    targets = alive[rng.choice(len(alive), size=len(dead), p=probs)]
    by_target: dict = {}
    for d, t in zip(dead, targets):
        by_target.setdefault(int(t), []).append(int(d))

    for t, clones in by_target.items():
        n_clones = len(clones)
        tg, tr = locate(t)
        tp = active[tg].params
        o_target = float(_sigmoid(tp["opacity_logit"][tr]))
        o_new = 1.0 - (1.0 - o_target) ** (1.0 / (n_clones + 1))
        new_logit = float(_logit(o_new))
        tp["opacity_logit"][tr] = new_logit
        clone_ls = tp["log_scale"][tr] - 0.5 * math.log(n_clones + 1)
        for d in clones:
            dg, drow = locate(d)
            dp = active[dg].params
            dp["mean"][drow] = tp["mean"][tr]
            dp["quat"][drow] = tp["quat"][tr]
            dp["log_scale"][drow] = clone_ls
            dp["opacity_logit"][drow] = new_logit
            dp["color"][drow] = tp["color"][tr]
            active[dg].reset_rows([drow])
        active[tg].reset_rows([tr])
    return len(dead)


def _optimizer_step(gen: SliceGen, grads: dict, config: TrainConfig) -> None:
    if config.optimizer == "sgd":
        for k in PARAM_GROUPS:
            gen.params[k] -= config.group_lr(k) * grads[k]
    else:
        gen.adam_t += 1
        b1, b2, eps = config.adam_beta1, config.adam_beta2, config.adam_eps
        bc1 = 1.0 - b1 ** gen.adam_t
        bc2 = 1.0 - b2 ** gen.adam_t
        for k in PARAM_GROUPS:
            g = grads[k]
            m = gen.adam_m[k]
            v = gen.adam_v[k]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            step = (m / bc1) / (np.sqrt(v / bc2) + eps)
            gen.params[k] -= config.group_lr(k) * step
    # Projections back onto the valid set.
    q = gen.params["quat"]
    q /= np.maximum(np.linalg.norm(q, axis=1, keepdims=True), 1e-12)
    np.clip(gen.params["color"], 0.0, 1.0, out=gen.params["color"])
    np.maximum(gen.params["log_scale"], math.log(SCALE_FLOOR), out=gen.params["log_scale"])


def _active_sets(state: TrainState, frame: int):
    opt = [g for g in state.slices if g.lifespan.start <= frame < g.lifespan.expire]
    mat = [m for m in state.matured if m.lifespan.start <= frame < m.lifespan.expire]
    return opt, mat


def train_swin(st: int, ed: int, state: TrainState, dataset: FrameDataset,
               iterations: Optional[int] = None, progress=None) -> None:
    """Inner optimization over frames [st, min(ed, total_frames)).

    `iterations` overrides the configured count; zero iterations leave the
    state untouched.
    """
    config = state.config
    frame_hi = min(ed, dataset.total_frames)
    if frame_hi <= st:
        raise InvalidParameterError(f"empty window [{st}, {frame_hi})")
    if iterations is None:
        iters = config.genesis_iterations if st == 0 else config.window_iterations
    else:
        iters = iterations
    if iters == 0:
        return
    views = list(config.train_views) if config.train_views is not None \
        else list(range(dataset.n_views))
    rng = state.rng

    for it in range(iters):
        frame = int(rng.integers(st, frame_hi))
        view = views[int(rng.integers(0, len(views)))]
        gt = load_frame(dataset, frame, view)
        camera = dataset.cameras[view]

        opt, mat = _active_sets(state, frame)
        opt_arrays = [g.arrays() for g in opt]
        parts = opt_arrays + [m.arrays for m in mat]
        active = GaussianArrays.concat(parts)
        n_opt = sum(len(a) for a in opt_arrays)
        trainable = np.zeros(len(active), dtype=bool)
        trainable[:n_opt] = True

        pred = render_arrays(camera, active)
        opt_concat = active.take(np.arange(n_opt))
        _, grad_img, reg = loss_fn(
            pred, gt, opt_concat,
            ssim_weight=config.ssim_weight,
            opacity_reg=config.opacity_reg,
            scale_reg=config.scale_reg,
        )
        grads = render_arrays_backward(camera, active, grad_img, trainable=trainable)
        grads["opacity_logit"][:n_opt] += reg["opacity_logit"]
        grads["log_scale"][:n_opt] += reg["log_scale"]

        pos = 0
        for gen, arr in zip(opt, opt_arrays):
            n = len(arr)
            gen_grads = {k: grads[k][pos:pos + n] for k in PARAM_GROUPS}
            if config.gradient_scaling:
                gen_grads["mean"] = gen_grads["mean"] * gradient_scale(
                    gen.windows_trained, config.gradient_scale_decay
                )
            _optimizer_step(gen, gen_grads, config)
            pos += n

        sgld_perturb(
            opt, config.lr_mean, config.noise_lr, rng,
            gate_center=config.noise_gate_center,
            gate_sharpness=config.noise_gate_sharpness,
        )
        if it % config.relocate_period == 0:
            relocate(opt, config.dead_opacity_threshold, rng)
        if progress is not None:
            progress.update(1)

    for gen in state.slices:
        gen.windows_trained += 1
    if st == 0:
        state.genesis_done = True


def schedule_expire(state: TrainState) -> None:
    """Stagger the genesis lifespans so one slice matures per frame.

    Slice i keeps start 0 and gets expire i+1; its stream slot is
    expire mod swin_size, which the rebirth arithmetic preserves forever.
    """
    if state.schedule_done:
        raise StateError("schedule_expire already applied")
    if not state.genesis_done:
        raise StateError("schedule_expire must follow genesis training")
    swin = state.config.swin_size
    for i, gen in enumerate(state.slices):
        expire = i + 1
        gen.lifespan = Lifespan(birth=0, start=0, expire=expire)
        gen.slot = expire % swin
    state.schedule_done = True


@dataclass
class EmittedSlice:
    """Audit record of one frozen generation as it went onto the wire."""

    target_frame: int
    slot: int
    byte_length: int


def mature(st: int, state: TrainState, writer: Optional[ContainerWriter],
           flush_all: bool = False, emitted: Optional[List[EmittedSlice]] = None,
           keep_archive: Optional[list] = None) -> int:
    """Freeze generations whose lifespan starts before `st`.

    Frozen parameters are encoded to the stream, appended to the bounded
    matured archive, and the slot is reborn at the old expire frame.  Writes
    are ordered by (birth, slot) so the genesis block lands in slot order.
    Returns the number of generations written.
    """
    config = state.config
    if flush_all:
        to_freeze = list(state.slices)
    else:
        to_freeze = [g for g in state.slices if g.lifespan.start < st]
    to_freeze.sort(key=lambda g: (g.lifespan.birth, g.slot))

    for gen in to_freeze:
        # Deep copy: warm-started rebirth keeps optimizing the same buffers,
        # and the frozen snapshot must never follow them.
        arrays = gen.arrays().copy()
        blob = pack_slice(arrays, gen.lifespan, PROFILES[config.profile_id],
                          swin_size=config.swin_size)
        if writer is not None:
            writer.write_slice(blob)
        if emitted is not None:
            emitted.append(EmittedSlice(gen.lifespan.birth, gen.slot, len(blob)))
        frozen = MaturedGen(arrays=arrays, lifespan=gen.lifespan, slot=gen.slot)
        if keep_archive is not None:
            keep_archive.append(frozen)
        state.matured.append(frozen)
        while state.matured_gaussian_count() > config.num_gs:
            state.matured.pop(0)

        # Rebirth: the slot's next generation starts where the old one expired.
        old = gen.lifespan
        gen.lifespan = Lifespan(birth=old.expire, start=old.expire,
                                expire=old.expire + config.swin_size)
        gen.windows_trained = 0
        gen.adam_t = 0
        for k in PARAM_GROUPS:
            gen.adam_m[k][:] = 0.0
            gen.adam_v[k][:] = 0.0
        if not config.warm_start_rebirth:
            sl = config.slice_size
            lo = np.asarray(config.scene_bounds[:3])
            hi = np.asarray(config.scene_bounds[3:])
            gen.params["mean"] = state.rng.uniform(lo, hi, size=(sl, 3))
            gen.params["quat"] = np.tile([1.0, 0.0, 0.0, 0.0], (sl, 1))
            gen.params["opacity_logit"] = np.full(sl, float(_logit(config.init_opacity)))
            gen.params["color"] = state.rng.uniform(0.0, 1.0, size=(sl, 3))
        # Warm start keeps the frozen snapshot's parameters in place.
    return len(to_freeze)


@dataclass
class TrainResult:
    container_path: Path
    config: TrainConfig
    emitted: List[EmittedSlice]
    archive: Optional[List[MaturedGen]]
    state: TrainState


def make_manifest(config: TrainConfig, dataset: FrameDataset) -> Manifest:
    return Manifest(
        num_gs=config.num_gs,
        swin_size=config.swin_size,
        fps=config.fps,
        total_frames=dataset.total_frames,
        profile_id=config.profile_id,
        scene_bounds=tuple(config.scene_bounds),
        camera_count=dataset.n_views,
    )


def train_video(dataset: FrameDataset, config: TrainConfig, out_path,
                keep_archive: bool = False, show_progress: bool = False) -> TrainResult:
    """Genesis, then slide the window one frame at a time, maturing as we go.

    Emits a complete, playable container; on failure the file is left without
    its end marker so readers see it as partial.
    """
    state = init_state(config)
    manifest = make_manifest(config, dataset)
    total = dataset.total_frames
    emitted: List[EmittedSlice] = []
    archive: Optional[list] = [] if keep_archive else None

    progress = None
    if show_progress:
        from tqdm import tqdm

        n_iters = config.genesis_iterations + max(total - 1, 0) * config.window_iterations
        progress = tqdm(total=n_iters, desc="train", unit="it")

    writer = ContainerWriter(out_path, manifest)
    try:
        train_swin(0, config.swin_size, state, dataset, progress=progress)
        schedule_expire(state)
        for st in range(1, total):
            mature(st, state, writer, emitted=emitted, keep_archive=archive)
            train_swin(st, st + config.swin_size, state, dataset, progress=progress)
        mature(total, state, writer, flush_all=True, emitted=emitted, keep_archive=archive)
        writer.finalize()
    except BaseException:
        writer.abort()  # leave a partial container (no end marker)
        raise
    finally:
        if progress is not None:
            progress.close()
    return TrainResult(container_path=Path(out_path), config=config,
                       emitted=emitted, archive=archive, state=state)
