"""CPU forward rendering and analytic backward pass for Gaussian splats.

Rendering is deterministic: splats are globally depth-sorted with a fixed
tie-break on source index, the pixel loops run single-threaded, and the
accumulation order never changes, so identical inputs give bit-identical
images.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from PIL import Image as PILImage

from . import _kernels
from .core import (
    Camera,
    Gaussian,
    GaussianArrays,
    InvalidParameterError,
    Lifespan,
    SplatError,
    is_active,
    quat_to_rotmat,
)

# Center behind this camera-space depth is culled.
NEAR_PLANE = 0.01
# Anti-aliasing dilation added to the projected covariance diagonal (px^2)
# before inversion; sub-pixel splats otherwise produce exploding gradients.
COV2D_DILATION = 0.3

PSNR_IDENTICAL = math.inf


class ConsistencyError(SplatError):
    """Forward and backward passes disagree about the active set."""


@dataclass(frozen=True)
class Splat2D:
    """A splat projected to the image plane (pre-dilation covariance)."""

    mean2d: np.ndarray  # (2,) pixels
    cov2d: np.ndarray  # (2, 2) pixels^2, symmetric PSD
    depth: float  # camera-space z
    color: np.ndarray
    opacity: float
    source_index: int


@dataclass
class Image:
    """Row-major linear-RGB image with components in [0, 1]."""

    pixels: np.ndarray  # (H, W, 3) float64

    def __post_init__(self):
        a = np.asarray(self.pixels, dtype=np.float64)
        if a.ndim != 3 or a.shape[2] != 3:
            raise InvalidParameterError(f"image must be (H, W, 3), got {a.shape}")
        self.pixels = a

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


def _project_arrays(camera: Camera, arrays: GaussianArrays):
    """EWA-project all splats; returns None when nothing survives culling.

    The returned cache carries every intermediate the backward chain needs,
    restricted to the surviving subset, plus the fixed blend order.
    """
    n = len(arrays)
    if n == 0:
        return None
    rot_wc = camera.rotation
    t = arrays.means @ rot_wc.T + camera.translation
    z = t[:, 2]
    in_front = z > NEAR_PLANE

    with np.errstate(divide="ignore", invalid="ignore"):
        ux = camera.fx * t[:, 0] / z + camera.cx
        uy = camera.fy * t[:, 1] / z + camera.cy

    qnorm = np.linalg.norm(arrays.quats, axis=1)
    qn = arrays.quats / np.maximum(qnorm, 1e-12)[:, None]
    rot = quat_to_rotmat(qn)
    m3 = rot * arrays.scales[:, None, :]
    sigma = m3 @ np.transpose(m3, (0, 2, 1))

    # First-order projection Jacobian at the mean, rows for (u, v).
    jac = np.zeros((n, 2, 3))
    with np.errstate(divide="ignore", invalid="ignore"):
        jac[:, 0, 0] = camera.fx / z
        jac[:, 0, 2] = -camera.fx * t[:, 0] / (z * z)
        jac[:, 1, 1] = camera.fy / z
        jac[:, 1, 2] = -camera.fy * t[:, 1] / (z * z)
    mproj = jac @ rot_wc  # (n, 2, 3)
    cov2d = np.einsum("nab,nbc,ndc->nad", mproj, sigma, mproj)
    a_raw = cov2d[:, 0, 0]
    b_raw = cov2d[:, 0, 1]
    c_raw = cov2d[:, 1, 1]

    # 3-sigma footprint (pre-dilation) decides visibility.
    mid = 0.5 * (a_raw + c_raw)
    disc = np.sqrt(np.maximum(mid * mid - (a_raw * c_raw - b_raw * b_raw), 0.0))
    r3 = 3.0 * np.sqrt(np.maximum(mid + disc, 0.0))
    on_image = (
        (ux + r3 >= 0.0)
        & (ux - r3 <= camera.width - 1.0)
        & (uy + r3 >= 0.0)
        & (uy - r3 <= camera.height - 1.0)
    )
    keep = in_front & on_image
    src = np.nonzero(keep)[0]
    if len(src) == 0:
        return None

    t = t[src]
    z = z[src]
    mean2d = np.column_stack([ux[src], uy[src]])
    qn = qn[src]
    qnorm = qnorm[src]
    rot = rot[src]
    m3 = m3[src]
    sigma = sigma[src]
    mproj = mproj[src]
    a_raw, b_raw, c_raw = a_raw[src], b_raw[src], c_raw[src]

    ad = a_raw + COV2D_DILATION
    cd = c_raw + COV2D_DILATION
    det = ad * cd - b_raw * b_raw
    inv2d = np.column_stack([cd / det, -b_raw / det, ad / det])

    mid_d = 0.5 * (ad + cd)
    disc_d = np.sqrt(np.maximum(mid_d * mid_d - det, 0.0))
    r8 = 8.0 * np.sqrt(mid_d + disc_d)
    x0 = np.maximum(np.ceil(mean2d[:, 0] - r8), 0.0).astype(np.int64)
    x1 = np.minimum(np.floor(mean2d[:, 0] + r8) + 1.0, camera.width).astype(np.int64)
    y0 = np.maximum(np.ceil(mean2d[:, 1] - r8), 0.0).astype(np.int64)
    y1 = np.minimum(np.floor(mean2d[:, 1] + r8) + 1.0, camera.height).astype(np.int64)

    # Global sort: depth ascending, ties broken by source index.
    order = np.lexsort((src, z)).astype(np.int64)

    return {
        "src": src,
        "t": t,
        "z": z,
        "mean2d": np.ascontiguousarray(mean2d),
        "cov_raw": (a_raw, b_raw, c_raw),
        "dilated": (ad, b_raw, cd, det),
        "inv2d": np.ascontiguousarray(inv2d),
        "qn": qn,
        "qnorm": qnorm,
        "rot": rot,
        "m3": m3,
        "sigma": sigma,
        "mproj": mproj,
        "bbox": (x0, x1, y0, y1),
        "order": order,
        "alpha": np.ascontiguousarray(arrays.opacities[src]),
        "color": np.ascontiguousarray(arrays.colors[src]),
    }


def project(gaussian: Gaussian, camera: Camera) -> Optional[Splat2D]:
    """Project one splat; None when it is behind the near plane or its
    3-sigma footprint misses the image."""
    arrays = GaussianArrays.from_gaussians([gaussian])
    cache = _project_arrays(camera, arrays)
    if cache is None:
        return None
    a, b, c = cache["cov_raw"]
    return Splat2D(
        mean2d=cache["mean2d"][0],
        cov2d=np.array([[a[0], b[0]], [b[0], c[0]]]),
        depth=float(cache["z"][0]),
        color=cache["color"][0],
        opacity=float(cache["alpha"][0]),
        source_index=0,
    )


def render_arrays(camera: Camera, arrays: GaussianArrays) -> Image:
    """Render splats (already filtered for activity) to a linear-RGB image."""
    cache = _project_arrays(camera, arrays)
    if cache is None:
        return Image(np.zeros((camera.height, camera.width, 3)))
    x0, x1, y0, y1 = cache["bbox"]
    img = _kernels.blend_forward(
        cache["order"], cache["mean2d"], cache["inv2d"], cache["alpha"], cache["color"],
        x0, x1, y0, y1, camera.height, camera.width,
    )
    return Image(img)


def render_arrays_backward(
    camera: Camera,
    arrays: GaussianArrays,
    grad_image: np.ndarray,
    trainable: Optional[np.ndarray] = None,
) -> dict:
    """Gradients of sum(grad_image * render_arrays(...)) in optimization space.

    Returns arrays aligned with the input: d/d mean, d/d log-scale,
    d/d raw quaternion (through renormalization), d/d opacity-logit, d/d color.
    Rows where `trainable` is False are zeroed.
    """
    n = len(arrays)
    grads = {
        "mean": np.zeros((n, 3)),
        "log_scale": np.zeros((n, 3)),
        "quat": np.zeros((n, 4)),
        "opacity_logit": np.zeros((n,)),
        "color": np.zeros((n, 3)),
    }
    grad_image = np.ascontiguousarray(grad_image, dtype=np.float64)
    if grad_image.shape != (camera.height, camera.width, 3):
        raise InvalidParameterError(
            f"gradient image shape {grad_image.shape} does not match camera "
            f"({camera.height}, {camera.width}, 3)"
        )
    cache = _project_arrays(camera, arrays)
    if cache is None:
        return grads

    p = len(cache["src"])
    g_mean2d = np.zeros((p, 2))
    g_inv2d = np.zeros((p, 3))
    g_alpha = np.zeros((p,))
    g_color = np.zeros((p, 3))
    x0, x1, y0, y1 = cache["bbox"]
    _kernels.blend_backward(
        cache["order"], cache["mean2d"], cache["inv2d"], cache["alpha"], cache["color"],
        x0, x1, y0, y1, camera.height, camera.width, grad_image,
        g_mean2d, g_inv2d, g_alpha, g_color,
    )

    src = cache["src"]
    t = cache["t"]
    z = cache["z"]
    ad, b, cd, det = cache["dilated"]
    sigma = cache["sigma"]
    m3 = cache["m3"]
    rot = cache["rot"]
    qn = cache["qn"]
    qnorm = cache["qnorm"]
    mproj = cache["mproj"]
    fx, fy = camera.fx, camera.fy

    # inv(cov2d + dilation) -> cov2d components (a, b, c).
    det2 = det * det
    gia, gib, gic = g_inv2d[:, 0], g_inv2d[:, 1], g_inv2d[:, 2]
    g_a = (gia * (-cd * cd) + gib * (b * cd) + gic * (-b * b)) / det2
    g_b = (gia * (2.0 * b * cd) + gib * (-det - 2.0 * b * b) + gic * (2.0 * ad * b)) / det2
    g_c = (gia * (-b * b) + gib * (ad * b) + gic * (-ad * ad)) / det2

    # cov2d = M Sigma M^T with M = J W; rows m0, m1.
    m0 = mproj[:, 0, :]
    m1 = mproj[:, 1, :]
    sm0 = np.einsum("pij,pj->pi", sigma, m0)
    sm1 = np.einsum("pij,pj->pi", sigma, m1)
    gm = np.empty_like(mproj)
    gm[:, 0, :] = 2.0 * g_a[:, None] * sm0 + g_b[:, None] * sm1
    gm[:, 1, :] = g_b[:, None] * sm0 + 2.0 * g_c[:, None] * sm1
    g_sigma = (
        g_a[:, None, None] * np.einsum("pi,pj->pij", m0, m0)
        + g_b[:, None, None] * np.einsum("pi,pj->pij", m0, m1)
        + g_c[:, None, None] * np.einsum("pi,pj->pij", m1, m1)
    )

    # Through the Jacobian entries of M = J W to camera-space position.
    gj = gm @ camera.rotation.T  # gj[p, row_of_J, col_of_J]
    x_c, y_c = t[:, 0], t[:, 1]
    z2 = z * z
    z3 = z2 * z
    gt = np.zeros((len(src), 3))
    gt[:, 0] = gj[:, 0, 2] * (-fx / z2)
    gt[:, 1] = gj[:, 1, 2] * (-fy / z2)
    gt[:, 2] = (
        gj[:, 0, 0] * (-fx / z2)
        + gj[:, 1, 1] * (-fy / z2)
        + gj[:, 0, 2] * (2.0 * fx * x_c / z3)
        + gj[:, 1, 2] * (2.0 * fy * y_c / z3)
    )
    # Through the projected center.
    gt[:, 0] += g_mean2d[:, 0] * fx / z
    gt[:, 1] += g_mean2d[:, 1] * fy / z
    gt[:, 2] += -g_mean2d[:, 0] * fx * x_c / z2 - g_mean2d[:, 1] * fy * y_c / z2
    g_mean = gt @ camera.rotation

    # Sigma = M3 M3^T with M3 = R diag(s).
    gm3 = (g_sigma + np.transpose(g_sigma, (0, 2, 1))) @ m3
    g_scale = np.einsum("pik,pik->pk", gm3, rot)
    scales = arrays.scales[src]
    g_log_scale = g_scale * scales

    gr = gm3 * scales[:, None, :]
    w, x, y, zz = qn[:, 0], qn[:, 1], qn[:, 2], qn[:, 3]
    zero = np.zeros_like(w)
    dr = np.empty((len(src), 4, 3, 3))
    dr[:, 0] = 2.0 * np.stack([
        np.stack([zero, -zz, y], axis=-1),
        np.stack([zz, zero, -x], axis=-1),
        np.stack([-y, x, zero], axis=-1),
    ], axis=1)
    dr[:, 1] = 2.0 * np.stack([
        np.stack([zero, y, zz], axis=-1),
        np.stack([y, -2 * x, -w], axis=-1),
        np.stack([zz, w, -2 * x], axis=-1),
    ], axis=1)
    dr[:, 2] = 2.0 * np.stack([
        np.stack([-2 * y, x, w], axis=-1),
        np.stack([x, zero, zz], axis=-1),
        np.stack([-w, zz, -2 * y], axis=-1),
    ], axis=1)
    dr[:, 3] = 2.0 * np.stack([
        np.stack([-2 * zz, -w, x], axis=-1),
        np.stack([w, -2 * zz, y], axis=-1),
        np.stack([x, y, zero], axis=-1),
    ], axis=1)
    g_qn = np.einsum("pik,pqik->pq", gr, dr)
    # Raw quaternion gradient through normalization.
    g_quat = (g_qn - qn * np.sum(qn * g_qn, axis=1, keepdims=True)) / qnorm[:, None]

    alpha = cache["alpha"]
    g_logit = g_alpha * alpha * (1.0 - alpha)

    grads["mean"][src] = g_mean
    grads["log_scale"][src] = g_log_scale
    grads["quat"][src] = g_quat
    grads["opacity_logit"][src] = g_logit
    grads["color"][src] = g_color
    if trainable is not None:
        mask = ~np.asarray(trainable, dtype=bool)
        for v in grads.values():
            v[mask] = 0.0
    return grads


def active_indices(gaussians: Sequence[Tuple[Gaussian, Lifespan]], frame: int) -> list:
    return [i for i, (_, ls) in enumerate(gaussians) if is_active(ls, frame)]


def render(camera: Camera, gaussians: Sequence[Tuple[Gaussian, Lifespan]], frame: int) -> Image:
    """Filter to the frame's active set and alpha-blend front to back."""
    idx = active_indices(gaussians, frame)
    arrays = GaussianArrays.from_gaussians([gaussians[i][0] for i in idx])
    return render_arrays(camera, arrays)


def render_backward(
    camera: Camera,
    gaussians: Sequence[Tuple[Gaussian, Lifespan]],
    frame: int,
    loss_gradient_image: np.ndarray,
    trainable: Optional[Sequence[bool]] = None,
    expected_active: Optional[Sequence[int]] = None,
) -> dict:
    """Per-parameter gradients for the active set of `frame`.

    Returned arrays align with the *input* list; inactive and frozen entries
    stay zero.  `expected_active` cross-checks that the caller's forward pass
    saw the same active set.
    """
    idx = active_indices(gaussians, frame)
    if expected_active is not None and list(expected_active) != idx:
        raise ConsistencyError("active set differs between forward and backward passes")
    arrays = GaussianArrays.from_gaussians([gaussians[i][0] for i in idx])
    sub_trainable = None
    if trainable is not None:
        sub_trainable = np.asarray([trainable[i] for i in idx], dtype=bool)
    sub = render_arrays_backward(camera, arrays, loss_gradient_image, sub_trainable)
    n = len(gaussians)
    grads = {
        "mean": np.zeros((n, 3)),
        "log_scale": np.zeros((n, 3)),
        "quat": np.zeros((n, 4)),
        "opacity_logit": np.zeros((n,)),
        "color": np.zeros((n, 3)),
    }
    if idx:
        sel = np.asarray(idx)
        for key in grads:
            grads[key][sel] = sub[key]
    return grads


def psnr(a: Image, b: Image) -> float:
    """Peak signal-to-noise ratio in dB over all channels; +inf when identical."""
    pa = a.pixels if isinstance(a, Image) else np.asarray(a, dtype=np.float64)
    pb = b.pixels if isinstance(b, Image) else np.asarray(b, dtype=np.float64)
    if pa.shape != pb.shape:
        raise InvalidParameterError(f"image dimensions differ: {pa.shape} vs {pb.shape}")
    mse = float(np.mean((pa - pb) ** 2))
    if mse == 0.0:
        return PSNR_IDENTICAL
    return 10.0 * math.log10(1.0 / mse)


def linear_to_srgb(x: np.ndarray) -> np.ndarray:
    x = np.clip(x, 0.0, 1.0)
    return np.where(x <= 0.0031308, 12.92 * x, 1.055 * np.power(x, 1.0 / 2.4) - 0.055)


def srgb_to_linear(y: np.ndarray) -> np.ndarray:
    y = np.clip(y, 0.0, 1.0)
    return np.where(y <= 0.04045, y / 12.92, np.power((y + 0.055) / 1.055, 2.4))


def write_png(image: Image, path) -> None:
    """8-bit PNG with sRGB transfer applied."""
    srgb = linear_to_srgb(image.pixels)
    data = np.rint(srgb * 255.0).astype(np.uint8)
    PILImage.fromarray(data, mode="RGB").save(path, format="PNG")


def read_png(path) -> Image:
    """Inverse of write_png: 8-bit sRGB PNG to linear float."""
    with PILImage.open(path) as im:
        data = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    return Image(srgb_to_linear(data))
