"""Photometric loss (L1 + SSIM) with exact gradients, plus the opacity and
scale regularizers applied to the optimizable active set."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import convolve1d

from .core import GaussianArrays, InvalidParameterError
from .raster import Image

SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2
_WINDOW = 11
_SIGMA = 1.5


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    w = np.exp(-(x ** 2) / (2.0 * sigma ** 2))
    return w / w.sum()


_KERNEL = _gaussian_window(_WINDOW, _SIGMA)


def _blur(img: np.ndarray) -> np.ndarray:
    # Separable Gaussian with zero padding, applied per channel.
    out = convolve1d(img, _KERNEL, axis=0, mode="constant", cval=0.0)
    return convolve1d(out, _KERNEL, axis=1, mode="constant", cval=0.0)


def ssim_with_gradient(pred: np.ndarray, gt: np.ndarray):
    """Mean SSIM over pixels and channels, and its gradient w.r.t. pred."""
    x = pred
    y = gt
    mu_x = _blur(x)
    mu_y = _blur(y)
    mxx = _blur(x * x)
    mxy = _blur(x * y)
    myy = _blur(y * y)
    sig_x = mxx - mu_x * mu_x
    sig_y = myy - mu_y * mu_y
    sig_xy = mxy - mu_x * mu_y
    a1 = 2.0 * mu_x * mu_y + SSIM_C1
    a2 = 2.0 * sig_xy + SSIM_C2
    b1 = mu_x * mu_x + mu_y * mu_y + SSIM_C1
    b2 = sig_x + sig_y + SSIM_C2
    denom = b1 * b2
    s = (a1 * a2) / denom
    value = float(np.mean(s))

    ds_dmu = (2.0 * mu_y * (a2 - a1) - 2.0 * mu_x * s * (b2 - b1)) / denom
    ds_dmxx = -s / b2
    ds_dmxy = 2.0 * a1 / denom
    npix = s.size
    grad = (_blur(ds_dmu) + 2.0 * x * _blur(ds_dmxx) + y * _blur(ds_dmxy)) / npix
    return value, grad


@dataclass
class LossBreakdown:
    total: float
    l1: float
    ssim: float
    photometric: float
    opacity_term: float
    scale_term: float


def loss(
    pred: Image,
    gt: Image,
    active_optimizable: GaussianArrays,
    ssim_weight: float = 0.2,
    opacity_reg: float = 2e-2,
    scale_reg: float = 1e-2,
):
    """(1-w)*L1 + w*(1-SSIM) + opacity_reg*mean(alpha) + scale_reg*mean(|s|_1).

    Returns the breakdown, the gradient image dLoss/dpred, and the
    regularizer gradients in optimization space (opacity-logit, log-scale),
    aligned with `active_optimizable`.
    """
    p = pred.pixels if isinstance(pred, Image) else np.asarray(pred, dtype=np.float64)
    g = gt.pixels if isinstance(gt, Image) else np.asarray(gt, dtype=np.float64)
    if p.shape != g.shape:
        raise InvalidParameterError(f"image dimensions differ: {p.shape} vs {g.shape}")

    diff = p - g
    l1 = float(np.mean(np.abs(diff)))
    ssim_val, ssim_grad = ssim_with_gradient(p, g)
    photometric = (1.0 - ssim_weight) * l1 + ssim_weight * (1.0 - ssim_val)
    grad_image = (1.0 - ssim_weight) * np.sign(diff) / diff.size - ssim_weight * ssim_grad

    n = len(active_optimizable)
    reg_grads = {
        "opacity_logit": np.zeros((n,)),
        "log_scale": np.zeros((n, 3)),
    }
    opacity_term = 0.0
    scale_term = 0.0
    if n > 0:
        alpha = active_optimizable.opacities
        scales = active_optimizable.scales
        opacity_term = opacity_reg * float(np.mean(alpha))
        scale_term = scale_reg * float(np.mean(np.sum(scales, axis=1)))
        reg_grads["opacity_logit"] = opacity_reg * alpha * (1.0 - alpha) / n
        reg_grads["log_scale"] = scale_reg * scales / n

    total = photometric + opacity_term + scale_term
    breakdown = LossBreakdown(
        total=total, l1=l1, ssim=ssim_val, photometric=photometric,
        opacity_term=opacity_term, scale_term=scale_term,
    )
    return breakdown, grad_image, reg_grads
