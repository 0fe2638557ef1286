"""Single-threaded numba kernels for the pixel loops of the rasterizer.

Both kernels walk splats in the same fixed depth order with the same skip
rules, so forward and backward always agree on the contributor set and the
accumulation order is bit-reproducible.
"""

import numba
import numpy as np

# Blending constants.  Alpha is clamped below 1 so transmittance never hits
# zero exactly; accumulation stops once transmittance is negligible.  The
# Mahalanobis cutoff (8 sigma) bounds each splat's pixel footprint; the
# discarded tail is < 1.3e-14 of the opacity, far below render tolerances.
ALPHA_MAX = 0.999
T_MIN = 1e-4
MAHA_MAX = 64.0


@numba.njit(cache=True)
def blend_forward(order, mean2d, inv2d, alpha, color, x0, x1, y0, y1, height, width):
    """Front-to-back alpha blending; returns an (H, W, 3) image."""
    img = np.zeros((height, width, 3), dtype=np.float64)
    nord = order.shape[0]
    for iy in range(height):
        for ix in range(width):
            trans = 1.0
            c0 = 0.0
            c1 = 0.0
            c2 = 0.0
            for k in range(nord):
                if trans < T_MIN:
                    break
                s = order[k]
                if ix < x0[s] or ix >= x1[s] or iy < y0[s] or iy >= y1[s]:
                    continue
                dx = ix - mean2d[s, 0]
                dy = iy - mean2d[s, 1]
                m = inv2d[s, 0] * dx * dx + 2.0 * inv2d[s, 1] * dx * dy + inv2d[s, 2] * dy * dy
                if m > MAHA_MAX:
                    continue
                ap = alpha[s] * np.exp(-0.5 * m)
                if ap > ALPHA_MAX:
                    ap = ALPHA_MAX
                w = ap * trans
                c0 += color[s, 0] * w
                c1 += color[s, 1] * w
                c2 += color[s, 2] * w
                trans *= 1.0 - ap
            img[iy, ix, 0] = c0
            img[iy, ix, 1] = c1
            img[iy, ix, 2] = c2
    return img


@numba.njit(cache=True)
def blend_backward(order, mean2d, inv2d, alpha, color, x0, x1, y0, y1,
                   height, width, grad_img,
                   g_mean2d, g_inv2d, g_alpha, g_color):
    """Accumulate dLoss/d(mean2d, inv2d, alpha, color) given dLoss/dpixels.

    Replays the forward walk per pixel to recover each contributor's
    transmittance, then sweeps back-to-front with a suffix accumulator.
    """
    nord = order.shape[0]
    idx_buf = np.empty(nord, dtype=np.int64)
    ap_buf = np.empty(nord, dtype=np.float64)
    t_buf = np.empty(nord, dtype=np.float64)
    g_buf = np.empty(nord, dtype=np.float64)
    for iy in range(height):
        for ix in range(width):
            gp0 = grad_img[iy, ix, 0]
            gp1 = grad_img[iy, ix, 1]
            gp2 = grad_img[iy, ix, 2]
            trans = 1.0
            cnt = 0
            for k in range(nord):
                if trans < T_MIN:
                    break
                s = order[k]
                if ix < x0[s] or ix >= x1[s] or iy < y0[s] or iy >= y1[s]:
                    continue
                dx = ix - mean2d[s, 0]
                dy = iy - mean2d[s, 1]
                m = inv2d[s, 0] * dx * dx + 2.0 * inv2d[s, 1] * dx * dy + inv2d[s, 2] * dy * dy
                if m > MAHA_MAX:
                    continue
                gauss = np.exp(-0.5 * m)
                ap = alpha[s] * gauss
                if ap > ALPHA_MAX:
                    ap = ALPHA_MAX
                idx_buf[cnt] = s
                ap_buf[cnt] = ap
                t_buf[cnt] = trans
                g_buf[cnt] = gauss
                cnt += 1
                trans *= 1.0 - ap
            # Suffix accumulator: color already blended behind splat j.
            s0 = 0.0
            s1 = 0.0
            s2 = 0.0
            for j in range(cnt - 1, -1, -1):
                s = idx_buf[j]
                ap = ap_buf[j]
                tj = t_buf[j]
                gauss = g_buf[j]
                w = ap * tj
                g_color[s, 0] += gp0 * w
                g_color[s, 1] += gp1 * w
                g_color[s, 2] += gp2 * w
                inv_rest = 1.0 / (1.0 - ap)
                d_ap = (
                    gp0 * (color[s, 0] * tj - s0 * inv_rest)
                    + gp1 * (color[s, 1] * tj - s1 * inv_rest)
                    + gp2 * (color[s, 2] * tj - s2 * inv_rest)
                )
                s0 += color[s, 0] * w
                s1 += color[s, 1] * w
                s2 += color[s, 2] * w
                if alpha[s] * gauss > ALPHA_MAX:
                    continue  # clamped: no gradient through alpha or footprint
                g_alpha[s] += d_ap * gauss
                d_m = -0.5 * gauss * alpha[s] * d_ap
                dx = ix - mean2d[s, 0]
                dy = iy - mean2d[s, 1]
                g_inv2d[s, 0] += d_m * dx * dx
                g_inv2d[s, 1] += d_m * 2.0 * dx * dy
                g_inv2d[s, 2] += d_m * dy * dy
                g_mean2d[s, 0] -= d_m * 2.0 * (inv2d[s, 0] * dx + inv2d[s, 1] * dy)
                g_mean2d[s, 1] -= d_m * 2.0 * (inv2d[s, 1] * dx + inv2d[s, 2] * dy)
