/** CPU reference of the viewer's splat math, used by the conformance tests:
 * the same EWA projection and front-to-back blending the shaders implement,
 * driven by the pipeline's quantized depth order.
 */

import { DrawSet } from "./buffer.js";
import { PinholeCamera } from "./camera.js";
import { depthSort } from "./pipeline.js";

const NEAR_PLANE = 0.01;
const DILATION = 0.3;
const ALPHA_MAX = 0.999;
const T_MIN = 1e-4;
const MAHA_MAX = 64.0;

export function renderSoftware(set: DrawSet, camera: PinholeCamera): Float64Array {
  const { width, height, fx, fy, cx, cy, rotation: r, translation: t } = camera;
  const n = set.count;
  const img = new Float64Array(width * height * 3);

  // Project every splat (camera transform, EWA covariance, footprint cull).
  const u = new Float64Array(n * 2);
  const inv = new Float64Array(n * 3);
  const keep = new Uint8Array(n);
  for (let i = 0; i < n; i++) {
    const mx = set.means[i * 3];
    const my = set.means[i * 3 + 1];
    const mz = set.means[i * 3 + 2];
    const xc = r[0] * mx + r[1] * my + r[2] * mz + t[0];
    const yc = r[3] * mx + r[4] * my + r[5] * mz + t[1];
    const zc = r[6] * mx + r[7] * my + r[8] * mz + t[2];
    if (zc <= NEAR_PLANE) continue;
    const ux = (fx * xc) / zc + cx;
    const uy = (fy * yc) / zc + cy;

    const w = set.quats[i * 4];
    const qx = set.quats[i * 4 + 1];
    const qy = set.quats[i * 4 + 2];
    const qz = set.quats[i * 4 + 3];
    const sx = set.scales[i * 3];
    const sy = set.scales[i * 3 + 1];
    const sz = set.scales[i * 3 + 2];
    const m = [
      (1 - 2 * (qy * qy + qz * qz)) * sx, 2 * (qx * qy - w * qz) * sy, 2 * (qx * qz + w * qy) * sz,
      2 * (qx * qy + w * qz) * sx, (1 - 2 * (qx * qx + qz * qz)) * sy, 2 * (qy * qz - w * qx) * sz,
      2 * (qx * qz - w * qy) * sx, 2 * (qy * qz + w * qx) * sy, (1 - 2 * (qx * qx + qy * qy)) * sz,
    ];
    // Sigma = M M^T (world frame).
    const s00 = m[0] * m[0] + m[1] * m[1] + m[2] * m[2];
    const s01 = m[0] * m[3] + m[1] * m[4] + m[2] * m[5];
    const s02 = m[0] * m[6] + m[1] * m[7] + m[2] * m[8];
    const s11 = m[3] * m[3] + m[4] * m[4] + m[5] * m[5];
    const s12 = m[3] * m[6] + m[4] * m[7] + m[5] * m[8];
    const s22 = m[6] * m[6] + m[7] * m[7] + m[8] * m[8];
    // M2 = J W with J the projection Jacobian at the mean.
    const z2 = zc * zc;
    const j00 = fx / zc, j02 = (-fx * xc) / z2;
    const j11 = fy / zc, j12 = (-fy * yc) / z2;
    const a0 = j00 * r[0] + j02 * r[6];
    const a1 = j00 * r[1] + j02 * r[7];
    const a2 = j00 * r[2] + j02 * r[8];
    const b0 = j11 * r[3] + j12 * r[6];
    const b1 = j11 * r[4] + j12 * r[7];
    const b2 = j11 * r[5] + j12 * r[8];
    const sa0 = s00 * a0 + s01 * a1 + s02 * a2;
    const sa1 = s01 * a0 + s11 * a1 + s12 * a2;
    const sa2 = s02 * a0 + s12 * a1 + s22 * a2;
    const sb0 = s00 * b0 + s01 * b1 + s02 * b2;
    const sb1 = s01 * b0 + s11 * b1 + s12 * b2;
    const sb2 = s02 * b0 + s12 * b1 + s22 * b2;
    const ca = a0 * sa0 + a1 * sa1 + a2 * sa2;
    const cb = a0 * sb0 + a1 * sb1 + a2 * sb2;
    const cc = b0 * sb0 + b1 * sb1 + b2 * sb2;

    // 3-sigma footprint cull on the raw covariance.
    const mid = 0.5 * (ca + cc);
    const disc = Math.sqrt(Math.max(mid * mid - (ca * cc - cb * cb), 0));
    const r3 = 3 * Math.sqrt(Math.max(mid + disc, 0));
    if (ux + r3 < 0 || ux - r3 > width - 1 || uy + r3 < 0 || uy - r3 > height - 1) continue;

    const da = ca + DILATION;
    const dc = cc + DILATION;
    const det = da * dc - cb * cb;
    u[i * 2] = ux;
    u[i * 2 + 1] = uy;
    inv[i * 3] = dc / det;
    inv[i * 3 + 1] = -cb / det;
    inv[i * 3 + 2] = da / det;
    keep[i] = 1;
  }

  // Draw order from the real pipeline's quantized counting sort.
  const order = depthSort(set.means, n, camera);
  const drawn: number[] = [];
  for (let j = 0; j < order.length; j++) if (keep[order[j]]) drawn.push(order[j]);

  for (let py = 0; py < height; py++) {
    for (let px = 0; px < width; px++) {
      let trans = 1.0;
      let c0 = 0, c1 = 0, c2 = 0;
      for (const i of drawn) {
        if (trans < T_MIN) break;
        const dx = px - u[i * 2];
        const dy = py - u[i * 2 + 1];
        const maha = inv[i * 3] * dx * dx + 2 * inv[i * 3 + 1] * dx * dy + inv[i * 3 + 2] * dy * dy;
        if (maha > MAHA_MAX) continue;
        let ap = set.opacities[i] * Math.exp(-0.5 * maha);
        if (ap > ALPHA_MAX) ap = ALPHA_MAX;
        const wgt = ap * trans;
        c0 += set.colors[i * 3] * wgt;
        c1 += set.colors[i * 3 + 1] * wgt;
        c2 += set.colors[i * 3 + 2] * wgt;
        trans *= 1 - ap;
      }
      const o = (py * width + px) * 3;
      img[o] = c0;
      img[o + 1] = c1;
      img[o + 2] = c2;
    }
  }
  return img;
}
