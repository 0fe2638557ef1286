/** The per-frame rendering pipeline stages with wall-clock instrumentation:
 * raw-record preprocessing, camera-relative depth sorting (counting sort over
 * quantized keys), and attribute-texture regeneration.  Stages are pure
 * functions over typed arrays so they run identically on the main thread, in
 * a worker, or under node tests.
 */

import { DrawSet } from "./buffer.js";
import { PinholeCamera } from "./camera.js";

export interface StageTimings {
  preprocMs: number;
  sortMs: number;
  textureMs: number;
  overallMs: number;
}

export interface PreprocessedSet {
  count: number;
  centers: Float32Array; // (n, 3)
  /** Upper-triangular 3D covariance, split like the classic splat viewers. */
  covA: Float32Array; // (n, 3): xx, xy, xz
  covB: Float32Array; // (n, 3): yy, yz, zz
  colors: Float32Array; // (n, 4): rgb + opacity
}

const now: () => number =
  typeof performance !== "undefined" ? () => performance.now() : () => Date.now();

/** Busy-wait delay hook used by instrumentation tests. */
export function busyWaitMs(ms: number): void {
  if (ms <= 0) return;
  const end = now() + ms;
  while (now() < end) {
    /* spin */
  }
}

/** Records -> draw attributes: covariance from quaternion and scale. */
export function preprocess(set: DrawSet): PreprocessedSet {
  const n = set.count;
  const out: PreprocessedSet = {
    count: n,
    centers: new Float32Array(n * 3),
    covA: new Float32Array(n * 3),
    covB: new Float32Array(n * 3),
    colors: new Float32Array(n * 4),
  };
  for (let i = 0; i < n; i++) {
    out.centers[i * 3] = set.means[i * 3];
    out.centers[i * 3 + 1] = set.means[i * 3 + 1];
    out.centers[i * 3 + 2] = set.means[i * 3 + 2];
    const w = set.quats[i * 4];
    const x = set.quats[i * 4 + 1];
    const y = set.quats[i * 4 + 2];
    const z = set.quats[i * 4 + 3];
    const sx = set.scales[i * 3];
    const sy = set.scales[i * 3 + 1];
    const sz = set.scales[i * 3 + 2];
    // M = R diag(s); Sigma = M M^T.
    const m = [
      (1 - 2 * (y * y + z * z)) * sx, 2 * (x * y - w * z) * sy, 2 * (x * z + w * y) * sz,
      2 * (x * y + w * z) * sx, (1 - 2 * (x * x + z * z)) * sy, 2 * (y * z - w * x) * sz,
      2 * (x * z - w * y) * sx, 2 * (y * z + w * x) * sy, (1 - 2 * (x * x + y * y)) * sz,
    ];
    out.covA[i * 3] = m[0] * m[0] + m[1] * m[1] + m[2] * m[2];
    out.covA[i * 3 + 1] = m[0] * m[3] + m[1] * m[4] + m[2] * m[5];
    out.covA[i * 3 + 2] = m[0] * m[6] + m[1] * m[7] + m[2] * m[8];
    out.covB[i * 3] = m[3] * m[3] + m[4] * m[4] + m[5] * m[5];
    out.covB[i * 3 + 1] = m[3] * m[6] + m[4] * m[7] + m[5] * m[8];
    out.covB[i * 3 + 2] = m[6] * m[6] + m[7] * m[7] + m[8] * m[8];
    out.colors[i * 4] = set.colors[i * 3];
    out.colors[i * 4 + 1] = set.colors[i * 3 + 1];
    out.colors[i * 4 + 2] = set.colors[i * 3 + 2];
    out.colors[i * 4 + 3] = set.opacities[i];
  }
  return out;
}

/** Camera-relative counting sort over 16-bit quantized depth keys.
 * Returns indices ordered near-to-far; ties (same quantized key) keep the
 * lower input index first (the sort is stable).
 */
export function depthSort(
  centers: Float32Array | Float64Array,
  count: number,
  camera: PinholeCamera,
): Uint32Array {
  const order = new Uint32Array(count);
  if (count === 0) return order;
  const depths = new Float64Array(count);
  const r = camera.rotation;
  const t = camera.translation[2];
  let min = Infinity;
  let max = -Infinity;
  for (let i = 0; i < count; i++) {
    const d = r[6] * centers[i * 3] + r[7] * centers[i * 3 + 1] + r[8] * centers[i * 3 + 2] + t;
    depths[i] = d;
    if (d < min) min = d;
    if (d > max) max = d;
  }
  const buckets = 65536;
  const scale = max > min ? (buckets - 1) / (max - min) : 0;
  const keys = new Uint32Array(count);
  const counts = new Uint32Array(buckets);
  for (let i = 0; i < count; i++) {
    const k = Math.min(buckets - 1, Math.max(0, Math.floor((depths[i] - min) * scale)));
    keys[i] = k;
    counts[k]++;
  }
  const starts = new Uint32Array(buckets);
  for (let k = 1; k < buckets; k++) starts[k] = starts[k - 1] + counts[k - 1];
  for (let i = 0; i < count; i++) order[starts[keys[i]]++] = i;
  return order;
}

export interface TexturePack {
  /** Per-instance attributes in draw order, ready for buffer upload. */
  data: Float32Array; // (n, 12): center(3) pad(1) covA(3) pad(1) rgba(4)
  count: number;
}

/** Attribute-buffer regeneration in sorted order (the "texture" stage). */
export function buildTexture(pre: PreprocessedSet, order: Uint32Array): TexturePack {
  const n = order.length;
  const data = new Float32Array(n * 12);
  for (let j = 0; j < n; j++) {
    const i = order[j];
    data[j * 12] = pre.centers[i * 3];
    data[j * 12 + 1] = pre.centers[i * 3 + 1];
    data[j * 12 + 2] = pre.centers[i * 3 + 2];
    data[j * 12 + 3] = pre.covB[i * 3 + 2]; // zz rides in the spare lane
    data[j * 12 + 4] = pre.covA[i * 3];
    data[j * 12 + 5] = pre.covA[i * 3 + 1];
    data[j * 12 + 6] = pre.covA[i * 3 + 2];
    data[j * 12 + 7] = pre.covB[i * 3];
    data[j * 12 + 8] = pre.covB[i * 3 + 1];
    data[j * 12 + 9] = pre.colors[i * 4];
    data[j * 12 + 10] = pre.colors[i * 4 + 1];
    data[j * 12 + 11] = pre.colors[i * 4 + 2];
  }
  return { data, count: n };
}

export interface PipelineOptions {
  /** Test hook: artificial stall inside the sort stage. */
  injectSortDelayMs?: number;
  /** Reuse a previous sort when the camera has not moved. */
  cachedSort?: { order: Uint32Array; cameraKey: string } | null;
}

export interface PipelineResult {
  pre: PreprocessedSet;
  order: Uint32Array;
  texture: TexturePack;
  opacitiesInOrder: Float32Array;
  timings: StageTimings;
  sortReused: boolean;
  cameraKey: string;
}

export function cameraKey(camera: PinholeCamera): string {
  return Array.from(camera.rotation).join(",") + "|" + Array.from(camera.translation).join(",");
}

/** Run preprocess -> sort -> texture with per-stage wall-clock timings. */
export function runPipeline(
  set: DrawSet,
  camera: PinholeCamera,
  options: PipelineOptions = {},
): PipelineResult {
  const t0 = now();
  const pre = preprocess(set);
  const t1 = now();

  const key = cameraKey(camera);
  let order: Uint32Array;
  let sortReused = false;
  if (options.cachedSort && options.cachedSort.cameraKey === key
      && options.cachedSort.order.length === set.count) {
    order = options.cachedSort.order;
    sortReused = true;
  } else {
    order = depthSort(pre.centers, pre.count, camera);
  }
  busyWaitMs(options.injectSortDelayMs ?? 0);
  const t2 = now();

  const texture = buildTexture(pre, order);
  const opac = new Float32Array(order.length);
  for (let j = 0; j < order.length; j++) opac[j] = pre.colors[order[j] * 4 + 3];
  const t3 = now();

  return {
    pre,
    order,
    texture,
    opacitiesInOrder: opac,
    timings: {
      preprocMs: t1 - t0,
      sortMs: t2 - t1,
      textureMs: t3 - t2,
      overallMs: t3 - t0,
    },
    sortReused,
    cameraKey: key,
  };
}
