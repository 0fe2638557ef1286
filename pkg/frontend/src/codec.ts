/** Binary slice decoding, mirroring the native decoder bit for bit.
 *
 * All arithmetic runs in f64 (JS numbers) with the same operation order as
 * the reference implementation, so decoded values are identical doubles:
 * f16/f32 widen exactly, u8 maps are the same expressions, and quaternion
 * renormalization uses the same left-to-right norm accumulation.
 */

export const HEADER_SIZE = 16;
export const SLICE_MAGIC = 0x53475753; // "SWGS" little-endian u32
const SCALE_FLOOR = 1e-6;

export interface Manifest {
  format_version: number;
  num_gs: number;
  swin_size: number;
  slice_size: number;
  fps: number;
  total_frames: number;
  profile: number;
  bytes_per_record: number;
  scene_bounds: number[];
  camera_count: number;
}

export interface SliceHeader {
  targetFrame: number;
  sliceIndex: number;
  keptCount: number;
}

export interface Lifespan {
  birth: number;
  start: number;
  expire: number;
}

/** One slice materialized to slice_size logical records (f64 attributes). */
export interface DecodedSlice {
  header: SliceHeader;
  lifespan: Lifespan;
  means: Float64Array; // (n, 3)
  quats: Float64Array; // (n, 4)
  scales: Float64Array; // (n, 3)
  opacities: Float64Array; // (n,)
  colors: Float64Array; // (n, 3)
  valid: Uint8Array; // 1 for kept records, 0 for padding
}

export function recordBytes(profile: number): number {
  if (profile === 0) return 56;
  if (profile === 1) return 30;
  throw new Error(`unknown quantization profile ${profile}`);
}

/** Exact IEEE binary16 -> double widening (subnormals, infinities, NaN). */
export function f16ToNumber(bits: number): number {
  const sign = bits & 0x8000 ? -1 : 1;
  const exp = (bits >> 10) & 0x1f;
  const frac = bits & 0x3ff;
  if (exp === 0) return sign * frac * 2 ** -24;
  if (exp === 31) return frac ? NaN : sign * Infinity;
  return sign * (1 + frac / 1024) * 2 ** (exp - 15);
}

function quatNorm(w: number, x: number, y: number, z: number): number {
  // Same association order as the reference: ((w*w + x*x) + y*y) + z*z.
  return Math.sqrt(w * w + x * x + y * y + z * z);
}

export function parseHeader(view: DataView, offset: number): SliceHeader {
  if (view.byteLength - offset < HEADER_SIZE) {
    throw new Error("truncated slice header");
  }
  const magic = view.getUint32(offset, true);
  if (magic !== SLICE_MAGIC) {
    throw new Error(`bad slice magic 0x${magic.toString(16)}`);
  }
  return {
    targetFrame: view.getUint32(offset + 4, true),
    sliceIndex: view.getUint8(offset + 8),
    keptCount: view.getUint32(offset + 9, true),
  };
}

function decodeInto(
  out: DecodedSlice,
  row: number,
  view: DataView,
  offset: number,
  profile: number,
): void {
  let w: number, x: number, y: number, z: number;
  if (profile === 0) {
    for (let k = 0; k < 3; k++) out.means[row * 3 + k] = view.getFloat32(offset + 4 * k, true);
    w = view.getFloat32(offset + 12, true);
    x = view.getFloat32(offset + 16, true);
    y = view.getFloat32(offset + 20, true);
    z = view.getFloat32(offset + 24, true);
    for (let k = 0; k < 3; k++) {
      out.scales[row * 3 + k] = Math.max(view.getFloat32(offset + 28 + 4 * k, true), SCALE_FLOOR);
    }
    out.opacities[row] = Math.min(Math.max(view.getFloat32(offset + 40, true), 0), 1);
    for (let k = 0; k < 3; k++) out.colors[row * 3 + k] = view.getFloat32(offset + 44 + 4 * k, true);
    // Full-precision quaternions keep their stored ulps when the norm
    // invariant already holds; renormalize only when actually off.
    const n = quatNorm(w, x, y, z);
    if (Math.abs(n - 1.0) > 1e-6) {
      const safe = Math.max(n, 1e-12);
      w /= safe;
      x /= safe;
      y /= safe;
      z /= safe;
    }
    if (n < 1e-12) {
      w = 1;
      x = y = z = 0;
    }
  } else {
    for (let k = 0; k < 3; k++) {
      out.means[row * 3 + k] = f16ToNumber(view.getUint16(offset + 2 * k, true));
    }
    w = view.getUint8(offset + 6) / 127.5 - 1.0;
    x = view.getUint8(offset + 7) / 127.5 - 1.0;
    y = view.getUint8(offset + 8) / 127.5 - 1.0;
    z = view.getUint8(offset + 9) / 127.5 - 1.0;
    for (let k = 0; k < 3; k++) {
      out.scales[row * 3 + k] = Math.max(f16ToNumber(view.getUint16(offset + 10 + 2 * k, true)), SCALE_FLOOR);
    }
    out.opacities[row] = view.getUint8(offset + 16) / 255.0;
    for (let k = 0; k < 3; k++) out.colors[row * 3 + k] = view.getFloat32(offset + 17 + 4 * k, true);
    // u8 lattice points are never exactly unit (number theory does the
    // proof); always renormalize, matching the reference's threshold rule.
    const n = quatNorm(w, x, y, z);
    const safe = Math.max(n, 1e-12);
    w /= safe;
    x /= safe;
    y /= safe;
    z /= safe;
    if (n < 1e-12) {
      w = 1;
      x = y = z = 0;
    }
  }
  out.quats[row * 4] = w;
  out.quats[row * 4 + 1] = x;
  out.quats[row * 4 + 2] = y;
  out.quats[row * 4 + 3] = z;
}

/** Decode one framed slice, padding up to sliceSize with inert records. */
export function unpackSlice(
  data: Uint8Array,
  profile: number,
  sliceSize: number,
  swinSize: number,
): { slice: DecodedSlice; byteLength: number } {
  const view = new DataView(data.buffer, data.byteOffset, data.byteLength);
  const header = parseHeader(view, 0);
  if (header.keptCount > sliceSize) {
    throw new Error(`kept_count ${header.keptCount} exceeds slice size ${sliceSize}`);
  }
  const rb = recordBytes(profile);
  const byteLength = HEADER_SIZE + header.keptCount * rb;
  if (data.byteLength < byteLength) {
    throw new Error(`truncated slice payload: ${data.byteLength} < ${byteLength}`);
  }
  const slice: DecodedSlice = {
    header,
    lifespan: {
      birth: header.targetFrame,
      start: header.targetFrame,
      expire: header.targetFrame + swinSize,
    },
    means: new Float64Array(sliceSize * 3),
    quats: new Float64Array(sliceSize * 4),
    scales: new Float64Array(sliceSize * 3),
    opacities: new Float64Array(sliceSize),
    colors: new Float64Array(sliceSize * 3),
    valid: new Uint8Array(sliceSize),
  };
  for (let i = 0; i < header.keptCount; i++) {
    decodeInto(slice, i, view, HEADER_SIZE + i * rb, profile);
    slice.valid[i] = 1;
  }
  if (header.keptCount < sliceSize) {
    // Padding decodes all-zero record bytes through the same maps.
    const zeros = new DataView(new ArrayBuffer(rb));
    for (let i = header.keptCount; i < sliceSize; i++) {
      decodeInto(slice, i, zeros, 0, profile);
    }
  }
  return { slice, byteLength };
}

/** Staggered lifespan of the genesis slice at `position` in the init block. */
export function genesisLifespan(position: number, swinSize: number): Lifespan {
  const expire = position === 0 ? swinSize : position;
  return { birth: 0, start: 0, expire };
}

/** Incremental parser for the init-then-slices byte stream (/stream body). */
export class StreamParser {
  private pending: Uint8Array = new Uint8Array(0);
  private genesisSeen = 0;

  constructor(
    private readonly manifest: Manifest,
    private readonly onSlice: (slice: DecodedSlice, isGenesis: boolean) => void,
  ) {}

  push(chunk: Uint8Array): void {
    if (this.pending.length === 0) {
      this.pending = chunk.slice();
    } else {
      const merged = new Uint8Array(this.pending.length + chunk.length);
      merged.set(this.pending, 0);
      merged.set(chunk, this.pending.length);
      this.pending = merged;
    }
    this.drain();
  }

  private drain(): void {
    const rb = recordBytes(this.manifest.profile);
    for (;;) {
      if (this.pending.length < HEADER_SIZE) return;
      const view = new DataView(this.pending.buffer, this.pending.byteOffset, this.pending.byteLength);
      const header = parseHeader(view, 0);
      const need = HEADER_SIZE + header.keptCount * rb;
      if (this.pending.length < need) return;
      const { slice } = unpackSlice(
        this.pending.subarray(0, need),
        this.manifest.profile,
        this.manifest.slice_size,
        this.manifest.swin_size,
      );
      const isGenesis = this.genesisSeen < this.manifest.swin_size;
      if (isGenesis) {
        slice.lifespan = genesisLifespan(this.genesisSeen, this.manifest.swin_size);
        this.genesisSeen += 1;
      }
      this.pending = this.pending.slice(need);
      this.onSlice(slice, isGenesis);
    }
  }
}
