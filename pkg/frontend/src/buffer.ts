/** Slot buffer mirroring the native player: swin_size slots of slice_size
 * decoded splats, one slot replaced per frame advance. */

import { DecodedSlice, Lifespan } from "./codec.js";

function isActive(ls: Lifespan, frame: number): boolean {
  return ls.start <= frame && frame < ls.expire;
}

export interface DrawSet {
  /** Entries in canonical (birth, slot) order: [slotIndex, recordIndex] pairs. */
  count: number;
  means: Float64Array;
  quats: Float64Array;
  scales: Float64Array;
  opacities: Float64Array;
  colors: Float64Array;
}

export class SlotBuffer {
  readonly swinSize: number;
  readonly slots: (DecodedSlice | null)[];
  frame = 0;

  constructor(swinSize: number) {
    this.swinSize = swinSize;
    this.slots = new Array(swinSize).fill(null);
  }

  loadGenesis(slices: DecodedSlice[]): void {
    if (slices.length !== this.swinSize) {
      throw new Error(`genesis block has ${slices.length} slices, expected ${this.swinSize}`);
    }
    for (let i = 0; i < slices.length; i++) this.slots[i] = slices[i];
  }

  /** Replace the slot addressed by the slice's target frame (atomic swap). */
  apply(slice: DecodedSlice): number {
    const slot = slice.header.targetFrame % this.swinSize;
    if (slice.header.sliceIndex !== slot) {
      throw new Error(
        `slice index ${slice.header.sliceIndex} does not match target frame ` +
        `${slice.header.targetFrame} mod ${this.swinSize}`,
      );
    }
    this.slots[slot] = slice;
    return slot;
  }

  advance(frame: number): void {
    if (frame < this.frame) throw new Error("frame counter may not move backwards");
    this.frame = frame;
  }

  /** Active, non-padding splats in (birth, slot) order; identical ordering to
   * the native player and the offline archive render. */
  drawSet(frame?: number): DrawSet {
    const f = frame ?? this.frame;
    const entries: { birth: number; slot: number; slice: DecodedSlice }[] = [];
    for (let slot = 0; slot < this.slots.length; slot++) {
      const s = this.slots[slot];
      if (s && isActive(s.lifespan, f)) entries.push({ birth: s.lifespan.birth, slot, slice: s });
    }
    entries.sort((a, b) => (a.birth - b.birth) || (a.slot - b.slot));
    let count = 0;
    for (const e of entries) {
      for (let i = 0; i < e.slice.valid.length; i++) if (e.slice.valid[i]) count++;
    }
    const out: DrawSet = {
      count,
      means: new Float64Array(count * 3),
      quats: new Float64Array(count * 4),
      scales: new Float64Array(count * 3),
      opacities: new Float64Array(count),
      colors: new Float64Array(count * 3),
    };
    let w = 0;
    for (const e of entries) {
      const s = e.slice;
      for (let i = 0; i < s.valid.length; i++) {
        if (!s.valid[i]) continue;
        out.means.set(s.means.subarray(i * 3, i * 3 + 3), w * 3);
        out.quats.set(s.quats.subarray(i * 4, i * 4 + 4), w * 4);
        out.scales.set(s.scales.subarray(i * 3, i * 3 + 3), w * 3);
        out.opacities[w] = s.opacities[i];
        out.colors.set(s.colors.subarray(i * 3, i * 3 + 3), w * 3);
        w++;
      }
    }
    return out;
  }
}
