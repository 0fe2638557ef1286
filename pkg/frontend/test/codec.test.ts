import { describe, expect, it } from "vitest";

import { f16ToNumber, unpackSlice } from "../src/codec.js";
import {
  decodeGoldenStream,
  expectedGenerations,
  goldenManifest,
  readFixture,
  readJson,
} from "./helpers.js";

describe("f16 widening", () => {
  it("handles normals, subnormals, zero, infinity", () => {
    expect(f16ToNumber(0x0000)).toBe(0);
    expect(f16ToNumber(0x3c00)).toBe(1);
    expect(f16ToNumber(0xbc00)).toBe(-1);
    expect(f16ToNumber(0x3555)).toBeCloseTo(0.333251953125, 15);
    expect(f16ToNumber(0x0001)).toBe(2 ** -24); // smallest subnormal
    expect(f16ToNumber(0x7c00)).toBe(Infinity);
    expect(f16ToNumber(0x7bff)).toBe(65504); // largest normal
  });
});

describe("golden container decode conformance", () => {
  it("decodes every generation to values identical to the native decoder", () => {
    const gens = decodeGoldenStream();
    const expected = expectedGenerations();
    expect(gens.length).toBe(expected.length);
    for (let g = 0; g < gens.length; g++) {
      const got = gens[g];
      const want = expected[g];
      expect(got.header.targetFrame).toBe(want.target_frame);
      expect(got.header.sliceIndex).toBe(want.slice_index);
      expect(got.header.keptCount).toBe(want.kept_count);
      expect([got.lifespan.birth, got.lifespan.start, got.lifespan.expire])
        .toEqual(want.lifespan);
      // Exact f64 equality: same bytes, same decode maps, same doubles.
      expect(Array.from(got.means)).toEqual(want.means);
      expect(Array.from(got.quats)).toEqual(want.quats);
      expect(Array.from(got.scales)).toEqual(want.scales);
      expect(Array.from(got.opacities)).toEqual(want.opacities);
      expect(Array.from(got.colors)).toEqual(want.colors);
      expect(Array.from(got.valid)).toEqual(want.valid);
    }
  });

  it("parses identically regardless of chunk boundaries", () => {
    const whole = decodeGoldenStream();
    for (const chunk of [1, 7, 13, 64, 1021]) {
      const chunked = decodeGoldenStream(goldenManifest(), chunk);
      expect(chunked.length).toBe(whole.length);
      for (let i = 0; i < whole.length; i++) {
        expect(Array.from(chunked[i].means)).toEqual(Array.from(whole[i].means));
        expect(Array.from(chunked[i].quats)).toEqual(Array.from(whole[i].quats));
      }
    }
  });

  it("materializes subsampled slices with inert padding", () => {
    const manifest = goldenManifest();
    const info = readJson<{ kept_count: number }>("abr_slice.json");
    const { slice } = unpackSlice(
      readFixture("abr_slice.bin"), manifest.profile,
      manifest.slice_size, manifest.swin_size,
    );
    expect(slice.header.keptCount).toBe(info.kept_count);
    expect(slice.valid.length).toBe(manifest.slice_size);
    let valid = 0;
    for (let i = 0; i < slice.valid.length; i++) valid += slice.valid[i];
    expect(valid).toBe(info.kept_count);
    for (let i = info.kept_count; i < manifest.slice_size; i++) {
      expect(slice.opacities[i]).toBe(0);
    }
  });

  it("rejects bad magic", () => {
    const manifest = goldenManifest();
    const data = readFixture("golden_stream.bin").slice(0, 200);
    data[0] = 0x58;
    expect(() => unpackSlice(data, manifest.profile, manifest.slice_size,
                             manifest.swin_size)).toThrow(/magic/);
  });
});
