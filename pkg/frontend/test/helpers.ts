import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import { DecodedSlice, Manifest, StreamParser, genesisLifespan } from "../src/codec.js";

const here = dirname(fileURLToPath(import.meta.url));

export function fixturePath(name: string): string {
  return join(here, "fixtures", name);
}

export function readFixture(name: string): Uint8Array {
  return new Uint8Array(readFileSync(fixturePath(name)));
}

export function readJson<T>(name: string): T {
  return JSON.parse(readFileSync(fixturePath(name), "utf-8")) as T;
}

export function goldenManifest(): Manifest {
  return readJson<Manifest>("golden_manifest.json");
}

export interface ExpectedGeneration {
  target_frame: number;
  slice_index: number;
  kept_count: number;
  lifespan: [number, number, number];
  means: number[];
  quats: number[];
  scales: number[];
  opacities: number[];
  colors: number[];
  valid: number[];
}

export function expectedGenerations(): ExpectedGeneration[] {
  return readJson<ExpectedGeneration[]>("golden_decode.json");
}

/** Decode the full golden stream into generations with true lifespans. */
export function decodeGoldenStream(
  manifest = goldenManifest(),
  chunkSize = Infinity,
): DecodedSlice[] {
  const data = readFixture("golden_stream.bin");
  const out: DecodedSlice[] = [];
  const parser = new StreamParser(manifest, (slice, isGenesis) => {
    if (isGenesis) {
      slice.lifespan = genesisLifespan(out.length, manifest.swin_size);
    }
    out.push(slice);
  });
  if (!isFinite(chunkSize)) {
    parser.push(data);
  } else {
    for (let off = 0; off < data.length; off += chunkSize) {
      parser.push(data.subarray(off, Math.min(off + chunkSize, data.length)));
    }
  }
  return out;
}
