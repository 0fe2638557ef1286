/** Network layer: manifest fetch, one chunked /stream request with
 * incremental parsing, and /slice re-fetching for quality switches. */

import { DecodedSlice, Manifest, StreamParser, unpackSlice } from "./codec.js";

export async function fetchManifest(baseUrl: string): Promise<Manifest> {
  const r = await fetch(`${baseUrl}/manifest`);
  if (!r.ok) throw new Error(`manifest fetch failed: ${r.status}`);
  return (await r.json()) as Manifest;
}

export interface StreamProgress {
  bytes: number;
  slices: number;
}

/** Stream init + slices, invoking onSlice as each one completes parsing.
 * Abortable so a quality switch can drop the stream and continue through
 * the /slice endpoint. */
export async function streamContainer(
  baseUrl: string,
  manifest: Manifest,
  quality: number,
  onSlice: (slice: DecodedSlice, isGenesis: boolean) => void,
  onProgress?: (p: StreamProgress) => void,
  signal?: AbortSignal,
): Promise<void> {
  const url = quality < 1.0
    ? `${baseUrl}/stream?q=${quality}`
    : `${baseUrl}/stream`;
  const r = await fetch(url, { signal });
  if (!r.ok || !r.body) throw new Error(`stream fetch failed: ${r.status}`);
  let slices = 0;
  let bytes = 0;
  const parser = new StreamParser(manifest, (slice, isGenesis) => {
    slices += 1;
    onSlice(slice, isGenesis);
  });
  const reader = r.body.getReader();
  for (;;) {
    const { done, value } = await reader.read();
    if (done) break;
    bytes += value.byteLength;
    parser.push(value);
    onProgress?.({ bytes, slices });
  }
}

/** Re-fetch one slice at a given quality (ABR switching path). */
export async function fetchSlice(
  baseUrl: string,
  manifest: Manifest,
  targetFrame: number,
  quality: number,
): Promise<DecodedSlice> {
  const r = await fetch(`${baseUrl}/slice/${targetFrame}?q=${quality}`);
  if (!r.ok) throw new Error(`slice ${targetFrame} fetch failed: ${r.status}`);
  const data = new Uint8Array(await r.arrayBuffer());
  return unpackSlice(data, manifest.profile, manifest.slice_size, manifest.swin_size).slice;
}
