/** Browser free-viewpoint player.
 *
 * Fetches the manifest and the chunked slice stream, maintains the slot
 * buffer, advances one slot per frame tick, and draws through WebGL2 with
 * orbit/pan/zoom live during playback.  The overlay shows per-stage latency
 * (preprocess / sort / texture / overall, rolling averages) and the ingest
 * rate; the quality slider re-requests subsequent slices at a lower q.
 */

import { SlotBuffer } from "./buffer.js";
import { DecodedSlice, Manifest } from "./codec.js";
import { OrbitCamera } from "./camera.js";
import { SplatRenderer } from "./gl.js";
import { fetchManifest, fetchSlice, streamContainer } from "./net.js";
import { runPipeline, StageTimings } from "./pipeline.js";

interface Rolling {
  preproc: number[];
  sort: number[];
  texture: number[];
  overall: number[];
}

function pushRolling(r: Rolling, t: StageTimings): void {
  const cap = 30;
  r.preproc.push(t.preprocMs);
  r.sort.push(t.sortMs);
  r.texture.push(t.textureMs);
  r.overall.push(t.overallMs);
  for (const arr of [r.preproc, r.sort, r.texture, r.overall]) {
    if (arr.length > cap) arr.shift();
  }
}

function avg(xs: number[]): number {
  return xs.length ? xs.reduce((a, b) => a + b, 0) / xs.length : 0;
}

async function boot(): Promise<void> {
  const params = new URLSearchParams(location.search);
  const src = params.get("src") ?? location.origin;
  let quality = Number(params.get("q") ?? "1.0");

  const canvas = document.getElementById("view") as HTMLCanvasElement;
  const overlay = document.getElementById("overlay") as HTMLDivElement;
  const playBtn = document.getElementById("play") as HTMLButtonElement;
  const qSlider = document.getElementById("quality") as HTMLInputElement;
  qSlider.value = String(quality);

  const manifest: Manifest = await fetchManifest(src);
  const buffer = new SlotBuffer(manifest.swin_size);
  const renderer = new SplatRenderer(canvas);
  const orbit = new OrbitCamera(canvas.width, canvas.height, 1.1 * canvas.width);

  const pending: DecodedSlice[] = [];
  const genesis: DecodedSlice[] = [];
  let genesisReady = false;
  let netBytes = 0;
  let highestTarget = 0;
  const streamAbort = new AbortController();

  const acceptSlice = (slice: DecodedSlice, isGenesis: boolean): void => {
    if (isGenesis) {
      genesis.push(slice);
      if (genesis.length === manifest.swin_size) {
        buffer.loadGenesis(genesis);
        genesisReady = true;
      }
    } else {
      pending.push(slice);
      highestTarget = Math.max(highestTarget, slice.header.targetFrame);
    }
  };

  void streamContainer(src, manifest, quality, acceptSlice, (p) => {
    netBytes = p.bytes;
  }, streamAbort.signal).catch((err) => {
    if (!streamAbort.signal.aborted) throw err;
  });

  let playing = true;
  let playbackFrame = 0;
  let lastTick = performance.now();
  const frameInterval = 1000.0 / Math.max(manifest.fps, 1e-6);
  const rolling: Rolling = { preproc: [], sort: [], texture: [], overall: [] };
  let cachedSort: { order: Uint32Array; cameraKey: string } | null = null;
  let drawSetDirty = true;

  playBtn.onclick = () => {
    playing = !playing;
    playBtn.textContent = playing ? "pause" : "play";
  };
  let switching = false;
  qSlider.oninput = async () => {
    quality = Number(qSlider.value);
    if (switching) return;
    switching = true;
    // Quality switch: drop the chunked stream and continue fetching the
    // remaining slices individually at the new q.
    streamAbort.abort();
    try {
      let next = Math.max(highestTarget, playbackFrame);
      const last = manifest.total_frames - 1;
      while (next < last) {
        next += 1;
        const slice = await fetchSlice(src, manifest, next, quality);
        acceptSlice(slice, false);
        netBytes += 16 + slice.header.keptCount * manifest.bytes_per_record;
        quality = Number(qSlider.value); // follow further slider moves
      }
    } finally {
      switching = false;
    }
  };

  // Orbit / pan / zoom, live during playback.
  let dragging = false;
  let panning = false;
  let lastX = 0;
  let lastY = 0;
  canvas.onpointerdown = (e) => {
    dragging = true;
    panning = e.shiftKey || e.button === 2;
    lastX = e.clientX;
    lastY = e.clientY;
    canvas.setPointerCapture(e.pointerId);
  };
  canvas.onpointerup = () => {
    dragging = false;
  };
  canvas.onpointermove = (e) => {
    if (!dragging) return;
    const dx = e.clientX - lastX;
    const dy = e.clientY - lastY;
    lastX = e.clientX;
    lastY = e.clientY;
    if (panning) orbit.pan(dx * 0.004, dy * 0.004);
    else orbit.orbit(dx * 0.008, -dy * 0.008);
  };
  canvas.onwheel = (e) => {
    e.preventDefault();
    orbit.zoom(Math.exp(e.deltaY * 0.001));
  };
  canvas.oncontextmenu = (e) => e.preventDefault();

  const tick = (): void => {
    requestAnimationFrame(tick);
    if (!genesisReady) {
      overlay.textContent = `loading genesis... ${(netBytes / 1e3).toFixed(0)} kB`;
      return;
    }
    const nowMs = performance.now();
    if (playing && nowMs - lastTick >= frameInterval
        && playbackFrame + 1 < manifest.total_frames) {
      const next = playbackFrame + 1;
      if (pending.length > 0 && pending[0].header.targetFrame === next) {
        const slice = pending.shift()!;
        buffer.apply(slice);
        buffer.advance(next);
        playbackFrame = next;
        lastTick = nowMs;
        drawSetDirty = true;
      }
      // Otherwise stall at the current frame until the slice arrives.
    }

    const camera = orbit.toCamera();
    const set = buffer.drawSet();
    const result = runPipeline(set, camera, { cachedSort: drawSetDirty ? null : cachedSort });
    cachedSort = { order: result.order, cameraKey: result.cameraKey };
    drawSetDirty = false;
    renderer.upload(result.texture, result.opacitiesInOrder);
    const t0 = performance.now();
    renderer.draw(camera);
    const drawMs = performance.now() - t0;
    pushRolling(rolling, result.timings);

    overlay.textContent = [
      `frame ${playbackFrame + 1}/${manifest.total_frames} `
      + `(${playing ? "playing" : "paused"}, q=${quality.toFixed(2)})`,
      `splats ${set.count}  net ${(netBytes / 1e6).toFixed(2)} MB`,
      `preproc ${avg(rolling.preproc).toFixed(2)} ms  `
      + `sort ${avg(rolling.sort).toFixed(2)} ms${result.sortReused ? " (reused)" : ""}`,
      `texture ${avg(rolling.texture).toFixed(2)} ms  draw ${drawMs.toFixed(2)} ms`,
      `overall ${avg(rolling.overall).toFixed(2)} ms`,
    ].join("\n");
  };
  requestAnimationFrame(tick);
}

boot().catch((err) => {
  const overlay = document.getElementById("overlay");
  if (overlay) overlay.textContent = `error: ${err}`;
  console.error(err);
});
