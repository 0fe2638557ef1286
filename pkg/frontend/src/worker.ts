/** Dedicated sort worker: receives splat centers once per slot change and a
 * view matrix per camera move, answers with the draw order.  Buffers travel
 * as transferables.  A test-only delay can be injected per message.
 */

import { PinholeCamera } from "./camera.js";
import { busyWaitMs, depthSort } from "./pipeline.js";

interface SetCentersMsg {
  kind: "centers";
  centers: Float32Array;
  count: number;
}

interface SortMsg {
  kind: "sort";
  rotation: Float64Array;
  translation: Float64Array;
  generation: number;
  injectDelayMs?: number;
}

export type WorkerRequest = SetCentersMsg | SortMsg;

export interface SortReply {
  kind: "sorted";
  order: Uint32Array;
  generation: number;
  sortMs: number;
}

const scope = self as unknown as {
  onmessage: ((ev: MessageEvent) => void) | null;
  postMessage(msg: unknown, transfer?: Transferable[]): void;
};

let centers: Float32Array | null = null;
let count = 0;

scope.onmessage = (ev: MessageEvent) => {
  const msg = ev.data as WorkerRequest;
  if (msg.kind === "centers") {
    centers = msg.centers;
    count = msg.count;
    return;
  }
  if (msg.kind === "sort") {
    const t0 = performance.now();
    let order: Uint32Array = new Uint32Array(0);
    if (centers && count > 0) {
      const camera = {
        width: 0, height: 0, fx: 0, fy: 0, cx: 0, cy: 0,
        rotation: msg.rotation,
        translation: msg.translation,
      } as PinholeCamera;
      order = depthSort(centers, count, camera);
    }
    busyWaitMs(msg.injectDelayMs ?? 0);
    const reply: SortReply = {
      kind: "sorted",
      order,
      generation: msg.generation,
      sortMs: performance.now() - t0,
    };
    scope.postMessage(reply, [order.buffer as ArrayBuffer]);
  }
};
