/**
 * Scripted end-to-end session against a live clickseg service:
 * create -> click -> refine -> undo, asserting that the mask overlay
 * changes after every step and that folding the recorded events through
 * the state reducer reproduces the server's view of the session.
 *
 * Headless: no browser binaries exist in this environment, so the test
 * drives the same modules the browser entry point uses (api, state,
 * overlay) with node's fetch, and decodes mask PNGs with pngjs instead of
 * a canvas.
 */

import { ChildProcess, spawn } from "node:child_process";
import { mkdtempSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { PNG } from "pngjs";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { SessionApi, ApiError } from "../src/api.js";
import { blendImageData } from "../src/overlay.js";
import { initialState, reduce, replay, UiEvent, UiSessionState } from "../src/state.js";

const PORT = 8123 + (process.pid % 500);
const BASE = `http://127.0.0.1:${PORT}`;

let server: ChildProcess | null = null;

function writeToyParams(dir: string): string {
  // parameter file: magic "CSTM1", u32-LE count, f64-LE weights
  const weights = [0, 0, 0, 6, -6, 0, 3, -3];
  const buf = Buffer.alloc(5 + 4 + 8 * weights.length);
  buf.write("CSTM1", 0, "ascii");
  buf.writeUInt32LE(weights.length, 5);
  weights.forEach((w, i) => buf.writeDoubleLE(w, 9 + 8 * i));
  const path = join(dir, "toy.params");
  writeFileSync(path, buf);
  return path;
}

function encodePng(width: number, height: number, fill: (x: number, y: number) => [number, number, number]): Buffer {
  const png = new PNG({ width, height });
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      const [r, g, b] = fill(x, y);
      const o = (y * width + x) * 4;
      png.data[o] = r;
      png.data[o + 1] = g;
      png.data[o + 2] = b;
      png.data[o + 3] = 255;
    }
  }
  return PNG.sync.write(png);
}

function decodeMaskBits(maskB64: string): { bits: Uint8Array; width: number; height: number } {
  const png = PNG.sync.read(Buffer.from(maskB64, "base64"));
  const bits = new Uint8Array(png.width * png.height);
  for (let i = 0; i < bits.length; i++) {
    bits[i] = png.data[i * 4] !== 0 ? 1 : 0;
  }
  return { bits, width: png.width, height: png.height };
}

const SIZE = 32;
const inBlock = (x: number, y: number) => x >= 8 && x < 24 && y >= 8 && y < 24;

const imageB64 = encodePng(SIZE, SIZE, (x, y) =>
  inBlock(x, y) ? [220, 220, 220] : [40, 40, 40],
).toString("base64");
const gtB64 = encodePng(SIZE, SIZE, (x, y) =>
  inBlock(x, y) ? [255, 255, 255] : [0, 0, 0],
).toString("base64");

async function waitForServer(): Promise<void> {
  for (let attempt = 0; attempt < 100; attempt++) {
    try {
      const resp = await fetch(`${BASE}/api/sessions/not-a-session`);
      if (resp.status === 404) return;
    } catch {
      // not up yet
    }
    await new Promise((resolve) => setTimeout(resolve, 150));
  }
  throw new Error("service did not come up");
}

beforeAll(async () => {
  const dir = mkdtempSync(join(tmpdir(), "clickseg-ui-"));
  const params = writeToyParams(dir);
  server = spawn(
    "python3",
    ["-m", "clickseg.cli", "serve", "--port", String(PORT), "--host", "127.0.0.1",
     "--model", params],
    { stdio: "ignore" },
  );
  await waitForServer();
}, 60_000);

afterAll(() => {
  server?.kill();
});

describe("live session: create -> click -> refine -> undo", () => {
  const api = new SessionApi(BASE);
  const log: UiEvent[] = [];
  let state: UiSessionState = initialState();

  function dispatch(event: UiEvent): void {
    log.push(event);
    state = reduce(state, event);
  }

  function overlayOf(maskB64: string): Uint8ClampedArray {
    const { bits } = decodeMaskBits(maskB64);
    const rgba = new Uint8ClampedArray(SIZE * SIZE * 4);
    const base = PNG.sync.read(Buffer.from(imageB64, "base64")).data;
    rgba.set(base);
    blendImageData(rgba, bits, 0.5);
    return rgba;
  }

  it("completes the scripted flow with a mask overlay update per step", async () => {
    const created = await api.createSession(imageB64, {
      gtB64,
      cfr: { mode: "fixed", n: 0, threshold: 20 },
    });
    dispatch({
      kind: "session-created",
      sessionId: created.session_id,
      width: created.width,
      height: created.height,
    });
    expect(state.width).toBe(SIZE);
    expect(state.height).toBe(SIZE);

    // -- click 1: positive in the block center
    dispatch({ kind: "click-requested", u: 16, v: 16, label: 1 });
    expect(state.pending).toBe(true);
    const r1 = await api.addClick(created.session_id, 16, 16, 1);
    dispatch({ kind: "response-received", action: "click", body: r1 });
    expect(state.step).toBe(1);
    expect(state.clicks).toEqual([{ u: 16, v: 16, label: 1 }]);
    expect(state.iou).not.toBeNull();
    const mask1 = state.maskPngB64!;
    const overlay1 = overlayOf(mask1);
    const baseRgba = new Uint8ClampedArray(SIZE * SIZE * 4);
    baseRgba.set(PNG.sync.read(Buffer.from(imageB64, "base64")).data);
    expect(overlay1).not.toEqual(baseRgba); // the overlay shows something

    // -- click 2: negative in the background corner
    dispatch({ kind: "click-requested", u: 2, v: 2, label: 0 });
    const r2 = await api.addClick(created.session_id, 2, 2, 0);
    dispatch({ kind: "response-received", action: "click", body: r2 });
    expect(state.step).toBe(2);
    const mask2 = state.maskPngB64!;
    expect(mask2).not.toBe(mask1);
    expect(overlayOf(mask2)).not.toEqual(overlay1); // overlay visibly updated

    // -- refine: inner loop only, clicks unchanged
    dispatch({ kind: "refine-requested" });
    const r3 = await api.refine(created.session_id, {
      mode: "adaptive",
      n: 3,
      threshold: 1_000_000,
    });
    dispatch({ kind: "response-received", action: "refine", body: r3 });
    expect(state.step).toBe(2); // no new click
    expect(state.innerSteps).toBe(1); // huge threshold stops after one step
    expect(state.clicks.length).toBe(2);

    // -- undo: back to the single-click state, bit-identical mask
    dispatch({ kind: "undo-requested" });
    const r4 = await api.undo(created.session_id);
    dispatch({ kind: "response-received", action: "undo", body: r4 });
    expect(state.step).toBe(1);
    expect(state.clicks).toEqual([{ u: 16, v: 16, label: 1 }]);
    expect(state.maskPngB64).toBe(mask1); // replay reproduces the exact bytes

    // server and client agree on the session afterwards
    const remote = await api.getState(created.session_id);
    expect(remote.step).toBe(1);
    expect(remote.clicks).toEqual(state.clicks);

    // -- the recorded log replays to the identical final state
    expect(replay(log)).toEqual(state);

    // out-of-bounds click is rejected and leaves the fold unchanged
    dispatch({ kind: "click-requested", u: 99, v: 99, label: 1 });
    await expect(api.addClick(created.session_id, 99, 99, 1)).rejects.toThrow(ApiError);
    dispatch({ kind: "error-received", message: "HTTP 422" });
    expect(state.clicks.length).toBe(1);
    expect(state.toasts).toEqual(["HTTP 422"]);
    expect(replay(log)).toEqual(state);

    await api.deleteSession(created.session_id);
    await expect(api.getState(created.session_id)).rejects.toThrow(ApiError);
  }, 60_000);
});
