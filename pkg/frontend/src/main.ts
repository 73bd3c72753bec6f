/**
 * DOM wiring: file pickers, the canvas view, refinement controls.
 *
 * All state lives in the pure reducer (state.ts); this layer dispatches
 * events, runs the matching network call for request events, and redraws.
 * Left click places a positive (foreground) click, right click a negative
 * one; the overlay shows the current mask in blue with green/red markers.
 */

import { SessionApi, ApiError } from "./api.js";
import { clickToImageCoords, fitTransform, ViewTransform } from "./coords.js";
import {
  blendImageData,
  NEGATIVE_CLICK_COLOR,
  POSITIVE_CLICK_COLOR,
} from "./overlay.js";
import {
  initialState,
  reduce,
  RequestKind,
  UiEvent,
  UiSessionState,
} from "./state.js";

const MASK_OPACITY = 0.5;

const api = new SessionApi("");
let state: UiSessionState = initialState();
let imageBitmap: ImageBitmap | null = null;
let imageB64: string | null = null;
let gtB64: string | null = null;
let maskBits: Uint8Array | null = null;
let transform: ViewTransform = { scale: 1, panX: 0, panY: 0 };

const canvas = document.getElementById("view") as HTMLCanvasElement;
const ctx = canvas.getContext("2d")!;
const statusLine = document.getElementById("status")!;
const toastBox = document.getElementById("toasts")!;
const imageInput = document.getElementById("image-input") as HTMLInputElement;
const gtInput = document.getElementById("gt-input") as HTMLInputElement;
const modeSelect = document.getElementById("cfr-mode") as HTMLSelectElement;
const nSlider = document.getElementById("cfr-n") as HTMLInputElement;
const nValue = document.getElementById("cfr-n-value")!;
const thresholdInput = document.getElementById("cfr-threshold") as HTMLInputElement;
const refineButton = document.getElementById("refine") as HTMLButtonElement;
const undoButton = document.getElementById("undo") as HTMLButtonElement;
const resetButton = document.getElementById("reset") as HTMLButtonElement;

function dispatch(event: UiEvent): void {
  state = reduce(state, event);
  render();
}

async function fileToB64(file: File): Promise<string> {
  const bytes = new Uint8Array(await file.arrayBuffer());
  let binary = "";
  for (const byte of bytes) binary += String.fromCharCode(byte);
  return btoa(binary);
}

async function decodeMask(pngB64: string): Promise<Uint8Array> {
  const bytes = Uint8Array.from(atob(pngB64), (c) => c.charCodeAt(0));
  const bitmap = await createImageBitmap(new Blob([bytes], { type: "image/png" }));
  const off = document.createElement("canvas");
  off.width = bitmap.width;
  off.height = bitmap.height;
  const octx = off.getContext("2d")!;
  octx.drawImage(bitmap, 0, 0);
  const data = octx.getImageData(0, 0, bitmap.width, bitmap.height).data;
  const bits = new Uint8Array(bitmap.width * bitmap.height);
  for (let i = 0; i < bits.length; i++) {
    bits[i] = data[i * 4] !== 0 ? 1 : 0;
  }
  return bits;
}

function render(): void {
  ctx.fillStyle = "#1f2430";
  ctx.fillRect(0, 0, canvas.width, canvas.height);
  if (imageBitmap !== null) {
    transform = fitTransform(state.width, state.height, canvas.width, canvas.height);
    const off = document.createElement("canvas");
    off.width = state.width;
    off.height = state.height;
    const octx = off.getContext("2d")!;
    octx.drawImage(imageBitmap, 0, 0);
    if (maskBits !== null) {
      const frame = octx.getImageData(0, 0, state.width, state.height);
      blendImageData(frame.data, maskBits, MASK_OPACITY);
      octx.putImageData(frame, 0, 0);
    }
    ctx.imageSmoothingEnabled = false;
    ctx.drawImage(
      off,
      transform.panX,
      transform.panY,
      state.width * transform.scale,
      state.height * transform.scale,
    );
    for (const click of state.clicks) {
      ctx.beginPath();
      ctx.arc(
        transform.panX + (click.u + 0.5) * transform.scale,
        transform.panY + (click.v + 0.5) * transform.scale,
        4,
        0,
        2 * Math.PI,
      );
      ctx.fillStyle = click.label === 1 ? POSITIVE_CLICK_COLOR : NEGATIVE_CLICK_COLOR;
      ctx.fill();
      ctx.strokeStyle = "#ffffff";
      ctx.stroke();
    }
  }

  const iou = state.iou === null ? "-" : state.iou.toFixed(3);
  statusLine.textContent =
    state.sessionId === null
      ? "load an image to start"
      : `step ${state.step} | inner steps ${state.innerSteps} | IoU ${iou}` +
        (state.pending ? " | waiting..." : "");

  const disabled = state.pending || state.sessionId === null;
  for (const el of [modeSelect, nSlider, thresholdInput, refineButton, undoButton, resetButton]) {
    el.disabled = disabled;
  }
  undoButton.disabled = disabled || state.clicks.length === 0;
  refineButton.disabled = disabled || state.step === 0;
  modeSelect.value = state.controls.mode === "adaptive" ? "a-cfr" : state.controls.n > 0 ? "cfr" : "stdinfer";
  nValue.textContent = String(state.controls.n);
  toastBox.textContent = state.toasts[state.toasts.length - 1] ?? "";
}

async function runRequest(action: RequestKind, body: () => Promise<unknown>): Promise<void> {
  try {
    const response = (await body()) as never;
    dispatch({ kind: "response-received", action, body: response });
    const current = state.maskPngB64;
    maskBits = current === null ? null : await decodeMask(current);
    render();
  } catch (err) {
    const message = err instanceof ApiError ? err.message : String(err);
    dispatch({ kind: "error-received", message });
  }
}

function onCanvasClick(clientX: number, clientY: number, label: 0 | 1): void {
  if (state.sessionId === null || state.pending) return;
  const rect = canvas.getBoundingClientRect();
  const point = clickToImageCoords(
    clientX - rect.left,
    clientY - rect.top,
    transform,
    state.width,
    state.height,
  );
  if (point === null) return; // outside the image: no request
  dispatch({ kind: "click-requested", u: point.u, v: point.v, label });
  if (!state.pending) return; // reducer refused (e.g. duplicate guard upstream)
  const sid = state.sessionId;
  void runRequest("click", () => api.addClick(sid, point.u, point.v, label));
}

async function createSessionFromInputs(): Promise<void> {
  if (imageB64 === null) return;
  try {
    const created = await api.createSession(imageB64, {
      gtB64: gtB64 ?? undefined,
      cfr: state.controls,
    });
    dispatch({
      kind: "session-created",
      sessionId: created.session_id,
      width: created.width,
      height: created.height,
    });
    maskBits = null;
    render();
  } catch (err) {
    const message = err instanceof ApiError ? err.message : String(err);
    dispatch({ kind: "error-received", message });
  }
}

imageInput.addEventListener("change", async () => {
  const file = imageInput.files?.[0];
  if (!file) return;
  imageB64 = await fileToB64(file);
  imageBitmap = await createImageBitmap(file);
  await createSessionFromInputs();
});

gtInput.addEventListener("change", async () => {
  const file = gtInput.files?.[0];
  if (!file) return;
  gtB64 = await fileToB64(file);
  await createSessionFromInputs(); // new session so IoU applies from click one
});

canvas.addEventListener("click", (ev) => onCanvasClick(ev.clientX, ev.clientY, 1));
canvas.addEventListener("contextmenu", (ev) => {
  ev.preventDefault();
  onCanvasClick(ev.clientX, ev.clientY, 0);
});

modeSelect.addEventListener("change", () => {
  const value = modeSelect.value;
  dispatch({
    kind: "controls-changed",
    controls:
      value === "stdinfer"
        ? { mode: "fixed", n: 0 }
        : value === "cfr"
          ? { mode: "fixed", n: Math.max(1, state.controls.n) }
          : { mode: "adaptive", n: Math.max(1, state.controls.n) },
  });
});
nSlider.addEventListener("input", () => {
  dispatch({ kind: "controls-changed", controls: { n: Number(nSlider.value) } });
});
thresholdInput.addEventListener("change", () => {
  dispatch({
    kind: "controls-changed",
    controls: { threshold: Number(thresholdInput.value) },
  });
});

refineButton.addEventListener("click", () => {
  if (state.sessionId === null) return;
  dispatch({ kind: "refine-requested" });
  if (!state.pending) return;
  const sid = state.sessionId;
  void runRequest("refine", () => api.refine(sid, state.controls));
});

undoButton.addEventListener("click", () => {
  if (state.sessionId === null) return;
  dispatch({ kind: "undo-requested" });
  if (!state.pending) return;
  const sid = state.sessionId;
  void runRequest("undo", () => api.undo(sid));
});

resetButton.addEventListener("click", async () => {
  if (state.sessionId !== null) {
    await api.deleteSession(state.sessionId);
  }
  await createSessionFromInputs();
});

render();
