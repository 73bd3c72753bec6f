/**
 * Session UI state as a pure fold over user events and server responses.
 *
 * Two invariants are enforced here rather than in the DOM layer:
 *  - the rendered click list contains exactly the clicks the server has
 *    acknowledged (a click enters the list only via its mask response);
 *  - at most one request is in flight: while `pending` is true, further
 *    request events (and control edits) are ignored, so a stale response
 *    can never be applied out of order.
 *
 * Reducing a recorded event log therefore reproduces the exact final state.
 */

export interface ClickPoint {
  u: number;
  v: number;
  label: 0 | 1;
}

export type CfrMode = "fixed" | "adaptive";

export interface CfrControls {
  mode: CfrMode;
  n: number;
  threshold: number;
}

export interface ProbStats {
  min: number;
  max: number;
  mean: number;
  fg_fraction: number;
}

export interface MaskResponseBody {
  mask: string; // base64 single-channel PNG
  prob_stats: ProbStats;
  step: number;
  inner_steps: number;
  iou: number | null;
}

export type RequestKind = "click" | "refine" | "undo";

export type UiEvent =
  | { kind: "session-created"; sessionId: string; width: number; height: number }
  | { kind: "click-requested"; u: number; v: number; label: 0 | 1 }
  | { kind: "refine-requested" }
  | { kind: "undo-requested" }
  | { kind: "response-received"; action: RequestKind; body: MaskResponseBody }
  | { kind: "error-received"; message: string }
  | { kind: "controls-changed"; controls: Partial<CfrControls> }
  | { kind: "toast-dismissed" };

export interface UiSessionState {
  sessionId: string | null;
  width: number;
  height: number;
  clicks: ClickPoint[];
  step: number;
  iou: number | null;
  innerSteps: number;
  maskPngB64: string | null;
  probStats: ProbStats | null;
  pending: boolean;
  pendingClick: ClickPoint | null;
  controls: CfrControls;
  toasts: string[];
}

export const INITIAL_CONTROLS: CfrControls = { mode: "fixed", n: 0, threshold: 20 };

export function initialState(): UiSessionState {
  return {
    sessionId: null,
    width: 0,
    height: 0,
    clicks: [],
    step: 0,
    iou: null,
    innerSteps: 0,
    maskPngB64: null,
    probStats: null,
    pending: false,
    pendingClick: null,
    controls: { ...INITIAL_CONTROLS },
    toasts: [],
  };
}

export function reduce(state: UiSessionState, event: UiEvent): UiSessionState {
  switch (event.kind) {
    case "session-created":
      return {
        ...initialState(),
        sessionId: event.sessionId,
        width: event.width,
        height: event.height,
        controls: { ...state.controls },
      };

    case "click-requested": {
      if (state.pending || state.sessionId === null) return state;
      return {
        ...state,
        pending: true,
        pendingClick: { u: event.u, v: event.v, label: event.label },
      };
    }

    case "refine-requested":
    case "undo-requested": {
      if (state.pending || state.sessionId === null) return state;
      if (event.kind === "refine-requested" && state.step < 1) return state;
      if (event.kind === "undo-requested" && state.clicks.length < 1) return state;
      return { ...state, pending: true, pendingClick: null };
    }

    case "response-received": {
      if (!state.pending) return state; // stale response, nothing was in flight
      let clicks = state.clicks;
      if (event.action === "click" && state.pendingClick !== null) {
        clicks = [...state.clicks, state.pendingClick];
      } else if (event.action === "undo") {
        clicks = state.clicks.slice(0, -1);
      }
      return {
        ...state,
        clicks,
        step: event.body.step,
        iou: event.body.iou,
        innerSteps: event.body.inner_steps,
        maskPngB64: event.body.mask,
        probStats: event.body.prob_stats,
        pending: false,
        pendingClick: null,
      };
    }

    case "error-received":
      return {
        ...state,
        pending: false,
        pendingClick: null,
        toasts: [...state.toasts, event.message],
      };

    case "controls-changed": {
      if (state.pending) return state; // controls are disabled mid-request
      return { ...state, controls: { ...state.controls, ...event.controls } };
    }

    case "toast-dismissed":
      return { ...state, toasts: state.toasts.slice(1) };
  }
}

/** Fold an entire recorded log; replaying it reproduces the final state. */
export function replay(events: UiEvent[], start?: UiSessionState): UiSessionState {
  let state = start ?? initialState();
  for (const event of events) {
    state = reduce(state, event);
  }
  return state;
}
