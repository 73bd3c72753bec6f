/** Thin typed client for the clickseg session HTTP API. */

import type { CfrControls, MaskResponseBody } from "./state.js";

export interface CreatedSession {
  session_id: string;
  width: number;
  height: number;
}

export interface SessionStateBody extends MaskResponseBody {
  session_id: string;
  width: number;
  height: number;
  clicks: { u: number; v: number; label: 0 | 1 }[];
  config: { mode: string; n: number; threshold: number };
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
  }
}

async function parseOrThrow<T>(resp: Response): Promise<T> {
  if (!resp.ok) {
    let detail = resp.statusText;
    try {
      const body = (await resp.json()) as { detail?: unknown };
      if (body && body.detail !== undefined) detail = JSON.stringify(body.detail);
    } catch {
      // non-JSON error body; keep the status text
    }
    throw new ApiError(resp.status, detail);
  }
  return (await resp.json()) as T;
}

export class SessionApi {
  constructor(readonly baseUrl: string = "") {}

  private url(path: string): string {
    return `${this.baseUrl}${path}`;
  }

  async createSession(
    imageB64: string,
    options: { gtB64?: string; cfr?: CfrControls } = {},
  ): Promise<CreatedSession> {
    const body: Record<string, unknown> = { image_b64: imageB64 };
    if (options.gtB64) body.gt_b64 = options.gtB64;
    if (options.cfr) {
      body.cfr = {
        mode: options.cfr.mode,
        n: options.cfr.n,
        threshold: options.cfr.threshold,
      };
    }
    const resp = await fetch(this.url("/api/sessions"), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    return parseOrThrow<CreatedSession>(resp);
  }

  async addClick(
    sessionId: string,
    u: number,
    v: number,
    label: 0 | 1,
  ): Promise<MaskResponseBody> {
    const resp = await fetch(this.url(`/api/sessions/${sessionId}/clicks`), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ u, v, label }),
    });
    return parseOrThrow<MaskResponseBody>(resp);
  }

  async refine(sessionId: string, cfr: CfrControls): Promise<MaskResponseBody> {
    const resp = await fetch(this.url(`/api/sessions/${sessionId}/refine`), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ mode: cfr.mode, n: cfr.n, threshold: cfr.threshold }),
    });
    return parseOrThrow<MaskResponseBody>(resp);
  }

  async undo(sessionId: string): Promise<MaskResponseBody> {
    const resp = await fetch(this.url(`/api/sessions/${sessionId}/undo`), {
      method: "POST",
    });
    return parseOrThrow<MaskResponseBody>(resp);
  }

  async getState(sessionId: string): Promise<SessionStateBody> {
    const resp = await fetch(this.url(`/api/sessions/${sessionId}`));
    return parseOrThrow<SessionStateBody>(resp);
  }

  async deleteSession(sessionId: string): Promise<void> {
    const resp = await fetch(this.url(`/api/sessions/${sessionId}`), {
      method: "DELETE",
    });
    if (!resp.ok && resp.status !== 404) {
      throw new ApiError(resp.status, resp.statusText);
    }
  }
}
