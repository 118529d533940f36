/**
 * Typed client for the segmentation session service (JSON over HTTP).
 */
import { Box } from "./coords.js";
import { Run } from "./rle.js";

export interface HistoryEntry {
  phase: string;
  round?: number;
  outer_iter?: number;
  energy?: number;
  loss_start?: number | null;
  loss_end?: number | null;
  n_up?: number;
  n_us?: number;
  seconds?: number;
}

export interface SessionState {
  session_id: string;
  box: [number, number, number, number];
  image_size: [number, number];
  crop_size: [number, number];
  scribble_count: number;
  scribbles: { fg: Run[]; bg: Run[] };
  prob_summary: { min: number; mean: number; max: number };
  history: HistoryEntry[];
  mask_rle: Run[];
  mask_size: [number, number];
  machine_time?: number;
}

export interface RefineOverrides {
  [key: string]: number | boolean;
}

export class ApiError extends Error {
  constructor(readonly status: number, readonly detail: unknown) {
    super(`service error ${status}: ${JSON.stringify(detail)}`);
  }
}

async function unwrap(res: Response): Promise<SessionState> {
  const body = await res.json().catch(() => ({}));
  if (!res.ok) throw new ApiError(res.status, (body as { detail?: unknown }).detail ?? body);
  return body as SessionState;
}

export class SegmentationClient {
  constructor(readonly baseUrl: string) {}

  async createSession(imageB64: string, box: Box): Promise<SessionState> {
    const res = await fetch(`${this.baseUrl}/sessions`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ image_b64: imageB64, box: [box.x0, box.y0, box.x1, box.y1] }),
    });
    return unwrap(res);
  }

  async refine(sessionId: string, scribbles: { fg: Run[]; bg: Run[] },
               config?: RefineOverrides): Promise<SessionState> {
    const res = await fetch(`${this.baseUrl}/sessions/${sessionId}/refine`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ scribbles, config: config ?? null }),
    });
    return unwrap(res);
  }

  async getSession(sessionId: string): Promise<SessionState> {
    return unwrap(await fetch(`${this.baseUrl}/sessions/${sessionId}`));
  }

  async deleteSession(sessionId: string): Promise<void> {
    const res = await fetch(`${this.baseUrl}/sessions/${sessionId}`, { method: "DELETE" });
    if (!res.ok && res.status !== 404) throw new ApiError(res.status, await res.text());
  }

  async getProbability(sessionId: string): Promise<{ size: [number, number]; q8: Uint8Array }> {
    const res = await fetch(`${this.baseUrl}/sessions/${sessionId}/probability`);
    const body = await res.json().catch(() => ({}));
    if (!res.ok) throw new ApiError(res.status, body);
    const { size, q8 } = body as { size: [number, number]; q8: string };
    const bin = atob(q8);
    const buf = new Uint8Array(bin.length);
    for (let i = 0; i < bin.length; i++) buf[i] = bin.charCodeAt(i);
    return { size, q8: buf };
  }
}
