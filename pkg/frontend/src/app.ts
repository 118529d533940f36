/**
 * Browser app: draw a box, create a session, brush corrective scribbles,
 * refine, inspect diagnostics. The interaction loop:
 *
 *   load image -> drag box -> "Segment box" -> overlay initial mask
 *     -> brush fg (red) / bg (blue) scribbles -> "Refine" -> updated mask
 *     -> repeat, or "Refine (no scribbles)" for the unsupervised mode.
 *
 * Masks always come from the service; this file only renders them.
 * Scribbles are committed server-side on a successful refine and the
 * local layer is cleared; on failure everything drawn is preserved.
 */
import { SegmentationClient, SessionState, ApiError } from "./client.js";
import { Box, CropGeometry, canvasToImage, cropToImageRect, dragToBox, imageToCrop } from "./coords.js";
import { BOX_COLOR, maskOverlay, probabilityHeatmap } from "./overlay.js";
import { BG, FG, ScribbleLayer, Tool } from "./scribbles.js";
import { Run } from "./rle.js";

interface AppState {
  tool: Tool;
  radius: number;
  scale: number;
  imageB64: string | null;
  imageWidth: number;
  imageHeight: number;
  box: Box | null;
  dragStart: [number, number] | null;
  session: SessionState | null;
  geometry: CropGeometry | null;
  layer: ScribbleLayer | null;
  maskHistory: Run[][]; // snapshots for undo, newest last
  pending: boolean;
  showHeatmap: boolean;
}

const state: AppState = {
  tool: "box",
  radius: 2,
  scale: 4,
  imageB64: null,
  imageWidth: 0,
  imageHeight: 0,
  box: null,
  dragStart: null,
  session: null,
  geometry: null,
  layer: null,
  maskHistory: [],
  pending: false,
  showHeatmap: false,
};

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
};

const client = new SegmentationClient(
  (document.body.dataset.api ?? `${location.protocol}//${location.hostname}:8000`));

function status(msg: string, isError = false): void {
  const el = $("status");
  el.textContent = msg;
  el.className = isError ? "status error" : "status";
}

function setPending(pending: boolean): void {
  state.pending = pending;
  for (const id of ["refine", "refine-unsup", "segment"]) {
    ($(id) as HTMLButtonElement).disabled = pending;
  }
}

// ---------------------------------------------------------------- rendering

function baseCanvas(): HTMLCanvasElement {
  return $("image-canvas");
}

function overlayCanvas(): HTMLCanvasElement {
  return $("overlay-canvas");
}

async function drawBase(): Promise<void> {
  if (!state.imageB64) return;
  const img = new Image();
  await new Promise<void>((ok, err) => {
    img.onload = () => ok();
    img.onerror = () => err(new Error("cannot decode image"));
    img.src = `data:image/png;base64,${state.imageB64}`;
  });
  state.imageWidth = img.naturalWidth;
  state.imageHeight = img.naturalHeight;
  for (const c of [baseCanvas(), overlayCanvas()]) {
    c.width = img.naturalWidth * state.scale;
    c.height = img.naturalHeight * state.scale;
  }
  const ctx = baseCanvas().getContext("2d")!;
  ctx.imageSmoothingEnabled = false;
  ctx.drawImage(img, 0, 0, baseCanvas().width, baseCanvas().height);
  renderOverlay();
}

function renderOverlay(): void {
  const ctx = overlayCanvas().getContext("2d")!;
  ctx.clearRect(0, 0, overlayCanvas().width, overlayCanvas().height);
  ctx.imageSmoothingEnabled = false;

  if (state.session && !state.showHeatmap) {
    const [w, h] = state.session.mask_size;
    const buf = maskOverlay(state.session.mask_rle, w, h);
    blit(ctx, buf, w, h, 0, 0, state.scale);
  }

  if (state.box) {
    ctx.strokeStyle = `rgb(${BOX_COLOR.r},${BOX_COLOR.g},${BOX_COLOR.b})`;
    ctx.lineWidth = 2;
    ctx.strokeRect(state.box.x0 * state.scale, state.box.y0 * state.scale,
                   (state.box.x1 - state.box.x0 + 1) * state.scale,
                   (state.box.y1 - state.box.y0 + 1) * state.scale);
  }

  if (state.layer && state.geometry) {
    drawScribblePixels(ctx);
  }
}

function blit(ctx: CanvasRenderingContext2D, rgba: Uint8ClampedArray<ArrayBuffer>, w: number, h: number,
              dx: number, dy: number, scale: number): void {
  const tmp = document.createElement("canvas");
  tmp.width = w;
  tmp.height = h;
  tmp.getContext("2d")!.putImageData(new ImageData(rgba, w, h), 0, 0);
  ctx.drawImage(tmp, dx * scale, dy * scale, w * scale, h * scale);
}

function drawScribblePixels(ctx: CanvasRenderingContext2D): void {
  const layer = state.layer!;
  const geo = state.geometry!;
  const paint = (keys: Set<string>, css: string) => {
    ctx.fillStyle = css;
    for (const key of keys) {
      const [cx, cy] = key.split(",").map(Number);
      const rect = cropToImageRect(cx, cy, geo);
      ctx.fillRect(rect.x0 * state.scale, rect.y0 * state.scale,
                   (rect.x1 - rect.x0 + 1) * state.scale,
                   (rect.y1 - rect.y0 + 1) * state.scale);
    }
  };
  paint(layer.pixels(FG), "rgba(230,40,40,0.95)");
  paint(layer.pixels(BG), "rgba(40,80,235,0.95)");
}

async function renderHeatmap(): Promise<void> {
  if (!state.session || !state.geometry) return;
  const { size, q8 } = await client.getProbability(state.session.session_id);
  const [w, h] = size;
  const buf = probabilityHeatmap(q8, w, h);
  // the heatmap lives on the crop grid; stretch it over the box
  const ctx = overlayCanvas().getContext("2d")!;
  ctx.clearRect(0, 0, overlayCanvas().width, overlayCanvas().height);
  const box = state.geometry.box;
  const tmp = document.createElement("canvas");
  tmp.width = w;
  tmp.height = h;
  tmp.getContext("2d")!.putImageData(new ImageData(buf, w, h), 0, 0);
  ctx.imageSmoothingEnabled = false;
  ctx.drawImage(tmp, box.x0 * state.scale, box.y0 * state.scale,
                (box.x1 - box.x0 + 1) * state.scale,
                (box.y1 - box.y0 + 1) * state.scale);
}

// -------------------------------------------------------------- diagnostics

function renderDiagnostics(s: SessionState): void {
  const rows = s.history
    .filter((h) => h.phase === "refine")
    .map((h) => `<tr><td>${h.round}.${h.outer_iter}</td>`
      + `<td>${h.energy?.toFixed(2) ?? "-"}</td>`
      + `<td>${h.loss_start?.toFixed(4) ?? "-"} → ${h.loss_end?.toFixed(4) ?? "-"}</td>`
      + `<td>${h.n_up}</td><td>${h.n_us}</td>`
      + `<td>${((h.seconds ?? 0) * 1000).toFixed(0)} ms</td></tr>`)
    .join("");
  $("diag-body").innerHTML = rows || "<tr><td colspan=6>no refinements yet</td></tr>";
  const p = s.prob_summary;
  $("diag-summary").textContent =
    `scribbles: ${s.scribble_count} | p in [${p.min.toFixed(3)}, ${p.max.toFixed(3)}], `
    + `mean ${p.mean.toFixed(3)}`
    + (s.machine_time !== undefined ? ` | machine time ${(s.machine_time * 1000).toFixed(0)} ms` : "");
}

// -------------------------------------------------------------- interaction

function applySession(s: SessionState, pushHistory = true): void {
  state.session = s;
  if (pushHistory) state.maskHistory.push(s.mask_rle);
  renderDiagnostics(s);
  state.showHeatmap = false;
  renderOverlay();
}

async function onSegment(): Promise<void> {
  if (!state.imageB64 || !state.box) {
    status("load an image and drag a box first", true);
    return;
  }
  setPending(true);
  try {
    const s = await client.createSession(state.imageB64, state.box);
    state.geometry = {
      box: { x0: s.box[0], y0: s.box[1], x1: s.box[2], y1: s.box[3] },
      cropWidth: s.crop_size[0],
      cropHeight: s.crop_size[1],
    };
    state.layer = new ScribbleLayer(s.crop_size[0], s.crop_size[1]);
    state.maskHistory = [];
    applySession(s);
    status(`session ${s.session_id.slice(0, 8)}… created; brush scribbles and refine`);
  } catch (e) {
    status(e instanceof ApiError ? e.message : `failed: ${e}`, true);
  } finally {
    setPending(false);
  }
}

async function onRefine(unsupervised: boolean): Promise<void> {
  if (!state.session || !state.layer) {
    status("segment a box first", true);
    return;
  }
  if (state.pending) return;
  const runs = unsupervised ? { fg: [], bg: [] } : state.layer.runs();
  setPending(true);
  try {
    const s = await client.refine(state.session.session_id, runs);
    state.layer.clear(); // committed server-side; accumulated in the session
    applySession(s);
    status(`refined in ${((s.machine_time ?? 0) * 1000).toFixed(0)} ms`);
  } catch (e) {
    // keep the drawn annotations so the user can adjust and resubmit
    status(e instanceof ApiError ? e.message : `refine failed: ${e}`, true);
  } finally {
    setPending(false);
  }
}

function onUndo(): void {
  if (!state.session || state.maskHistory.length < 2) {
    status("nothing to undo");
    return;
  }
  state.maskHistory.pop();
  state.session = { ...state.session, mask_rle: state.maskHistory[state.maskHistory.length - 1] };
  renderOverlay();
  status("restored previous mask snapshot");
}

function pointerPos(ev: PointerEvent): [number, number] {
  const rect = overlayCanvas().getBoundingClientRect();
  return canvasToImage(ev.clientX - rect.left, ev.clientY - rect.top, state.scale);
}

function brushAt(ix: number, iy: number): void {
  if (!state.layer || !state.geometry) return;
  const hit = imageToCrop(ix, iy, state.geometry);
  if (!hit) return; // strokes are clipped to the box
  const [cx, cy] = hit;
  if (state.tool === "fg-brush") state.layer.stamp(cx, cy, state.radius, FG);
  else if (state.tool === "bg-brush") state.layer.stamp(cx, cy, state.radius, BG);
  else if (state.tool === "eraser") state.layer.erase(cx, cy, state.radius);
  renderOverlay();
}

function bindCanvas(): void {
  const canvas = overlayCanvas();
  let brushing = false;
  canvas.addEventListener("pointerdown", (ev) => {
    const [ix, iy] = pointerPos(ev);
    if (state.tool === "box") {
      state.dragStart = [ix, iy];
    } else {
      brushing = true;
      brushAt(ix, iy);
    }
    canvas.setPointerCapture(ev.pointerId);
  });
  canvas.addEventListener("pointermove", (ev) => {
    const [ix, iy] = pointerPos(ev);
    if (state.tool === "box" && state.dragStart) {
      state.box = dragToBox(state.dragStart[0], state.dragStart[1], ix, iy,
                            state.imageWidth, state.imageHeight);
      renderOverlay();
    } else if (brushing) {
      brushAt(ix, iy);
    }
  });
  canvas.addEventListener("pointerup", () => {
    state.dragStart = null;
    brushing = false;
  });
}

function bindControls(): void {
  for (const tool of ["box", "fg-brush", "bg-brush", "eraser"] as Tool[]) {
    $(`tool-${tool}`).addEventListener("click", () => {
      state.tool = tool;
      document.querySelectorAll(".tool").forEach((b) => b.classList.remove("active"));
      $(`tool-${tool}`).classList.add("active");
    });
  }
  ($("radius") as HTMLInputElement).addEventListener("input", (ev) => {
    state.radius = Number((ev.target as HTMLInputElement).value);
    $("radius-label").textContent = String(state.radius);
  });
  $("segment").addEventListener("click", () => void onSegment());
  $("refine").addEventListener("click", () => void onRefine(false));
  $("refine-unsup").addEventListener("click", () => void onRefine(true));
  $("undo").addEventListener("click", onUndo);
  $("toggle-heatmap").addEventListener("click", () => {
    state.showHeatmap = !state.showHeatmap;
    if (state.showHeatmap) void renderHeatmap();
    else renderOverlay();
  });
  ($("file") as HTMLInputElement).addEventListener("change", async (ev) => {
    const file = (ev.target as HTMLInputElement).files?.[0];
    if (!file) return;
    const buf = new Uint8Array(await file.arrayBuffer());
    let bin = "";
    for (const b of buf) bin += String.fromCharCode(b);
    state.imageB64 = btoa(bin);
    state.box = null;
    state.session = null;
    state.layer = null;
    state.maskHistory = [];
    await drawBase();
    status("image loaded; drag a bounding box");
  });
}

export function start(): void {
  bindControls();
  bindCanvas();
  status("load a grayscale PNG/PGM to begin");
}

if (typeof document !== "undefined" && document.readyState !== "loading") {
  start();
} else if (typeof document !== "undefined") {
  document.addEventListener("DOMContentLoaded", start);
}
