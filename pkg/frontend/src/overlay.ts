/**
 * Pixel composition for the canvas overlays.
 *
 * Pure functions producing RGBA buffers; the DOM layer blits them with
 * putImageData. Masks always come from the service — the UI never edits
 * them locally.
 */
import { decodeMask } from "./rle.js";

export interface Rgba {
  r: number;
  g: number;
  b: number;
  a: number; // 0..255
}

export const MASK_COLOR: Rgba = { r: 64, g: 200, b: 90, a: 110 };
export const FG_COLOR: Rgba = { r: 230, g: 40, b: 40, a: 235 };   // red scribbles
export const BG_COLOR: Rgba = { r: 40, g: 80, b: 235, a: 235 };   // blue scribbles
export const BOX_COLOR: Rgba = { r: 250, g: 210, b: 40, a: 255 };

/** Semi-transparent mask overlay from service RLE runs. */
export function maskOverlay(runs: ReadonlyArray<ReadonlyArray<number>>, width: number,
                            height: number, color: Rgba = MASK_COLOR): Uint8ClampedArray<ArrayBuffer> {
  const mask = decodeMask(runs, width, height);
  const rgba = new Uint8ClampedArray(width * height * 4);
  for (let i = 0; i < mask.length; i++) {
    if (!mask[i]) continue;
    rgba[i * 4] = color.r;
    rgba[i * 4 + 1] = color.g;
    rgba[i * 4 + 2] = color.b;
    rgba[i * 4 + 3] = color.a;
  }
  return rgba;
}

/** Pixels rendered opaque by maskOverlay, as "x,y" strings. */
export function overlayPixels(rgba: Uint8ClampedArray, width: number): Set<string> {
  const out = new Set<string>();
  for (let i = 0; i * 4 < rgba.length; i++) {
    if (rgba[i * 4 + 3] > 0) out.add(`${i % width},${Math.floor(i / width)}`);
  }
  return out;
}

/**
 * Heatmap of quantized foreground probabilities (blue 0 -> red 1),
 * mirroring the confidence view of the probability output.
 */
export function probabilityHeatmap(q8: Uint8Array, width: number, height: number,
                                   alpha = 170): Uint8ClampedArray<ArrayBuffer> {
  if (q8.length !== width * height) throw new Error("probability buffer size mismatch");
  const rgba = new Uint8ClampedArray(width * height * 4);
  for (let i = 0; i < q8.length; i++) {
    const t = q8[i] / 255;
    rgba[i * 4] = Math.round(255 * t);
    rgba[i * 4 + 1] = Math.round(80 * (1 - Math.abs(t - 0.5) * 2));
    rgba[i * 4 + 2] = Math.round(255 * (1 - t));
    rgba[i * 4 + 3] = alpha;
  }
  return rgba;
}

/** Blend scribble pixels on top of an existing overlay buffer. */
export function paintScribbles(rgba: Uint8ClampedArray<ArrayBuffer>, width: number,
                               fg: Iterable<string>, bg: Iterable<string>): Uint8ClampedArray<ArrayBuffer> {
  const put = (key: string, c: Rgba) => {
    const [x, y] = key.split(",").map(Number);
    const i = (y * width + x) * 4;
    rgba[i] = c.r;
    rgba[i + 1] = c.g;
    rgba[i + 2] = c.b;
    rgba[i + 3] = c.a;
  };
  for (const k of fg) put(k, FG_COLOR);
  for (const k of bg) put(k, BG_COLOR);
  return rgba;
}
