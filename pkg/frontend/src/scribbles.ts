/**
 * Client-side scribble layer over the crop grid.
 *
 * The brush is a disc stamp rasterized here, so the server receives the
 * exact pixel set the user drew: no curve-rasterization ambiguity. A
 * pixel holds at most one label; stamping the opposite label overwrites
 * it (the later stroke wins), and the eraser clears both.
 */
import { encodeMask, Run } from "./rle.js";

export type Tool = "box" | "fg-brush" | "bg-brush" | "eraser";

export const NONE = 0;
export const FG = 1;
export const BG = 2;

export class ScribbleLayer {
  readonly width: number;
  readonly height: number;
  private labels: Uint8Array;

  constructor(width: number, height: number) {
    if (width < 1 || height < 1) throw new Error("empty scribble grid");
    this.width = width;
    this.height = height;
    this.labels = new Uint8Array(width * height);
  }

  /**
   * Stamp a disc of the given radius. Radius 1 marks exactly the single
   * pixel (cx, cy); larger radii include pixels with dx^2 + dy^2 < r^2.
   */
  stamp(cx: number, cy: number, radius: number, label: number): void {
    if (label !== FG && label !== BG && label !== NONE) throw new Error(`bad label ${label}`);
    const r = Math.max(1, Math.floor(radius));
    for (let dy = -r + 1; dy <= r - 1; dy++) {
      for (let dx = -r + 1; dx <= r - 1; dx++) {
        if (dx * dx + dy * dy >= r * r) continue;
        const x = cx + dx;
        const y = cy + dy;
        if (x < 0 || x >= this.width || y < 0 || y >= this.height) continue;
        this.labels[y * this.width + x] = label;
      }
    }
  }

  erase(cx: number, cy: number, radius: number): void {
    this.stamp(cx, cy, radius, NONE);
  }

  labelAt(x: number, y: number): number {
    return this.labels[y * this.width + x];
  }

  count(): number {
    let n = 0;
    for (const v of this.labels) if (v !== NONE) n++;
    return n;
  }

  clear(): void {
    this.labels.fill(NONE);
  }

  /** Pixels carrying a label, as "x,y" strings. */
  pixels(label: number): Set<string> {
    const out = new Set<string>();
    for (let i = 0; i < this.labels.length; i++) {
      if (this.labels[i] === label) out.add(`${i % this.width},${Math.floor(i / this.width)}`);
    }
    return out;
  }

  /** Wire form: run-length pairs per label over the crop grid. */
  runs(): { fg: Run[]; bg: Run[] } {
    const fgMask = new Uint8Array(this.labels.length);
    const bgMask = new Uint8Array(this.labels.length);
    for (let i = 0; i < this.labels.length; i++) {
      if (this.labels[i] === FG) fgMask[i] = 1;
      else if (this.labels[i] === BG) bgMask[i] = 1;
    }
    return { fg: encodeMask(fgMask), bg: encodeMask(bgMask) };
  }
}
