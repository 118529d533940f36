/**
 * Coordinate transforms between the displayed canvas, the image, and the
 * session's crop grid (the resized box interior the server segments).
 *
 * The server is coordinate-simple: it only ever sees crop-grid pixels.
 * All conversion happens here, using the box and crop size returned at
 * session creation.
 */

export interface Box {
  x0: number;
  y0: number;
  x1: number; // inclusive
  y1: number; // inclusive
}

export interface CropGeometry {
  box: Box;
  cropWidth: number;
  cropHeight: number;
}

export function boxWidth(box: Box): number {
  return box.x1 - box.x0 + 1;
}

export function boxHeight(box: Box): number {
  return box.y1 - box.y0 + 1;
}

/** Canvas (CSS pixel) position to image pixel under a uniform display scale. */
export function canvasToImage(cx: number, cy: number, scale: number): [number, number] {
  return [Math.floor(cx / scale), Math.floor(cy / scale)];
}

/**
 * Image pixel to crop-grid pixel (pixel-center convention, clamped).
 * Returns null when the image pixel lies outside the box.
 */
export function imageToCrop(ix: number, iy: number, geo: CropGeometry): [number, number] | null {
  const { box, cropWidth, cropHeight } = geo;
  if (ix < box.x0 || ix > box.x1 || iy < box.y0 || iy > box.y1) return null;
  const fx = ((ix - box.x0 + 0.5) * cropWidth) / boxWidth(box);
  const fy = ((iy - box.y0 + 0.5) * cropHeight) / boxHeight(box);
  const cx = Math.min(Math.max(Math.floor(fx), 0), cropWidth - 1);
  const cy = Math.min(Math.max(Math.floor(fy), 0), cropHeight - 1);
  return [cx, cy];
}

/** Crop-grid pixel back to the image-pixel block it covers (for rendering). */
export function cropToImageRect(cx: number, cy: number, geo: CropGeometry): Box {
  const { box, cropWidth, cropHeight } = geo;
  const w = boxWidth(box);
  const h = boxHeight(box);
  const x0 = box.x0 + Math.ceil((cx * w) / cropWidth - 0.5);
  const x1 = box.x0 + Math.ceil(((cx + 1) * w) / cropWidth - 0.5) - 1;
  const y0 = box.y0 + Math.ceil((cy * h) / cropHeight - 0.5);
  const y1 = box.y0 + Math.ceil(((cy + 1) * h) / cropHeight - 0.5) - 1;
  return { x0, y0, x1: Math.max(x0, x1), y1: Math.max(y0, y1) };
}

/** Normalize a drag rectangle into an inclusive, clamped box. */
export function dragToBox(ax: number, ay: number, bx: number, by: number,
                          imageWidth: number, imageHeight: number): Box {
  const clamp = (v: number, hi: number) => Math.min(Math.max(v, 0), hi - 1);
  return {
    x0: clamp(Math.min(ax, bx), imageWidth),
    y0: clamp(Math.min(ay, by), imageHeight),
    x1: clamp(Math.max(ax, bx), imageWidth),
    y1: clamp(Math.max(ay, by), imageHeight),
  };
}
