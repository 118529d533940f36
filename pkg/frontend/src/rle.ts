/**
 * Run-length mask encoding shared with the segmentation service.
 *
 * Runs are [start, length] pairs of foreground pixels over row-major
 * order; encode/decode are exact inverses for any binary mask.
 */

export type Run = [number, number];

export function encodeMask(mask: Uint8Array): Run[] {
  const runs: Run[] = [];
  let start = -1;
  for (let i = 0; i < mask.length; i++) {
    if (mask[i] !== 0 && start < 0) start = i;
    if (mask[i] === 0 && start >= 0) {
      runs.push([start, i - start]);
      start = -1;
    }
  }
  if (start >= 0) runs.push([start, mask.length - start]);
  return runs;
}

export function decodeMask(runs: ReadonlyArray<ReadonlyArray<number>>, width: number, height: number): Uint8Array {
  const mask = new Uint8Array(width * height);
  let prevEnd = 0;
  for (const run of runs) {
    if (run.length !== 2) throw new Error(`malformed RLE run [${run}]`);
    const [start, length] = run;
    if (length <= 0 || start < prevEnd || start + length > mask.length) {
      throw new Error(`invalid RLE run (${start}, ${length})`);
    }
    mask.fill(1, start, start + length);
    prevEnd = start + length;
  }
  return mask;
}

/** Decoded foreground pixels as "x,y" strings (set-friendly). */
export function decodePixels(runs: ReadonlyArray<ReadonlyArray<number>>, width: number, height: number): Set<string> {
  const mask = decodeMask(runs, width, height);
  const out = new Set<string>();
  for (let i = 0; i < mask.length; i++) {
    if (mask[i]) out.add(`${i % width},${Math.floor(i / width)}`);
  }
  return out;
}
