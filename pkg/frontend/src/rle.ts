/**
 * Run-length mask codec, bit-for-bit compatible with the service.
 *
 * Wire format: space-separated run lengths over the mask flattened in
 * column-major order (down column 0, then column 1, ...), alternating
 * zero-run / one-run and always starting with the zero-run count (so a
 * mask whose first pixel is 1 starts with "0"). An all-zero mask is a
 * single run; an empty string denotes a zero-size mask.
 *
 * Decoded masks are returned row-major (index = row * width + col) for
 * direct use with canvas ImageData.
 */

/** Decode a run-length string into a row-major 0/1 byte array. */
export function decodeRle(rle: string, height: number, width: number): Uint8Array {
  if (height <= 0 || width <= 0 || !Number.isInteger(height) || !Number.isInteger(width)) {
    throw new Error(`mask dims must be positive integers, got ${height}x${width}`);
  }
  const out = new Uint8Array(height * width);
  const trimmed = rle.trim();
  const runs = trimmed === "" ? [] : trimmed.split(/\s+/).map(Number);
  let total = 0;
  let value: 0 | 1 = 0;
  for (const run of runs) {
    if (!Number.isInteger(run) || run < 0) {
      throw new Error(`run lengths must be nonnegative integers, got ${run}`);
    }
    if (value === 1) {
      for (let flat = total; flat < total + run; flat++) {
        const row = flat % height;
        const col = (flat - row) / height;
        out[row * width + col] = 1;
      }
    }
    total += run;
    value = value === 0 ? 1 : 0;
  }
  if (total !== height * width) {
    throw new Error(`run lengths sum to ${total}, expected ${height * width}`);
  }
  return out;
}

/** Encode a row-major 0/1 byte array into the wire string. */
export function encodeRle(mask: Uint8Array, height: number, width: number): string {
  if (mask.length !== height * width) {
    throw new Error(`mask length ${mask.length} does not match ${height}x${width}`);
  }
  const runs: number[] = [];
  let value: 0 | 1 = 0;
  let run = 0;
  for (let col = 0; col < width; col++) {
    for (let row = 0; row < height; row++) {
      const bit = mask[row * width + col] ? 1 : 0;
      if (bit === value) {
        run++;
      } else {
        runs.push(run);
        value = bit;
        run = 1;
      }
    }
  }
  if (height * width > 0) {
    runs.push(run);
  }
  return runs.join(" ");
}

/** Number of set pixels in a decoded mask. */
export function maskArea(mask: Uint8Array): number {
  let area = 0;
  for (let i = 0; i < mask.length; i++) {
    area += mask[i];
  }
  return area;
}
