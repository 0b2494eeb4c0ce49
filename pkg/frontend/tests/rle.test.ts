/**
 * Run-length codec against the golden vectors shared with the service.
 *
 * The vectors file lives in the service's test data; both sides decode
 * and encode the exact same strings, so any drift in the wire format
 * breaks one suite or the other.
 */

import { readFileSync } from "node:fs";
import { resolve } from "node:path";
import { describe, expect, it } from "vitest";
import { decodeRle, encodeRle, maskArea } from "../src/rle.js";

interface GoldenVector {
  name: string;
  height: number;
  width: number;
  rle: string;
  /** Set pixels as [row, col] pairs. */
  pixels: [number, number][];
}

// vitest runs with the package root as cwd; the vectors live in the
// service's test data one level up
const vectorsPath = resolve(process.cwd(), "../tests/data/rle_vectors.json");
const golden = JSON.parse(readFileSync(vectorsPath, "utf-8")) as {
  vectors: GoldenVector[];
};

function maskFromPixels(v: GoldenVector): Uint8Array {
  const mask = new Uint8Array(v.height * v.width);
  for (const [row, col] of v.pixels) {
    mask[row * v.width + col] = 1;
  }
  return mask;
}

describe("golden vectors", () => {
  for (const vector of golden.vectors) {
    it(`decodes ${vector.name}`, () => {
      const decoded = decodeRle(vector.rle, vector.height, vector.width);
      expect(Array.from(decoded)).toEqual(Array.from(maskFromPixels(vector)));
    });

    it(`encodes ${vector.name}`, () => {
      expect(encodeRle(maskFromPixels(vector), vector.height, vector.width)).toBe(
        vector.rle,
      );
    });
  }
});

describe("round trips", () => {
  it("survives random masks", () => {
    let seed = 1234;
    const next = () => {
      // small LCG: deterministic without a dependency
      seed = (seed * 1103515245 + 12345) % 2147483648;
      return seed / 2147483648;
    };
    for (let trial = 0; trial < 50; trial++) {
      const height = 1 + Math.floor(next() * 12);
      const width = 1 + Math.floor(next() * 12);
      const mask = new Uint8Array(height * width);
      for (let i = 0; i < mask.length; i++) {
        mask[i] = next() < 0.4 ? 1 : 0;
      }
      const decoded = decodeRle(encodeRle(mask, height, width), height, width);
      expect(Array.from(decoded)).toEqual(Array.from(mask));
    }
  });

  it("counts runs that cross column boundaries", () => {
    // 2x3 all ones: column-major runs collapse to a single one-run
    const mask = new Uint8Array([1, 1, 1, 1, 1, 1]);
    expect(encodeRle(mask, 2, 3)).toBe("0 6");
    expect(maskArea(decodeRle("0 6", 2, 3))).toBe(6);
  });
});

describe("error handling", () => {
  it("rejects run sums that miss the mask size", () => {
    expect(() => decodeRle("3", 2, 2)).toThrow(/sum to 3/);
  });

  it("rejects negative runs", () => {
    expect(() => decodeRle("-1 5", 2, 2)).toThrow(/nonnegative/);
  });

  it("rejects fractional runs", () => {
    expect(() => decodeRle("1.5 2.5", 2, 2)).toThrow(/nonnegative integers/);
  });

  it("rejects bad dimensions", () => {
    expect(() => decodeRle("4", 0, 4)).toThrow(/positive/);
  });

  it("rejects mismatched encode buffers", () => {
    expect(() => encodeRle(new Uint8Array(3), 2, 2)).toThrow(/does not match/);
  });
});
