/** Offline deterministic encoder for contract tests and service-in-the-loop
 * runs without model weights.
 *
 * Images are box-downsampled to a 16x16 RGB grid and projected through a
 * fixed seeded Gaussian matrix; text is reduced to byte unigram/bigram
 * frequencies and projected likewise. Embeddings are continuous in the
 * pixel values, so optimization loops get a usable signal, but the space
 * carries no semantics: /health names it honestly and results are only
 * comparable against this same backend.
 */

import { EmbeddingBackend, l2normalize } from "./embedding.js";
import { decodePng } from "./png.js";

export const TEST_MODEL_ID = "deterministic-projection-v1";
const DIM = 64;
const GRID = 16;
const IMAGE_FEATURES = GRID * GRID * 3;
const TEXT_FEATURES = 512;
const MAX_TEXT_BYTES = 2048;

/** sfc32: small deterministic PRNG for the fixed projection matrices. */
function sfc32(a: number, b: number, c: number, d: number): () => number {
  return () => {
    a >>>= 0; b >>>= 0; c >>>= 0; d >>>= 0;
    const t = (a + b) | 0;
    a = b ^ (b >>> 9);
    b = (c + (c << 3)) | 0;
    c = (c << 21) | (c >>> 11);
    d = (d + 1) | 0;
    const out = (t + d) | 0;
    c = (c + out) | 0;
    return (out >>> 0) / 4294967296;
  };
}

function gaussianMatrix(rows: number, cols: number, seed: number): Float64Array {
  const rand = sfc32(0x9e3779b9 ^ seed, 0x243f6a88, 0xb7e15162, seed * 2654435761);
  const matrix = new Float64Array(rows * cols);
  for (let i = 0; i < matrix.length; i += 2) {
    // Box-Muller; deterministic in IEEE double arithmetic
    const u1 = Math.max(rand(), 1e-12);
    const u2 = rand();
    const r = Math.sqrt(-2 * Math.log(u1));
    matrix[i] = r * Math.cos(2 * Math.PI * u2);
    if (i + 1 < matrix.length) matrix[i + 1] = r * Math.sin(2 * Math.PI * u2);
  }
  return matrix;
}

const IMAGE_PROJECTION = gaussianMatrix(DIM, IMAGE_FEATURES, 101);
const TEXT_PROJECTION = gaussianMatrix(DIM, TEXT_FEATURES, 202);

function project(features: Float64Array, matrix: Float64Array): number[] {
  const out = new Float64Array(DIM);
  for (let row = 0; row < DIM; row++) {
    let acc = 0;
    const base = row * features.length;
    for (let col = 0; col < features.length; col++) {
      acc += matrix[base + col] * features[col];
    }
    out[row] = acc;
  }
  return l2normalize(out);
}

export function imageFeatures(png: Buffer): Float64Array {
  const image = decodePng(png);
  const features = new Float64Array(IMAGE_FEATURES);
  const counts = new Float64Array(GRID * GRID);
  for (let y = 0; y < image.height; y++) {
    const cy = Math.min(GRID - 1, Math.floor((y * GRID) / image.height));
    for (let x = 0; x < image.width; x++) {
      const cx = Math.min(GRID - 1, Math.floor((x * GRID) / image.width));
      const cell = cy * GRID + cx;
      const src = (y * image.width + x) * 3;
      features[cell * 3] += image.pixels[src] / 255;
      features[cell * 3 + 1] += image.pixels[src + 1] / 255;
      features[cell * 3 + 2] += image.pixels[src + 2] / 255;
      counts[cell] += 1;
    }
  }
  for (let cell = 0; cell < counts.length; cell++) {
    if (counts[cell] > 0) {
      features[cell * 3] /= counts[cell];
      features[cell * 3 + 1] /= counts[cell];
      features[cell * 3 + 2] /= counts[cell];
    }
  }
  return features;
}

export function textFeatures(text: string): Float64Array {
  const bytes = Buffer.from(text.toLowerCase(), "utf-8");
  const features = new Float64Array(TEXT_FEATURES);
  for (let i = 0; i < bytes.length; i++) {
    features[bytes[i] % 256] += 1;
    if (i + 1 < bytes.length) {
      features[256 + ((bytes[i] * 31 + bytes[i + 1]) % 256)] += 1;
    }
  }
  const total = Math.max(bytes.length, 1);
  for (let i = 0; i < features.length; i++) features[i] /= total;
  features[0] += 1e-9; // keep the vector non-zero for degenerate input
  return features;
}

export class TestProjectionBackend implements EmbeddingBackend {
  readonly modelId = TEST_MODEL_ID;
  readonly dim = DIM;

  async embedImage(png: Buffer): Promise<number[]> {
    return project(imageFeatures(png), IMAGE_PROJECTION);
  }

  async embedText(text: string): Promise<{ embedding: number[]; truncated: boolean }> {
    const bytes = Buffer.from(text, "utf-8");
    const truncated = bytes.length > MAX_TEXT_BYTES;
    const used = truncated ? bytes.subarray(0, MAX_TEXT_BYTES).toString("utf-8") : text;
    return { embedding: project(textFeatures(used), TEXT_PROJECTION), truncated };
  }
}
