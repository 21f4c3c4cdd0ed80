/** Backend contract shared by the real CLIP encoder and the offline test encoder. */

export interface EmbeddingBackend {
  /** Identifier reported by /health; results are only comparable within one model. */
  readonly modelId: string;
  /** Embedding width; constant for the lifetime of the service. */
  readonly dim: number;
  embedImage(png: Buffer): Promise<number[]>;
  /** Returns the unit vector plus whether the input had to be truncated. */
  embedText(text: string): Promise<{ embedding: number[]; truncated: boolean }>;
}

export class BadInputError extends Error {}

export function l2normalize(values: Float64Array | number[]): number[] {
  let sum = 0;
  for (let i = 0; i < values.length; i++) sum += values[i] * values[i];
  const norm = Math.sqrt(sum);
  if (!(norm > 0)) throw new Error("cannot normalize a zero vector");
  const out = new Array<number>(values.length);
  for (let i = 0; i < values.length; i++) out[i] = values[i] / norm;
  return out;
}
