/** Minimal PNG decoder for the offline test backend.
 *
 * Supports non-interlaced 8-bit gray, gray+alpha, RGB and RGBA images,
 * which covers everything the renderer emits. Anything else is rejected
 * as undecodable input.
 */

import zlib from "node:zlib";
import { BadInputError } from "./embedding.js";

const PNG_SIGNATURE = Buffer.from([0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a]);

export interface RgbImage {
  width: number;
  height: number;
  /** Row-major RGB triples, one byte per channel. */
  pixels: Uint8Array;
}

const CHANNELS: Record<number, number> = { 0: 1, 2: 3, 4: 2, 6: 4 };

export function decodePng(data: Buffer): RgbImage {
  if (data.length < 8 || !data.subarray(0, 8).equals(PNG_SIGNATURE)) {
    throw new BadInputError("not a PNG file");
  }
  let offset = 8;
  let width = 0;
  let height = 0;
  let colorType = -1;
  const idat: Buffer[] = [];
  while (offset + 8 <= data.length) {
    const length = data.readUInt32BE(offset);
    const kind = data.toString("ascii", offset + 4, offset + 8);
    const body = data.subarray(offset + 8, offset + 8 + length);
    if (kind === "IHDR") {
      width = body.readUInt32BE(0);
      height = body.readUInt32BE(4);
      const bitDepth = body.readUInt8(8);
      colorType = body.readUInt8(9);
      const interlace = body.readUInt8(12);
      if (bitDepth !== 8) throw new BadInputError(`unsupported bit depth ${bitDepth}`);
      if (!(colorType in CHANNELS)) throw new BadInputError(`unsupported color type ${colorType}`);
      if (interlace !== 0) throw new BadInputError("interlaced PNGs are not supported");
    } else if (kind === "IDAT") {
      idat.push(body);
    } else if (kind === "IEND") {
      break;
    }
    offset += 12 + length;
  }
  if (width === 0 || height === 0 || idat.length === 0) {
    throw new BadInputError("PNG is missing image data");
  }
  let raw: Buffer;
  try {
    raw = zlib.inflateSync(Buffer.concat(idat));
  } catch {
    throw new BadInputError("PNG image data does not inflate");
  }
  const channels = CHANNELS[colorType];
  const stride = width * channels;
  if (raw.length < (stride + 1) * height) {
    throw new BadInputError("PNG image data is truncated");
  }

  // undo per-row filters (types 0-4)
  const unfiltered = new Uint8Array(stride * height);
  for (let y = 0; y < height; y++) {
    const filter = raw[y * (stride + 1)];
    const rowIn = raw.subarray(y * (stride + 1) + 1, (y + 1) * (stride + 1));
    const row = unfiltered.subarray(y * stride, (y + 1) * stride);
    const prev = y > 0 ? unfiltered.subarray((y - 1) * stride, y * stride) : null;
    for (let x = 0; x < stride; x++) {
      const a = x >= channels ? row[x - channels] : 0;
      const b = prev ? prev[x] : 0;
      const c = prev && x >= channels ? prev[x - channels] : 0;
      let value = rowIn[x];
      switch (filter) {
        case 0:
          break;
        case 1:
          value = (value + a) & 0xff;
          break;
        case 2:
          value = (value + b) & 0xff;
          break;
        case 3:
          value = (value + ((a + b) >> 1)) & 0xff;
          break;
        case 4: {
          const p = a + b - c;
          const pa = Math.abs(p - a);
          const pb = Math.abs(p - b);
          const pc = Math.abs(p - c);
          const predictor = pa <= pb && pa <= pc ? a : pb <= pc ? b : c;
          value = (value + predictor) & 0xff;
          break;
        }
        default:
          throw new BadInputError(`unsupported PNG filter ${filter}`);
      }
      row[x] = value;
    }
  }

  const pixels = new Uint8Array(width * height * 3);
  for (let i = 0; i < width * height; i++) {
    const src = i * channels;
    if (channels >= 3) {
      pixels[i * 3] = unfiltered[src];
      pixels[i * 3 + 1] = unfiltered[src + 1];
      pixels[i * 3 + 2] = unfiltered[src + 2];
    } else {
      pixels[i * 3] = pixels[i * 3 + 1] = pixels[i * 3 + 2] = unfiltered[src];
    }
  }
  return { width, height, pixels };
}
