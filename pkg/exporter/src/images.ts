/**
 * PNM image loading (PPM color, PGM grayscale; binary and ASCII) plus the
 * fixed preprocessing: center-crop to a square, then nearest-neighbor scale
 * to the tokenizer's native resolution. Pixels come out as RGB float64 in
 * [0, 1], so downstream math is exact for a given file.
 */

import { readFileSync } from "node:fs";

export interface Image {
  width: number;
  height: number;
  /** RGB interleaved, length = width * height * 3, values in [0, 1]. */
  pixels: Float64Array;
}

const WHITESPACE = new Set([0x20, 0x09, 0x0a, 0x0d, 0x0b, 0x0c]);

class Scanner {
  pos = 0;
  constructor(readonly buf: Buffer) {}

  /** Next whitespace-delimited token, skipping '#' comments. */
  token(): string {
    const { buf } = this;
    while (this.pos < buf.length) {
      const b = buf[this.pos];
      if (WHITESPACE.has(b)) {
        this.pos++;
      } else if (b === 0x23) {
        while (this.pos < buf.length && buf[this.pos] !== 0x0a) this.pos++;
      } else {
        break;
      }
    }
    const start = this.pos;
    while (this.pos < buf.length && !WHITESPACE.has(buf[this.pos])) this.pos++;
    if (this.pos === start) throw new Error("unexpected end of header");
    return buf.toString("ascii", start, this.pos);
  }

  int(what: string): number {
    const text = this.token();
    const value = Number(text);
    if (!Number.isInteger(value) || value < 0) {
      throw new Error(`bad ${what} ${JSON.stringify(text)}`);
    }
    return value;
  }
}

export function parsePnm(buf: Buffer): Image {
  const scan = new Scanner(buf);
  const magic = scan.token();
  if (!["P2", "P3", "P5", "P6"].includes(magic)) {
    throw new Error(`bad magic ${JSON.stringify(magic)}`);
  }
  const gray = magic === "P2" || magic === "P5";
  const ascii = magic === "P2" || magic === "P3";
  const width = scan.int("width");
  const height = scan.int("height");
  const maxval = scan.int("maxval");
  if (width === 0 || height === 0) throw new Error("zero image dimension");
  if (maxval === 0 || maxval > 65535) throw new Error(`bad maxval ${maxval}`);

  const samples = width * height * (gray ? 1 : 3);
  const values = new Float64Array(samples);
  if (ascii) {
    for (let i = 0; i < samples; i++) {
      const v = scan.int("sample");
      if (v > maxval) throw new Error(`sample ${v} exceeds maxval ${maxval}`);
      values[i] = v / maxval;
    }
  } else {
    scan.pos++; // exactly one whitespace byte after maxval
    const wide = maxval > 255;
    const bytes = samples * (wide ? 2 : 1);
    if (buf.length - scan.pos < bytes) {
      throw new Error(
        `raster has ${buf.length - scan.pos} bytes, expected ${bytes}`,
      );
    }
    for (let i = 0; i < samples; i++) {
      const v = wide ? buf.readUInt16BE(scan.pos + 2 * i) : buf[scan.pos + i];
      if (v > maxval) throw new Error(`sample ${v} exceeds maxval ${maxval}`);
      values[i] = v / maxval;
    }
  }

  const pixels = new Float64Array(width * height * 3);
  for (let p = 0; p < width * height; p++) {
    if (gray) {
      pixels[3 * p] = pixels[3 * p + 1] = pixels[3 * p + 2] = values[p];
    } else {
      pixels[3 * p] = values[3 * p];
      pixels[3 * p + 1] = values[3 * p + 1];
      pixels[3 * p + 2] = values[3 * p + 2];
    }
  }
  return { width, height, pixels };
}

export function loadImage(path: string): Image {
  let buf: Buffer;
  try {
    buf = readFileSync(path);
  } catch (err) {
    throw new Error(`cannot read ${path}: ${(err as Error).message}`);
  }
  try {
    return parsePnm(buf);
  } catch (err) {
    throw new Error(`cannot parse ${path}: ${(err as Error).message}`);
  }
}

export const RESIZE_POLICY = "center-crop then nearest-neighbor scale";

/** Center-crop to a square, then nearest-neighbor resample to size x size. */
export function centerCropScale(img: Image, size: number): Float64Array {
  const side = Math.min(img.width, img.height);
  const left = Math.floor((img.width - side) / 2);
  const top = Math.floor((img.height - side) / 2);
  const out = new Float64Array(size * size * 3);
  for (let y = 0; y < size; y++) {
    const sy = top + Math.min(side - 1, Math.floor(((y + 0.5) * side) / size));
    for (let x = 0; x < size; x++) {
      const sx =
        left + Math.min(side - 1, Math.floor(((x + 0.5) * side) / size));
      const src = 3 * (sy * img.width + sx);
      const dst = 3 * (y * size + x);
      out[dst] = img.pixels[src];
      out[dst + 1] = img.pixels[src + 1];
      out[dst + 2] = img.pixels[src + 2];
    }
  }
  return out;
}
