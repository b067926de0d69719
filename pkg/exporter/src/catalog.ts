/**
 * Binary catalog files: the frozen feature table the engine indexes by token
 * id. Little-endian layout, matching the engine's parser exactly:
 *
 *   bytes 0-3   magic "MYTC"
 *   bytes 4-7   u32 format version (1)
 *   byte  8     u8 modality code (0 visual, 1 textual)
 *   bytes 9-12  u32 row count
 *   bytes 13-16 u32 feature dim
 *   then        row-major float32 features
 */

import { readFileSync } from "node:fs";
import { writeAtomic } from "./fsutil.js";

export const CATALOG_MAGIC = "MYTC";
export const CATALOG_VERSION = 1;
const HEADER_BYTES = 17;

export type Modality = "visual" | "textual";

const MODALITY_CODES: Record<Modality, number> = { visual: 0, textual: 1 };

export function encodeCatalog(
  modality: Modality,
  features: Float32Array,
  rows: number,
  dim: number,
): Buffer {
  if (features.length !== rows * dim) {
    throw new Error(
      `catalog payload has ${features.length} values, expected ${rows} x ${dim}`,
    );
  }
  const buf = Buffer.alloc(HEADER_BYTES + 4 * rows * dim);
  buf.write(CATALOG_MAGIC, 0, "ascii");
  buf.writeUInt32LE(CATALOG_VERSION, 4);
  buf.writeUInt8(MODALITY_CODES[modality], 8);
  buf.writeUInt32LE(rows, 9);
  buf.writeUInt32LE(dim, 13);
  for (let i = 0; i < features.length; i++) {
    buf.writeFloatLE(features[i], HEADER_BYTES + 4 * i);
  }
  return buf;
}

export function writeCatalog(
  path: string,
  modality: Modality,
  features: Float32Array,
  rows: number,
  dim: number,
): void {
  writeAtomic(path, encodeCatalog(modality, features, rows, dim));
}

export interface CatalogHeader {
  modality: Modality;
  rows: number;
  dim: number;
}

/** Read back a catalog header; used by the manifest cross-checks and tests. */
export function readCatalogHeader(path: string): CatalogHeader {
  const buf = readFileSync(path);
  if (buf.length < HEADER_BYTES) {
    throw new Error(`${path}: truncated catalog header`);
  }
  if (buf.toString("ascii", 0, 4) !== CATALOG_MAGIC) {
    throw new Error(`${path}: bad catalog magic`);
  }
  const version = buf.readUInt32LE(4);
  if (version !== CATALOG_VERSION) {
    throw new Error(`${path}: unsupported catalog version ${version}`);
  }
  const code = buf.readUInt8(8);
  const modality = code === 0 ? "visual" : code === 1 ? "textual" : null;
  if (modality === null) {
    throw new Error(`${path}: unknown modality code ${code}`);
  }
  const rows = buf.readUInt32LE(9);
  const dim = buf.readUInt32LE(13);
  if (buf.length !== HEADER_BYTES + 4 * rows * dim) {
    throw new Error(`${path}: payload size does not match header`);
  }
  return { modality, rows, dim };
}
