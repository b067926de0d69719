/**
 * Frozen discrete visual tokenizer: a vector-quantization codebook over
 * image patches. The codebook features and the patch projection are derived
 * deterministically from the tokenizer id, standing in for downloaded
 * pretrained weights; they never change between runs, which is the property
 * the engine relies on (catalog ids must stay meaningful across exports).
 */

import { MissingTokenizerError } from "./errors.js";
import { centerCropScale, Image } from "./images.js";
import { seededRng, uniformFill } from "./rng.js";

export interface VisualTokenizerSpec {
  id: string;
  version: number;
  codebookSize: number;
  featureDim: number;
  /** native input resolution (square) */
  resolution: number;
  /** patches per side; tokens per image = grid * grid */
  grid: number;
}

const VISUAL_TOKENIZERS: Record<string, VisualTokenizerSpec> = {
  "vq-mini-v1": {
    id: "vq-mini-v1",
    version: 1,
    codebookSize: 64,
    featureDim: 16,
    resolution: 32,
    grid: 4,
  },
  "vq-wide-v1": {
    id: "vq-wide-v1",
    version: 1,
    codebookSize: 256,
    featureDim: 8,
    resolution: 48,
    grid: 6,
  },
};

export function getVisualTokenizer(id: string): VisualTokenizerSpec {
  const spec = VISUAL_TOKENIZERS[id];
  if (!spec) {
    const known = Object.keys(VISUAL_TOKENIZERS).join(", ");
    throw new MissingTokenizerError(
      `missing tokenizer ${JSON.stringify(id)}; known: ${known}`);
  }
  return spec;
}

/** The frozen codebook feature table, row-major (codebookSize x featureDim). */
export function codebookFeatures(spec: VisualTokenizerSpec): Float32Array {
  const rng = seededRng(`${spec.id}/codebook/${spec.version}`);
  return uniformFill(rng, spec.codebookSize * spec.featureDim, 1.0);
}

function patchValues(spec: VisualTokenizerSpec): number {
  const side = spec.resolution / spec.grid;
  return side * side * 3;
}

/** Frozen projection from raw patch pixels to the codebook feature space. */
export function patchProjection(spec: VisualTokenizerSpec): Float32Array {
  const rng = seededRng(`${spec.id}/projection/${spec.version}`);
  const fan = patchValues(spec);
  return uniformFill(rng, spec.featureDim * fan, 1.0 / Math.sqrt(fan));
}

export interface VisualTokenizer {
  spec: VisualTokenizerSpec;
  codebook: Float32Array;
  projection: Float32Array;
}

export function buildVisualTokenizer(id: string): VisualTokenizer {
  const spec = getVisualTokenizer(id);
  return {
    spec,
    codebook: codebookFeatures(spec),
    projection: patchProjection(spec),
  };
}

/** Quantize one image to grid * grid codebook ids, row-major over patches. */
export function tokenizeImage(tok: VisualTokenizer, img: Image): number[] {
  const { spec } = tok;
  const size = spec.resolution;
  const side = size / spec.grid;
  const pixels = centerCropScale(img, size);
  const fan = patchValues(spec);
  const ids: number[] = [];
  const feature = new Float64Array(spec.featureDim);

  for (let py = 0; py < spec.grid; py++) {
    for (let px = 0; px < spec.grid; px++) {
      // gather the patch, row-major, channels interleaved
      let k = 0;
      const patch = new Float64Array(fan);
      for (let y = 0; y < side; y++) {
        for (let x = 0; x < side; x++) {
          const p = 3 * ((py * side + y) * size + (px * side + x));
          patch[k++] = pixels[p];
          patch[k++] = pixels[p + 1];
          patch[k++] = pixels[p + 2];
        }
      }
      // project into feature space
      for (let f = 0; f < spec.featureDim; f++) {
        let acc = 0;
        const row = f * fan;
        for (let i = 0; i < fan; i++) acc += tok.projection[row + i] * patch[i];
        feature[f] = acc;
      }
      // nearest codebook row, ties to the smaller id
      let best = 0;
      let bestDist = Infinity;
      for (let c = 0; c < spec.codebookSize; c++) {
        let dist = 0;
        const row = c * spec.featureDim;
        for (let f = 0; f < spec.featureDim; f++) {
          const diff = feature[f] - tok.codebook[row + f];
          dist += diff * diff;
        }
        if (dist < bestDist) {
          bestDist = dist;
          best = c;
        }
      }
      ids.push(best);
    }
  }
  return ids;
}
