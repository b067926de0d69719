/**
 * Deterministic pseudo-randomness for the frozen tokenizer artifacts.
 *
 * The "pretrained" codebooks and embedding matrices are derived from string
 * seeds, so the same tokenizer id always yields byte-identical features on
 * any platform. Integer-only mixing (fnv1a + mulberry32) keeps the stream
 * exactly reproducible across JS engines.
 */

export function hashString(text: string): number {
  let h = 0x811c9dc5 >>> 0;
  for (let i = 0; i < text.length; i++) {
    h ^= text.charCodeAt(i);
    h = Math.imul(h, 0x01000193) >>> 0;
  }
  return h >>> 0;
}

export type Rng = () => number;

/** Uniform [0, 1) stream from a 32-bit seed (mulberry32). */
export function mulberry32(seed: number): Rng {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

export function seededRng(seedText: string): Rng {
  return mulberry32(hashString(seedText));
}

/** Fill a float32 array with uniform values in [-bound, bound). */
export function uniformFill(rng: Rng, count: number, bound: number): Float32Array {
  const out = new Float32Array(count);
  for (let i = 0; i < count; i++) {
    out[i] = (rng() * 2 - 1) * bound;
  }
  return out;
}
