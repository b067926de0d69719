/**
 * Frozen subword tokenizer over entity descriptions: greedy longest-match
 * against a fixed vocabulary file, with the frozen input-embedding matrix
 * derived deterministically from the tokenizer id plus the vocabulary
 * content (so a different vocabulary never silently reuses features).
 *
 * Stop-word resolution to ids happens here, not in the engine: the engine
 * stays string-free and only ever sees integer ids.
 */

import { readFileSync } from "node:fs";
import { MissingTokenizerError } from "./errors.js";
import { hashString, mulberry32, uniformFill } from "./rng.js";

export interface TextualTokenizerSpec {
  id: string;
  version: number;
  lowercase: boolean;
  featureDim: number;
}

const TEXTUAL_TOKENIZERS: Record<string, TextualTokenizerSpec> = {
  "wp-mini-v1": { id: "wp-mini-v1", version: 1, lowercase: true, featureDim: 24 },
  "wp-cased-v1": { id: "wp-cased-v1", version: 1, lowercase: false, featureDim: 24 },
};

export function getTextualTokenizer(id: string): TextualTokenizerSpec {
  const spec = TEXTUAL_TOKENIZERS[id];
  if (!spec) {
    const known = Object.keys(TEXTUAL_TOKENIZERS).join(", ");
    throw new MissingTokenizerError(
      `missing tokenizer ${JSON.stringify(id)}; known: ${known}`);
  }
  return spec;
}

/** One vocabulary entry per line; blank lines and '#' comments ignored. */
export function loadVocab(path: string): string[] {
  const vocab: string[] = [];
  const seen = new Set<string>();
  const lines = readFileSync(path, "utf-8").split("\n");
  for (let i = 0; i < lines.length; i++) {
    const entry = lines[i].trim();
    if (!entry || entry.startsWith("#")) continue;
    if (seen.has(entry)) {
      throw new Error(`${path}:${i + 1}: duplicate vocabulary entry ${JSON.stringify(entry)}`);
    }
    seen.add(entry);
    vocab.push(entry);
  }
  if (vocab.length === 0) throw new Error(`${path}: empty vocabulary`);
  return vocab;
}

export interface TextualTokenizer {
  spec: TextualTokenizerSpec;
  vocab: string[];
  index: Map<string, number>;
  maxPiece: number;
}

export function buildTextualTokenizer(id: string, vocab: string[]): TextualTokenizer {
  const spec = getTextualTokenizer(id);
  const index = new Map<string, number>();
  vocab.forEach((entry, i) => index.set(entry, i));
  const maxPiece = Math.max(...vocab.map((entry) => entry.length));
  return { spec, vocab, index, maxPiece };
}

function splitWords(spec: TextualTokenizerSpec, text: string): string[] {
  const normal = spec.lowercase ? text.toLowerCase() : text;
  return normal.split(/[^\p{L}\p{N}]+/u).filter((w) => w.length > 0);
}

/**
 * Greedy longest-match subword ids for one description. Characters that
 * start no vocabulary piece are skipped, so unknown text degrades to fewer
 * tokens instead of failing the export.
 */
export function tokenizeText(tok: TextualTokenizer, text: string): number[] {
  const ids: number[] = [];
  for (const word of splitWords(tok.spec, text)) {
    let pos = 0;
    while (pos < word.length) {
      let matched = -1;
      const limit = Math.min(word.length - pos, tok.maxPiece);
      for (let len = limit; len >= 1; len--) {
        const piece = tok.index.get(word.slice(pos, pos + len));
        if (piece !== undefined) {
          matched = piece;
          pos += len;
          break;
        }
      }
      if (matched === -1) {
        pos += 1; // no piece starts here; skip the character
      } else {
        ids.push(matched);
      }
    }
  }
  return ids;
}

/**
 * Ids of vocabulary entries that equal a lexicon word (after the tokenizer's
 * normalization). Words absent from the vocabulary resolve to nothing; every
 * present word maps to exactly one id. Returned sorted ascending.
 */
export function stopwordIds(tok: TextualTokenizer, lexicon: string[]): number[] {
  const ids = new Set<number>();
  for (const raw of lexicon) {
    const word = tok.spec.lowercase ? raw.toLowerCase() : raw;
    const id = tok.index.get(word);
    if (id !== undefined) ids.add(id);
  }
  return [...ids].sort((a, b) => a - b);
}

/** One lexicon word per line; blank lines and '#' comments ignored. */
export function loadLexicon(path: string): string[] {
  return readFileSync(path, "utf-8")
    .split("\n")
    .map((line) => line.trim())
    .filter((line) => line.length > 0 && !line.startsWith("#"));
}

/**
 * The frozen input-embedding matrix for a vocabulary, row per entry. Seeded
 * by tokenizer id, version, and every vocabulary entry, so identical inputs
 * reproduce the matrix bit for bit.
 */
export function embeddingMatrix(tok: TextualTokenizer): Float32Array {
  let seed = hashString(`${tok.spec.id}/embeddings/${tok.spec.version}`);
  for (const entry of tok.vocab) {
    seed = (Math.imul(seed, 0x01000193) ^ hashString(entry)) >>> 0;
  }
  const rng = mulberry32(seed);
  return uniformFill(rng, tok.vocab.length * tok.spec.featureDim, 1.0);
}
