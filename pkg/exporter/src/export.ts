/**
 * Export orchestration: run a frozen tokenizer over entity inputs and emit
 * the three artifact kinds the engine reads (catalog binary, token stream
 * TSV, stopword id list) plus a checksummed manifest. All writes are atomic
 * (temp file + rename), and a fixed set of inputs always produces byte
 * identical outputs.
 */

import { readFileSync } from "node:fs";
import { join } from "node:path";
import { writeCatalog } from "./catalog.js";
import { writeAtomic } from "./fsutil.js";
import { loadImage, RESIZE_POLICY } from "./images.js";
import { ManifestInput, renderManifest } from "./manifest.js";
import {
  buildTextualTokenizer,
  embeddingMatrix,
  loadLexicon,
  loadVocab,
  stopwordIds,
  tokenizeText,
} from "./textual.js";
import { buildVisualTokenizer, tokenizeImage } from "./visual.js";

/** entity -> image file names, insertion order preserved. */
export function loadEntityMap(path: string): Map<string, string[]> {
  const map = new Map<string, string[]>();
  const lines = readFileSync(path, "utf-8").split("\n");
  for (let i = 0; i < lines.length; i++) {
    const line = lines[i].trim();
    if (!line || line.startsWith("#")) continue;
    const parts = lines[i].split("\t").map((p) => p.trim());
    if (parts.length !== 2 || !parts[0] || !parts[1]) {
      throw new Error(`${path}:${i + 1}: expected entity<TAB>image`);
    }
    const [entity, image] = parts;
    if (!map.has(entity)) map.set(entity, []);
    map.get(entity)!.push(image);
  }
  return map;
}

/** entity -> description text; an empty description is a valid entry. */
export function loadDescriptions(path: string): Map<string, string> {
  const map = new Map<string, string>();
  const lines = readFileSync(path, "utf-8").split("\n");
  for (let i = 0; i < lines.length; i++) {
    const raw = lines[i];
    if (!raw.trim() || raw.trimStart().startsWith("#")) continue;
    const tab = raw.indexOf("\t");
    if (tab === -1) {
      throw new Error(`${path}:${i + 1}: expected entity<TAB>description`);
    }
    const entity = raw.slice(0, tab).trim();
    if (!entity) throw new Error(`${path}:${i + 1}: empty entity name`);
    if (map.has(entity)) {
      throw new Error(`${path}:${i + 1}: duplicate entity ${JSON.stringify(entity)}`);
    }
    map.set(entity, raw.slice(tab + 1).trimEnd());
  }
  return map;
}

/** Optional entity universe: one name per line, defines coverage totals. */
export function loadEntityList(path: string): string[] {
  const names: string[] = [];
  for (const raw of readFileSync(path, "utf-8").split("\n")) {
    const line = raw.trim();
    if (line && !line.startsWith("#")) names.push(line);
  }
  return names;
}

export interface ExportResult {
  outDir: string;
  files: string[];
  entitiesCovered: number;
  entitiesTotal: number;
  skipped: number;
}

export async function exportVisualTokens(
  imageDir: string,
  entityMapPath: string,
  tokenizerId: string,
  outDir: string,
): Promise<ExportResult> {
  const tok = buildVisualTokenizer(tokenizerId);
  const entityMap = loadEntityMap(entityMapPath);

  // tokenize in parallel over entities; each job is pure, so the stream
  // order stays exactly the entity-map order regardless of completion order
  const jobs = [...entityMap.entries()].map(
    async ([entity, images]) => {
      const lines: string[] = [];
      const skipped: Array<[string, string, string]> = [];
      let index = 0;
      for (const image of images) {
        try {
          const ids = tokenizeImage(tok, loadImage(join(imageDir, image)));
          lines.push(`${entity}\t${index}\t${ids.join(" ")}`);
          index += 1;
        } catch (err) {
          skipped.push([entity, image, (err as Error).message]);
        }
      }
      return { entity, lines, skipped };
    },
  );
  const results = await Promise.all(jobs);

  const streamLines: string[] = [];
  const sourceCounts = new Map<string, number>();
  const skipped: Array<[string, string, string]> = [];
  for (const r of results) {
    streamLines.push(...r.lines);
    if (r.lines.length > 0) sourceCounts.set(r.entity, r.lines.length);
    skipped.push(...r.skipped);
  }

  const catalogPath = join(outDir, "visual_catalog.bin");
  const streamPath = join(outDir, "visual_tokens.tsv");
  writeCatalog(catalogPath, "visual", tok.codebook,
    tok.spec.codebookSize, tok.spec.featureDim);
  writeAtomic(streamPath,
    streamLines.length ? streamLines.join("\n") + "\n" : "");

  const manifest: ManifestInput = {
    modality: "visual",
    tokenizer: tok.spec.id,
    tokenizerVersion: tok.spec.version,
    catalogSize: tok.spec.codebookSize,
    featureDim: tok.spec.featureDim,
    entitiesTotal: entityMap.size,
    entitiesCovered: sourceCounts.size,
    sourceCounts,
    skipped,
    extra: [
      ["resolution", String(tok.spec.resolution)],
      ["resize_policy", `${RESIZE_POLICY} to ${tok.spec.resolution}x${tok.spec.resolution}`],
      ["tokens_per_image", String(tok.spec.grid * tok.spec.grid)],
    ],
    checksumFiles: [catalogPath, streamPath],
  };
  const manifestPath = join(outDir, "visual_manifest.txt");
  writeAtomic(manifestPath, renderManifest(manifest));

  return {
    outDir,
    files: [catalogPath, streamPath, manifestPath],
    entitiesCovered: sourceCounts.size,
    entitiesTotal: entityMap.size,
    skipped: skipped.length,
  };
}

export async function exportTextualTokens(
  descriptionsPath: string,
  vocabPath: string,
  lexiconPath: string,
  tokenizerId: string,
  outDir: string,
  entityListPath?: string,
): Promise<ExportResult> {
  const vocab = loadVocab(vocabPath);
  const tok = buildTextualTokenizer(tokenizerId, vocab);
  const descriptions = loadDescriptions(descriptionsPath);
  const lexicon = loadLexicon(lexiconPath);

  const universe = entityListPath
    ? loadEntityList(entityListPath)
    : [...descriptions.keys()];

  const streamLines: string[] = [];
  const sourceCounts = new Map<string, number>();
  const skipped: Array<[string, string, string]> = [];
  for (const entity of universe) {
    const text = descriptions.get(entity);
    if (text === undefined) {
      skipped.push([entity, descriptionsPath, "missing description"]);
      continue;
    }
    // one source per entity; an empty description still gets its line
    const ids = tokenizeText(tok, text);
    streamLines.push(`${entity}\t0\t${ids.join(" ")}`);
    sourceCounts.set(entity, 1);
  }

  const catalogPath = join(outDir, "textual_catalog.bin");
  const streamPath = join(outDir, "textual_tokens.tsv");
  const stopwordPath = join(outDir, "stopword_ids.txt");
  writeCatalog(catalogPath, "textual", embeddingMatrix(tok),
    vocab.length, tok.spec.featureDim);
  writeAtomic(streamPath,
    streamLines.length ? streamLines.join("\n") + "\n" : "");
  const stopIds = stopwordIds(tok, lexicon);
  writeAtomic(stopwordPath,
    stopIds.length ? stopIds.join("\n") + "\n" : "");

  const manifest: ManifestInput = {
    modality: "textual",
    tokenizer: tok.spec.id,
    tokenizerVersion: tok.spec.version,
    catalogSize: vocab.length,
    featureDim: tok.spec.featureDim,
    entitiesTotal: universe.length,
    entitiesCovered: sourceCounts.size,
    sourceCounts,
    skipped,
    extra: [
      ["normalization", tok.spec.lowercase ? "lowercase" : "cased"],
      ["stopword_lexicon_words", String(lexicon.length)],
      ["stopword_ids", String(stopIds.length)],
    ],
    checksumFiles: [catalogPath, streamPath, stopwordPath],
  };
  const manifestPath = join(outDir, "textual_manifest.txt");
  writeAtomic(manifestPath, renderManifest(manifest));

  return {
    outDir,
    files: [catalogPath, streamPath, stopwordPath, manifestPath],
    entitiesCovered: sourceCounts.size,
    entitiesTotal: universe.length,
    skipped: skipped.length,
  };
}
