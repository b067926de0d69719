#!/usr/bin/env node
/**
 * Command line front end.
 *
 *   mygo-export visual  --images DIR --map MAP.tsv --tokenizer ID --out DIR
 *   mygo-export textual --descriptions D.tsv --vocab V.txt --stopwords S.txt
 *                       --tokenizer ID --out DIR [--entities E.tsv]
 *   mygo-export verify  --manifest M.txt
 *
 * Exit codes: 0 success, 2 bad usage or unknown tokenizer, 3 bad input data.
 */

import { readFileSync, realpathSync } from "node:fs";
import { dirname, join } from "node:path";
import { parseArgs } from "node:util";
import { pathToFileURL } from "node:url";
import { readCatalogHeader } from "./catalog.js";
import { MissingTokenizerError } from "./errors.js";
import { sha256File } from "./fsutil.js";
import { exportTextualTokens, exportVisualTokens } from "./export.js";
import { parseManifest } from "./manifest.js";

const USAGE = `usage:
  mygo-export visual  --images DIR --map MAP.tsv --tokenizer ID --out DIR
  mygo-export textual --descriptions D.tsv --vocab V.txt --stopwords S.txt \\
                      --tokenizer ID --out DIR [--entities E.tsv]
  mygo-export verify  --manifest MANIFEST.txt`;

function required(values: Record<string, unknown>, names: string[]): string[] {
  const out: string[] = [];
  for (const name of names) {
    const v = values[name];
    if (typeof v !== "string" || v === "") {
      throw new UsageError(`missing required option --${name}`);
    }
    out.push(v);
  }
  return out;
}

class UsageError extends Error {}

async function runVisual(argv: string[]): Promise<void> {
  const { values } = parseArgs({
    args: argv,
    options: {
      images: { type: "string" },
      map: { type: "string" },
      tokenizer: { type: "string" },
      out: { type: "string" },
    },
  });
  const [images, map, tokenizer, out] = required(values, [
    "images", "map", "tokenizer", "out",
  ]);
  const result = await exportVisualTokens(images, map, tokenizer, out);
  console.log(
    `visual export: ${result.entitiesCovered}/${result.entitiesTotal} ` +
    `entities covered, ${result.skipped} inputs skipped -> ${result.outDir}`,
  );
}

async function runTextual(argv: string[]): Promise<void> {
  const { values } = parseArgs({
    args: argv,
    options: {
      descriptions: { type: "string" },
      vocab: { type: "string" },
      stopwords: { type: "string" },
      tokenizer: { type: "string" },
      out: { type: "string" },
      entities: { type: "string" },
    },
  });
  const [descriptions, vocab, stopwords, tokenizer, out] = required(values, [
    "descriptions", "vocab", "stopwords", "tokenizer", "out",
  ]);
  const result = await exportTextualTokens(
    descriptions, vocab, stopwords, tokenizer, out, values.entities,
  );
  console.log(
    `textual export: ${result.entitiesCovered}/${result.entitiesTotal} ` +
    `entities covered, ${result.skipped} missing -> ${result.outDir}`,
  );
}

function runVerify(argv: string[]): void {
  const { values } = parseArgs({
    args: argv,
    options: { manifest: { type: "string" } },
  });
  const [manifestPath] = required(values, ["manifest"]);
  const manifest = parseManifest(readFileSync(manifestPath, "utf-8"));
  const dir = dirname(manifestPath);

  for (const { algo, digest, file } of manifest.checksums) {
    if (algo !== "sha256") throw new Error(`unknown checksum algo ${algo}`);
    const actual = sha256File(join(dir, file));
    if (actual !== digest) {
      throw new Error(`checksum mismatch for ${file}`);
    }
    if (file.endsWith(".bin")) {
      const header = readCatalogHeader(join(dir, file));
      const size = Number(manifest.fields.get("catalog_size"));
      const dim = Number(manifest.fields.get("feature_dim"));
      if (header.rows !== size || header.dim !== dim) {
        throw new Error(
          `catalog header ${header.rows}x${header.dim} does not match ` +
          `manifest ${size}x${dim}`,
        );
      }
    }
  }
  console.log(
    `manifest ok: ${manifest.checksums.length} files verified, ` +
    `${manifest.sourceCounts.size} entities covered`,
  );
}

export async function main(argv: string[]): Promise<number> {
  try {
    const [command, ...rest] = argv;
    if (command === "visual") await runVisual(rest);
    else if (command === "textual") await runTextual(rest);
    else if (command === "verify") runVerify(rest);
    else throw new UsageError(`unknown command ${JSON.stringify(command ?? "")}`);
    return 0;
  } catch (err) {
    const code = (err as NodeJS.ErrnoException).code ?? "";
    if (err instanceof UsageError || code.startsWith("ERR_PARSE_ARGS")) {
      console.error(`error: ${(err as Error).message}\n${USAGE}`);
      return 2;
    }
    if (err instanceof MissingTokenizerError) {
      console.error(`error: ${err.message}`);
      return 2;
    }
    console.error(`error: ${(err as Error).message}`);
    return 3;
  }
}

function invokedDirectly(): boolean {
  if (!process.argv[1]) return false;
  try {
    return import.meta.url === pathToFileURL(realpathSync(process.argv[1])).href;
  } catch {
    return false;
  }
}

if (invokedDirectly()) {
  main(process.argv.slice(2)).then((code) => {
    process.exitCode = code;
  });
}
