/**
 * Structured text manifest describing one export: what produced the files,
 * what they cover, and sha256 checksums for tamper detection. The format is
 * line-oriented "key: value" with three indented tab-separated sections.
 * No timestamps, so repeated exports of fixed inputs are byte-identical.
 */

import { sha256File } from "./fsutil.js";
import { basename } from "node:path";

export interface ManifestInput {
  modality: "visual" | "textual";
  tokenizer: string;
  tokenizerVersion: number;
  catalogSize: number;
  featureDim: number;
  entitiesTotal: number;
  entitiesCovered: number;
  /** entity name -> number of stream lines emitted for it */
  sourceCounts: Map<string, number>;
  /** entity, input, reason triples for inputs that were skipped */
  skipped: Array<[string, string, string]>;
  /** extra key: value rows (resize policy, source files, ...) */
  extra?: Array<[string, string]>;
  /** files to checksum, in the order they should be listed */
  checksumFiles: string[];
}

export function renderManifest(info: ManifestInput): string {
  const lines: string[] = [];
  lines.push(`modality: ${info.modality}`);
  lines.push(`tokenizer: ${info.tokenizer}`);
  lines.push(`tokenizer_version: ${info.tokenizerVersion}`);
  lines.push(`catalog_size: ${info.catalogSize}`);
  lines.push(`feature_dim: ${info.featureDim}`);
  lines.push(`entities_total: ${info.entitiesTotal}`);
  lines.push(`entities_covered: ${info.entitiesCovered}`);
  for (const [key, value] of info.extra ?? []) {
    lines.push(`${key}: ${value}`);
  }
  lines.push("source_counts:");
  for (const [entity, count] of info.sourceCounts) {
    lines.push(`\t${entity}\t${count}`);
  }
  lines.push("skipped:");
  for (const [entity, input, reason] of info.skipped) {
    lines.push(`\t${entity}\t${input}\t${reason}`);
  }
  lines.push("checksums:");
  for (const path of info.checksumFiles) {
    lines.push(`\tsha256\t${sha256File(path)}\t${basename(path)}`);
  }
  return lines.join("\n") + "\n";
}

export interface ParsedManifest {
  fields: Map<string, string>;
  sourceCounts: Map<string, number>;
  skipped: Array<[string, string, string]>;
  checksums: Array<{ algo: string; digest: string; file: string }>;
}

/** Parse a manifest back; used by the verification command and tests. */
export function parseManifest(text: string): ParsedManifest {
  const fields = new Map<string, string>();
  const sourceCounts = new Map<string, number>();
  const skipped: Array<[string, string, string]> = [];
  const checksums: Array<{ algo: string; digest: string; file: string }> = [];
  let section = "";
  for (const raw of text.split("\n")) {
    if (!raw.trim()) continue;
    if (!raw.startsWith("\t")) {
      const colon = raw.indexOf(":");
      if (colon === -1) throw new Error(`bad manifest line ${JSON.stringify(raw)}`);
      const key = raw.slice(0, colon).trim();
      const value = raw.slice(colon + 1).trim();
      if (value === "") {
        section = key;
      } else {
        fields.set(key, value);
      }
      continue;
    }
    const parts = raw.slice(1).split("\t");
    if (section === "source_counts" && parts.length === 2) {
      sourceCounts.set(parts[0], Number(parts[1]));
    } else if (section === "skipped" && parts.length === 3) {
      skipped.push([parts[0], parts[1], parts[2]]);
    } else if (section === "checksums" && parts.length === 3) {
      checksums.push({ algo: parts[0], digest: parts[1], file: parts[2] });
    } else {
      throw new Error(`bad ${section || "manifest"} row ${JSON.stringify(raw)}`);
    }
  }
  return { fields, sourceCounts, skipped, checksums };
}
