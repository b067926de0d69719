import { describe, expect, it } from "vitest";
import { MissingTokenizerError } from "../src/errors";
import { parsePnm } from "../src/images";
import {
  buildVisualTokenizer,
  codebookFeatures,
  getVisualTokenizer,
  tokenizeImage,
} from "../src/visual";

function noiseImage(seed: number, width: number, height: number) {
  const bytes: number[] = [];
  let state = seed >>> 0;
  for (let i = 0; i < width * height * 3; i++) {
    state = (Math.imul(state, 1664525) + 1013904223) >>> 0;
    bytes.push(state % 256);
  }
  return parsePnm(
    Buffer.concat([
      Buffer.from(`P6\n${width} ${height}\n255\n`, "ascii"),
      Buffer.from(bytes),
    ]),
  );
}

describe("visual tokenizer", () => {
  it("rejects unknown tokenizer ids", () => {
    expect(() => getVisualTokenizer("vq-nope")).toThrow(MissingTokenizerError);
    expect(() => getVisualTokenizer("vq-nope")).toThrow(/missing tokenizer/);
  });

  it("has a frozen codebook: same id, same bytes; other id differs", () => {
    const spec = getVisualTokenizer("vq-mini-v1");
    const a = codebookFeatures(spec);
    const b = codebookFeatures(spec);
    expect(a.length).toBe(spec.codebookSize * spec.featureDim);
    expect([...a]).toEqual([...b]);
    const other = codebookFeatures(getVisualTokenizer("vq-wide-v1"));
    expect([...other.slice(0, 8)]).not.toEqual([...a.slice(0, 8)]);
  });

  it("tokenizes to grid-squared ids inside the codebook", () => {
    const tok = buildVisualTokenizer("vq-mini-v1");
    const ids = tokenizeImage(tok, noiseImage(1, 50, 40));
    expect(ids.length).toBe(tok.spec.grid * tok.spec.grid);
    for (const id of ids) {
      expect(id).toBeGreaterThanOrEqual(0);
      expect(id).toBeLessThan(tok.spec.codebookSize);
    }
  });

  it("is deterministic across independently built tokenizers", () => {
    const img = noiseImage(2, 64, 64);
    const a = tokenizeImage(buildVisualTokenizer("vq-mini-v1"), img);
    const b = tokenizeImage(buildVisualTokenizer("vq-mini-v1"), img);
    expect(a).toEqual(b);
  });

  it("maps distinct images to distinct token patterns", () => {
    const tok = buildVisualTokenizer("vq-mini-v1");
    const a = tokenizeImage(tok, noiseImage(3, 32, 32));
    const b = tokenizeImage(tok, noiseImage(4, 32, 32));
    expect(a).not.toEqual(b);
  });
});
