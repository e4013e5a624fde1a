import { describe, expect, it } from "vitest";

import type { GenerateResponse } from "../src/api.js";
import {
  canGenerate,
  generateFailed,
  generateStarted,
  generateSucceeded,
  initialState,
  selectAnchor,
  selectCategory,
  selectStyle,
  withCategories,
  withItems,
  withStyles,
} from "../src/state.js";

const response: GenerateResponse = {
  anchor_item_id: "item-1",
  template: ["topwear", "bottomwear"],
  results: [{ style: "Casual", outfits: [] }],
};

describe("guarded generate flow", () => {
  it("cannot generate before category and anchor are chosen", () => {
    let s = initialState();
    expect(canGenerate(s)).toBe(false);
    s = selectCategory(s, "topwear");
    expect(canGenerate(s)).toBe(false);
    s = selectAnchor(s, "item-1");
    expect(canGenerate(s)).toBe(true);
  });

  it("generateStarted throws without a valid anchor", () => {
    expect(() => generateStarted(initialState())).toThrow(/anchor/);
  });

  it("changing category resets anchor, styles and results", () => {
    let s = selectCategory(initialState(), "topwear");
    s = withItems(s, [{ item_id: "item-1", coarse_category: "topwear", fine_category: null }]);
    s = selectAnchor(s, "item-1");
    s = withStyles(s, ["Casual"]);
    s = generateStarted(s);
    s = generateSucceeded(s, s.requestSeq, response);
    s = selectCategory(s, "bottomwear");
    expect(s.selectedAnchor).toBeNull();
    expect(s.items).toEqual([]);
    expect(s.styles).toEqual([]);
    expect(s.response).toBeNull();
    expect(canGenerate(s)).toBe(false);
  });
});

describe("request supersession", () => {
  function readyState() {
    let s = selectCategory(initialState(), "topwear");
    s = selectAnchor(s, "item-1");
    return s;
  }

  it("newer request supersedes an older response", () => {
    let s = readyState();
    s = generateStarted(s);
    const staleSeq = s.requestSeq;
    s = generateStarted(s); // user clicked again before the first returned
    const freshSeq = s.requestSeq;
    s = generateSucceeded(s, staleSeq, response);
    expect(s.response).toBeNull(); // stale result dropped
    expect(s.loading).toBe(true);
    s = generateSucceeded(s, freshSeq, response);
    expect(s.response).toBe(response);
    expect(s.loading).toBe(false);
  });

  it("stale errors are also dropped", () => {
    let s = readyState();
    s = generateStarted(s);
    const staleSeq = s.requestSeq;
    s = generateStarted(s);
    s = generateFailed(s, staleSeq, { code: "x", message: "old failure" });
    expect(s.error).toBeNull();
    expect(s.loading).toBe(true);
  });

  it("current error is shown and clears on next start", () => {
    let s = readyState();
    s = generateStarted(s);
    s = generateFailed(s, s.requestSeq, { code: "unknown_item", message: "nope" });
    expect(s.error?.code).toBe("unknown_item");
    expect(s.loading).toBe(false);
    s = generateStarted(s);
    expect(s.error).toBeNull();
  });
});

describe("style selection", () => {
  it("keeps 'all' as default and falls back when styles change", () => {
    let s = withCategories(initialState(), ["topwear"]);
    s = selectCategory(s, "topwear");
    s = withStyles(s, ["Casual", "Sporty"]);
    expect(s.selectedStyle).toBe("all");
    s = selectStyle(s, "Sporty");
    s = withStyles(s, ["Casual"]); // Sporty no longer legitimate
    expect(s.selectedStyle).toBe("all");
  });
});
