import { describe, expect, it } from "vitest";

import { configDiff, sameInstance } from "../src/diff.js";

describe("configDiff", () => {
  it("returns no rows for identical configs", () => {
    const config = { method: "pgd", lambda_d: 0.001, seed: 7 };
    expect(configDiff(config, { ...config })).toEqual([]);
  });

  it("reports per-key differences, sorted", () => {
    const a = { method: "pgd", lambda_d: 0.001, distance_norm: "l1" };
    const b = { method: "pgd", lambda_d: 0.1, distance_norm: "l2" };
    const rows = configDiff(a, b);
    expect(rows).toEqual([
      { key: "distance_norm", a: "l1", b: "l2" },
      { key: "lambda_d", a: 0.001, b: 0.1 },
    ]);
  });

  it("includes keys missing on one side", () => {
    const rows = configDiff({ tau: 5 }, { tau: 5, diversity_k: 4 });
    expect(rows).toEqual([{ key: "diversity_k", a: undefined, b: 4 }]);
  });
});

describe("sameInstance", () => {
  const base = { dataset_id: "d", split: "eval", index: 2 };
  it("matches identical refs", () => {
    expect(sameInstance(base, { ...base })).toBe(true);
  });
  it("flags any differing coordinate", () => {
    expect(sameInstance(base, { ...base, index: 3 })).toBe(false);
    expect(sameInstance(base, { ...base, split: "train" })).toBe(false);
    expect(sameInstance(base, { ...base, dataset_id: "x" })).toBe(false);
  });
});
