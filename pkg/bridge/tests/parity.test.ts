import { readFileSync } from "node:fs";
import { beforeAll, describe, expect, test } from "vitest";

import {
  frobeniusNorm,
  parseContainer,
  parseFidelityCsv,
  recomputeAndCompare,
  tensorName,
  type ParsedContainer,
} from "../src/index.js";
import { makeFixtureDir, producerInit, producerInspect } from "./helpers.js";

const SEEDS = [0, 1, 2];

interface Fixture {
  container: ParsedContainer;
  csvRows: ReturnType<typeof parseFidelityCsv>;
}

const fixtures = new Map<number, Fixture>();

beforeAll(() => {
  const dir = makeFixtureDir();
  for (const seed of SEEDS) {
    const containerPath = producerInit(dir, seed);
    const csvPath = producerInspect(dir, containerPath, seed);
    fixtures.set(seed, {
      container: parseContainer(new Uint8Array(readFileSync(containerPath))),
      csvRows: parseFidelityCsv(readFileSync(csvPath, "utf-8")),
    });
  }
}, 300_000);

describe("cross-implementation parity", () => {
  test.each(SEEDS)("seed %i: recomputation matches the producer CSV", (seed) => {
    const { container, csvRows } = fixtures.get(seed)!;
    expect(csvRows).toHaveLength(36);
    const report = recomputeAndCompare(container, csvRows);
    expect(report.mismatched_heads).toEqual([]);
    expect(report.ok).toBe(true);
    for (const row of csvRows) {
      const parity = report.heads[`layer${row.layer}.head${row.head}`]!;
      expect(parity.detected).toEqual(parity.expected); // integer-exact offsets
      expect(parity.match).toBe(true);
    }
  });

  test("report maps every head to detected/expected/match", () => {
    const { container, csvRows } = fixtures.get(0)!;
    const report = recomputeAndCompare(container, csvRows);
    expect(Object.keys(report.heads)).toHaveLength(36);
    const entry = report.heads["layer0.head0"]!;
    expect(entry).toMatchObject({ match: true });
    expect(entry.detected).toHaveLength(2);
    expect(entry.expected).toHaveLength(2);
  });
});

describe("fault injection", () => {
  test("perturbing one K tensor by 10% is detected and localized", () => {
    const { container, csvRows } = fixtures.get(0)!;
    const victim = tensorName(5, 1, "k");
    const tensor = container.tensors.get(victim)!;
    const original = Float64Array.from(tensor.values);

    // additive noise at 10% of the tensor's Frobenius norm
    const noise = new Float64Array(original.length);
    let state = 12345;
    const rand = () => {
      // xorshift, uniform in (-1, 1); determinism keeps the test stable
      state ^= state << 13;
      state ^= state >>> 17;
      state ^= state << 5;
      return ((state >>> 0) / 2 ** 32) * 2 - 1;
    };
    for (let i = 0; i < noise.length; i++) noise[i] = rand();
    const scale = (0.1 * frobeniusNorm(original)) / frobeniusNorm(noise);
    for (let i = 0; i < original.length; i++) tensor.values[i] = original[i]! + scale * noise[i]!;

    try {
      const report = recomputeAndCompare(container, csvRows);
      expect(report.ok).toBe(false);
      expect(report.mismatched_heads).toEqual(["layer5.head1"]);
      expect(report.heads["layer5.head1"]!.mismatches.length).toBeGreaterThan(0);
      expect(report.heads["layer0.head0"]!.match).toBe(true);
    } finally {
      tensor.values.set(original);
    }
  });
});
