import { execFileSync } from "node:child_process";
import { mkdtempSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

/** Generate fixtures with the producer CLI (must be on PATH). */
export function makeFixtureDir(): string {
  return mkdtempSync(join(tmpdir(), "saiw-bridge-"));
}

export function producerInit(dir: string, seed: number, extra: string[] = []): string {
  const out = join(dir, `seed${seed}.saiw`);
  execFileSync("structattn", ["init", "--seed", String(seed), "--out", out, ...extra], {
    stdio: "pipe",
  });
  return out;
}

export function producerInspect(dir: string, container: string, seed: number): string {
  const outDir = join(dir, `inspect${seed}`);
  execFileSync("structattn", ["inspect", container, "--out-dir", outDir], { stdio: "pipe" });
  return join(outDir, "fidelity.csv");
}
