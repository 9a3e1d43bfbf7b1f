/**
 * Parity CLI: `node dist/cli.js <container.saiw> <fidelity.csv> [--out report.json]`.
 *
 * Exits 0 when every head matches, 1 on any mismatch (with a per-head
 * diff on stderr), 2 on bad arguments or unreadable inputs.
 */

import { readFile, writeFile } from "node:fs/promises";
import process from "node:process";

import { parseFidelityCsv, recomputeAndCompare } from "./compare.js";
import { parseContainer } from "./saiw.js";

async function run(argv: string[]): Promise<number> {
  const positional: string[] = [];
  let outPath: string | null = null;
  for (let i = 0; i < argv.length; i++) {
    if (argv[i] === "--out") {
      outPath = argv[++i] ?? null;
      if (outPath === null) {
        console.error("--out needs a path");
        return 2;
      }
    } else {
      positional.push(argv[i]!);
    }
  }
  if (positional.length !== 2) {
    console.error("usage: parity <container.saiw> <fidelity.csv> [--out report.json]");
    return 2;
  }
  const [containerPath, csvPath] = positional;

  const container = parseContainer(new Uint8Array(await readFile(containerPath!)));
  const rows = parseFidelityCsv(await readFile(csvPath!, "utf-8"));
  const report = recomputeAndCompare(container, rows);

  if (outPath !== null) {
    await writeFile(outPath, JSON.stringify(report, null, 2) + "\n");
  }
  if (!report.ok) {
    for (const stem of report.mismatched_heads) {
      console.error(`${stem}: ${report.heads[stem]!.mismatches.join("; ")}`);
    }
    console.error(`${report.mismatched_heads.length}/${rows.length} heads mismatched`);
    return 1;
  }
  console.log(`${rows.length} heads verified, zero mismatches`);
  return 0;
}

run(process.argv.slice(2)).then(
  (code) => process.exit(code),
  (err) => {
    console.error(String(err));
    process.exit(2);
  },
);
