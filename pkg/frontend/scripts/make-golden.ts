/** Regenerates the golden corpus: per-case input files, expected output
 * artifacts, captured stdout, and the case index the replay test reads.
 *
 * Run via `npm run make-golden`. Cases run in declaration order so that
 * chained cases can consume earlier cases' expected artifacts.
 */
import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";

import {
  CASES_FILE,
  EXPECTED_DIR,
  GOLDEN_DIR,
  GoldenContext,
  INPUTS_DIR,
  STDOUT_NAME,
  copyInto,
  goldenCases,
  listFiles,
} from "../src/golden.js";
import { runCliChecked } from "../src/runner.js";

function main(): void {
  fs.rmSync(GOLDEN_DIR, { recursive: true, force: true });
  fs.mkdirSync(INPUTS_DIR, { recursive: true });
  fs.mkdirSync(EXPECTED_DIR, { recursive: true });

  const ctx: GoldenContext = {
    expectedDir: (caseId) => path.join(EXPECTED_DIR, caseId),
  };

  const cases = goldenCases();
  const index: { id: string; argv: string[] }[] = [];
  const scratch = fs.mkdtempSync(path.join(os.tmpdir(), "golden-make-"));
  try {
    for (const entry of cases) {
      const inputsDir = path.join(INPUTS_DIR, entry.id);
      fs.mkdirSync(inputsDir, { recursive: true });
      entry.prepare(inputsDir, ctx);

      const workDir = path.join(scratch, entry.id);
      copyInto(inputsDir, workDir);
      fs.mkdirSync(workDir, { recursive: true });
      const inputFiles = new Set(listFiles(workDir));

      const result = runCliChecked(entry.argv, { cwd: workDir });

      const expectedDir = path.join(EXPECTED_DIR, entry.id);
      fs.mkdirSync(expectedDir, { recursive: true });
      let artifacts = 0;
      for (const rel of listFiles(workDir)) {
        if (inputFiles.has(rel)) continue;
        const dest = path.join(expectedDir, rel);
        fs.mkdirSync(path.dirname(dest), { recursive: true });
        fs.copyFileSync(path.join(workDir, rel), dest);
        artifacts++;
      }
      fs.writeFileSync(path.join(expectedDir, STDOUT_NAME), result.stdout);

      index.push({ id: entry.id, argv: entry.argv });
      console.log(
        `${entry.id}: ${artifacts} artifact(s), ` +
          `${result.stdout.length} stdout byte(s)`,
      );
    }
  } finally {
    fs.rmSync(scratch, { recursive: true, force: true });
  }

  fs.writeFileSync(CASES_FILE, JSON.stringify(index, null, 2) + "\n");
  console.log(`${index.length} cases written to ${GOLDEN_DIR}`);
}

main();
