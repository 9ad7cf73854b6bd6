#!/usr/bin/env node
/**
 * report --in DIR --out DIR
 *
 * Renders the figures and HTML index from fmm-lab CSV/JSON outputs found
 * under --in (recursively; multiple runs overlay).  Exit 0 on success,
 * 1 on bad arguments or schema mismatch.
 */

import * as path from "node:path";
import { fileURLToPath } from "node:url";

import { SchemaMismatch } from "./csv.js";
import { renderReport } from "./report.js";

function parseArgs(argv: string[]): { inDir: string; outDir: string } {
  let inDir: string | undefined;
  let outDir: string | undefined;
  for (let i = 0; i < argv.length; i += 1) {
    if (argv[i] === "--in") inDir = argv[++i];
    else if (argv[i] === "--out") outDir = argv[++i];
    else throw new Error(`unknown argument: ${argv[i]}`);
  }
  if (!inDir || !outDir) throw new Error("usage: report --in DIR --out DIR");
  return { inDir, outDir };
}

export function main(argv: string[]): number {
  try {
    const { inDir, outDir } = parseArgs(argv);
    const result = renderReport({ inputDir: inDir, outputDir: outDir });
    for (const s of result.sections) {
      console.log(`${s.name}: ${s.status}${s.figure ? ` -> ${s.figure}` : ""}`);
    }
    console.log(`index: ${result.indexPath}`);
    return 0;
  } catch (err) {
    if (err instanceof SchemaMismatch) {
      console.error(err.message);
    } else {
      console.error(err instanceof Error ? err.message : String(err));
    }
    return 1;
  }
}

const invokedDirectly =
  process.argv[1] !== undefined &&
  fileURLToPath(import.meta.url) === path.resolve(process.argv[1]);
if (invokedDirectly) {
  process.exit(main(process.argv.slice(2)));
}
