/**
 * Report assembly: discover experiment outputs under an input directory,
 * render one SVG per figure family, and write a single HTML index.
 *
 * Rendering is read-only on the inputs and deterministic: identical inputs
 * give byte-identical SVG and HTML (fixed styles, no timestamps).  Missing
 * optional inputs are noted, never fatal; malformed CSVs abort with a
 * SchemaMismatch naming the offending column.
 */

import * as fs from "node:fs";
import * as path from "node:path";

import { decayFigure, DecayRun, decayRunFromCsv, wegnerFigure } from "./figures.js";

export interface ReportBundle {
  inputDir: string;
  outputDir: string;
}

export interface SectionResult {
  name: string;
  status: "rendered" | "not run";
  figure?: string; // file name relative to outputDir
  sources: string[];
  configHashes: string[];
}

export interface ReportResult {
  sections: SectionResult[];
  indexPath: string;
}

function findFiles(root: string, fileName: string): string[] {
  const hits: string[] = [];
  const walk = (dir: string) => {
    let entries: fs.Dirent[];
    try {
      entries = fs.readdirSync(dir, { withFileTypes: true });
    } catch {
      return;
    }
    for (const e of entries.sort((a, b) => a.name.localeCompare(b.name))) {
      const p = path.join(dir, e.name);
      if (e.isDirectory()) walk(p);
      else if (e.name === fileName) hits.push(p);
    }
  };
  walk(root);
  return hits;
}

function readSibling(csvPath: string, suffix: string): string | null {
  const p = csvPath.replace(/\.csv$/, suffix);
  return fs.existsSync(p) ? fs.readFileSync(p, "utf-8") : null;
}

export function renderReport(bundle: ReportBundle): ReportResult {
  fs.mkdirSync(bundle.outputDir, { recursive: true });
  const sections: SectionResult[] = [];

  // decay: every fm-decay.csv found becomes one overlaid series
  const decayFiles = findFiles(bundle.inputDir, "fm-decay.csv");
  if (decayFiles.length > 0) {
    const runs: DecayRun[] = decayFiles.map((f) =>
      decayRunFromCsv(fs.readFileSync(f, "utf-8"), readSibling(f, ".json")),
    );
    const svg = decayFigure(runs);
    fs.writeFileSync(path.join(bundle.outputDir, "decay.svg"), svg);
    sections.push({
      name: "Fractional-moment decay",
      status: "rendered",
      figure: "decay.svg",
      sources: decayFiles.map((f) => path.relative(bundle.inputDir, f)),
      configHashes: runs.map((r) => r.configHash),
    });
  } else {
    sections.push({
      name: "Fractional-moment decay",
      status: "not run",
      sources: [],
      configHashes: [],
    });
  }

  // wegner: first hit renders (one figure per report)
  const wegnerFiles = findFiles(bundle.inputDir, "wegner.csv");
  if (wegnerFiles.length > 0) {
    const text = fs.readFileSync(wegnerFiles[0], "utf-8");
    const svg = wegnerFigure(text);
    fs.writeFileSync(path.join(bundle.outputDir, "wegner.svg"), svg);
    const hash = text.split("\n")[1]?.split(",").at(-1)?.trim() ?? "unknown";
    sections.push({
      name: "Wegner eigenvalue counting",
      status: "rendered",
      figure: "wegner.svg",
      sources: wegnerFiles.slice(0, 1).map((f) => path.relative(bundle.inputDir, f)),
      configHashes: [hash],
    });
  } else {
    sections.push({
      name: "Wegner eigenvalue counting",
      status: "not run",
      sources: [],
      configHashes: [],
    });
  }

  const indexPath = path.join(bundle.outputDir, "index.html");
  fs.writeFileSync(indexPath, indexHtml(sections));
  return { sections, indexPath };
}

function esc(s: string): string {
  return s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

export function indexHtml(sections: SectionResult[]): string {
  const body = sections
    .map((s) => {
      if (s.status === "not run") {
        return `<section>
<h2>${esc(s.name)}</h2>
<p class="notice">not run</p>
</section>`;
      }
      const hashes = s.configHashes.map((h) => `<code>${esc(h)}</code>`).join(", ");
      const sources = s.sources.map((f) => `<code>${esc(f)}</code>`).join(", ");
      return `<section>
<h2>${esc(s.name)}</h2>
<p>config ${hashes} &mdash; source ${sources}</p>
<figure><img src="${s.figure}" alt="${esc(s.name)}" width="720" height="480"></figure>
</section>`;
    })
    .join("\n");
  return `<!DOCTYPE html>
<html lang="en">
<head>
<meta charset="utf-8">
<title>fmm-lab report</title>
<style>
body { font: 15px/1.5 Georgia, serif; max-width: 60em; margin: 2em auto; color: #1f2328; }
h1 { font-size: 1.5em; border-bottom: 1px solid #d0d7de; padding-bottom: .3em; }
h2 { font-size: 1.15em; margin-top: 1.6em; }
code { background: #f6f8fa; padding: 0 .25em; border-radius: 3px; font-size: .9em; }
.notice { color: #9a6700; font-style: italic; }
figure { margin: 1em 0; }
</style>
</head>
<body>
<h1>fmm-lab experiment report</h1>
${body}
</body>
</html>
`;
}
