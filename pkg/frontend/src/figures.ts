/**
 * Figure builders for the two experiment families.
 *
 * Decay: log of the per-distance moment mean against distance, error bars
 * from the delta method, and the theoretical ceiling
 * ln C+ - m * floor(d/step) overlaid when the run carried a bound.
 *
 * Wegner: expected eigenvalue count against interval width on log-log axes,
 * one series per box size, the bound rhs overlaid per box size.
 */

import { column, numericColumn, readTable, Table } from "./csv.js";
import {
  FigureSeries,
  OVERLAY_COLOR,
  OverlayLine,
  renderFigure,
  SERIES_COLORS,
} from "./svg.js";

export interface DecayRun {
  configHash: string;
  table: Table;
  meta: DecayMeta | null;
}

export interface DecayMeta {
  theory_mass: number | null;
  theory_prefactor: number | null;
  step: number;
  fitted_rate: number;
  fitted_prefactor: number;
  rate_ci_half: number;
}

export const DECAY_COLUMNS = ["distance", "mean", "std_error", "config_hash"];
export const WEGNER_COLUMNS = ["L", "width", "lhs", "lhs_se", "rhs", "config_hash"];

export function decayRunFromCsv(text: string, metaJson: string | null): DecayRun {
  const table = readTable(text, DECAY_COLUMNS);
  const hashes = column(table, "config_hash");
  const meta = metaJson ? (JSON.parse(metaJson) as DecayMeta) : null;
  return { configHash: hashes[0] ?? "unknown", table, meta };
}

export function decayFigure(runs: DecayRun[]): string {
  const series: FigureSeries[] = runs.map((run, k) => {
    const d = numericColumn(run.table, "distance");
    const mean = numericColumn(run.table, "mean");
    const se = numericColumn(run.table, "std_error");
    return {
      label: `run ${run.configHash}`,
      color: SERIES_COLORS[k % SERIES_COLORS.length],
      points: d.map((x, i) => ({
        x,
        y: Math.log(mean[i]),
        // delta method: sd(log mean) ~ se/mean
        yerr: se[i] / mean[i],
      })),
    };
  });

  const overlays: OverlayLine[] = [];
  const withBound = runs.find(
    (r) => r.meta && r.meta.theory_mass !== null && r.meta.theory_prefactor !== null,
  );
  if (withBound && withBound.meta) {
    const m = withBound.meta.theory_mass as number;
    const cPlus = withBound.meta.theory_prefactor as number;
    const step = withBound.meta.step;
    const ds = numericColumn(withBound.table, "distance");
    const lo = Math.min(...ds);
    const hi = Math.max(...ds);
    const pts: { x: number; y: number }[] = [];
    for (let d = lo; d <= hi; d += Math.max(1, Math.round((hi - lo) / 64))) {
      pts.push({ x: d, y: Math.log(cPlus) - m * Math.floor(d / step) });
    }
    overlays.push({
      label: `bound ln C+ - m*floor(d/${step})`,
      color: OVERLAY_COLOR,
      points: pts,
      dashed: true,
    });
  }

  return renderFigure({
    title: "Fractional-moment decay",
    subtitle: `config ${runs.map((r) => r.configHash).join(", ")}`,
    xLabel: "distance |x - y|",
    yLabel: "ln E|G|^q",
    series,
    overlays,
  });
}

export function wegnerFigure(text: string): string {
  const table = readTable(text, WEGNER_COLUMNS);
  const L = numericColumn(table, "L");
  const width = numericColumn(table, "width");
  const lhs = numericColumn(table, "lhs");
  const se = numericColumn(table, "lhs_se");
  const rhs = numericColumn(table, "rhs");
  const hash = column(table, "config_hash")[0] ?? "unknown";

  const sizes = [...new Set(L)].sort((a, b) => a - b);
  const series: FigureSeries[] = [];
  const overlays: OverlayLine[] = [];
  sizes.forEach((size, k) => {
    const idx = L.map((v, i) => (v === size ? i : -1)).filter((i) => i >= 0);
    const color = SERIES_COLORS[k % SERIES_COLORS.length];
    series.push({
      label: `counts L=${size}`,
      color,
      points: idx
        .filter((i) => lhs[i] > 0)
        .map((i) => ({
          x: Math.log10(width[i]),
          y: Math.log10(lhs[i]),
          yerr: lhs[i] > 0 ? se[i] / (lhs[i] * Math.LN10) : 0,
        })),
    });
    overlays.push({
      label: `bound L=${size}`,
      color,
      dashed: true,
      points: idx.map((i) => ({ x: Math.log10(width[i]), y: Math.log10(rhs[i]) })),
    });
  });

  return renderFigure({
    title: "Wegner eigenvalue counting",
    subtitle: `config ${hash}`,
    xLabel: "log10 interval width",
    yLabel: "log10 E Tr P",
    series,
    overlays,
  });
}
