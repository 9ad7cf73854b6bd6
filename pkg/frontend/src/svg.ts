/**
 * Deterministic SVG builders: fixed canvas, fixed fonts, fixed palette,
 * no timestamps, numbers printed through one formatter so identical inputs
 * give byte-identical markup.
 */

export const WIDTH = 720;
export const HEIGHT = 480;
export const MARGIN = { top: 40, right: 30, bottom: 58, left: 72 };

export const SERIES_COLORS = ["#1f6feb", "#d29922", "#3fb950", "#db61a2", "#f85149"];
export const OVERLAY_COLOR = "#f85149";

export function fmt(x: number): string {
  if (!Number.isFinite(x)) return "0";
  if (x === 0) return "0";
  const s = x.toPrecision(6);
  return s.includes("e") ? s : String(Number(s));
}

export interface Scale {
  (x: number): number;
  domain: [number, number];
  range: [number, number];
}

export function linearScale(domain: [number, number], range: [number, number]): Scale {
  const [d0, d1] = domain;
  const [r0, r1] = range;
  const span = d1 - d0 || 1;
  const f = ((x: number) => r0 + ((x - d0) / span) * (r1 - r0)) as Scale;
  f.domain = domain;
  f.range = range;
  return f;
}

export function niceTicks(lo: number, hi: number, count = 6): number[] {
  const span = hi - lo || 1;
  const step0 = span / Math.max(1, count - 1);
  const mag = Math.pow(10, Math.floor(Math.log10(step0)));
  const norm = step0 / mag;
  const step = (norm >= 5 ? 5 : norm >= 2 ? 2 : 1) * mag;
  const start = Math.ceil(lo / step) * step;
  const out: number[] = [];
  for (let v = start; v <= hi + 1e-9 * span; v += step) out.push(Number(v.toPrecision(12)));
  return out;
}

export interface FigureSeries {
  label: string;
  color: string;
  points: { x: number; y: number; yerr?: number }[];
}

export interface OverlayLine {
  label: string;
  color: string;
  points: { x: number; y: number }[];
  dashed?: boolean;
}

export interface FigureSpec {
  title: string;
  subtitle: string;
  xLabel: string;
  yLabel: string;
  series: FigureSeries[];
  overlays: OverlayLine[];
}

function esc(s: string): string {
  return s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

/** Scatter-with-error-bars figure on linear axes (y values pre-transformed). */
export function renderFigure(spec: FigureSpec): string {
  const xs: number[] = [];
  const ys: number[] = [];
  for (const s of spec.series) {
    for (const p of s.points) {
      xs.push(p.x);
      ys.push(p.y - (p.yerr ?? 0), p.y + (p.yerr ?? 0));
    }
  }
  for (const o of spec.overlays) {
    for (const p of o.points) {
      xs.push(p.x);
      ys.push(p.y);
    }
  }
  const xlo = Math.min(...xs);
  const xhi = Math.max(...xs);
  const ylo = Math.min(...ys);
  const yhi = Math.max(...ys);
  const xpad = 0.06 * (xhi - xlo || 1);
  const ypad = 0.08 * (yhi - ylo || 1);
  const sx = linearScale([xlo - xpad, xhi + xpad], [MARGIN.left, WIDTH - MARGIN.right]);
  const sy = linearScale([ylo - ypad, yhi + ypad], [HEIGHT - MARGIN.bottom, MARGIN.top]);

  const parts: string[] = [];
  parts.push(
    `<svg xmlns="http://www.w3.org/2000/svg" width="${WIDTH}" height="${HEIGHT}" ` +
      `viewBox="0 0 ${WIDTH} ${HEIGHT}" font-family="Georgia, serif">`,
  );
  parts.push(`<rect width="${WIDTH}" height="${HEIGHT}" fill="#ffffff"/>`);
  parts.push(
    `<text x="${WIDTH / 2}" y="22" text-anchor="middle" font-size="17">${esc(spec.title)}</text>`,
  );
  parts.push(
    `<text x="${WIDTH / 2}" y="${HEIGHT - 8}" text-anchor="middle" font-size="11" ` +
      `fill="#57606a">${esc(spec.subtitle)}</text>`,
  );

  // axes and grid
  for (const t of niceTicks(sx.domain[0], sx.domain[1])) {
    const X = fmt(sx(t));
    parts.push(
      `<line x1="${X}" y1="${MARGIN.top}" x2="${X}" y2="${HEIGHT - MARGIN.bottom}" ` +
        `stroke="#eaeef2" stroke-width="1"/>`,
      `<text x="${X}" y="${HEIGHT - MARGIN.bottom + 18}" text-anchor="middle" ` +
        `font-size="12">${fmt(t)}</text>`,
    );
  }
  for (const t of niceTicks(sy.domain[0], sy.domain[1])) {
    const Y = fmt(sy(t));
    parts.push(
      `<line x1="${MARGIN.left}" y1="${Y}" x2="${WIDTH - MARGIN.right}" y2="${Y}" ` +
        `stroke="#eaeef2" stroke-width="1"/>`,
      `<text x="${MARGIN.left - 8}" y="${Y}" text-anchor="end" dominant-baseline="middle" ` +
        `font-size="12">${fmt(t)}</text>`,
    );
  }
  parts.push(
    `<rect x="${MARGIN.left}" y="${MARGIN.top}" width="${WIDTH - MARGIN.left - MARGIN.right}" ` +
      `height="${HEIGHT - MARGIN.top - MARGIN.bottom}" fill="none" stroke="#57606a"/>`,
  );
  parts.push(
    `<text x="${WIDTH / 2}" y="${HEIGHT - MARGIN.bottom + 38}" text-anchor="middle" ` +
      `font-size="13">${esc(spec.xLabel)}</text>`,
    `<text x="18" y="${HEIGHT / 2}" text-anchor="middle" font-size="13" ` +
      `transform="rotate(-90 18 ${HEIGHT / 2})">${esc(spec.yLabel)}</text>`,
  );

  for (const o of spec.overlays) {
    const d = o.points
      .map((p, i) => `${i === 0 ? "M" : "L"}${fmt(sx(p.x))} ${fmt(sy(p.y))}`)
      .join(" ");
    const dash = o.dashed ? ` stroke-dasharray="6 4"` : "";
    parts.push(`<path d="${d}" fill="none" stroke="${o.color}" stroke-width="1.8"${dash}/>`);
  }

  for (const s of spec.series) {
    for (const p of s.points) {
      const X = fmt(sx(p.x));
      if (p.yerr !== undefined && p.yerr > 0) {
        const y0 = fmt(sy(p.y - p.yerr));
        const y1 = fmt(sy(p.y + p.yerr));
        parts.push(
          `<line x1="${X}" y1="${y0}" x2="${X}" y2="${y1}" stroke="${s.color}" stroke-width="1.2"/>`,
        );
      }
      parts.push(`<circle cx="${X}" cy="${fmt(sy(p.y))}" r="3.4" fill="${s.color}"/>`);
    }
  }

  // legend
  const items = [...spec.series.map((s) => ({ label: s.label, color: s.color, dashed: false })),
    ...spec.overlays.map((o) => ({ label: o.label, color: o.color, dashed: o.dashed ?? false }))];
  items.forEach((it, k) => {
    const y = MARGIN.top + 14 + 18 * k;
    const x0 = WIDTH - MARGIN.right - 218;
    const dash = it.dashed ? ` stroke-dasharray="6 4"` : "";
    parts.push(
      `<line x1="${x0}" y1="${y - 4}" x2="${x0 + 22}" y2="${y - 4}" stroke="${it.color}" ` +
        `stroke-width="2"${dash}/>`,
      `<text x="${x0 + 28}" y="${y}" font-size="11">${esc(it.label)}</text>`,
    );
  });

  parts.push("</svg>");
  return parts.join("\n") + "\n";
}
