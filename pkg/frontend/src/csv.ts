/**
 * Minimal RFC-4180 reader for the experiment CSV contract: UTF-8, mandatory
 * header row, '.' decimal separator, CRLF or LF line endings, quoted fields
 * with doubled quotes.
 */

export class SchemaMismatch extends Error {
  constructor(public readonly column: string, detail: string) {
    super(`schema mismatch on column "${column}": ${detail}`);
    this.name = "SchemaMismatch";
  }
}

export function parseCsv(text: string): string[][] {
  const rows: string[][] = [];
  let row: string[] = [];
  let field = "";
  let inQuotes = false;
  let i = 0;
  const push = () => {
    row.push(field);
    field = "";
  };
  const endRow = () => {
    push();
    rows.push(row);
    row = [];
  };
  while (i < text.length) {
    const c = text[i];
    if (inQuotes) {
      if (c === '"') {
        if (text[i + 1] === '"') {
          field += '"';
          i += 2;
          continue;
        }
        inQuotes = false;
        i += 1;
        continue;
      }
      field += c;
      i += 1;
      continue;
    }
    if (c === '"') {
      inQuotes = true;
      i += 1;
    } else if (c === ",") {
      push();
      i += 1;
    } else if (c === "\r" && text[i + 1] === "\n") {
      endRow();
      i += 2;
    } else if (c === "\n") {
      endRow();
      i += 1;
    } else {
      field += c;
      i += 1;
    }
  }
  if (field.length > 0 || row.length > 0) endRow();
  // ignore a trailing blank line
  return rows.filter((r) => !(r.length === 1 && r[0] === ""));
}

export interface Table {
  header: string[];
  rows: string[][];
}

export function readTable(text: string, requiredColumns: string[]): Table {
  const parsed = parseCsv(text);
  if (parsed.length === 0) {
    throw new SchemaMismatch(requiredColumns[0] ?? "?", "file has no header row");
  }
  const header = parsed[0];
  for (const col of requiredColumns) {
    if (!header.includes(col)) {
      throw new SchemaMismatch(col, `missing from header [${header.join(", ")}]`);
    }
  }
  const rows = parsed.slice(1);
  for (const r of rows) {
    if (r.length !== header.length) {
      throw new SchemaMismatch(header[Math.min(r.length, header.length) - 1] ?? "?",
        `row has ${r.length} fields, header has ${header.length}`);
    }
  }
  return { header, rows };
}

export function column(t: Table, name: string): string[] {
  const idx = t.header.indexOf(name);
  if (idx < 0) throw new SchemaMismatch(name, "requested column absent");
  return t.rows.map((r) => r[idx]);
}

export function numericColumn(t: Table, name: string): number[] {
  return column(t, name).map((v, i) => {
    const x = Number(v);
    if (v === "" || Number.isNaN(x)) {
      throw new SchemaMismatch(name, `row ${i + 1} holds non-numeric value "${v}"`);
    }
    return x;
  });
}
