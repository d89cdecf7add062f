import { readFileSync } from "node:fs";
import Papa from "papaparse";

export interface Table {
  /** Column names in file order. */
  fields: string[];
  /** One object per data row; numeric cells are numbers, "nan" becomes NaN. */
  rows: Record<string, number | string>[];
  path: string;
}

function coerce(value: unknown): number | string {
  if (typeof value === "number") return value;
  const text = String(value ?? "").trim();
  if (text.toLowerCase() === "nan") return NaN;
  return text;
}

export function readCsv(path: string): Table {
  const content = readFileSync(path, "utf8");
  const parsed = Papa.parse<Record<string, unknown>>(content, {
    header: true,
    dynamicTyping: true,
    skipEmptyLines: true,
  });
  if (parsed.errors.length > 0) {
    const first = parsed.errors[0];
    throw new Error(`${path}: CSV parse error: ${first.message}`);
  }
  const fields = parsed.meta.fields ?? [];
  if (fields.length === 0) {
    throw new Error(`${path}: no header row`);
  }
  if (parsed.data.length === 0) {
    throw new Error(`${path}: no data rows`);
  }
  const rows = parsed.data.map((raw) => {
    const row: Record<string, number | string> = {};
    for (const field of fields) row[field] = coerce(raw[field]);
    return row;
  });
  return { fields, rows, path };
}

export function requireColumns(table: Table, columns: string[]): void {
  const missing = columns.filter((c) => !table.fields.includes(c));
  if (missing.length > 0) {
    throw new Error(`${table.path}: missing column(s) ${missing.join(", ")}`);
  }
}

export function numericColumn(table: Table, name: string): number[] {
  requireColumns(table, [name]);
  return table.rows.map((row) => {
    const v = row[name];
    if (typeof v !== "number") {
      throw new Error(`${table.path}: column ${name} has non-numeric cell ${v}`);
    }
    return v;
  });
}

/** Column names matching a prefix, kept in file order (e.g. "phat_"). */
export function columnsWithPrefix(table: Table, prefix: string): string[] {
  return table.fields.filter((f) => f.startsWith(prefix));
}
