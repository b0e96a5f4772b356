import { readFileSync } from "fs";
import Papa from "papaparse";

/** Columns the figure needs; extra columns in the CSV are ignored. */
export const REQUIRED_COLUMNS = [
  "scan_threshold",
  "arl_est",
  "wadd_est",
  "arl_bound",
  "wadd_bound",
] as const;

export type CurveRow = Record<(typeof REQUIRED_COLUMNS)[number], number>;

export class CurveFileError extends Error {}

/**
 * Parse and validate operating-curve CSV text.
 *
 * One header row plus at least two data rows; every required column must
 * hold a finite number. Row order is preserved (the producer writes rows
 * in threshold order).
 */
export function parseCurve(text: string, source = "curve csv"): CurveRow[] {
  if (text.trim() === "") {
    throw new CurveFileError(`${source} is empty`);
  }
  const parsed = Papa.parse<Record<string, unknown>>(text.trim(), {
    header: true,
    dynamicTyping: true,
    skipEmptyLines: true,
  });
  if (parsed.errors.length > 0) {
    const first = parsed.errors[0];
    const where = first.row === undefined ? "" : ` (row ${first.row + 1})`;
    throw new CurveFileError(`${source}: ${first.message}${where}`);
  }
  const fields = parsed.meta.fields ?? [];
  const missing = REQUIRED_COLUMNS.filter((c) => !fields.includes(c));
  if (missing.length > 0) {
    throw new CurveFileError(`${source} is missing columns: ${missing.join(", ")}`);
  }
  const rows = parsed.data.map((raw, i) => {
    const row = {} as CurveRow;
    for (const col of REQUIRED_COLUMNS) {
      const value = raw[col];
      if (typeof value !== "number" || !Number.isFinite(value)) {
        throw new CurveFileError(`${source} row ${i + 1}: ${col} is not a finite number`);
      }
      row[col] = value;
    }
    return row;
  });
  if (rows.length < 2) {
    throw new CurveFileError(`${source} has ${rows.length} data row(s); need at least 2`);
  }
  return rows;
}

export function loadCurve(path: string): CurveRow[] {
  return parseCurve(readFileSync(path, "utf8"), path);
}
