import { describe, expect, it } from "vitest";

import { CurveFileError, parseCurve } from "../src/curve";

const HEADER = "scan_threshold,drift,arl_est,wadd_est,arl_bound,wadd_bound,log_mgf_root";
const ROW_A = "2,0.25,50,3.5,4,20,0.5";
const ROW_B = "4,0.25,400,5,9,30,0.5";

describe("parseCurve", () => {
  it("parses a well-formed file and keeps row order", () => {
    const rows = parseCurve([HEADER, ROW_A, ROW_B].join("\n"));
    expect(rows).toHaveLength(2);
    expect(rows[0].scan_threshold).toBe(2);
    expect(rows[0].wadd_bound).toBe(20);
    expect(rows[1].arl_est).toBe(400);
  });

  it("ignores columns it does not need", () => {
    const rows = parseCurve([`${HEADER},extra`, `${ROW_A},9`, `${ROW_B},9`].join("\n"));
    expect(rows[1].wadd_est).toBe(5);
  });

  it("rejects an empty file", () => {
    expect(() => parseCurve("")).toThrow(CurveFileError);
    expect(() => parseCurve("\n \n")).toThrow(/empty/);
  });

  it("names the missing columns", () => {
    const header = "scan_threshold,drift,arl_est,wadd_est,log_mgf_root";
    expect(() => parseCurve([header, "2,0.25,50,3.5,0.5", "4,0.25,400,5,0.5"].join("\n"))).toThrow(
      /missing columns: arl_bound, wadd_bound/,
    );
  });

  it("needs at least two data rows", () => {
    expect(() => parseCurve([HEADER, ROW_A].join("\n"))).toThrow(/need at least 2/);
  });

  it("rejects non-numeric cells with their location", () => {
    const bad = "4,0.25,oops,5,9,30,0.5";
    expect(() => parseCurve([HEADER, ROW_A, bad].join("\n"))).toThrow(
      /row 2: arl_est is not a finite number/,
    );
  });
});
