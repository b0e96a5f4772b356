import type { EChartsOption } from "echarts";

import type { CurveRow } from "./curve";

export interface FigureOptions {
  title?: string;
}

// Okabe-Ito colors, safe for the common color vision deficiencies
const PALETTE = ["#0072B2", "#D55E00", "#009E73"];

/**
 * Chart description for one operating curve.
 *
 * Three series over a log-scaled run-length axis: the estimated delay at
 * the estimated run length, the theoretical delay bound at the same run
 * lengths (dashed), and the estimated delay again at the guaranteed
 * run-length lower bound (dotted), which shows how conservative the
 * run-length guarantee is.
 */
export function curveFigure(rows: CurveRow[], options: FigureOptions = {}): EChartsOption {
  for (const row of rows) {
    if (row.arl_est <= 0 || row.arl_bound <= 0) {
      throw new RangeError("log-scaled run-length axis needs positive run lengths");
    }
  }
  const empirical = rows.map((r) => [r.arl_est, r.wadd_est]);
  const delayBound = rows.map((r) => [r.arl_est, r.wadd_bound]);
  const guarantee = rows.map((r) => [r.arl_bound, r.wadd_est]);
  return {
    backgroundColor: "#ffffff",
    color: PALETTE,
    title: {
      text: options.title ?? "Detection delay vs run length",
      left: "center",
      textStyle: { fontSize: 16 },
    },
    legend: { bottom: 0 },
    grid: { left: 70, right: 30, top: 60, bottom: 80 },
    xAxis: {
      type: "log",
      name: "average run length",
      nameLocation: "middle",
      nameGap: 32,
      axisLine: { show: true },
      splitLine: { show: true, lineStyle: { color: "#dddddd" } },
    },
    yAxis: {
      type: "value",
      name: "worst average detection delay",
      nameLocation: "middle",
      nameGap: 48,
      splitLine: { show: true, lineStyle: { color: "#dddddd" } },
    },
    series: [
      {
        name: "empirical delay",
        type: "line",
        data: empirical,
        symbol: "circle",
        symbolSize: 7,
        lineStyle: { width: 2 },
      },
      {
        name: "delay bound",
        type: "line",
        data: delayBound,
        symbol: "none",
        lineStyle: { width: 2, type: "dashed" },
      },
      {
        name: "run-length bound",
        type: "line",
        data: guarantee,
        symbol: "triangle",
        symbolSize: 7,
        lineStyle: { width: 2, type: "dotted" },
      },
    ],
  };
}
