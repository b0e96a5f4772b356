import { writeFileSync } from "fs";

import { Resvg } from "@resvg/resvg-js";
import * as echarts from "echarts";
import type { EChartsOption } from "echarts";

import { loadCurve } from "./curve";
import { curveFigure, FigureOptions } from "./figure";

export interface RenderOptions extends FigureOptions {
  width?: number;
  height?: number;
}

export interface RenderResult {
  svgPath: string;
  pngPath: string;
  rows: number;
}

export function figureSvg(option: EChartsOption, width: number, height: number): string {
  const chart = echarts.init(null, null, { renderer: "svg", ssr: true, width, height });
  try {
    chart.setOption(option);
    return chart.renderToSVGString();
  } finally {
    chart.dispose();
  }
}

/**
 * Render a curve CSV to an SVG and a PNG side by side.
 *
 * ``outPath`` may carry a .svg or .png extension or none; both files are
 * written next to each other with the same stem. The PNG is rasterized at
 * twice the nominal pixel size. The input file is only read.
 */
export function render(csvPath: string, outPath: string, options: RenderOptions = {}): RenderResult {
  const width = options.width ?? 840;
  const height = options.height ?? 560;
  const rows = loadCurve(csvPath);
  const svg = figureSvg(curveFigure(rows, options), width, height);
  const stem = outPath.replace(/\.(svg|png)$/i, "");
  const svgPath = `${stem}.svg`;
  const pngPath = `${stem}.png`;
  writeFileSync(svgPath, svg);
  const raster = new Resvg(svg, { fitTo: { mode: "width", value: 2 * width } });
  writeFileSync(pngPath, raster.render().asPng());
  return { svgPath, pngPath, rows: rows.length };
}
