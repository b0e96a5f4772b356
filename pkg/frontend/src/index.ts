export { CurveFileError, CurveRow, loadCurve, parseCurve, REQUIRED_COLUMNS } from "./curve";
export { curveFigure, FigureOptions } from "./figure";
export { figureSvg, render, RenderOptions, RenderResult } from "./render";
