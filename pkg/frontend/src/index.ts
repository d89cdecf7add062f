export { readCsv, requireColumns, numericColumn, columnsWithPrefix } from "./csv.js";
export type { Table } from "./csv.js";
export {
  CLASS_COLORS,
  METHOD_COLORS,
  GUIDE_SLOPES,
  convergenceFigure,
  panelMatrixFigure,
  heatmapFigure,
  lobCurvesFigure,
} from "./figures.js";
export type { Panel } from "./figures.js";
export { discoverFigures } from "./discover.js";
export type { FigureJob, FigureKind } from "./discover.js";
export { renderSvg } from "./render.js";
export { main } from "./cli.js";
