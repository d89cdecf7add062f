import type { EChartsCoreOption } from "echarts/core";
import { Table, columnsWithPrefix, numericColumn, requireColumns } from "./csv.js";

export const CLASS_COLORS = [
  "#4e79a7", "#f28e2b", "#e15759", "#76b7b2",
  "#59a14f", "#edc948", "#b07aa1", "#9c755f",
];

export const METHOD_COLORS: Record<string, string> = {
  "one-step": "#4e79a7",
  "two-step": "#e15759",
};

export const GUIDE_SLOPES = [-1 / 3, -2 / 3];

function round(value: number, digits = 4): number {
  const s = 10 ** digits;
  return Math.round(value * s) / s;
}

/** Log-log error decay per method with dashed reference-slope guide lines. */
export function convergenceFigure(aggregate: Table, measure: string): EChartsCoreOption {
  requireColumns(aggregate, ["method", "T", measure]);
  const methods = [...new Set(aggregate.rows.map((r) => String(r.method)))];
  const horizons = [...new Set(numericColumn(aggregate, "T"))].sort((a, b) => a - b);
  if (horizons.length < 2) {
    throw new Error(`${aggregate.path}: need at least two horizons for a trend`);
  }

  const series: object[] = [];
  let anchor = 0;
  for (const method of methods) {
    const points = aggregate.rows
      .filter((r) => r.method === method)
      .map((r) => [Number(r.T), Number(r[measure])] as [number, number])
      .sort((a, b) => a[0] - b[0]);
    anchor = Math.max(anchor, points[0][1]);
    series.push({
      name: method,
      type: "line",
      data: points,
      symbolSize: 7,
      lineStyle: { width: 2 },
      itemStyle: { color: METHOD_COLORS[method] },
    });
  }

  const t0 = horizons[0];
  for (const slope of GUIDE_SLOPES) {
    const label = `slope ${slope === -1 / 3 ? "-1/3" : "-2/3"}`;
    series.push({
      name: label,
      type: "line",
      data: horizons.map((t) => [t, 1.25 * anchor * (t / t0) ** slope]),
      symbol: "none",
      lineStyle: { type: "dashed", width: 1.5, color: "#888" },
      itemStyle: { color: "#888" },
    });
  }

  return {
    animation: false,
    backgroundColor: "#fff",
    title: { text: `${measure} vs horizon`, left: "center" },
    legend: { bottom: 0 },
    grid: { left: 70, right: 20, top: 50, bottom: 60 },
    xAxis: { type: "log", name: "T", nameLocation: "middle", nameGap: 28 },
    yAxis: { type: "log", name: measure },
    series: series,
  };
}

export interface Panel {
  alpha: number;
  beta: number;
  table: Table;
}

/**
 * Quantile-by-quantile matrix of curves over x0: fitted columns are solid,
 * truth columns dashed.  One grid per panel, panels ordered by (beta, alpha).
 */
export function panelMatrixFigure(
  panels: Panel[],
  fittedPrefix: string,
  truthPrefix: string,
  heading: string,
): EChartsCoreOption {
  if (panels.length === 0) throw new Error("no panel tables given");
  const sorted = [...panels].sort((a, b) => a.beta - b.beta || a.alpha - b.alpha);
  const alphas = [...new Set(sorted.map((p) => p.alpha))].sort((a, b) => a - b);
  const betas = [...new Set(sorted.map((p) => p.beta))].sort((a, b) => a - b);
  const nCols = alphas.length;
  const nRows = betas.length;

  const grids: object[] = [];
  const xAxes: object[] = [];
  const yAxes: object[] = [];
  const titles: object[] = [{ text: heading, left: "center", top: 2 }];
  const series: object[] = [];

  const cellW = 92 / nCols;
  const cellH = 90 / nRows;
  for (const panel of sorted) {
    const col = alphas.indexOf(panel.alpha);
    const row = betas.indexOf(panel.beta);
    const index = grids.length;
    const left = 5 + col * cellW;
    const top = 7 + row * cellH;
    grids.push({
      left: `${left}%`,
      top: `${top}%`,
      width: `${cellW - 3}%`,
      height: `${cellH - 4.5}%`,
    });
    xAxes.push({ type: "value", gridIndex: index, axisLabel: { fontSize: 9 } });
    yAxes.push({ type: "value", gridIndex: index, axisLabel: { fontSize: 9 } });
    titles.push({
      text: `a=${panel.alpha}% b=${panel.beta}%`,
      left: `${left + (cellW - 3) / 2}%`,
      top: `${top - 2.6}%`,
      textAlign: "center",
      textStyle: { fontSize: 10, fontWeight: "normal" },
    });

    const x0 = numericColumn(panel.table, "x0");
    const fitted = columnsWithPrefix(panel.table, fittedPrefix);
    const truth = columnsWithPrefix(panel.table, truthPrefix);
    if (fitted.length === 0 || truth.length === 0) {
      throw new Error(
        `${panel.table.path}: expected ${fittedPrefix}*/${truthPrefix}* columns`,
      );
    }
    for (const [kind, names, dashed] of [
      ["fit", fitted, false],
      ["truth", truth, true],
    ] as const) {
      names.forEach((name, ci) => {
        const values = numericColumn(panel.table, name);
        series.push({
          name: `${kind} ${name.slice(name.indexOf("_") + 1)}`,
          type: "line",
          xAxisIndex: index,
          yAxisIndex: index,
          data: x0.map((x, i) => [x, values[i]]),
          symbol: "none",
          lineStyle: {
            width: dashed ? 1 : 1.5,
            type: dashed ? "dashed" : "solid",
            color: CLASS_COLORS[ci % CLASS_COLORS.length],
          },
          itemStyle: { color: CLASS_COLORS[ci % CLASS_COLORS.length] },
        });
      });
    }
  }

  return {
    animation: false,
    backgroundColor: "#fff",
    title: titles,
    grid: grids,
    xAxis: xAxes,
    yAxis: yAxes,
    series: series,
  };
}

/** Annotated depth-by-width heatmap of one study measure. */
export function heatmapFigure(table: Table, heading: string): EChartsCoreOption {
  requireColumns(table, ["nL"]);
  const widths = table.fields.filter((f) => f !== "nL");
  if (widths.length === 0) {
    throw new Error(`${table.path}: no width columns`);
  }
  const depths = numericColumn(table, "nL").map(String);
  const cells: [number, number, number][] = [];
  table.rows.forEach((row, di) => {
    widths.forEach((w, wi) => {
      const v = row[w];
      if (typeof v !== "number") {
        throw new Error(`${table.path}: non-numeric heatmap cell in ${w}`);
      }
      cells.push([wi, di, round(v)]);
    });
  });
  const values = cells.map((c) => c[2]);

  return {
    animation: false,
    backgroundColor: "#fff",
    title: { text: heading, left: "center" },
    grid: { left: 90, right: 40, top: 50, bottom: 40 },
    xAxis: { type: "category", data: widths, name: "width" },
    yAxis: { type: "category", data: depths, name: "depth" },
    visualMap: {
      min: Math.min(...values),
      max: Math.max(...values),
      show: false,
      inRange: { color: ["#d7e8f7", "#2c6fbb"] },
    },
    series: [
      {
        type: "heatmap",
        data: cells,
        label: { show: true, fontSize: 12 },
      },
    ],
  };
}

/** Fitted class-probability curves with binned empirical overlays. */
export function lobCurvesFigure(
  curves: Table,
  bins: Table,
  heading: string,
): EChartsCoreOption {
  const x0 = numericColumn(curves, "x0");
  const classes = columnsWithPrefix(curves, "p_");
  if (classes.length === 0) {
    throw new Error(`${curves.path}: no p_* probability columns`);
  }
  requireColumns(bins, ["bin_center", "count", ...classes]);

  const series: object[] = [];
  classes.forEach((name, ci) => {
    const color = CLASS_COLORS[ci % CLASS_COLORS.length];
    const fit = numericColumn(curves, name);
    series.push({
      name: `fit ${name}`,
      type: "line",
      data: x0.map((x, i) => [x, fit[i]]),
      symbol: "none",
      lineStyle: { width: 2, color },
      itemStyle: { color },
    });
    const centers = numericColumn(bins, "bin_center");
    const freq = numericColumn(bins, name);
    const points = centers
      .map((c, i) => [c, freq[i]] as [number, number])
      .filter((p) => Number.isFinite(p[1]));
    series.push({
      name: `empirical ${name}`,
      type: "scatter",
      data: points,
      symbol: "triangle",
      symbolSize: 9,
      itemStyle: { color },
    });
  });

  return {
    animation: false,
    backgroundColor: "#fff",
    title: { text: heading, left: "center" },
    legend: { bottom: 0, itemWidth: 18 },
    grid: { left: 60, right: 20, top: 50, bottom: 80 },
    xAxis: { type: "value", name: "imbalance", min: -1, max: 1 },
    yAxis: { type: "value", name: "probability", min: 0 },
    series: series,
  };
}
