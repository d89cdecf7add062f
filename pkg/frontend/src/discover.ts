import { existsSync, readdirSync, statSync } from "node:fs";
import { basename, join, relative, sep } from "node:path";
import type { EChartsCoreOption } from "echarts/core";
import { readCsv } from "./csv.js";
import {
  Panel,
  convergenceFigure,
  heatmapFigure,
  lobCurvesFigure,
  panelMatrixFigure,
} from "./figures.js";

export type FigureKind =
  | "convergence"
  | "function-panels"
  | "probability-panels"
  | "heatmap"
  | "lob-curves";

export interface FigureJob {
  kind: FigureKind;
  /** Output file name (flat, no directories). */
  name: string;
  width: number;
  height: number;
  build: () => EChartsCoreOption;
}

const MEASURES = ["eps_l2", "eps_linf", "risk"];

function listDirs(root: string): string[] {
  const dirs = [root];
  for (let i = 0; i < dirs.length; i++) {
    for (const entry of readdirSync(dirs[i])) {
      const full = join(dirs[i], entry);
      if (statSync(full).isDirectory()) dirs.push(full);
    }
  }
  return dirs;
}

function outName(root: string, dir: string, stem: string): string {
  const flat = relative(root, dir).split(sep).filter(Boolean).join("_");
  return (flat ? `${flat}_${stem}` : stem) + ".svg";
}

function panelJobs(root: string, dir: string): FigureJob[] {
  const jobs: FigureJob[] = [];
  const family = basename(dir);
  const prefixes: Record<string, [string, string, FigureKind]> = {
    functions: ["lhat", "ltrue", "function-panels"],
    probabilities: ["phat", "ptrue", "probability-panels"],
  };
  const spec = prefixes[family];
  if (!spec) return jobs;
  const files = readdirSync(dir).filter((f) => /^panel_a\d+_b\d+\.csv$/.test(f));
  if (files.length === 0) return jobs;
  const [fitted, truth, kind] = spec;
  jobs.push({
    kind,
    name: outName(root, dir, family === "functions" ? "ratios" : "probs"),
    width: 1300,
    height: 1300,
    build: () => {
      const panels: Panel[] = files.map((f) => {
        const m = f.match(/^panel_a(\d+)_b(\d+)\.csv$/)!;
        return {
          alpha: Number(m[1]),
          beta: Number(m[2]),
          table: readCsv(join(dir, f)),
        };
      });
      const method = basename(join(dir, ".."));
      return panelMatrixFigure(panels, fitted, truth,
        `${method}: ${family === "functions" ? "ratio" : "probability"} curves`);
    },
  });
  return jobs;
}

/** Scan a results tree and return one renderable job per discovered figure. */
export function discoverFigures(root: string): FigureJob[] {
  if (!existsSync(root) || !statSync(root).isDirectory()) {
    throw new Error(`results directory not found: ${root}`);
  }
  const jobs: FigureJob[] = [];
  for (const dir of listDirs(root)) {
    const entries = readdirSync(dir);

    if (entries.includes("aggregate.csv") && entries.includes("slopes.json")) {
      for (const measure of MEASURES) {
        jobs.push({
          kind: "convergence",
          name: outName(root, dir, `decay_${measure}`),
          width: 720,
          height: 540,
          build: () => convergenceFigure(readCsv(join(dir, "aggregate.csv")), measure),
        });
      }
    }

    for (const file of entries.filter((f) => /^heatmap_.*\.csv$/.test(f))) {
      const stem = file.replace(/\.csv$/, "");
      jobs.push({
        kind: "heatmap",
        name: outName(root, dir, stem),
        width: 640,
        height: 480,
        build: () => heatmapFigure(readCsv(join(dir, file)),
          stem.replace(/^heatmap_/, "").replaceAll("_", " ")),
      });
    }

    for (const file of entries.filter((f) => /^curves_.*\.csv$/.test(f))) {
      const tag = file.slice("curves_".length).replace(/\.csv$/, "");
      const binsFile = `bins_${tag}.csv`;
      if (!entries.includes(binsFile)) continue;
      jobs.push({
        kind: "lob-curves",
        name: outName(root, dir, `curves_${tag}`),
        width: 720,
        height: 540,
        build: () => lobCurvesFigure(
          readCsv(join(dir, file)),
          readCsv(join(dir, binsFile)),
          `order flow: class probabilities (${tag})`),
      });
    }

    jobs.push(...panelJobs(root, dir));
  }
  return jobs;
}
