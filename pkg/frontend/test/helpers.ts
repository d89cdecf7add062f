import { mkdirSync, mkdtempSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

export function tempDir(): string {
  return mkdtempSync(join(tmpdir(), "figures-"));
}

export function writeFile(dir: string, name: string, content: string): string {
  mkdirSync(dir, { recursive: true });
  const path = join(dir, name);
  writeFileSync(path, content, "utf8");
  return path;
}

/** Two methods decaying over three horizons, in the study aggregate schema. */
export function aggregateCsv(): string {
  const lines = ["method,T,nL,nN,eps_l2,eps_linf,risk"];
  for (const [method, scale] of [["one-step", 1.0], ["two-step", 0.7]] as const) {
    for (const T of [1000, 2000, 4000]) {
      const v = scale * (T / 1000) ** -0.5;
      lines.push(`${method},${T},8,64,${v},${2 * v},${0.5 * v}`);
    }
  }
  return lines.join("\n") + "\n";
}

/** A single snapshot panel with fitted and truth columns for two classes. */
export function panelCsv(prefix: "l" | "p", nPoints = 5): string {
  const classes = ["t0_m0", "t0_m1"];
  const header = [
    "x0",
    ...classes.map((c) => `${prefix}hat_${c}`),
    ...classes.map((c) => `${prefix}true_${c}`),
  ];
  const lines = [header.join(",")];
  for (let i = 0; i < nPoints; i++) {
    const x = -1 + (2 * i) / (nPoints - 1);
    lines.push([x, 0.4 + 0.1 * x, 0.6 - 0.1 * x, 0.4, 0.6].join(","));
  }
  return lines.join("\n") + "\n";
}

export function heatmapCsv(): string {
  return ["nL,16,64", "2,0.70710678,0.5", "8,0.35355339,0.25"].join("\n") + "\n";
}

export function lobCurvesCsv(): string {
  const lines = ["x0,p_t0_m0,p_t0_m1,p_t1_m0,p_t1_m1"];
  for (const x of [-0.9, 0.0, 0.9]) {
    lines.push([x, 0.2, 0.3, 0.4, 0.1].join(","));
  }
  return lines.join("\n") + "\n";
}

export function lobBinsCsv(): string {
  return [
    "bin_center,count,p_t0_m0,p_t0_m1,p_t1_m0,p_t1_m1",
    "-0.5,40,0.19,0.31,0.41,0.09",
    "0.5,0,nan,nan,nan,nan",
  ].join("\n") + "\n";
}

/** Write a full miniature results tree exercising every figure kind. */
export function writeResultsTree(root: string): void {
  writeFile(join(root, "convergence"), "aggregate.csv", aggregateCsv());
  writeFile(join(root, "convergence"), "slopes.json", "{}\n");
  writeFile(join(root, "robustness"), "aggregate.csv", aggregateCsv());
  writeFile(join(root, "robustness"), "heatmap_eps_l2_one-step.csv", heatmapCsv());
  for (const a of [20, 40]) {
    for (const b of [20, 40]) {
      writeFile(
        join(root, "fit", "one-step", "functions"),
        `panel_a${a}_b${b}.csv`,
        panelCsv("l"),
      );
      writeFile(
        join(root, "fit", "one-step", "probabilities"),
        `panel_a${a}_b${b}.csv`,
        panelCsv("p"),
      );
    }
  }
  writeFile(join(root, "lob"), "curves_x1+1_x22.csv", lobCurvesCsv());
  writeFile(join(root, "lob"), "bins_x1+1_x22.csv", lobBinsCsv());
}
