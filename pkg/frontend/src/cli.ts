#!/usr/bin/env node
import { mkdirSync, writeFileSync } from "node:fs";
import { join, resolve } from "node:path";
import { pathToFileURL } from "node:url";
import { discoverFigures } from "./discover.js";
import { renderSvg } from "./render.js";

const USAGE = "usage: render_figures <results-dir> --out <fig-dir>";

export function main(argv: string[]): number {
  let resultsDir: string | undefined;
  let outDir: string | undefined;
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i];
    if (arg === "--out") {
      outDir = argv[++i];
    } else if (arg === "-h" || arg === "--help") {
      console.log(USAGE);
      return 0;
    } else if (arg.startsWith("-")) {
      console.error(`unknown option: ${arg}\n${USAGE}`);
      return 2;
    } else if (resultsDir === undefined) {
      resultsDir = arg;
    } else {
      console.error(`unexpected argument: ${arg}\n${USAGE}`);
      return 2;
    }
  }
  if (!resultsDir || !outDir) {
    console.error(USAGE);
    return 2;
  }

  let jobs;
  try {
    jobs = discoverFigures(resolve(resultsDir));
  } catch (err) {
    console.error(String(err instanceof Error ? err.message : err));
    return 1;
  }
  if (jobs.length === 0) {
    console.error(`no renderable results found under ${resultsDir}`);
    return 1;
  }

  mkdirSync(resolve(outDir), { recursive: true });
  let failures = 0;
  for (const job of jobs) {
    const target = join(resolve(outDir), job.name);
    try {
      const svg = renderSvg(job.build(), job.width, job.height);
      writeFileSync(target, svg, "utf8");
      console.log(target);
    } catch (err) {
      failures += 1;
      console.error(`${job.name}: ${err instanceof Error ? err.message : err}`);
    }
  }
  if (failures > 0) {
    console.error(`${failures} of ${jobs.length} figures failed`);
    return 1;
  }
  return 0;
}

const isMain =
  process.argv[1] !== undefined &&
  import.meta.url === pathToFileURL(resolve(process.argv[1])).href;
if (isMain) {
  process.exit(main(process.argv.slice(2)));
}
