#!/usr/bin/env node
/**
 * Command line front end.
 *
 *   lmi-designer solve --network <json> --out <dir>
 *   lmi-designer sweep --alphas <csv-list> --out <dir>
 *
 * solve reads a network description, runs the steady covariance design
 * and writes Pbar_<id>.mat files the filter side can verify on its own.
 * sweep runs the design on the two block benchmark for each coupling
 * strength in the list and tabulates feasibility and the closed loop
 * spectral radius in sweep.csv.
 *
 * Exit codes: 0 success (solve: design feasible; sweep: table written,
 * individual infeasible entries are recorded, not fatal), 1 usage or
 * file errors, 2 design not feasible.
 */

import * as fs from "node:fs";
import * as path from "node:path";
import yargs from "yargs";
import { hideBin } from "yargs/helpers";

import { solvePbarLmis } from "./lmi.js";
import type { SolveReport } from "./lmi.js";
import { formatEntry, writePbarDir } from "./matfile.js";
import { benchmarkNetwork, loadNetwork } from "./network.js";
import type { Network } from "./network.js";

function printReport(report: SolveReport, net: Network): void {
  console.log(`status: ${report.status}`);
  console.log(`  ${report.message}`);
  console.log(`  complementarity residual: ${report.complResidual.toExponential(3)}`);
  if (report.residualMinEig !== null) {
    for (const id of net.ids) {
      const e = report.residualMinEig.get(id)!;
      console.log(`  subsystem ${id}: steady inequality min eigenvalue ${e.toExponential(3)}`);
    }
  }
  if (report.sigma !== null)
    console.log(`  closed-loop spectral radius: ${report.sigma.toFixed(6)}`);
}

function runSolve(networkPath: string, outDir: string, traceWeight: number, tol: number): number {
  let net: Network;
  try {
    net = loadNetwork(networkPath);
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    return 1;
  }
  const report = solvePbarLmis(net, { traceWeight, complTol: tol });
  printReport(report, net);
  const summary = {
    status: report.status,
    message: report.message,
    outer_iterations: report.outerIterations,
    compl_residual: report.complResidual,
    residual_min_eig: report.residualMinEig === null
      ? null
      : Object.fromEntries([...report.residualMinEig].map(([k, v]) => [String(k), v])),
    sigma: report.sigma,
  };
  try {
    fs.mkdirSync(outDir, { recursive: true });
    fs.writeFileSync(path.join(outDir, "design_report.json"), JSON.stringify(summary, null, 2) + "\n");
    if (report.status === "feasible" && report.pbar !== null) {
      writePbarDir(report.pbar, outDir);
      console.log(`wrote Pbar_<id>.mat for ${report.pbar.size} subsystems to ${outDir}`);
    }
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    return 1;
  }
  return report.status === "feasible" ? 0 : 2;
}

function runSweep(alphasArg: string, outDir: string, traceWeight: number): number {
  const tokens = alphasArg.split(",").map((t) => t.trim()).filter((t) => t.length > 0);
  if (tokens.length === 0) {
    console.error("error: --alphas needs at least one value");
    return 1;
  }
  const alphas: number[] = [];
  for (const t of tokens) {
    const v = Number(t);
    if (!Number.isFinite(v) || v < 0) {
      console.error(`error: bad coupling strength '${t}'`);
      return 1;
    }
    alphas.push(v);
  }
  try {
    fs.mkdirSync(outDir, { recursive: true });
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    return 1;
  }
  const rows = ["alpha,feasible,sigma"];
  for (let k = 0; k < alphas.length; k++) {
    const alpha = alphas[k];
    const net = benchmarkNetwork(alpha);
    console.log(`alpha = ${tokens[k]}:`);
    const report = solvePbarLmis(net, { traceWeight });
    printReport(report, net);
    const feasible = report.status === "feasible";
    if (feasible && report.pbar !== null)
      writePbarDir(report.pbar, path.join(outDir, `alpha_${tokens[k]}`));
    const sigma = feasible && report.sigma !== null ? formatEntry(report.sigma) : "nan";
    rows.push(`${tokens[k]},${feasible},${sigma}`);
  }
  fs.writeFileSync(path.join(outDir, "sweep.csv"), rows.join("\n") + "\n");
  console.log(`wrote ${path.join(outDir, "sweep.csv")}`);
  return 0;
}

const parser = yargs(hideBin(process.argv))
  .scriptName("lmi-designer")
  .usage("$0 <command> [options]")
  .command(
    "solve",
    "design steady covariances for a network description",
    (y) =>
      y
        .option("network", { type: "string", demandOption: true, describe: "network JSON file" })
        .option("out", { type: "string", demandOption: true, describe: "output directory" })
        .option("trace-weight", {
          type: "number",
          default: 0,
          describe: "weight of the extra trace objective pulling toward the minimal design",
        })
        .option("tol", { type: "number", default: 1e-6, describe: "complementarity stop tolerance (relative)" }),
    (argv) => {
      process.exitCode = runSolve(argv.network, argv.out, argv["trace-weight"], argv.tol);
    },
  )
  .command(
    "sweep",
    "run the design across coupling strengths of the two block benchmark",
    (y) =>
      y
        .option("alphas", { type: "string", demandOption: true, describe: "comma separated coupling strengths" })
        .option("out", { type: "string", demandOption: true, describe: "output directory" })
        .option("trace-weight", { type: "number", default: 0, describe: "extra trace objective weight" }),
    (argv) => {
      process.exitCode = runSweep(argv.alphas, argv.out, argv["trace-weight"]);
    },
  )
  .demandCommand(1, "pick a command: solve or sweep")
  .strict()
  .fail((msg, err) => {
    console.error(`error: ${msg ?? err?.message}`);
    process.exit(1);
  });

parser.parse();
