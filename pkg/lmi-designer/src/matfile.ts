/**
 * Plain text matrix files: a "rows cols" header line followed by
 * row-major whitespace separated entries.  The format is the interchange
 * contract with the filter package, so numbers are written with 17
 * significant digits (round trip exact for doubles) and the reader is
 * tolerant about the whitespace layout of the entries.
 */

import * as fs from "node:fs";
import * as path from "node:path";
import type { Matrix } from "./mat.js";
import { zeros } from "./mat.js";

export const MAT_SUFFIX = ".mat";

/** printf %.17g lookalike: 17 significant digits, trailing zeros stripped. */
export function formatEntry(v: number): string {
  if (!isFinite(v)) return String(v); // Infinity / NaN, not expected in practice
  if (v === 0) return Object.is(v, -0) ? "-0" : "0";
  let s = v.toPrecision(17);
  if (s.includes("e")) {
    let [mant, exp] = s.split("e");
    if (mant.includes(".")) mant = mant.replace(/0+$/, "").replace(/\.$/, "");
    const sign = exp.startsWith("-") ? "-" : "+";
    const digits = exp.replace(/^[+-]/, "").replace(/^0+(?=\d)/, "");
    return `${mant}e${sign}${digits.length < 2 ? "0" + digits : digits}`;
  }
  if (s.includes(".")) s = s.replace(/0+$/, "").replace(/\.$/, "");
  return s;
}

export function writeMat(M: Matrix, file: string): void {
  const rows = M.length;
  const cols = rows > 0 ? M[0].length : 0;
  const lines = [`${rows} ${cols}`];
  for (const row of M) lines.push(row.map(formatEntry).join(" "));
  fs.writeFileSync(file, lines.join("\n") + "\n");
}

export function readMat(file: string): Matrix {
  const text = fs.readFileSync(file, "utf8");
  const tokens = text.split(/\s+/).filter((t) => t.length > 0);
  if (tokens.length < 2) throw new Error(`${file}: missing dimension header`);
  const rows = Number(tokens[0]);
  const cols = Number(tokens[1]);
  if (!Number.isInteger(rows) || !Number.isInteger(cols) || rows <= 0 || cols <= 0)
    throw new Error(`${file}: bad dimensions "${tokens[0]} ${tokens[1]}"`);
  if (tokens.length - 2 !== rows * cols)
    throw new Error(`${file}: expected ${rows * cols} entries, found ${tokens.length - 2}`);
  const M = zeros(rows, cols);
  for (let k = 0; k < rows * cols; k++) {
    const v = Number(tokens[2 + k]);
    if (Number.isNaN(v)) throw new Error(`${file}: entry ${k} is not a number: "${tokens[2 + k]}"`);
    M[Math.floor(k / cols)][k % cols] = v;
  }
  return M;
}

/** Write one Pbar_<id>.mat per subsystem into dir, creating it if needed. */
export function writePbarDir(pbar: Map<number, Matrix>, dir: string): string[] {
  fs.mkdirSync(dir, { recursive: true });
  const written: string[] = [];
  for (const [id, P] of [...pbar.entries()].sort((a, b) => a[0] - b[0])) {
    const file = path.join(dir, `Pbar_${id}${MAT_SUFFIX}`);
    writeMat(P, file);
    written.push(file);
  }
  return written;
}
