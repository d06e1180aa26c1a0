/**
 * Network description shared with the filter package.
 *
 * The JSON layout is the one the estimation toolkit writes: a
 * "subsystems" list where each entry carries id, A_ii, C, Q, R and a
 * coupling map from neighbor id to the block A_ij.  Neighbors are
 * declared through the coupling keys (plus the subsystem itself), never
 * inferred from numeric content, so a listed zero block still counts as
 * an edge.
 */

import * as fs from "node:fs";
import type { Matrix } from "./mat.js";
import { transpose, matMul, scale, zeros, setBlock, identity, inverse } from "./mat.js";

export interface Subsystem {
  id: number;
  A: Matrix; // A_ii
  C: Matrix;
  Q: Matrix;
  R: Matrix;
  coupling: Map<number, Matrix>; // j -> A_ij
}

export interface Network {
  subsystems: Subsystem[];
  ids: number[];
  byId: Map<number, Subsystem>;
  neighbors: Map<number, number[]>; // declared coupling keys plus self, sorted
  varsigma: Map<number, number>; // successor counts
}

function asMatrix(raw: unknown, what: string): Matrix {
  if (!Array.isArray(raw) || raw.length === 0 || !Array.isArray(raw[0]))
    throw new Error(`${what} is not a matrix`);
  const cols = (raw[0] as unknown[]).length;
  return (raw as unknown[]).map((row, i) => {
    if (!Array.isArray(row) || row.length !== cols)
      throw new Error(`${what} has ragged row ${i}`);
    return row.map((v) => {
      if (typeof v !== "number" || !isFinite(v))
        throw new Error(`${what} has a non numeric entry`);
      return v;
    });
  });
}

export function buildNetwork(subsystems: Subsystem[]): Network {
  const sorted = [...subsystems].sort((a, b) => a.id - b.id);
  const byId = new Map(sorted.map((s) => [s.id, s]));
  if (byId.size !== sorted.length) throw new Error("duplicate subsystem ids");
  for (const s of sorted) {
    const n = s.A.length;
    if (s.A[0].length !== n) throw new Error(`subsystem ${s.id}: A_ii is not square`);
    if (s.C[0].length !== n) throw new Error(`subsystem ${s.id}: C has ${s.C[0].length} columns, state is ${n}`);
    if (s.Q.length !== n || s.Q[0].length !== n) throw new Error(`subsystem ${s.id}: Q shape`);
    const p = s.C.length;
    if (s.R.length !== p || s.R[0].length !== p) throw new Error(`subsystem ${s.id}: R shape`);
    for (const [j, Aij] of s.coupling) {
      const nj = byId.get(j)?.A.length;
      if (nj === undefined) throw new Error(`subsystem ${s.id}: coupling names unknown id ${j}`);
      if (Aij.length !== n || Aij[0].length !== nj)
        throw new Error(`subsystem ${s.id}: coupling block to ${j} has wrong shape`);
    }
  }
  const neighbors = new Map<number, number[]>();
  for (const s of sorted)
    neighbors.set(s.id, [...new Set([...s.coupling.keys(), s.id])].sort((a, b) => a - b));
  const succ = new Map<number, Set<number>>(sorted.map((s) => [s.id, new Set<number>()]));
  for (const [i, neigh] of neighbors)
    for (const j of neigh) succ.get(j)!.add(i);
  const varsigma = new Map<number, number>();
  for (const [j, set] of succ) varsigma.set(j, set.size);
  return { subsystems: sorted, ids: sorted.map((s) => s.id), byId, neighbors, varsigma };
}

export function parseNetwork(text: string): Network {
  let raw: any;
  try {
    raw = JSON.parse(text);
  } catch (e) {
    throw new Error(`network file is not valid JSON: ${(e as Error).message}`);
  }
  if (!raw || !Array.isArray(raw.subsystems)) throw new Error("network file has no subsystems list");
  const subs: Subsystem[] = raw.subsystems.map((entry: any) => {
    if (typeof entry.id !== "number") throw new Error("subsystem without numeric id");
    const tag = `subsystem ${entry.id}`;
    const coupling = new Map<number, Matrix>();
    for (const [k, block] of Object.entries(entry.coupling ?? {})) {
      const j = Number(k);
      if (!Number.isInteger(j)) throw new Error(`${tag}: coupling key "${k}" is not an id`);
      coupling.set(j, asMatrix(block, `${tag} coupling ${k}`));
    }
    return {
      id: entry.id,
      A: asMatrix(entry.A_ii, `${tag} A_ii`),
      C: asMatrix(entry.C, `${tag} C`),
      Q: asMatrix(entry.Q, `${tag} Q`),
      R: asMatrix(entry.R, `${tag} R`),
      coupling,
    };
  });
  return buildNetwork(subs);
}

export function loadNetwork(file: string): Network {
  return parseNetwork(fs.readFileSync(file, "utf8"));
}

export function networkToJson(net: Network): string {
  const subsystems = net.subsystems.map((s) => ({
    id: s.id,
    A_ii: s.A,
    C: s.C,
    Q: s.Q,
    R: s.R,
    coupling: Object.fromEntries(
      [...s.coupling.entries()].sort((a, b) => a[0] - b[0]).map(([j, B]) => [String(j), B]),
    ),
  }));
  return JSON.stringify({ subsystems }, null, 1);
}

// --- rescaled blocks --------------------------------------------------------

/** A_ij scaled by sqrt(varsigma_j); A_ii when j = i. */
export function atil(net: Network, i: number, j: number): Matrix {
  const s = net.byId.get(i)!;
  const Aij = j === i ? s.A : s.coupling.get(j);
  if (Aij === undefined) throw new Error(`subsystem ${i} has no coupling to ${j}`);
  return scale(Aij, Math.sqrt(net.varsigma.get(j)!));
}

export function ctil(net: Network, j: number): Matrix {
  return scale(net.byId.get(j)!.C, Math.sqrt(net.varsigma.get(j)!));
}

export function rtil(net: Network, j: number): Matrix {
  return scale(net.byId.get(j)!.R, net.varsigma.get(j)!);
}

/** C~' R~^-1 C~ for subsystem j, a term both LMI blocks need. */
export function ctilRinvCtil(net: Network, j: number): Matrix {
  const C = ctil(net, j);
  const R = rtil(net, j);
  if (R.length === 1) {
    if (R[0][0] <= 0) throw new Error(`subsystem ${j}: R is not positive definite`);
    return scale(matMul(transpose(C), C), 1 / R[0][0]);
  }
  return matMul(transpose(C), matMul(inverse(R), C));
}

// --- the assembled system ---------------------------------------------------

export interface GlobalSystem {
  A: Matrix;
  C: Matrix;
  stateOffset: Map<number, number>;
  outputOffset: Map<number, number>;
  n: number;
  p: number;
}

export function assembleGlobal(net: Network): GlobalSystem {
  const stateOffset = new Map<number, number>();
  const outputOffset = new Map<number, number>();
  let n = 0, p = 0;
  for (const s of net.subsystems) {
    stateOffset.set(s.id, n);
    outputOffset.set(s.id, p);
    n += s.A.length;
    p += s.C.length;
  }
  const A = zeros(n, n);
  const C = zeros(p, n);
  for (const s of net.subsystems) {
    setBlock(A, s.A, stateOffset.get(s.id)!, stateOffset.get(s.id)!);
    for (const [j, Aij] of s.coupling)
      setBlock(A, Aij, stateOffset.get(s.id)!, stateOffset.get(j)!);
    setBlock(C, s.C, outputOffset.get(s.id)!, stateOffset.get(s.id)!);
  }
  return { A, C, stateOffset, outputOffset, n, p };
}

// --- the two-subsystem benchmark -------------------------------------------

export const BENCH_A: Matrix = [
  [0.9, 0.1],
  [0.1, -0.9],
];
export const BENCH_C: Matrix = [[1.0, 1.0]];

/**
 * The standard two-subsystem benchmark: identical blocks, mutual
 * coupling diag(alpha, -alpha).  alpha = 0 produces a genuinely
 * decoupled network (no coupling entries at all).
 */
export function benchmarkNetwork(alpha: number, M = 2): Network {
  const subs: Subsystem[] = [];
  for (let i = 1; i <= M; i++) {
    const coupling = new Map<number, Matrix>();
    if (alpha !== 0)
      for (let j = 1; j <= M; j++)
        if (j !== i) coupling.set(j, [
          [alpha, 0.0],
          [0.0, -alpha],
        ]);
    subs.push({
      id: i,
      A: BENCH_A.map((r) => r.slice()),
      C: BENCH_C.map((r) => r.slice()),
      Q: identity(2),
      R: [[1.0]],
      coupling,
    });
  }
  return buildNetwork(subs);
}
