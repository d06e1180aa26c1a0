/**
 * Steady covariance design for the partitioned filter.
 *
 * The target is a set of matrices Pbar_i, one per subsystem, satisfying
 *
 *   Pbar_i  >=  sum over neighbors j of
 *               Atil_ij (Pbar_j^-1 + Ctil_j' Rtil_j^-1 Ctil_j)^-1 Atil_ij'
 *               + Q_i
 *
 * which is the steady form of the filter's covariance exchange.  The
 * inverse makes it nonconvex as written; introducing Omega_j = Pbar_j^-1
 * and a slack Delta_j >= (Omega_j + Ctil_j' Rtil_j^-1 Ctil_j)^-1 turns
 * every condition into an LMI except the inversion coupling itself,
 * which is handled with the recursive cone complementarity
 * linearization of El Ghaoui, Oustry and AitRami (1997): minimize the
 * linearized trace of Omega_j Pbar_j until it reaches the state
 * dimension, at which point Omega_j is numerically the inverse and the
 * original inequality holds.
 */

import type { Matrix } from "./mat.js";
import {
  addBlock,
  identity,
  inverse,
  matAdd,
  matMul,
  matSub,
  minEigSym,
  psdFactor,
  scale,
  setBlock,
  spdInverse,
  spectralRadius,
  symmetrize,
  trace,
  transpose,
  zeros,
} from "./mat.js";
import type { Network } from "./network.js";
import { assembleGlobal, atil, ctil, ctilRinvCtil, rtil } from "./network.js";
import type { LmiBlock, SdpProblem } from "./sdp.js";
import { solveSdp } from "./sdp.js";

// --- decision variable layout ----------------------------------------------

type VarKind = "P" | "O" | "D"; // Pbar, Omega, Delta

interface Layout {
  m: number;
  /** variable index for (subsystem id, kind, entry a <= b) */
  idx: (id: number, kind: VarKind, a: number, b: number) => number;
  entries: { id: number; kind: VarKind; a: number; b: number }[];
}

function buildLayout(net: Network): Layout {
  const entries: Layout["entries"] = [];
  const table = new Map<string, number>();
  for (const s of net.subsystems) {
    const n = s.A.length;
    for (const kind of ["P", "O", "D"] as VarKind[]) {
      for (let a = 0; a < n; a++)
        for (let b = a; b < n; b++) {
          table.set(`${s.id}:${kind}:${a}:${b}`, entries.length);
          entries.push({ id: s.id, kind, a, b });
        }
    }
  }
  return {
    m: entries.length,
    idx: (id, kind, a, b) => {
      const key = a <= b ? `${id}:${kind}:${a}:${b}` : `${id}:${kind}:${b}:${a}`;
      const k = table.get(key);
      if (k === undefined) throw new Error(`no variable ${key}`);
      return k;
    },
    entries,
  };
}

/** Symmetric basis matrix E_ab (unit at (a,b) and (b,a)). */
function symBasis(n: number, a: number, b: number): Matrix {
  const E = zeros(n, n);
  E[a][b] = 1;
  E[b][a] = 1;
  return E;
}

function shiftEps(F0: Matrix, eps: number): void {
  for (let i = 0; i < F0.length; i++) F0[i][i] -= eps;
}

// --- LMI blocks -------------------------------------------------------------

/**
 * The per-subsystem feasibility condition as one big block:
 *
 *   [ Pbar_i   Atil_ij Delta_j ...   G_i ]
 *   [   *        diag(Delta_j)       0   ]  >=  eps I
 *   [   *            0               I   ]
 *
 * with G_i G_i' = Q_i.  Columns only exist for actual neighbors, the
 * zero coupling blocks of the full form contribute nothing.
 */
function feasibilityBlock(net: Network, i: number, layout: Layout, eps: number): LmiBlock {
  const sub = net.byId.get(i)!;
  const ni = sub.A.length;
  const neigh = net.neighbors.get(i)!;
  const offsets = new Map<number, number>();
  let off = ni;
  for (const j of neigh) {
    offsets.set(j, off);
    off += net.byId.get(j)!.A.length;
  }
  const gOff = off;
  const dim = off + ni;

  const F0 = zeros(dim, dim);
  const G = psdFactor(sub.Q);
  setBlock(F0, G, 0, gOff);
  setBlock(F0, transpose(G), gOff, 0);
  setBlock(F0, identity(ni), gOff, gOff);
  shiftEps(F0, eps);

  const coeffs: LmiBlock["coeffs"] = [];
  for (let a = 0; a < ni; a++)
    for (let b = a; b < ni; b++) {
      const F = zeros(dim, dim);
      setBlock(F, symBasis(ni, a, b), 0, 0);
      coeffs.push({ k: layout.idx(i, "P", a, b), F });
    }
  for (const j of neigh) {
    const nj = net.byId.get(j)!.A.length;
    const Aij = atil(net, i, j);
    const oj = offsets.get(j)!;
    for (let a = 0; a < nj; a++)
      for (let b = a; b < nj; b++) {
        const E = symBasis(nj, a, b);
        const F = zeros(dim, dim);
        const AE = matMul(Aij, E);
        setBlock(F, AE, 0, oj);
        setBlock(F, transpose(AE), oj, 0);
        addBlock(F, E, oj, oj);
        coeffs.push({ k: layout.idx(j, "D", a, b), F });
      }
  }
  return { dim, F0, coeffs };
}

/** [[Delta_j, I], [I, Omega_j + Ctil'Rtil^-1 Ctil]] >= eps I */
function slackBlock(net: Network, j: number, layout: Layout, eps: number): LmiBlock {
  const n = net.byId.get(j)!.A.length;
  const dim = 2 * n;
  const F0 = zeros(dim, dim);
  setBlock(F0, identity(n), 0, n);
  setBlock(F0, identity(n), n, 0);
  setBlock(F0, ctilRinvCtil(net, j), n, n);
  shiftEps(F0, eps);
  const coeffs: LmiBlock["coeffs"] = [];
  for (let a = 0; a < n; a++)
    for (let b = a; b < n; b++) {
      const Fd = zeros(dim, dim);
      setBlock(Fd, symBasis(n, a, b), 0, 0);
      coeffs.push({ k: layout.idx(j, "D", a, b), F: Fd });
      const Fo = zeros(dim, dim);
      setBlock(Fo, symBasis(n, a, b), n, n);
      coeffs.push({ k: layout.idx(j, "O", a, b), F: Fo });
    }
  return { dim, F0, coeffs };
}

/** [[Omega_j, I], [I, Pbar_j]] >= eps I, the cone coupling of the pair. */
function coneBlock(net: Network, j: number, layout: Layout, eps: number): LmiBlock {
  const n = net.byId.get(j)!.A.length;
  const dim = 2 * n;
  const F0 = zeros(dim, dim);
  setBlock(F0, identity(n), 0, n);
  setBlock(F0, identity(n), n, 0);
  shiftEps(F0, eps);
  const coeffs: LmiBlock["coeffs"] = [];
  for (let a = 0; a < n; a++)
    for (let b = a; b < n; b++) {
      const Fo = zeros(dim, dim);
      setBlock(Fo, symBasis(n, a, b), 0, 0);
      coeffs.push({ k: layout.idx(j, "O", a, b), F: Fo });
      const Fp = zeros(dim, dim);
      setBlock(Fp, symBasis(n, a, b), n, n);
      coeffs.push({ k: layout.idx(j, "P", a, b), F: Fp });
    }
  return { dim, F0, coeffs };
}

/** Pbar_j >= eps I keeps the pair nonsingular, required by the inversion step. */
function pdBlock(net: Network, j: number, layout: Layout, eps: number): LmiBlock {
  const n = net.byId.get(j)!.A.length;
  const F0 = scale(identity(n), -eps);
  const coeffs: LmiBlock["coeffs"] = [];
  for (let a = 0; a < n; a++)
    for (let b = a; b < n; b++)
      coeffs.push({ k: layout.idx(j, "P", a, b), F: symBasis(n, a, b) });
  return { dim: n, F0, coeffs };
}

function buildBlocks(net: Network, layout: Layout, eps: number): LmiBlock[] {
  const blocks: LmiBlock[] = [];
  for (const id of net.ids) blocks.push(feasibilityBlock(net, id, layout, eps));
  for (const id of net.ids) blocks.push(slackBlock(net, id, layout, eps));
  for (const id of net.ids) blocks.push(coneBlock(net, id, layout, eps));
  for (const id of net.ids) blocks.push(pdBlock(net, id, layout, eps));
  return blocks;
}

function extract(net: Network, layout: Layout, x: number[], kind: VarKind): Map<number, Matrix> {
  const out = new Map<number, Matrix>();
  for (const s of net.subsystems) {
    const n = s.A.length;
    const M = zeros(n, n);
    for (let a = 0; a < n; a++)
      for (let b = a; b < n; b++) {
        const v = x[layout.idx(s.id, kind, a, b)];
        M[a][b] = v;
        M[b][a] = v;
      }
    out.set(s.id, M);
  }
  return out;
}

// --- direct checks on a candidate set --------------------------------------

/**
 * Right hand side of the steady inequality in the Riccati form the
 * filter itself evaluates: rescaled one step updates of the neighbors
 * (with zero process noise) plus Q_i.
 */
export function steadyRhs(net: Network, i: number, pbar: Map<number, Matrix>): Matrix {
  const sub = net.byId.get(i)!;
  let acc = sub.Q.map((r) => r.slice());
  for (const j of net.neighbors.get(i)!) {
    const P = pbar.get(j);
    if (P === undefined) throw new Error(`missing Pbar for subsystem ${j}`);
    const A = atil(net, i, j);
    const C = ctil(net, j);
    const R = rtil(net, j);
    const AP = matMul(A, P);
    const PCt = matMul(P, transpose(C));
    const S = matAdd(matMul(C, PCt), R);
    const K = matMul(matMul(AP, transpose(C)), inverse(S));
    acc = matAdd(acc, matSub(matMul(AP, transpose(A)), matMul(K, transpose(matMul(A, PCt)))));
  }
  return symmetrize(acc);
}

/**
 * The same right hand side through the matrix inversion lemma,
 * sum of Atil (Pbar^-1 + Ctil'Rtil^-1 Ctil)^-1 Atil' + Q_i.  Agreement
 * with steadyRhs is the numerical spot check that the LMI route and the
 * filter's own update talk about the same inequality.
 */
export function steadyRhsInverseForm(net: Network, i: number, pbar: Map<number, Matrix>): Matrix {
  const sub = net.byId.get(i)!;
  let acc = sub.Q.map((r) => r.slice());
  for (const j of net.neighbors.get(i)!) {
    const P = pbar.get(j)!;
    const inner = spdInverse(matAdd(spdInverse(P), ctilRinvCtil(net, j)));
    const A = atil(net, i, j);
    acc = matAdd(acc, matMul(A, matMul(inner, transpose(A))));
  }
  return symmetrize(acc);
}

/** Smallest eigenvalue of Pbar_i minus the steady right hand side, per subsystem. */
export function steadyResiduals(net: Network, pbar: Map<number, Matrix>): Map<number, number> {
  const out = new Map<number, number>();
  for (const i of net.ids)
    out.set(i, minEigSym(matSub(pbar.get(i)!, steadyRhs(net, i, pbar))));
  return out;
}

/** Global gain with blocks L_ij = A_ij Pbar_j C_j' (C_j Pbar_j C_j' + R_j)^-1. */
export function assembleGain(net: Network, pbar: Map<number, Matrix>): Matrix {
  const g = assembleGlobal(net);
  const L = zeros(g.n, g.p);
  for (const s of net.subsystems) {
    for (const j of net.neighbors.get(s.id)!) {
      const subJ = net.byId.get(j)!;
      const Aij = j === s.id ? s.A : s.coupling.get(j)!;
      const P = pbar.get(j)!;
      const PCt = matMul(P, transpose(subJ.C));
      const S = matAdd(matMul(subJ.C, PCt), subJ.R);
      const Lij = matMul(matMul(Aij, PCt), inverse(S));
      setBlock(L, Lij, g.stateOffset.get(s.id)!, g.outputOffset.get(j)!);
    }
  }
  return L;
}

/** Spectral radius of the assembled A - L C closed loop. */
export function closedLoopSigma(net: Network, pbar: Map<number, Matrix>): number {
  const g = assembleGlobal(net);
  const L = assembleGain(net, pbar);
  return spectralRadius(matSub(g.A, matMul(L, g.C)));
}

// --- the cone complementarity loop -----------------------------------------

export interface SolveOptions {
  maxOuter?: number;
  /** per subsystem stop: |tr(Omega Pbar) - n| <= complTol * n */
  complTol?: number;
  eps?: number;
  /** weight of the extra sum tr(Pbar) objective pulling toward the minimal set */
  traceWeight?: number;
  innerTol?: number;
  innerMaxIter?: number;
  /** eigenvalue tolerance of the final direct inequality check */
  directTol?: number;
}

export interface SolveReport {
  status: "feasible" | "infeasible_or_unreliable";
  message: string;
  pbar: Map<number, Matrix> | null;
  outerIterations: number;
  /** max over subsystems of (tr(Omega Pbar) - n) / n at exit */
  complResidual: number;
  residualMinEig: Map<number, number> | null;
  sigma: number | null;
  /** accepted complementarity residuals, one per outer iteration */
  history: number[];
}

function complResidual(net: Network, P: Map<number, Matrix>, O: Map<number, Matrix>): number {
  let worst = 0;
  for (const i of net.ids) {
    const n = net.byId.get(i)!.A.length;
    const t = trace(matMul(O.get(i)!, P.get(i)!));
    worst = Math.max(worst, Math.abs(t - n) / n);
  }
  return worst;
}

/**
 * Per subsystem stop test.  The strictness shift puts a floor under the
 * product: with [[Omega - eps I, I], [I, Pbar - eps I]] >= 0 the best
 * reachable value is tr(Omega Pbar) = n + eps (tr Pbar + tr Omega), not
 * n itself, so that term is granted on top of the nominal tolerance.
 * Without it, designs with large covariances stall a hair above tol
 * while already being exact to working precision.
 */
function complConverged(net: Network, P: Map<number, Matrix>, O: Map<number, Matrix>,
                        tol: number, eps: number): boolean {
  for (const i of net.ids) {
    const n = net.byId.get(i)!.A.length;
    const Pi = P.get(i)!;
    const Oi = O.get(i)!;
    const floor = eps * (trace(Pi) + trace(Oi));
    if (Math.abs(trace(matMul(Oi, Pi)) - n) > tol * n + floor) return false;
  }
  return true;
}

export function solvePbarLmis(net: Network, opts: SolveOptions = {}): SolveReport {
  const maxOuter = opts.maxOuter ?? 100;
  const complTol = opts.complTol ?? 1e-6;
  const eps = opts.eps ?? 1e-9;
  const traceWeight = opts.traceWeight ?? 0;
  const innerTol = opts.innerTol ?? 1e-9;
  const innerMaxIter = opts.innerMaxIter ?? 100;
  const directTol = opts.directTol ?? 1e-8;

  const layout = buildLayout(net);
  const blocks = buildBlocks(net, layout, eps);

  const objective = (Pprev: Map<number, Matrix> | null, Oprev: Map<number, Matrix> | null): number[] => {
    const c = new Array<number>(layout.m).fill(0);
    for (const { id, kind, a, b } of layout.entries) {
      const k = layout.idx(id, kind, a, b);
      const mult = a === b ? 1 : 2;
      if (Pprev === null) {
        // initial feasibility pass: pull the pair toward a small, balanced point
        if (kind === "P" || kind === "O") c[k] = a === b ? 1 : 0;
      } else if (kind === "P") {
        c[k] = mult * Oprev!.get(id)![a][b] + (a === b ? traceWeight : 0);
      } else if (kind === "O") {
        c[k] = mult * Pprev.get(id)![a][b];
      }
    }
    return c;
  };

  const giveUp = (message: string, outer: number, r: number, history: number[]): SolveReport => ({
    status: "infeasible_or_unreliable",
    message,
    pbar: null,
    outerIterations: outer,
    complResidual: r,
    residualMinEig: null,
    sigma: null,
    history,
  });

  // initial point
  const first = solveSdp({ m: layout.m, c: objective(null, null), blocks }, { tol: innerTol, maxIter: innerMaxIter });
  if (first.status === "numerical")
    return giveUp(`initial feasibility solve broke down (${first.status})`, 0, Infinity, []);
  if (first.status === "maxiter" && (first.primalRes > 1e-6 || first.gap > 1e-4))
    return giveUp("initial feasibility solve did not converge", 0, Infinity, []);
  let P = extract(net, layout, first.x, "P");
  let O = extract(net, layout, first.x, "O");
  let r = complResidual(net, P, O);
  const history = [r];

  let outer = 0;
  let converged = complConverged(net, P, O, complTol, eps);
  while (!converged && outer < maxOuter) {
    outer++;
    const res = solveSdp({ m: layout.m, c: objective(P, O), blocks }, { tol: innerTol, maxIter: innerMaxIter });
    if (res.status === "numerical")
      return giveUp(`inner solve broke down at outer iteration ${outer}`, outer, r, history);
    if (res.status === "maxiter" && (res.primalRes > 1e-6 || res.gap > 1e-4))
      return giveUp(`inner solve stalled at outer iteration ${outer}`, outer, r, history);
    const Pn = extract(net, layout, res.x, "P");
    const On = extract(net, layout, res.x, "O");
    const rn = complResidual(net, Pn, On);
    if (rn >= r) {
      // the linearized trace stopped making progress: reject the step
      if (complConverged(net, P, O, complTol, eps)) break;
      return giveUp(
        `complementarity residual stopped decreasing at outer iteration ${outer} (${rn.toExponential(3)} after ${r.toExponential(3)})`,
        outer, r, history,
      );
    }
    P = Pn;
    O = On;
    r = rn;
    history.push(r);
    converged = complConverged(net, P, O, complTol, eps);
  }

  if (!converged)
    return giveUp(`complementarity gap still ${r.toExponential(3)} after ${outer} outer iterations`, outer, r, history);

  const residualMinEig = steadyResiduals(net, P);
  const worst = Math.min(...residualMinEig.values());
  const sigma = closedLoopSigma(net, P);
  if (worst < -directTol)
    return {
      status: "infeasible_or_unreliable",
      message: `complementarity converged but the steady inequality fails (min eigenvalue ${worst.toExponential(3)})`,
      pbar: P,
      outerIterations: outer,
      complResidual: r,
      residualMinEig,
      sigma,
      history,
    };
  return {
    status: "feasible",
    message: `feasible after ${outer} outer iterations`,
    pbar: P,
    outerIterations: outer,
    complResidual: r,
    residualMinEig,
    sigma,
    history,
  };
}

// --- helpers shared with the tests -----------------------------------------

/**
 * Fixed point of P -> A P A' - A P C'(C P C' + R)^-1 C P A' + Q by plain
 * iteration.  Slow but dependable for the small systems used here; the
 * decoupled design checks lean on it as an independent reference.
 */
export function riccatiFixedPoint(A: Matrix, C: Matrix, Q: Matrix, R: Matrix,
                                  tol = 1e-12, maxIter = 100000): Matrix {
  let P = Q.map((r) => r.slice());
  for (let it = 0; it < maxIter; it++) {
    const AP = matMul(A, P);
    const PCt = matMul(P, transpose(C));
    const S = matAdd(matMul(C, PCt), R);
    const K = matMul(matMul(AP, transpose(C)), inverse(S));
    const next = symmetrize(matAdd(matSub(matMul(AP, transpose(A)), matMul(K, transpose(matMul(A, PCt)))), Q));
    let diff = 0;
    for (let i = 0; i < P.length; i++)
      for (let j = 0; j < P.length; j++) diff = Math.max(diff, Math.abs(next[i][j] - P[i][j]));
    P = next;
    if (diff < tol) return P;
  }
  throw new Error("riccatiFixedPoint did not converge");
}
