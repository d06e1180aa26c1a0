/**
 * Small dense semidefinite programming solver for LMI constrained
 * problems:
 *
 *   minimize    c' x
 *   subject to  S_b(x) = F0_b + sum_k x_k Fk_b  >= 0   for every block b
 *
 * The method is an infeasible start primal-dual path follower with the
 * HKM search direction (Helmberg/Rendl/Vanderbei/Wolkowicz, also the
 * default of SDPT3) and Mehrotra style adaptive centering.  Problems in
 * this package have a few dozen scalar unknowns and block sizes around
 * ten, so everything is dense and the Schur complement system is solved
 * directly.
 *
 * Dual variables Z_b >= 0 satisfy sum_b tr(Fk_b Z_b) = c_k at
 * optimality; the returned gap is tr(Z S) / (total block dimension).
 */

import type { Matrix } from "./mat.js";
import {
  cholesky,
  choleskySolveVec,
  clone,
  frobenius,
  identity,
  jacobiEigSym,
  luSolve,
  matAdd,
  matMul,
  scale,
  symmetrize,
  traceProd,
  transpose,
  zeros,
} from "./mat.js";

export interface LmiBlock {
  dim: number;
  F0: Matrix;
  /** Sparse list of the variables entering this block with their symmetric coefficient matrices. */
  coeffs: { k: number; F: Matrix }[];
}

export interface SdpProblem {
  m: number;
  c: number[];
  blocks: LmiBlock[];
}

export interface SdpOptions {
  maxIter?: number;
  tol?: number;
}

export type SdpStatus = "optimal" | "maxiter" | "numerical";

export interface SdpResult {
  status: SdpStatus;
  x: number[];
  iterations: number;
  /** normalized complementarity tr(ZS)/dim at exit */
  gap: number;
  primalRes: number;
  dualRes: number;
  objective: number;
}

/** S(x) for one block. */
function blockValue(block: LmiBlock, x: number[]): Matrix {
  const S = clone(block.F0);
  for (const { k, F } of block.coeffs) {
    const xk = x[k];
    if (xk === 0) continue;
    for (let i = 0; i < block.dim; i++)
      for (let j = 0; j < block.dim; j++) S[i][j] += xk * F[i][j];
  }
  return S;
}

/** Inverse of an SPD matrix given its lower Cholesky factor. */
function invFromChol(L: Matrix): Matrix {
  const n = L.length;
  const inv = zeros(n, n);
  for (let j = 0; j < n; j++) {
    const e = new Array<number>(n).fill(0);
    e[j] = 1;
    const col = choleskySolveVec(L, e);
    for (let i = 0; i < n; i++) inv[i][j] = col[i];
  }
  return symmetrize(inv);
}

/**
 * Largest step a in [0, 1] keeping X + a*D positive definite, from the
 * smallest eigenvalue of L^-1 D L^-T where X = L L'.
 */
export function maxStep(X: Matrix, D: Matrix): number {
  const L = cholesky(X);
  if (L === null) return 0;
  const n = X.length;
  // columns of L^-1 through forward solves
  const Linv = zeros(n, n);
  for (let j = 0; j < n; j++) {
    for (let i = j; i < n; i++) {
      let s = i === j ? 1 : 0;
      for (let k = j; k < i; k++) s -= L[i][k] * Linv[k][j];
      Linv[i][j] = s / L[i][i];
    }
  }
  const W = matMul(Linv, matMul(D, transpose(Linv)));
  const lamMin = jacobiEigSym(symmetrize(W)).values[0];
  if (lamMin >= 0) return 1;
  return Math.min(1, -1 / lamMin);
}

export function solveSdp(prob: SdpProblem, opts: SdpOptions = {}): SdpResult {
  const maxIter = opts.maxIter ?? 100;
  const tol = opts.tol ?? 1e-9;
  const { m, c, blocks } = prob;
  const dimTotal = blocks.reduce((s, b) => s + b.dim, 0);
  const cNorm = 1 + Math.max(...c.map(Math.abs), 0);

  const x = new Array<number>(m).fill(0);
  const S = blocks.map((b) => scale(identity(b.dim), 1 + frobenius(b.F0)));
  const Z = blocks.map((b) => identity(b.dim));

  let iterations = 0;
  let gap = Infinity;
  let primalRes = Infinity;
  let dualRes = Infinity;

  const fail = (status: SdpStatus): SdpResult => ({
    status, x, iterations, gap, primalRes, dualRes,
    objective: c.reduce((s, ck, k) => s + ck * x[k], 0),
  });

  for (; iterations < maxIter; iterations++) {
    // residuals
    const Rp = blocks.map((b, bi) => {
      const Sx = blockValue(b, x);
      for (let i = 0; i < b.dim; i++)
        for (let j = 0; j < b.dim; j++) Sx[i][j] -= S[bi][i][j];
      return Sx;
    });
    const rd = c.slice();
    for (let bi = 0; bi < blocks.length; bi++)
      for (const { k, F } of blocks[bi].coeffs) rd[k] -= traceProd(F, Z[bi]);

    gap = blocks.reduce((s, _, bi) => s + traceProd(Z[bi], S[bi]), 0) / dimTotal;
    primalRes = Math.max(...Rp.map((R, bi) => frobenius(R) / (1 + frobenius(blocks[bi].F0))));
    dualRes = Math.max(...rd.map(Math.abs)) / cNorm;
    const obj = c.reduce((s, ck, k) => s + ck * x[k], 0);
    if (primalRes < tol && dualRes < tol && gap / (1 + Math.abs(obj)) < tol)
      return { status: "optimal", x, iterations, gap, primalRes, dualRes, objective: obj };

    // per-block inverses and the Schur complement matrix
    const Sinv: Matrix[] = [];
    for (let bi = 0; bi < blocks.length; bi++) {
      const L = cholesky(S[bi]);
      if (L === null) return fail("numerical");
      Sinv.push(invFromChol(L));
    }

    const M = zeros(m, m);
    const t1 = new Array<number>(m).fill(0);
    const t3 = new Array<number>(m).fill(0);
    for (let bi = 0; bi < blocks.length; bi++) {
      const b = blocks[bi];
      const ZRpSinv = matMul(Z[bi], matMul(Rp[bi], Sinv[bi]));
      // V_l = Z F_l S^-1 for every variable touching the block
      const V = b.coeffs.map(({ F }) => matMul(Z[bi], matMul(F, Sinv[bi])));
      for (let a = 0; a < b.coeffs.length; a++) {
        const { k, F } = b.coeffs[a];
        t1[k] += traceProd(F, Sinv[bi]);
        t3[k] += traceProd(F, ZRpSinv);
        for (let bcol = 0; bcol < b.coeffs.length; bcol++)
          M[k][b.coeffs[bcol].k] += traceProd(F, V[bcol]);
      }
    }
    for (let i = 0; i < m; i++)
      for (let j = i + 1; j < m; j++) {
        const v = 0.5 * (M[i][j] + M[j][i]);
        M[i][j] = v;
        M[j][i] = v;
      }

    const solveSchur = (rhs: number[]): number[] | null => {
      const L = cholesky(M);
      if (L !== null) return choleskySolveVec(L, rhs);
      try {
        return luSolve(M, rhs);
      } catch {
        return null;
      }
    };

    const direction = (sigma: number) => {
      const rhs = t1.map((t1k, k) => sigma * gap * t1k - c[k] - t3[k]);
      const dx = solveSchur(rhs);
      if (dx === null) return null;
      const dS = blocks.map((b, bi) => {
        const D = clone(Rp[bi]);
        for (const { k, F } of b.coeffs) {
          const v = dx[k];
          if (v === 0) continue;
          for (let i = 0; i < b.dim; i++)
            for (let j = 0; j < b.dim; j++) D[i][j] += v * F[i][j];
        }
        return D;
      });
      const dZ = blocks.map((b, bi) => {
        // sigma*mu*S^-1 - Z - Z dS S^-1, symmetrized
        const ZdSSinv = matMul(Z[bi], matMul(dS[bi], Sinv[bi]));
        const D = matAdd(scale(Sinv[bi], sigma * gap), scale(matAdd(Z[bi], ZdSSinv), -1));
        return symmetrize(D);
      });
      return { dx, dS, dZ };
    };

    // predictor to size the centering parameter
    const aff = direction(0);
    if (aff === null) return fail("numerical");
    let alphaP = 1, alphaD = 1;
    for (let bi = 0; bi < blocks.length; bi++) {
      alphaP = Math.min(alphaP, maxStep(S[bi], aff.dS[bi]));
      alphaD = Math.min(alphaD, maxStep(Z[bi], aff.dZ[bi]));
    }
    let gapAff = 0;
    for (let bi = 0; bi < blocks.length; bi++) {
      const Sn = matAdd(S[bi], scale(aff.dS[bi], alphaP));
      const Zn = matAdd(Z[bi], scale(aff.dZ[bi], alphaD));
      gapAff += traceProd(Zn, Sn);
    }
    gapAff /= dimTotal;
    const sigma = Math.min(0.8, Math.max(1e-4, Math.pow(Math.max(gapAff, 0) / gap, 3)));

    const dir = direction(sigma);
    if (dir === null) return fail("numerical");
    let aP = 1, aD = 1;
    for (let bi = 0; bi < blocks.length; bi++) {
      aP = Math.min(aP, maxStep(S[bi], dir.dS[bi]));
      aD = Math.min(aD, maxStep(Z[bi], dir.dZ[bi]));
    }
    const tau = 0.98;
    aP = Math.min(1, tau * aP);
    aD = Math.min(1, tau * aD);
    if (aP < 1e-10 && aD < 1e-10) return fail("numerical");

    for (let k = 0; k < m; k++) x[k] += aP * dir.dx[k];
    for (let bi = 0; bi < blocks.length; bi++) {
      for (let i = 0; i < blocks[bi].dim; i++)
        for (let j = 0; j < blocks[bi].dim; j++) {
          S[bi][i][j] += aP * dir.dS[bi][i][j];
          Z[bi][i][j] += aD * dir.dZ[bi][i][j];
        }
    }
    for (const v of x) if (!isFinite(v)) return fail("numerical");
  }
  return fail("maxiter");
}
