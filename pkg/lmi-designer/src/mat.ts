/**
 * Dense matrix kernel.
 *
 * Everything here works on plain number[][] row-major arrays, which keeps
 * the rest of the package free of wrapper classes.  Sizes in this project
 * are tiny (state dimensions of a handful of subsystems), so clarity wins
 * over blocking or typed arrays.
 */

export type Matrix = number[][];

export function zeros(rows: number, cols: number): Matrix {
  return Array.from({ length: rows }, () => new Array<number>(cols).fill(0));
}

export function identity(n: number): Matrix {
  const I = zeros(n, n);
  for (let i = 0; i < n; i++) I[i][i] = 1;
  return I;
}

export function clone(A: Matrix): Matrix {
  return A.map((row) => row.slice());
}

export function transpose(A: Matrix): Matrix {
  const T = zeros(A[0].length, A.length);
  for (let i = 0; i < A.length; i++)
    for (let j = 0; j < A[0].length; j++) T[j][i] = A[i][j];
  return T;
}

export function matMul(A: Matrix, B: Matrix): Matrix {
  const n = A.length, k = B.length, m = B[0].length;
  if (A[0].length !== k)
    throw new Error(`matMul shape mismatch: ${A.length}x${A[0].length} times ${k}x${m}`);
  const C = zeros(n, m);
  for (let i = 0; i < n; i++) {
    const Ai = A[i], Ci = C[i];
    for (let p = 0; p < k; p++) {
      const a = Ai[p];
      if (a === 0) continue;
      const Bp = B[p];
      for (let j = 0; j < m; j++) Ci[j] += a * Bp[j];
    }
  }
  return C;
}

export function matAdd(A: Matrix, B: Matrix): Matrix {
  return A.map((row, i) => row.map((v, j) => v + B[i][j]));
}

export function matSub(A: Matrix, B: Matrix): Matrix {
  return A.map((row, i) => row.map((v, j) => v - B[i][j]));
}

export function scale(A: Matrix, s: number): Matrix {
  return A.map((row) => row.map((v) => v * s));
}

export function trace(A: Matrix): number {
  let t = 0;
  for (let i = 0; i < A.length; i++) t += A[i][i];
  return t;
}

/** tr(A B) without forming the product. */
export function traceProd(A: Matrix, B: Matrix): number {
  let t = 0;
  for (let i = 0; i < A.length; i++)
    for (let j = 0; j < A[0].length; j++) t += A[i][j] * B[j][i];
  return t;
}

export function frobenius(A: Matrix): number {
  let s = 0;
  for (const row of A) for (const v of row) s += v * v;
  return Math.sqrt(s);
}

export function maxAbs(A: Matrix): number {
  let m = 0;
  for (const row of A) for (const v of row) m = Math.max(m, Math.abs(v));
  return m;
}

export function symmetrize(A: Matrix): Matrix {
  return A.map((row, i) => row.map((v, j) => 0.5 * (v + A[j][i])));
}

/**
 * Cholesky factorization A = L L^T for symmetric positive definite A.
 * Returns the lower factor, or null when a pivot drops below eps
 * (which doubles as the positive definiteness test used by the
 * interior point line search).
 */
export function cholesky(A: Matrix, eps = 0): Matrix | null {
  const n = A.length;
  const L = zeros(n, n);
  for (let j = 0; j < n; j++) {
    let d = A[j][j];
    for (let k = 0; k < j; k++) d -= L[j][k] * L[j][k];
    if (d <= eps) return null;
    L[j][j] = Math.sqrt(d);
    for (let i = j + 1; i < n; i++) {
      let s = A[i][j];
      for (let k = 0; k < j; k++) s -= L[i][k] * L[j][k];
      L[i][j] = s / L[j][j];
    }
  }
  return L;
}

/** Solve L y = b then L^T x = y for a lower Cholesky factor. */
export function choleskySolveVec(L: Matrix, b: number[]): number[] {
  const n = L.length;
  const y = new Array<number>(n).fill(0);
  for (let i = 0; i < n; i++) {
    let s = b[i];
    for (let k = 0; k < i; k++) s -= L[i][k] * y[k];
    y[i] = s / L[i][i];
  }
  const x = new Array<number>(n).fill(0);
  for (let i = n - 1; i >= 0; i--) {
    let s = y[i];
    for (let k = i + 1; k < n; k++) s -= L[k][i] * x[k];
    x[i] = s / L[i][i];
  }
  return x;
}

/** Inverse of a symmetric positive definite matrix through its Cholesky factor. */
export function spdInverse(A: Matrix): Matrix {
  const L = cholesky(A);
  if (L === null) throw new Error("spdInverse: matrix is not positive definite");
  const n = A.length;
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
 * Solve A x = b by Gaussian elimination with partial pivoting.
 * Throws on (numerically) singular systems.
 */
export function luSolve(A: Matrix, b: number[]): number[] {
  const n = b.length;
  const M = A.map((row, i) => [...row, b[i]]);
  for (let col = 0; col < n; col++) {
    let piv = col;
    for (let r = col + 1; r < n; r++)
      if (Math.abs(M[r][col]) > Math.abs(M[piv][col])) piv = r;
    if (Math.abs(M[piv][col]) < 1e-300) throw new Error("luSolve: singular system");
    [M[col], M[piv]] = [M[piv], M[col]];
    for (let r = 0; r < n; r++) {
      if (r === col) continue;
      const f = M[r][col] / M[col][col];
      if (f === 0) continue;
      for (let j = col; j <= n; j++) M[r][j] -= f * M[col][j];
    }
  }
  return M.map((row, i) => row[n] / row[i]);
}

/** General inverse via column solves.  Throws when singular. */
export function inverse(A: Matrix): Matrix {
  const n = A.length;
  const inv = zeros(n, n);
  for (let j = 0; j < n; j++) {
    const e = new Array<number>(n).fill(0);
    e[j] = 1;
    const col = luSolve(A, e);
    for (let i = 0; i < n; i++) inv[i][j] = col[i];
  }
  return inv;
}

/**
 * Eigenvalues and eigenvectors of a symmetric matrix by the cyclic
 * Jacobi method (Golub & Van Loan, Alg. 8.4.3).  Returns eigenvalues in
 * ascending order; columns of V are the matching eigenvectors.
 */
export function jacobiEigSym(A0: Matrix, maxSweeps = 60): { values: number[]; vectors: Matrix } {
  const n = A0.length;
  const A = clone(A0);
  const V = identity(n);
  for (let sweep = 0; sweep < maxSweeps; sweep++) {
    let off = 0;
    for (let i = 0; i < n; i++)
      for (let j = i + 1; j < n; j++) off += A[i][j] * A[i][j];
    if (off < 1e-30) break;
    for (let p = 0; p < n - 1; p++) {
      for (let q = p + 1; q < n; q++) {
        if (Math.abs(A[p][q]) < 1e-300) continue;
        const theta = (A[q][q] - A[p][p]) / (2 * A[p][q]);
        const t = Math.sign(theta) / (Math.abs(theta) + Math.sqrt(theta * theta + 1)) || 1;
        const c = 1 / Math.sqrt(t * t + 1);
        const s = t * c;
        for (let k = 0; k < n; k++) {
          const akp = A[k][p], akq = A[k][q];
          A[k][p] = c * akp - s * akq;
          A[k][q] = s * akp + c * akq;
        }
        for (let k = 0; k < n; k++) {
          const apk = A[p][k], aqk = A[q][k];
          A[p][k] = c * apk - s * aqk;
          A[q][k] = s * apk + c * aqk;
        }
        for (let k = 0; k < n; k++) {
          const vkp = V[k][p], vkq = V[k][q];
          V[k][p] = c * vkp - s * vkq;
          V[k][q] = s * vkp + c * vkq;
        }
      }
    }
  }
  const order = Array.from({ length: n }, (_, i) => i).sort((a, b) => A[a][a] - A[b][b]);
  const values = order.map((i) => A[i][i]);
  const vectors = zeros(n, n);
  for (let j = 0; j < n; j++)
    for (let i = 0; i < n; i++) vectors[i][j] = V[i][order[j]];
  return { values, vectors };
}

export function minEigSym(A: Matrix): number {
  return jacobiEigSym(symmetrize(A)).values[0];
}

/**
 * Symmetric factor G with G G^T = A for positive semidefinite A,
 * built from the eigendecomposition with small negative eigenvalues
 * clipped to zero.
 */
export function psdFactor(A: Matrix, clip = 1e-12): Matrix {
  const { values, vectors } = jacobiEigSym(symmetrize(A));
  const n = A.length;
  const G = zeros(n, n);
  for (let j = 0; j < n; j++) {
    const lam = values[j];
    if (lam < -1e-8 * Math.max(1, Math.abs(values[n - 1])))
      throw new Error(`psdFactor: matrix has eigenvalue ${lam}`);
    const s = Math.sqrt(Math.max(lam, 0) < clip ? 0 : values[j]);
    for (let i = 0; i < n; i++) G[i][j] = vectors[i][j] * s;
  }
  return G;
}

/**
 * Spectral radius of a general square matrix by normalized repeated
 * squaring: rho(A) = lim ||A^m||_F^(1/m), evaluated at m = 2^k with the
 * iterate renormalized each squaring so nothing overflows.  Handles
 * complex eigenvalue pairs (it never looks at eigenvectors) and is
 * accurate to roughly 1e-11 after 40 squarings.
 */
export function spectralRadius(A0: Matrix, squarings = 40): number {
  const n = A0.length;
  if (n === 0) return 0;
  let B = clone(A0);
  let logNorm = Math.log(frobenius(B));
  if (!isFinite(logNorm)) return 0; // zero matrix
  let logScale = logNorm; // log ||A^(2^k)||_F accumulated at scale 2^k
  B = scale(B, Math.exp(-logNorm));
  for (let k = 0; k < squarings; k++) {
    B = matMul(B, B);
    const f = frobenius(B);
    if (f === 0) return 0; // nilpotent
    logScale = 2 * logScale + Math.log(f);
    B = scale(B, 1 / f);
  }
  return Math.exp(logScale / Math.pow(2, squarings));
}

/** Stack per-block square matrices into one block diagonal matrix. */
export function blockDiag(blocks: Matrix[]): Matrix {
  const dim = blocks.reduce((s, B) => s + B.length, 0);
  const out = zeros(dim, dim);
  let off = 0;
  for (const B of blocks) {
    for (let i = 0; i < B.length; i++)
      for (let j = 0; j < B.length; j++) out[off + i][off + j] = B[i][j];
    off += B.length;
  }
  return out;
}

/** Write `block` into `target` with its top-left corner at (row, col). */
export function setBlock(target: Matrix, block: Matrix, row: number, col: number): void {
  for (let i = 0; i < block.length; i++)
    for (let j = 0; j < block[0].length; j++) target[row + i][col + j] = block[i][j];
}

/** Add `block` into `target` at (row, col). */
export function addBlock(target: Matrix, block: Matrix, row: number, col: number): void {
  for (let i = 0; i < block.length; i++)
    for (let j = 0; j < block[0].length; j++) target[row + i][col + j] += block[i][j];
}
