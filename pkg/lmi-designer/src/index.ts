export type { Matrix } from "./mat.js";
export {
  cholesky,
  identity,
  inverse,
  jacobiEigSym,
  matAdd,
  matMul,
  matSub,
  minEigSym,
  psdFactor,
  spdInverse,
  spectralRadius,
  symmetrize,
  trace,
  transpose,
  zeros,
} from "./mat.js";
export { readMat, writeMat, writePbarDir, MAT_SUFFIX } from "./matfile.js";
export type { Network, Subsystem } from "./network.js";
export {
  assembleGlobal,
  atil,
  benchmarkNetwork,
  buildNetwork,
  ctil,
  ctilRinvCtil,
  loadNetwork,
  networkToJson,
  parseNetwork,
  rtil,
} from "./network.js";
export type { LmiBlock, SdpProblem, SdpResult, SdpStatus } from "./sdp.js";
export { solveSdp } from "./sdp.js";
export type { SolveOptions, SolveReport } from "./lmi.js";
export {
  assembleGain,
  closedLoopSigma,
  riccatiFixedPoint,
  solvePbarLmis,
  steadyResiduals,
  steadyRhs,
  steadyRhsInverseForm,
} from "./lmi.js";
