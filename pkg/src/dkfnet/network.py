"""Interconnected subsystem models and the network they form.

A plant is partitioned into M subsystems

    x_i(k+1) = A_ii x_i(k) + sum_{j != i} A_ij x_j(k) + w_i(k)
    y_i(k)   = C_i x_i(k) + v_i(k)

with w_i ~ N(0, Q_i) and v_i ~ N(0, R_i).  The interconnection topology
is declared, not inferred: subsystem i names its neighbors through the
coupling map {j: A_ij}, and an entry in that map counts as an edge even
if the matrix happens to be numerically zero.  Neighbor sets always
include the subsystem itself.

The distributed estimator needs each subsystem's matrices rescaled by
its successor count; `NetworkModel.scaled` produces those, and
`assemble_global` builds the monolithic system the centralized baseline
runs on.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .riccati import factor_psd, min_eig, symmetrize


@dataclass
class SubsystemModel:
    """One subsystem: local dynamics, output map, noise, and couplings.

    coupling maps neighbor id j to the block A_ij through which j's state
    enters this subsystem's dynamics.
    """
    id: int
    A: np.ndarray
    C: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    coupling: dict[int, np.ndarray] = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def p(self) -> int:
        return self.C.shape[0]


@dataclass
class ScaledSystem:
    """Successor-rescaled matrices used by the distributed covariance update.

    Atil[j] = sqrt(varsigma_j) * A_ij for every neighbor j (j = i included),
    Ctil = sqrt(varsigma_i) * C_i, Rtil = varsigma_i * R_i.
    """
    Atil: dict[int, np.ndarray]
    Ctil: np.ndarray
    Rtil: np.ndarray


@dataclass
class GlobalSystem:
    """Assembled monolithic system, plus the block layout used to build it."""
    A: np.ndarray
    C: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    ids: list[int]
    state_offsets: dict[int, int]
    output_offsets: dict[int, int]
    state_dims: dict[int, int]
    output_dims: dict[int, int]

    @property
    def n(self) -> int:
        return self.A.shape[0]


class NetworkModel:
    """Validated collection of subsystems with derived topology.

    Subsystems are held in ascending id order; every deterministic
    iteration in the package follows that order.
    """

    def __init__(self, subsystems: list[SubsystemModel]):
        self.subsystems = sorted(subsystems, key=lambda s: s.id)
        self.index = {s.id: pos for pos, s in enumerate(self.subsystems)}
        self._neighbors = {
            s.id: tuple(sorted(set(s.coupling) | {s.id})) for s in self.subsystems
        }
        succ: dict[int, set[int]] = {s.id: set() for s in self.subsystems}
        for i, neigh in self._neighbors.items():
            for j in neigh:
                succ[j].add(i)
        self._successors = {i: tuple(sorted(v)) for i, v in succ.items()}

    @property
    def ids(self) -> list[int]:
        return [s.id for s in self.subsystems]

    @property
    def size(self) -> int:
        return len(self.subsystems)

    def subsystem(self, i: int) -> SubsystemModel:
        return self.subsystems[self.index[i]]

    def neighbors(self, i: int) -> tuple[int, ...]:
        """Ids j whose state enters i's dynamics, i itself included."""
        return self._neighbors[i]

    def successors(self, i: int) -> tuple[int, ...]:
        """Ids j whose dynamics i's state enters, i itself included."""
        return self._successors[i]

    def varsigma(self, i: int) -> int:
        """Successor count of subsystem i (always >= 1)."""
        return len(self._successors[i])

    def coupling(self, i: int, j: int) -> np.ndarray:
        """Block A_ij; j = i returns the local dynamics."""
        sub = self.subsystem(i)
        if j == i:
            return sub.A
        return sub.coupling[j]

    def scaled(self, i: int) -> ScaledSystem:
        sub = self.subsystem(i)
        vs_i = self.varsigma(i)
        Atil = {
            j: np.sqrt(self.varsigma(j)) * self.coupling(i, j)
            for j in self.neighbors(i)
        }
        return ScaledSystem(Atil=Atil,
                            Ctil=np.sqrt(vs_i) * sub.C,
                            Rtil=vs_i * sub.R)

    def assemble_global(self) -> GlobalSystem:
        ids = self.ids
        state_dims = {s.id: s.n for s in self.subsystems}
        output_dims = {s.id: s.p for s in self.subsystems}
        n = sum(state_dims.values())
        p = sum(output_dims.values())
        state_offsets, output_offsets = {}, {}
        so = oo = 0
        for i in ids:
            state_offsets[i] = so
            output_offsets[i] = oo
            so += state_dims[i]
            oo += output_dims[i]
        A = np.zeros((n, n))
        C = np.zeros((p, n))
        Q = np.zeros((n, n))
        R = np.zeros((p, p))
        for sub in self.subsystems:
            i = sub.id
            r = slice(state_offsets[i], state_offsets[i] + sub.n)
            A[r, r] = sub.A
            for j, Aij in sub.coupling.items():
                c = slice(state_offsets[j], state_offsets[j] + state_dims[j])
                A[r, c] = Aij
            ro = slice(output_offsets[i], output_offsets[i] + sub.p)
            C[ro, r] = sub.C
            Q[r, r] = sub.Q
            R[ro, ro] = sub.R
        return GlobalSystem(A=A, C=C, Q=Q, R=R, ids=ids,
                            state_offsets=state_offsets,
                            output_offsets=output_offsets,
                            state_dims=state_dims,
                            output_dims=output_dims)


def build_network(subsystems: list[SubsystemModel],
                  psd_tol: float = 1e-8) -> NetworkModel:
    """Validate subsystem data and derive the topology.

    Checks id uniqueness, shape conformance of every block, symmetry and
    semidefiniteness of the noise covariances, and that every coupling
    references an existing subsystem.

    Raises
    ------
    ValueError
        On any malformed input, with the offending subsystem named.
    """
    ids = [s.id for s in subsystems]
    if len(set(ids)) != len(ids):
        raise ValueError(f"subsystem ids are not unique: {sorted(ids)}")
    if not subsystems:
        raise ValueError("network needs at least one subsystem")
    dims = {}
    for s in subsystems:
        for name in ("A", "C", "Q", "R"):
            arr = np.asarray(getattr(s, name), dtype=float)
            setattr(s, name, arr)
        n = s.A.shape[0]
        if s.A.shape != (n, n):
            raise ValueError(f"subsystem {s.id}: A must be square, got {s.A.shape}")
        if s.C.ndim != 2 or s.C.shape[1] != n:
            raise ValueError(f"subsystem {s.id}: C shape {s.C.shape} does not "
                             f"match state dimension {n}")
        p = s.C.shape[0]
        if s.Q.shape != (n, n):
            raise ValueError(f"subsystem {s.id}: Q shape {s.Q.shape} != ({n},{n})")
        if s.R.shape != (p, p):
            raise ValueError(f"subsystem {s.id}: R shape {s.R.shape} != ({p},{p})")
        if not np.allclose(s.Q, s.Q.T, atol=1e-12):
            raise ValueError(f"subsystem {s.id}: Q is not symmetric")
        if not np.allclose(s.R, s.R.T, atol=1e-12):
            raise ValueError(f"subsystem {s.id}: R is not symmetric")
        if min_eig(s.Q) < -psd_tol:
            raise ValueError(f"subsystem {s.id}: Q is not positive semidefinite")
        if min_eig(s.R) <= 0:
            raise ValueError(f"subsystem {s.id}: R is not positive definite")
        dims[s.id] = n
    for s in subsystems:
        cleaned = {}
        for j, Aij in s.coupling.items():
            j = int(j)
            if j == s.id:
                raise ValueError(f"subsystem {s.id}: self-coupling must live in A")
            if j not in dims:
                raise ValueError(f"subsystem {s.id}: coupling references "
                                 f"unknown subsystem {j}")
            Aij = np.asarray(Aij, dtype=float)
            if Aij.shape != (dims[s.id], dims[j]):
                raise ValueError(
                    f"subsystem {s.id}: coupling to {j} has shape {Aij.shape}, "
                    f"expected ({dims[s.id]}, {dims[j]})")
            cleaned[j] = Aij
        s.coupling = cleaned
    return NetworkModel(subsystems)


# --- structural assumptions -------------------------------------------------

def _unit_circle_eigs(A: np.ndarray, margin: float = 1e-9) -> np.ndarray:
    w = np.linalg.eigvals(A)
    return w[np.abs(w) >= 1.0 - margin]


def pbh_detectable(A: np.ndarray, C: np.ndarray, tol: float = 1e-8) -> bool:
    """PBH rank test: no unobservable eigenvalue on or outside the unit circle."""
    n = A.shape[0]
    scale = max(1.0, float(np.linalg.norm(A, 2)))
    for lam in _unit_circle_eigs(A):
        M = np.vstack([A - lam * np.eye(n), C.astype(complex)])
        if np.linalg.svd(M, compute_uv=False)[-1] <= tol * scale:
            return False
    return True


def pbh_stabilizable(A: np.ndarray, B: np.ndarray, tol: float = 1e-8) -> bool:
    """PBH rank test: no uncontrollable eigenvalue on or outside the unit circle."""
    n = A.shape[0]
    scale = max(1.0, float(np.linalg.norm(A, 2)))
    for lam in _unit_circle_eigs(A):
        M = np.hstack([A - lam * np.eye(n), B.astype(complex)])
        if np.linalg.svd(M, compute_uv=False)[-1] <= tol * scale:
            return False
    return True


@dataclass
class SubsystemAssumptions:
    id: int
    invertible_A: bool
    detectable: bool
    detectable_scaled: bool
    stabilizable: bool
    stabilizable_scaled: bool

    @property
    def ok(self) -> bool:
        return (self.invertible_A and self.detectable and self.detectable_scaled
                and self.stabilizable and self.stabilizable_scaled)

    def failures(self) -> list[str]:
        out = []
        if not self.invertible_A:
            out.append("A_ii is not (numerically) invertible")
        if not self.detectable:
            out.append("(A_ii, C_i) is not detectable")
        if not self.detectable_scaled:
            out.append("(Atil_ii, Ctil_i) is not detectable")
        if not self.stabilizable:
            out.append("(A_ii, G_i) is not stabilizable")
        if not self.stabilizable_scaled:
            out.append("(Atil_ii, G_i) is not stabilizable")
        return out


@dataclass
class AssumptionReport:
    per_subsystem: dict[int, SubsystemAssumptions]

    @property
    def ok(self) -> bool:
        return all(a.ok for a in self.per_subsystem.values())

    def failures(self) -> dict[int, list[str]]:
        return {i: a.failures() for i, a in self.per_subsystem.items()
                if not a.ok}


def validate_assumptions(network: NetworkModel,
                         cond_threshold: float = 1e12,
                         pbh_tol: float = 1e-8) -> AssumptionReport:
    """Check the structural assumptions the observer design relies on.

    Per subsystem: invertibility of A_ii (condition number below
    cond_threshold), detectability of (A_ii, C_i) and of the
    successor-rescaled pair, and stabilizability of (A_ii, G_i) with
    G_i a full-rank factor of Q_i (rescaling A does not change G_i).
    """
    report = {}
    for sub in network.subsystems:
        i = sub.id
        sc = network.scaled(i)
        G = factor_psd(sub.Q)
        At = sc.Atil[i]
        report[i] = SubsystemAssumptions(
            id=i,
            invertible_A=bool(np.linalg.cond(sub.A) < cond_threshold),
            detectable=pbh_detectable(sub.A, sub.C, pbh_tol),
            detectable_scaled=pbh_detectable(At, sc.Ctil, pbh_tol),
            stabilizable=pbh_stabilizable(sub.A, G, pbh_tol),
            stabilizable_scaled=pbh_stabilizable(At, G, pbh_tol),
        )
    return AssumptionReport(per_subsystem=report)


# --- JSON interchange -------------------------------------------------------

def network_to_dict(network: NetworkModel) -> dict:
    return {
        "subsystems": [
            {
                "id": s.id,
                "A_ii": s.A.tolist(),
                "C": s.C.tolist(),
                "Q": s.Q.tolist(),
                "R": s.R.tolist(),
                "coupling": {str(j): Aij.tolist() for j, Aij in sorted(s.coupling.items())},
            }
            for s in network.subsystems
        ]
    }


def network_from_dict(data: dict) -> NetworkModel:
    try:
        raw = data["subsystems"]
    except KeyError as exc:
        raise ValueError("network description lacks a 'subsystems' array") from exc
    subs = []
    for entry in raw:
        try:
            subs.append(SubsystemModel(
                id=int(entry["id"]),
                A=np.asarray(entry["A_ii"], dtype=float),
                C=np.asarray(entry["C"], dtype=float),
                Q=np.asarray(entry["Q"], dtype=float),
                R=np.asarray(entry["R"], dtype=float),
                coupling={int(j): np.asarray(Aij, dtype=float)
                          for j, Aij in entry.get("coupling", {}).items()},
            ))
        except KeyError as exc:
            raise ValueError(f"subsystem entry is missing field {exc}") from exc
    return build_network(subs)


def save_network(network: NetworkModel, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(network_to_dict(network), fh, indent=2)


def load_network(path: str) -> NetworkModel:
    with open(path) as fh:
        return network_from_dict(json.load(fh))
