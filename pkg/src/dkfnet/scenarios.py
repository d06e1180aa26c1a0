"""Benchmark network builders: the two-state academic family and a
multi-area frequency-control model.

The academic family uses identical two-state subsystems

    A_ii = [[0.9, 0.1], [0.1, -0.9]],  C_i = [1 1],  Q_i = I,  R_i = 1

with couplings A_ij = diag(alpha, -alpha) on declared edges, so coupling
strength is a single knob.

The power model is a standard primary-frequency-control area: states are
angle deviation, frequency deviation, mechanical power and valve
position; neighboring areas interact through tie-line synchronizing
torque.  Areas are built in continuous time and sampled exactly.  A tie
line attached later by a reconfiguration event contributes its coupling
blocks only; the synchronizing-torque term inside an existing area's
local matrix is part of that area's fixed model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .network import NetworkModel, SubsystemModel, build_network

# --- academic family --------------------------------------------------------

ACADEMIC_A = np.array([[0.9, 0.1], [0.1, -0.9]])
ACADEMIC_C = np.array([[1.0, 1.0]])


def academic_coupling(alpha: float) -> np.ndarray:
    return np.diag([alpha, -alpha])


def academic_network(M: int = 2, alpha: float = 0.1,
                     edges: dict[int, set[int]] | None = None) -> NetworkModel:
    """Network of M identical two-state subsystems with ids 1..M.

    edges[i] lists the neighbors j != i whose state drives subsystem i;
    None means every pair is mutually coupled.
    """
    ids = list(range(1, M + 1))
    if edges is None:
        edges = {i: {j for j in ids if j != i} for i in ids}
    subs = []
    for i in ids:
        coupling = {j: academic_coupling(alpha) for j in sorted(edges.get(i, set()))}
        subs.append(SubsystemModel(id=i, A=ACADEMIC_A.copy(),
                                   C=ACADEMIC_C.copy(), Q=np.eye(2),
                                   R=np.array([[1.0]]), coupling=coupling))
    return build_network(subs)


def academic_three_phase_edges() -> list[dict[int, set[int]]]:
    """Edge sets of the three topology phases of the M = 3 walkthrough:
    1-2 coupled with 3 isolated, then 3 attached to 2, then 1 detached."""
    return [
        {1: {2}, 2: {1}, 3: set()},
        {1: {2}, 2: {1, 3}, 3: {2}},
        {1: set(), 2: {3}, 3: {2}},
    ]


# --- multi-area frequency control ------------------------------------------

@dataclass
class AreaParams:
    """Primary-frequency-control constants of one area (per-unit style)."""
    inertia: float = 12.0      # H
    damping: float = 0.7       # D
    turbine: float = 0.65      # T_t
    governor: float = 0.1      # T_g
    droop: float = 0.05        # R


DEFAULT_TIE = 4.0


def area_continuous(params: AreaParams, tie_sum: float) -> np.ndarray:
    """Continuous-time local matrix of one area.

    tie_sum is the total synchronizing coefficient of the area's own tie
    lines; it enters the frequency equation with a negative sign.
    """
    H, D, Tt, Tg, Rd = (params.inertia, params.damping, params.turbine,
                        params.governor, params.droop)
    return np.array([
        [0.0, 1.0, 0.0, 0.0],
        [-tie_sum / (2 * H), -D / (2 * H), 1.0 / (2 * H), 0.0],
        [0.0, 0.0, -1.0 / Tt, 1.0 / Tt],
        [0.0, -1.0 / (Rd * Tg), 0.0, -1.0 / Tg],
    ])


def tie_continuous(tie: float, params: AreaParams) -> np.ndarray:
    """Continuous-time coupling block from a neighboring area's angle."""
    Ac = np.zeros((4, 4))
    Ac[1, 0] = tie / (2 * params.inertia)
    return Ac


def discretize_blocks(Ac_diag: dict[int, np.ndarray],
                      Ac_coupling: dict[tuple[int, int], np.ndarray],
                      T: float) -> tuple[dict, dict]:
    """Exact sampling of a block-interconnected continuous system.

    A_ii = expm(Ac_ii T); A_ij = (integral of expm(Ac_ii s) ds over [0, T])
    times Ac_ij, both obtained from one augmented matrix exponential per
    subsystem.  Zero continuous couplings stay exactly zero.
    """
    Ad, Int = {}, {}
    for i, Ac in Ac_diag.items():
        n = Ac.shape[0]
        aug = np.zeros((2 * n, 2 * n))
        aug[:n, :n] = Ac
        aug[:n, n:] = np.eye(n)
        E = scipy.linalg.expm(aug * T)
        Ad[i] = E[:n, :n]
        Int[i] = E[:n, n:]
    Adc = {}
    for (i, j), Acij in Ac_coupling.items():
        Adc[(i, j)] = Int[i] @ Acij
    return Ad, Adc


def power_network(adjacency: dict[int, set[int]] | None = None,
                  params: dict[int, AreaParams] | None = None,
                  tie: float = DEFAULT_TIE,
                  T: float = 1.0,
                  q_scale: float = 3.0) -> NetworkModel:
    """Sampled multi-area network; default topology is the 4-area chain.

    adjacency[i] lists areas sharing a tie line with i (symmetric);
    each area measures angle and frequency deviation.
    """
    if adjacency is None:
        adjacency = {1: {2}, 2: {1, 3}, 3: {2, 4}, 4: {3}}
    ids = sorted(adjacency)
    if params is None:
        params = {i: AreaParams() for i in ids}
    Ac_diag = {i: area_continuous(params[i], tie * len(adjacency[i]))
               for i in ids}
    Ac_coup = {(i, j): tie_continuous(tie, params[i])
               for i in ids for j in sorted(adjacency[i])}
    Ad, Adc = discretize_blocks(Ac_diag, Ac_coup, T)
    C = np.array([[1.0, 0, 0, 0], [0, 1.0, 0, 0]])
    subs = []
    for i in ids:
        subs.append(SubsystemModel(
            id=i, A=Ad[i], C=C.copy(), Q=q_scale * np.eye(4), R=np.eye(2),
            coupling={j: Adc[(i, j)] for j in sorted(adjacency[i])}))
    return build_network(subs)


def power_plugin_area(new_id: int, neighbor_ids: set[int],
                      base_adjacency: dict[int, set[int]] | None = None,
                      params: dict[int, AreaParams] | None = None,
                      tie: float = DEFAULT_TIE, T: float = 1.0,
                      q_scale: float = 3.0) -> tuple[SubsystemModel, dict[int, np.ndarray]]:
    """A new area wired to existing ones, plus the reverse coupling blocks.

    Returns (model, incoming): model.coupling holds the new area's view
    of its neighbors, and incoming[j] is the block through which the new
    area's angle enters existing area j.  The reverse blocks are sampled
    with area j's own local matrix (built from base_adjacency), since the
    integrated exponential in the exact sampling belongs to the receiving
    area.
    """
    if base_adjacency is None:
        base_adjacency = {1: {2}, 2: {1, 3}, 3: {2, 4}, 4: {3}}
    ids = sorted(base_adjacency)
    if params is None:
        params = {i: AreaParams() for i in ids + [new_id]}
    pnew = params.get(new_id, AreaParams())
    Ac_new = area_continuous(pnew, tie * len(neighbor_ids))
    Ad, Adc = discretize_blocks({new_id: Ac_new},
                                {(new_id, j): tie_continuous(tie, pnew)
                                 for j in neighbor_ids}, T)
    C = np.array([[1.0, 0, 0, 0], [0, 1.0, 0, 0]])
    model = SubsystemModel(id=new_id, A=Ad[new_id], C=C,
                           Q=q_scale * np.eye(4), R=np.eye(2),
                           coupling={j: Adc[(new_id, j)] for j in sorted(neighbor_ids)})
    incoming = {}
    for j in sorted(neighbor_ids):
        Ac_j = area_continuous(params[j], tie * len(base_adjacency[j]))
        _, rev = discretize_blocks({j: Ac_j},
                                   {(j, new_id): tie_continuous(tie, params[j])}, T)
        incoming[j] = rev[(j, new_id)]
    return model, incoming
