"""Distributed Kalman filter rounds and the centralized baseline.

Each subsystem i runs a local one-step predictor fed by its neighbors:

    xhat_i(k+1) = sum_{j in N_i} [ A_ij xhat_j(k) + L_ij(k) (y_j(k) - C_j xhat_j(k)) ]
    L_ij(k)     = A_ij P_j(k) C_j' (C_j P_j(k) C_j' + R_j)^-1

and propagates its covariance through the successor-rescaled Riccati sum

    P_i(k+1) = sum_{j in N_i} Riccati(P_j(k); Atil_ij, Ctil_j, 0, Rtil_j) + Q_i.

A round is synchronous: every subsystem broadcasts (y, xhat, P) to its
successors, then every subsystem folds the messages it gathered.  The
fold iterates neighbors in ascending id order so results are bit-stable
regardless of how the per-subsystem work is scheduled; rounds may run
subsystem updates on a thread pool and still reproduce the serial
output exactly, because no accumulation crosses subsystem boundaries.

The simplified variant freezes the covariances at provided steady-state
values and only propagates estimates.  The centralized baseline runs the
classical one-step predictor on the assembled system; with block-diagonal
covariance its optimal gain coincides blockwise with the distributed
gains, which is what the equivalence tests pin down.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .network import GlobalSystem, NetworkModel
from .riccati import kalman_gain, riccati_update, symmetrize


@dataclass
class EstimatorState:
    """Per-subsystem estimator memory: estimate and covariance."""
    xhat: np.ndarray
    P: np.ndarray


@dataclass
class BroadcastMessage:
    """What subsystem `sender` sends its successors each round."""
    sender: int
    y: np.ndarray
    xhat: np.ndarray
    P: np.ndarray


def local_gains(network: NetworkModel, i: int,
                covs: dict[int, np.ndarray]) -> dict[int, np.ndarray]:
    """Gains L_ij for every neighbor j of i, from the neighbors' covariances.

    Raises
    ------
    ValueError
        If a neighbor's covariance is missing from `covs`.
    """
    gains = {}
    for j in network.neighbors(i):
        if j not in covs:
            raise ValueError(f"subsystem {i} needs the covariance of "
                             f"neighbor {j} to form its gains")
        sub_j = network.subsystem(j)
        gains[j] = kalman_gain(covs[j], network.coupling(i, j), sub_j.C, sub_j.R)
    return gains


def dkf_predict(network: NetworkModel, i: int,
                messages: dict[int, BroadcastMessage],
                gains: dict[int, np.ndarray]) -> np.ndarray:
    """Next estimate for subsystem i from its gathered neighbor messages."""
    sub = network.subsystem(i)
    x_next = np.zeros(sub.n)
    for j in network.neighbors(i):
        msg = messages[j]
        C_j = network.subsystem(j).C
        innov = msg.y - C_j @ msg.xhat
        x_next = x_next + network.coupling(i, j) @ msg.xhat + gains[j] @ innov
    return x_next


def dkf_cov_update(network: NetworkModel, i: int,
                   covs: dict[int, np.ndarray]) -> np.ndarray:
    """Next covariance for subsystem i: rescaled Riccati terms plus Q_i."""
    sub = network.subsystem(i)
    if network.neighbors(i) == (i,):
        # no couplings: the sum collapses to the classical one-step update,
        # written as such so an isolated subsystem (and the M = 1 network)
        # reproduces the centralized recursion bit for bit
        if i not in covs:
            raise ValueError(f"subsystem {i} needs its own covariance")
        sc = network.scaled(i)
        return riccati_update(covs[i], sc.Atil[i], sc.Ctil, sub.Q, sc.Rtil)
    acc = np.array(sub.Q, dtype=float, copy=True)
    Z = np.zeros((sub.n, sub.n))
    for j in network.neighbors(i):
        if j not in covs:
            raise ValueError(f"subsystem {i} needs the covariance of "
                             f"neighbor {j} to update its own")
        vs_j = network.varsigma(j)
        sub_j = network.subsystem(j)
        Atil = np.sqrt(vs_j) * network.coupling(i, j)
        Ctil = np.sqrt(vs_j) * sub_j.C
        Rtil = vs_j * sub_j.R
        acc = acc + riccati_update(covs[j], Atil, Ctil, Z, Rtil)
    return symmetrize(acc)


def broadcast(network: NetworkModel, states: dict[int, EstimatorState],
              measurements: dict[int, np.ndarray]) -> dict[int, BroadcastMessage]:
    """Materialize every subsystem's outgoing message for this round."""
    return {
        j: BroadcastMessage(sender=j, y=np.asarray(measurements[j], dtype=float),
                            xhat=states[j].xhat, P=states[j].P)
        for j in network.ids
    }


def _gather(network: NetworkModel, i: int,
            messages: dict[int, BroadcastMessage]) -> dict[int, BroadcastMessage]:
    got = {}
    for j in network.neighbors(i):
        if j not in messages:
            raise ValueError(f"subsystem {i} is missing the round message "
                             f"of neighbor {j}")
        got[j] = messages[j]
    return got


def network_round(network: NetworkModel, states: dict[int, EstimatorState],
                  measurements: dict[int, np.ndarray],
                  max_workers: int | None = None) -> dict[int, EstimatorState]:
    """One synchronous round of the adaptive distributed filter.

    Parameters
    ----------
    network : NetworkModel
    states : dict id -> EstimatorState
        Current estimates and covariances, one entry per subsystem.
    measurements : dict id -> ndarray
        Current outputs y_i(k).
    max_workers : int or None
        If set, run per-subsystem updates on a thread pool of that size.
        Output is identical to the serial schedule.

    Returns
    -------
    dict id -> EstimatorState
        Next estimates and covariances.
    """
    _check_round_inputs(network, states, measurements)
    messages = broadcast(network, states, measurements)
    covs = {j: m.P for j, m in messages.items()}

    def update(i: int) -> tuple[int, EstimatorState]:
        got = _gather(network, i, messages)
        gains = local_gains(network, i, covs)
        return i, EstimatorState(xhat=dkf_predict(network, i, got, gains),
                                 P=dkf_cov_update(network, i, covs))

    if max_workers:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            results = list(pool.map(update, network.ids))
    else:
        results = [update(i) for i in network.ids]
    return dict(results)


def simplified_round(network: NetworkModel, states: dict[int, EstimatorState],
                     measurements: dict[int, np.ndarray],
                     fixed_covs: dict[int, np.ndarray],
                     max_workers: int | None = None) -> dict[int, EstimatorState]:
    """One round with gains frozen at the provided covariances.

    Estimates propagate exactly as in `network_round` but the gains come
    from `fixed_covs` and the stored covariances stay untouched.
    """
    _check_round_inputs(network, states, measurements)
    messages = broadcast(network, states, measurements)

    def update(i: int) -> tuple[int, EstimatorState]:
        got = _gather(network, i, messages)
        gains = local_gains(network, i, fixed_covs)
        return i, EstimatorState(xhat=dkf_predict(network, i, got, gains),
                                 P=states[i].P)

    if max_workers:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            results = list(pool.map(update, network.ids))
    else:
        results = [update(i) for i in network.ids]
    return dict(results)


def _check_round_inputs(network: NetworkModel, states, measurements) -> None:
    for i in network.ids:
        if i not in states:
            raise ValueError(f"no estimator state for subsystem {i}")
        if i not in measurements:
            raise ValueError(f"no measurement for subsystem {i}")


# --- centralized baseline ---------------------------------------------------

def centralized_step(g: GlobalSystem, xhat: np.ndarray, P: np.ndarray,
                     y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Classical one-step predictor on the assembled system."""
    L = kalman_gain(P, g.A, g.C, g.R)
    x_next = g.A @ xhat + L @ (y - g.C @ xhat)
    P_next = riccati_update(P, g.A, g.C, g.Q, g.R)
    return x_next, P_next


def error_cov_step(g: GlobalSystem, P_err: np.ndarray,
                   L: np.ndarray) -> np.ndarray:
    """Propagate the global estimation-error covariance under gain L.

    P+ = (A - L C) P (A - L C)' + L R L' + Q.
    """
    F = g.A - L @ g.C
    return symmetrize(F @ P_err @ F.T + L @ g.R @ L.T + g.Q)


def assemble_gain(network: NetworkModel, g: GlobalSystem,
                  covs: dict[int, np.ndarray]) -> np.ndarray:
    """Stack the distributed gains into the global gain matrix.

    Block (i, j) is L_ij for j in N_i and zero elsewhere.  With
    block-diagonal covariance this equals the centralized optimal gain
    of the assembled system.
    """
    L = np.zeros((g.n, g.C.shape[0]))
    for i in network.ids:
        gains = local_gains(network, i, {j: covs[j] for j in network.neighbors(i)})
        r = slice(g.state_offsets[i], g.state_offsets[i] + g.state_dims[i])
        for j, Lij in gains.items():
            c = slice(g.output_offsets[j], g.output_offsets[j] + g.output_dims[j])
            L[r, c] = Lij
    return L


def blockdiag_covariance(network: NetworkModel, g: GlobalSystem,
                         covs: dict[int, np.ndarray]) -> np.ndarray:
    """Block-diagonal matrix holding each subsystem's covariance."""
    P = np.zeros((g.n, g.n))
    for i in network.ids:
        r = slice(g.state_offsets[i], g.state_offsets[i] + g.state_dims[i])
        P[r, r] = covs[i]
    return P
