"""Distributed filter rounds: dual-route identities and global equivalence."""

import numpy as np
import pytest

from dkfnet.dkf import (
    EstimatorState,
    assemble_gain,
    blockdiag_covariance,
    broadcast,
    centralized_step,
    dkf_cov_update,
    dkf_predict,
    error_cov_step,
    local_gains,
    network_round,
    simplified_round,
)
from dkfnet.network import NetworkModel, SubsystemModel, build_network
from dkfnet.riccati import kalman_gain, riccati_update, symmetrize


def random_network(rng: np.random.Generator, M: int | None = None) -> NetworkModel:
    """Random stable-ish network with random sparsity, M <= 4, n_i <= 3."""
    if M is None:
        M = int(rng.integers(1, 5))
    dims = [int(rng.integers(1, 4)) for _ in range(M)]
    outs = [int(rng.integers(1, 3)) for _ in range(M)]
    subs = []
    for i in range(M):
        n = dims[i]
        A = rng.normal(size=(n, n))
        A *= 0.85 / max(1.0, np.max(np.abs(np.linalg.eigvals(A))))
        C = rng.normal(size=(outs[i], n))
        Gq = rng.normal(size=(n, n))
        Q = Gq @ Gq.T + 0.1 * np.eye(n)
        Gr = rng.normal(size=(outs[i], outs[i]))
        R = Gr @ Gr.T + 0.5 * np.eye(outs[i])
        coupling = {}
        for j in range(M):
            if j != i and rng.random() < 0.5:
                coupling[j + 1] = 0.1 * rng.normal(size=(n, dims[j]))
        subs.append(SubsystemModel(id=i + 1, A=A, C=C, Q=Q, R=R,
                                   coupling=coupling))
    return build_network(subs)


def random_states(rng, net) -> dict[int, EstimatorState]:
    states = {}
    for i in net.ids:
        n = net.subsystem(i).n
        M = rng.normal(size=(n, n))
        states[i] = EstimatorState(xhat=rng.normal(size=n),
                                   P=symmetrize(M @ M.T) + 0.1 * np.eye(n))
    return states


def random_measurements(rng, net):
    return {i: rng.normal(size=net.subsystem(i).p) for i in net.ids}


def test_gain_scaled_unscaled_routes_agree():
    rng = np.random.default_rng(101)
    for _ in range(20):
        net = random_network(rng)
        covs = {i: s.P for i, s in random_states(rng, net).items()}
        for i in net.ids:
            gains = local_gains(net, i, covs)
            for j in net.neighbors(i):
                vs = net.varsigma(j)
                sub_j = net.subsystem(j)
                alt = kalman_gain(covs[j], np.sqrt(vs) * net.coupling(i, j),
                                  np.sqrt(vs) * sub_j.C, vs * sub_j.R)
                assert np.linalg.norm(gains[j] - alt) <= 1e-12 * max(
                    1.0, np.linalg.norm(gains[j]))


def test_cov_update_dual_formula():
    # rescaled-sum route vs varsigma-weighted unscaled route
    rng = np.random.default_rng(103)
    for _ in range(20):
        net = random_network(rng)
        covs = {i: s.P for i, s in random_states(rng, net).items()}
        for i in net.ids:
            got = dkf_cov_update(net, i, covs)
            sub = net.subsystem(i)
            alt = np.array(sub.Q, copy=True)
            for j in net.neighbors(i):
                vs = net.varsigma(j)
                sub_j = net.subsystem(j)
                term = riccati_update(covs[j], net.coupling(i, j), sub_j.C,
                                      np.zeros((sub.n, sub.n)), sub_j.R)
                alt = alt + vs * term
            assert np.linalg.norm(got - alt) <= 1e-11 * max(1.0, np.linalg.norm(got))


def test_rounds_match_global_recursion():
    # stacked per-subsystem estimate updates equal the assembled-gain global
    # predictor, for 20 rounds on random networks
    rng = np.random.default_rng(107)
    for _ in range(10):
        net = random_network(rng)
        g = net.assemble_global()
        states = random_states(rng, net)
        x_glob = np.concatenate([states[i].xhat for i in net.ids])
        for _round in range(20):
            meas = random_measurements(rng, net)
            y_glob = np.concatenate([meas[i] for i in net.ids])
            covs = {i: states[i].P for i in net.ids}
            L = assemble_gain(net, g, covs)
            x_next_glob = g.A @ x_glob + L @ (y_glob - g.C @ x_glob)
            states = network_round(net, states, meas)
            x_stacked = np.concatenate([states[i].xhat for i in net.ids])
            assert np.linalg.norm(x_stacked - x_next_glob, np.inf) <= 1e-10
            x_glob = x_next_glob


def test_assembled_gain_is_global_optimal_gain():
    # with block-diagonal covariance, blockwise gains = centralized gain
    rng = np.random.default_rng(109)
    for _ in range(10):
        net = random_network(rng)
        g = net.assemble_global()
        covs = {i: s.P for i, s in random_states(rng, net).items()}
        L_blocks = assemble_gain(net, g, covs)
        P_blk = blockdiag_covariance(net, g, covs)
        L_central = kalman_gain(P_blk, g.A, g.C, g.R)
        assert np.allclose(L_blocks, L_central, atol=1e-10)


def test_simplified_round_keeps_covariances():
    rng = np.random.default_rng(113)
    net = random_network(rng, M=3)
    states = random_states(rng, net)
    fixed = {i: states[i].P.copy() for i in net.ids}
    meas = random_measurements(rng, net)
    out = simplified_round(net, states, meas, fixed)
    for i in net.ids:
        assert out[i].P is states[i].P
    # at matching covariances the two variants give the same estimates
    out_adaptive = network_round(net, states, meas)
    for i in net.ids:
        assert np.allclose(out[i].xhat, out_adaptive[i].xhat, atol=1e-12)


def test_parallel_rounds_bitwise_equal_serial():
    rng = np.random.default_rng(127)
    net = random_network(rng, M=4)
    states = random_states(rng, net)
    for _ in range(5):
        meas = random_measurements(rng, net)
        serial = network_round(net, states, meas)
        parallel = network_round(net, states, meas, max_workers=4)
        for i in net.ids:
            assert np.array_equal(serial[i].xhat, parallel[i].xhat)
            assert np.array_equal(serial[i].P, parallel[i].P)
        states = serial


def test_missing_inputs_raise():
    rng = np.random.default_rng(131)
    net = random_network(rng, M=2)
    states = random_states(rng, net)
    meas = random_measurements(rng, net)
    with pytest.raises(ValueError, match="covariance"):
        local_gains(net, net.ids[0], {})
    incomplete = dict(states)
    incomplete.pop(net.ids[0])
    with pytest.raises(ValueError, match="state"):
        network_round(net, incomplete, meas)
    short_meas = dict(meas)
    short_meas.pop(net.ids[-1])
    with pytest.raises(ValueError, match="measurement"):
        network_round(net, states, short_meas)


def test_predict_fold_is_ascending_neighbor_order():
    # hand-check on a 2-subsystem network that the fold matches the formula
    a1 = SubsystemModel(id=1, A=np.array([[0.5]]), C=np.array([[1.0]]),
                        Q=np.eye(1), R=np.eye(1),
                        coupling={2: np.array([[0.2]])})
    a2 = SubsystemModel(id=2, A=np.array([[0.4]]), C=np.array([[2.0]]),
                        Q=np.eye(1), R=np.eye(1),
                        coupling={1: np.array([[0.1]])})
    net = build_network([a1, a2])
    states = {1: EstimatorState(np.array([1.0]), np.array([[2.0]])),
              2: EstimatorState(np.array([-1.0]), np.array([[1.0]]))}
    meas = {1: np.array([0.5]), 2: np.array([1.5])}
    covs = {1: states[1].P, 2: states[2].P}
    gains = local_gains(net, 1, covs)
    msgs = broadcast(net, states, meas)
    got = dkf_predict(net, 1, msgs, gains)
    # L_11 = 0.5*2*1/(1*2*1+1) = 1/3; L_12 = 0.2*1*2/(4*1+1) = 0.08
    # x1+ = 0.5*1 + (1/3)(0.5 - 1) + 0.2*(-1) + 0.08*(1.5 - 2*(-1))
    expected = 0.5 - (1.0 / 3.0) * 0.5 - 0.2 + 0.08 * 3.5
    assert abs(got[0] - expected) < 1e-12


def test_centralized_step_explicit_route():
    A = np.array([[0.9, 0.1], [0.0, 0.6]])
    C = np.array([[1.0, 0.0]])
    Q = 0.5 * np.eye(2)
    R = np.array([[2.0]])

    class G:
        pass

    g = G()
    g.A, g.C, g.Q, g.R = A, C, Q, R
    P = np.array([[1.0, 0.2], [0.2, 2.0]])
    xhat = np.array([0.3, -0.4])
    y = np.array([1.0])
    S = float((C @ P @ C.T + R)[0, 0])
    L = (A @ P @ C.T) / S
    x_exp = A @ xhat + (L @ (y - C @ xhat).reshape(1)).ravel()
    P_exp = A @ P @ A.T - (A @ P @ C.T) @ (A @ P @ C.T).T / S + Q
    x_got, P_got = centralized_step(g, xhat, P, y)
    assert np.allclose(x_got, x_exp, atol=1e-12)
    assert np.allclose(P_got, (P_exp + P_exp.T) / 2, atol=1e-12)


def test_error_cov_step_matches_sampled_errors():
    # e(k+1) = (A - L C) e(k) - L v(k) + w(k); the recursion must track the
    # sample covariance of the simulated error process
    rng = np.random.default_rng(139)
    A = np.array([[0.8, 0.2], [-0.1, 0.5]])
    C = np.array([[1.0, 0.5]])
    Q = 0.3 * np.eye(2)
    R = np.array([[0.4]])

    class G:
        pass

    g = G()
    g.A, g.C, g.Q, g.R = A, C, Q, R
    P = np.zeros((2, 2))
    L = kalman_gain(np.eye(2), A, C, R)
    N = 40000
    e = np.zeros((N, 2))
    F = A - L @ C
    for _ in range(40):
        P = error_cov_step(g, P, L)
        w = rng.normal(size=(N, 2)) * np.sqrt(0.3)
        v = rng.normal(size=(N, 1)) * np.sqrt(0.4)
        e = e @ F.T - v @ L.T + w
    sample = (e.T @ e) / N
    assert np.linalg.norm(sample - P) / np.linalg.norm(P) < 0.05
