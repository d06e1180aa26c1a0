"""Design-layer tests: envelopes, interaction matrix, search, verification.

Oracle routes: exhaustive power scans for envelopes, 2x2 adjugate
inverses for the coupling norms, and the closed-form coupling norm of the
academic family (exactly alpha^2 * 82 at unit alpha scale: for
alpha = 0.1 the squared norm is 1/82).
"""

import numpy as np
import pytest

from dkfnet.design import (
    H_DIAGONALIZING,
    H_IDENTITY,
    centralized_design_search,
    certificate_from_dict,
    certificate_to_dict,
    check_distributed,
    check_global,
    compute_envelope,
    compute_gamma,
    coupling_gain_norm,
    default_certificate,
    design_local_observer,
    diagonalizing_transform,
    initialize_covariances,
    iterate_covariances,
    verify_pbar,
)
from dkfnet.network import SubsystemModel, build_network
from dkfnet.riccati import psd_geq, spectral_radius
from dkfnet.scenarios import ACADEMIC_A, academic_network


def test_academic_coupling_norm_is_one_over_82():
    # oracle: 2x2 adjugate inverse.  A_22 = [[0.9, 0.1], [0.1, -0.9]],
    # det = -0.82; A_12 = diag(0.1, -0.1).  The product is a scaled
    # rotation with squared spectral norm (0.1^2)(0.9^2 + 0.1^2)/0.82^2
    # = 0.01/0.82 = 1/82.
    det = -0.82
    inv = np.array([[-0.9, -0.1], [-0.1, 0.9]]) / det
    X = np.diag([0.1, -0.1]) @ inv
    oracle = float(np.linalg.norm(X, 2) ** 2)
    assert abs(oracle - 1.0 / 82.0) < 1e-15
    net = academic_network(M=2, alpha=0.1)
    got = coupling_gain_norm(net, 1, 2, np.eye(2), np.eye(2))
    assert abs(got - 1.0 / 82.0) < 1e-12


def test_envelope_zero_and_normal_matrices():
    # zero closed loop: rate clips to the margin, prefactor 1
    mu, lam = compute_envelope(np.zeros((3, 3)), margin=0.05)
    assert lam == 0.05
    assert mu == 1.0
    # normal matrix: power norms are exactly sigma^h, prefactor 1
    F = np.diag([0.6, -0.4])
    mu, lam = compute_envelope(F, margin=0.05)
    assert abs(lam - 0.65) < 1e-12
    assert abs(mu - 1.0) < 1e-12


def test_envelope_rejects_unstable():
    with pytest.raises(ValueError, match="Schur"):
        compute_envelope(np.diag([1.01, 0.2]))


def test_diagonalizing_transform_cases():
    F = np.array([[0.5, 1.0], [0.0, -0.3]])
    H = diagonalizing_transform(F)
    assert H is not None
    D = H @ F @ np.linalg.inv(H)
    assert np.allclose(D - np.diag(np.diag(D)), 0.0, atol=1e-10)
    # complex pair
    assert diagonalizing_transform(np.array([[0.0, 0.5], [-0.5, 0.0]])) is None
    # repeated eigenvalue
    assert diagonalizing_transform(np.array([[0.5, 1.0], [0.0, 0.5]])) is None


def test_design_local_observer_academic():
    net = academic_network(M=2, alpha=0.1)
    L, F = design_local_observer(net, 1)
    assert spectral_radius(F) < 1.0
    # scaled local matrix is sqrt(2) A, spectral radius sqrt(2)*0.9055 > 1,
    # so theta = 0 cannot stabilize
    with pytest.raises(ValueError, match="Schur"):
        design_local_observer(net, 1, theta=0.0)


def test_design_local_observer_undetectable():
    bad = SubsystemModel(id=1, A=np.diag([1.2, 0.5]),
                         C=np.array([[0.0, 1.0]]), Q=np.eye(2), R=np.eye(1))
    net = build_network([bad])
    with pytest.raises(RuntimeError, match="design failed"):
        design_local_observer(net, 1, dare_max_iter=500)


def test_default_certificate_academic_values():
    net = academic_network(M=2, alpha=0.1)
    cert = default_certificate(net)
    d = cert.designs[1]
    assert d.h_mode == H_IDENTITY
    assert d.theta == 1.0
    # independent envelope oracle: exhaustive scan of the actual F
    G = d.F / d.lam
    M = np.eye(2)
    mu_full = 1.0
    for _ in range(1, 3000):
        M = M @ G
        mu_full = max(mu_full, np.linalg.norm(M, 2))
    assert abs(d.mu - mu_full) < 1e-9
    # gamma = prefactor / 82, symmetric network
    expect = d.prefactor / 82.0
    assert abs(cert.gamma[0, 1] - expect) < 1e-10
    assert abs(cert.gamma[1, 0] - expect) < 1e-10
    assert cert.gamma[0, 0] == 0.0
    # frozen from the design constants: gamma ~ 0.10541 at alpha = 0.1
    assert abs(cert.gamma[0, 1] - 0.105406) < 1e-4
    assert check_global(cert)
    rho, ok = check_distributed(cert, 1)
    assert ok and abs(rho - cert.gamma[0, 1]) < 1e-15


def test_gamma_zero_for_decoupled():
    net = academic_network(M=3, alpha=0.1,
                           edges={1: set(), 2: set(), 3: set()})
    cert = default_certificate(net)
    assert np.array_equal(cert.gamma, np.zeros((3, 3)))
    assert cert.sigma_gamma == 0.0


def test_gamma_scales_with_coupling_strength():
    # gamma is quadratic in alpha across the default design (the local
    # design does not depend on alpha)
    g1 = default_certificate(academic_network(M=2, alpha=0.1)).gamma[0, 1]
    g2 = default_certificate(academic_network(M=2, alpha=0.2)).gamma[0, 1]
    assert abs(g2 / g1 - 4.0) < 1e-8


def test_search_improves_on_default_and_stays_feasible():
    net = academic_network(M=2, alpha=0.1)
    base = default_certificate(net).sigma_gamma
    res = centralized_design_search(net)
    assert res.feasible
    assert res.certificate is not None
    assert res.sigma_gamma <= base + 1e-12
    assert check_global(res.certificate)


def test_search_reports_infeasible_when_coupling_huge():
    net = academic_network(M=2, alpha=20.0)
    res = centralized_design_search(net)
    assert not res.feasible
    assert "no certificate" in res.message
    # the best attempt is still returned for inspection
    assert res.certificate is not None
    assert res.sigma_gamma >= 1.0


def test_initialize_covariances_modes():
    net = academic_network(M=2, alpha=0.1)
    zero = initialize_covariances(net, "zero")
    assert all(np.array_equal(zero[i], np.zeros((2, 2))) for i in net.ids)
    local = initialize_covariances(net, "local_dare")
    sub = net.subsystem(1)
    from dkfnet.riccati import riccati_update
    res = riccati_update(local[1], sub.A, sub.C, sub.Q, sub.R) - local[1]
    assert np.linalg.norm(res) < 1e-9
    scaled = initialize_covariances(net, "scaled_dare")
    sc = net.scaled(1)
    res2 = riccati_update(scaled[1], sc.Atil[1], sc.Ctil, sub.Q, sc.Rtil) - scaled[1]
    assert np.linalg.norm(res2) < 1e-9
    # scaled-pair steady state dominates the local one (stronger noise)
    assert psd_geq(scaled[1], local[1], tol=1e-9)
    with pytest.raises(ValueError, match="init mode"):
        initialize_covariances(net, "bogus")


def test_iterate_covariances_reaches_fixed_point():
    net = academic_network(M=2, alpha=0.1)
    covs, iters, converged = iterate_covariances(
        net, initialize_covariances(net, "zero"), tol=1e-11)
    assert converged
    from dkfnet.dkf import dkf_cov_update
    for i in net.ids:
        assert np.linalg.norm(dkf_cov_update(net, i, covs) - covs[i]) < 1e-9


def test_verify_pbar_accepts_limit_rejects_shrunk():
    net = academic_network(M=2, alpha=0.1)
    covs, _, converged = iterate_covariances(
        net, initialize_covariances(net, "zero"), tol=1e-11)
    assert converged
    rep = verify_pbar(net, covs)
    assert rep.ok
    assert rep.sigma_closed_loop < 1.0
    shrunk = {i: 0.9 * covs[i] for i in net.ids}
    rep2 = verify_pbar(net, shrunk)
    assert not rep2.ok
    assert not all(rep2.inequality_ok.values())


def test_certificate_json_round_trip():
    net = academic_network(M=2, alpha=0.1)
    cert = default_certificate(net)
    data = certificate_to_dict(cert)
    back = certificate_from_dict(data)
    assert back.ids == cert.ids
    assert np.allclose(back.gamma, cert.gamma)
    assert back.coupling_norms == cert.coupling_norms
    for i in cert.ids:
        assert np.allclose(back.designs[i].L, cert.designs[i].L)
        assert back.designs[i].lam == cert.designs[i].lam


def test_rescaled_closed_loop_identity():
    # the local design satisfies F = sqrt(varsigma) (A - L C): the same
    # gain works for the scaled and unscaled pairs
    net = academic_network(M=2, alpha=0.1)
    L, F = design_local_observer(net, 1)
    vs = net.varsigma(1)
    inner = ACADEMIC_A - L @ net.subsystem(1).C
    assert np.allclose(F, np.sqrt(vs) * inner, atol=1e-12)
