"""Network model construction, topology derivation, and structural checks."""

import numpy as np
import pytest

from dkfnet.network import (
    NetworkModel,
    SubsystemModel,
    build_network,
    load_network,
    network_from_dict,
    network_to_dict,
    pbh_detectable,
    pbh_stabilizable,
    save_network,
    validate_assumptions,
)


def chain3() -> NetworkModel:
    # 1 <-> 2 <-> 3, distinct coupling blocks so placement errors show up
    def sub(i, coupling):
        return SubsystemModel(
            id=i,
            A=np.array([[0.5, 0.1 * i], [0.0, 0.3]]),
            C=np.array([[1.0, 0.0]]),
            Q=np.eye(2),
            R=np.array([[1.0]]),
            coupling=coupling,
        )
    s1 = sub(1, {2: np.full((2, 2), 0.01)})
    s2 = sub(2, {1: np.full((2, 2), 0.02), 3: np.full((2, 2), 0.03)})
    s3 = sub(3, {2: np.full((2, 2), 0.04)})
    return build_network([s1, s2, s3])


def test_neighbor_and_successor_sets():
    net = chain3()
    assert net.neighbors(1) == (1, 2)
    assert net.neighbors(2) == (1, 2, 3)
    assert net.neighbors(3) == (2, 3)
    assert net.successors(1) == (1, 2)
    assert net.successors(2) == (1, 2, 3)
    assert net.successors(3) == (2, 3)
    assert net.varsigma(1) == 2
    assert net.varsigma(2) == 3
    assert net.varsigma(3) == 2


def test_isolated_subsystem_counts_itself():
    s = SubsystemModel(id=7, A=np.eye(1) * 0.5, C=np.eye(1),
                       Q=np.eye(1), R=np.eye(1))
    net = build_network([s])
    assert net.neighbors(7) == (7,)
    assert net.successors(7) == (7,)
    assert net.varsigma(7) == 1


def test_declared_zero_coupling_is_still_an_edge():
    # topology is declared by the coupling map, not inferred from values
    a = SubsystemModel(id=1, A=0.5 * np.eye(1), C=np.eye(1), Q=np.eye(1),
                       R=np.eye(1), coupling={2: np.zeros((1, 1))})
    b = SubsystemModel(id=2, A=0.5 * np.eye(1), C=np.eye(1), Q=np.eye(1),
                       R=np.eye(1))
    net = build_network([a, b])
    assert net.neighbors(1) == (1, 2)
    assert net.varsigma(2) == 2


def test_scaled_matrices_hand_multiplied():
    net = chain3()
    sc = net.scaled(1)
    # varsigma_1 = 2, varsigma_2 = 3
    assert np.allclose(sc.Atil[1], np.sqrt(2) * net.subsystem(1).A)
    assert np.allclose(sc.Atil[2], np.sqrt(3) * np.full((2, 2), 0.01))
    assert np.allclose(sc.Ctil, np.sqrt(2) * net.subsystem(1).C)
    assert np.allclose(sc.Rtil, 2.0 * net.subsystem(1).R)


def test_assemble_global_block_placement():
    net = chain3()
    g = net.assemble_global()
    assert g.A.shape == (6, 6)
    assert np.allclose(g.A[0:2, 0:2], net.subsystem(1).A)
    assert np.allclose(g.A[0:2, 2:4], np.full((2, 2), 0.01))
    assert np.allclose(g.A[0:2, 4:6], 0.0)
    assert np.allclose(g.A[2:4, 0:2], np.full((2, 2), 0.02))
    assert np.allclose(g.A[2:4, 4:6], np.full((2, 2), 0.03))
    assert np.allclose(g.A[4:6, 2:4], np.full((2, 2), 0.04))
    assert np.allclose(g.C[1, 2:4], net.subsystem(2).C[0])
    assert np.allclose(g.Q, np.eye(6))
    assert np.allclose(g.R, np.eye(3))
    assert g.state_offsets == {1: 0, 2: 2, 3: 4}
    assert g.output_offsets == {1: 0, 2: 1, 3: 2}


def test_build_rejects_bad_input():
    ok = SubsystemModel(id=1, A=0.5 * np.eye(1), C=np.eye(1), Q=np.eye(1),
                        R=np.eye(1))
    dup = SubsystemModel(id=1, A=0.5 * np.eye(1), C=np.eye(1), Q=np.eye(1),
                         R=np.eye(1))
    with pytest.raises(ValueError, match="unique"):
        build_network([ok, dup])
    with pytest.raises(ValueError, match="unknown subsystem"):
        build_network([SubsystemModel(id=1, A=np.eye(1), C=np.eye(1),
                                      Q=np.eye(1), R=np.eye(1),
                                      coupling={9: np.eye(1)})])
    with pytest.raises(ValueError, match="positive definite"):
        build_network([SubsystemModel(id=1, A=np.eye(1), C=np.eye(1),
                                      Q=np.eye(1), R=np.zeros((1, 1)))])
    with pytest.raises(ValueError, match="semidefinite"):
        build_network([SubsystemModel(id=1, A=np.eye(1), C=np.eye(1),
                                      Q=-np.eye(1), R=np.eye(1))])
    with pytest.raises(ValueError, match="shape"):
        build_network([SubsystemModel(id=1, A=np.eye(2), C=np.eye(2),
                                      Q=np.eye(2), R=np.eye(2),
                                      coupling={2: np.eye(3)}),
                       SubsystemModel(id=2, A=np.eye(3) * 0.1, C=np.eye(3),
                                      Q=np.eye(3), R=np.eye(3))])


def test_pbh_detectability_known_pairs():
    # block triangular: mode 2.0 invisible from C -> not detectable;
    # making the hidden mode stable (0.4) restores detectability.
    A_bad = np.array([[0.5, 0.0], [0.0, 2.0]])
    C = np.array([[1.0, 0.0]])
    assert not pbh_detectable(A_bad, C)
    A_ok = np.array([[0.5, 0.0], [0.0, 0.4]])
    assert pbh_detectable(A_ok, C)
    # unstable but observed
    assert pbh_detectable(np.array([[2.0]]), np.array([[1.0]]))
    # marginally stable unobserved mode fails too
    A_marg = np.array([[0.5, 0.0], [0.0, 1.0]])
    assert not pbh_detectable(A_marg, C)


def test_pbh_stabilizability_known_pairs():
    B = np.array([[1.0], [0.0]])
    A_bad = np.array([[0.5, 0.0], [0.0, 2.0]])   # mode 2.0 unreachable
    assert not pbh_stabilizable(A_bad, B)
    A_ok = np.array([[2.0, 0.0], [0.0, 0.5]])    # unstable mode reachable
    assert pbh_stabilizable(A_ok, B)
    # empty-column factor (Q = 0): stabilizable iff A is Schur
    assert pbh_stabilizable(0.5 * np.eye(2), np.zeros((2, 0)))
    assert not pbh_stabilizable(1.5 * np.eye(2), np.zeros((2, 0)))


def test_validate_assumptions_flags_failures():
    good = SubsystemModel(id=1, A=np.array([[0.5]]), C=np.array([[1.0]]),
                          Q=np.eye(1), R=np.eye(1))
    net = build_network([good])
    rep = validate_assumptions(net)
    assert rep.ok
    assert rep.failures() == {}

    bad = SubsystemModel(id=2,
                         A=np.array([[0.5, 0.0], [0.0, 2.0]]),
                         C=np.array([[1.0, 0.0]]),
                         Q=np.eye(2), R=np.eye(1))
    rep2 = validate_assumptions(build_network([bad]))
    assert not rep2.ok
    assert any("detectable" in msg for msg in rep2.failures()[2])

    singular = SubsystemModel(id=3, A=np.zeros((1, 1)), C=np.eye(1),
                              Q=np.eye(1), R=np.eye(1))
    rep3 = validate_assumptions(build_network([singular]))
    assert not rep3.ok
    assert any("invertible" in msg for msg in rep3.failures()[3])


def test_scaling_affects_detectability_check_consistently():
    # rescaling A and C by the same sqrt factor preserves observability
    # structure, so both checks should agree on this pair
    net = chain3()
    rep = validate_assumptions(net)
    assert rep.ok


def test_json_round_trip(tmp_path):
    net = chain3()
    d = network_to_dict(net)
    back = network_from_dict(d)
    assert back.ids == net.ids
    for i in net.ids:
        assert np.array_equal(back.subsystem(i).A, net.subsystem(i).A)
        assert np.array_equal(back.subsystem(i).C, net.subsystem(i).C)
        assert back.neighbors(i) == net.neighbors(i)
    path = tmp_path / "net.json"
    save_network(net, str(path))
    again = load_network(str(path))
    assert again.ids == net.ids
    assert np.array_equal(again.subsystem(2).coupling[3], np.full((2, 2), 0.03))


def test_json_rejects_malformed():
    with pytest.raises(ValueError, match="subsystems"):
        network_from_dict({})
    with pytest.raises(ValueError, match="missing field"):
        network_from_dict({"subsystems": [{"id": 1}]})
