"""Runtime reconfiguration: subsystem plug/unplug and sensor changes.

A join event touches the certificate in two ways.  Subsystems the
newcomer listens to gain a successor, so their rescaled closed loop
stretches by sqrt(varsigma_new / varsigma_old); the envelope rate
stretches by the same factor while the prefactor constant survives, so
the admission test only re-checks that the stretched rate stays below
one.  Subsystems that listen to the newcomer keep their design but gain
an interaction term, so the test checks the new term fits in the slack
their row sum leaves.  The newcomer designs itself by the restricted
search, minimizing its own row sum plus the terms it adds to listeners.

Leaving is always granted: every rate shrinks and rows only lose terms.
Sensor additions extend the gain with zero columns and change nothing
else; sensor replacements redesign the local gain with the transform
held fixed, which confines the certificate update to a single row.

The admission path deliberately consumes neighbor data through small
message records rather than reaching into the global model, mirroring
what the online filter is allowed to see.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .design import (
    INIT_MODES,
    H_DIAGONALIZING,
    H_IDENTITY,
    DesignCertificate,
    LocalDesign,
    compute_envelope,
    diagonalizing_transform,
    coupling_gain_norm,
)
from .dkf import EstimatorState, dkf_cov_update
from .network import NetworkModel, SubsystemModel, build_network
from .riccati import kalman_gain, solve_dare, spectral_radius

EVENT_PLUG = "plug_subsystem"
EVENT_UNPLUG = "unplug_subsystem"
EVENT_ADD_SENSOR = "add_sensor"
EVENT_REPLACE_SENSORS = "replace_sensors"

UNPLUG_REMOVE = "remove"
UNPLUG_DETACH = "detach"

_THETA_GRID = tuple(round(0.05 * k, 2) for k in range(0, 31))


@dataclass
class PnPEvent:
    """One scheduled reconfiguration request.

    kind selects the payload fields: a join carries the new subsystem
    model (its coupling map holds the blocks it listens through) plus
    the reverse blocks for existing listeners; sensor events carry the
    added or replacement output map; unplug carries only the flavor
    (full removal, or detach-in-place which keeps the subsystem running
    isolated).
    """
    time: int
    kind: str
    subject: int
    model: SubsystemModel | None = None
    incoming: dict[int, np.ndarray] = field(default_factory=dict)
    C: np.ndarray | None = None
    R: np.ndarray | None = None
    unplug_mode: str = UNPLUG_REMOVE
    init_mode: str | None = None   # joins only; None defers to the scenario


@dataclass
class AdmissionDecision:
    event: str
    subject: int
    accepted: bool
    reasons: list[str]
    rho_before: dict[int, float]
    rho_after: dict[int, float] | None
    lam_after: dict[int, float] | None
    network: NetworkModel | None
    certificate: DesignCertificate | None


# --- neighbor-to-neighbor payloads for the join admission ------------------

@dataclass
class PredecessorData:
    """What a subsystem the newcomer listens to hands over."""
    id: int
    local_dynamics: np.ndarray
    transform: np.ndarray


@dataclass
class SuccessorData:
    """What a subsystem that will listen to the newcomer hands over.

    row_sum_after_rescale is the scalar (1 - lam^2) / (1 - lam_plus^2)
    times the current row sum; prefactor_after prices the interaction
    term the newcomer introduces into this row.
    """
    id: int
    transform: np.ndarray
    coupling: np.ndarray
    row_sum_after_rescale: float
    prefactor_after: float


def _norm_sq(H_i: np.ndarray, Z: np.ndarray, H_j: np.ndarray) -> float:
    # ||H_i Z H_j^-1||_2^2
    X = np.linalg.solve(H_j.T, (H_i @ Z).T).T
    return float(np.linalg.norm(X, 2) ** 2)


def scalable_design(model: SubsystemModel, varsigma: int,
                    predecessors: list[PredecessorData],
                    successors: list[SuccessorData],
                    margin: float = 0.05, h_max: int = 10000,
                    thetas: tuple[float, ...] = _THETA_GRID,
                    ) -> tuple[LocalDesign | None, LocalDesign | None, list[str]]:
    """Local design of a joining subsystem from neighbor payloads only.

    Minimizes the newcomer's row sum plus the interaction terms it adds
    to its listeners, subject to each listener keeping its row sum
    below one.  Returns (winner, fallback, reasons): the winner
    satisfies every constraint; the fallback is the unconstrained
    best-effort candidate (used for reporting when the request is
    denied); reasons explain an empty winner.
    """
    rt = float(np.sqrt(varsigma))
    At = rt * model.A
    Ct = rt * model.C
    Rt = varsigma * model.R
    reasons: list[str] = []
    try:
        Ptil = solve_dare(At, Ct, model.Q, Rt)
    except (RuntimeError, ValueError) as exc:
        return None, None, [f"joining subsystem: local steady-state design "
                            f"failed: {exc}"]
    LK = kalman_gain(Ptil, At, Ct, Rt)

    # blocks through the newcomer's own inverse dynamics, fixed across
    # candidates
    succ_Z = {s.id: np.linalg.solve(model.A.T, s.coupling.T).T
              for s in successors}
    pred_Z = {p.id: np.linalg.solve(p.local_dynamics.T,
                                    model.coupling[p.id].T).T
              for p in predecessors}

    blocked = [s for s in successors if s.row_sum_after_rescale >= 1.0]
    for s in blocked:
        reasons.append(f"subsystem {s.id}: no slack left for a new "
                       f"interaction term (rescaled row sum "
                       f"{s.row_sum_after_rescale:.4f} >= 1)")

    winner = fallback = None
    winner_cost = fallback_cost = np.inf
    for th in thetas:
        L = th * LK
        F = At - L @ Ct
        sigma = spectral_radius(F)
        if sigma >= 0.995:
            continue
        for mode in (H_IDENTITY, H_DIAGONALIZING):
            if mode == H_IDENTITY:
                H = np.eye(model.n)
            else:
                H = diagonalizing_transform(F)
                if H is None:
                    continue
            F_hat = np.linalg.solve(H.T, (H @ F).T).T
            mu, lam = compute_envelope(F_hat, margin=margin, h_max=h_max)
            cand = LocalDesign(id=model.id, L=L, H=H, h_mode=mode, theta=th,
                               F=F, sigma=sigma, lam=lam, mu=mu)
            rho_own = cand.prefactor * sum(
                _norm_sq(H, pred_Z[p.id], p.transform) for p in predecessors)
            added = {s.id: s.prefactor_after * _norm_sq(s.transform,
                                                        succ_Z[s.id], H)
                     for s in successors}
            cost = rho_own + sum(added.values())
            if cost < fallback_cost:
                fallback, fallback_cost = cand, cost
            if rho_own >= 1.0 or blocked:
                continue
            if any(added[s.id] >= 1.0 - s.row_sum_after_rescale
                   for s in successors):
                continue
            if cost < winner_cost:
                winner, winner_cost = cand, cost
    if fallback is None:
        reasons.append("joining subsystem: no Schur-stable design in the "
                       "restricted family")
    elif winner is None and not blocked:
        reasons.append("joining subsystem: every candidate either exceeds "
                       "its own row-sum budget or overloads a listener")
    return winner, fallback, reasons


# --- network surgery --------------------------------------------------------

def _network_with_plug(network: NetworkModel, model: SubsystemModel,
                       incoming: dict[int, np.ndarray]) -> NetworkModel:
    for j in incoming:
        if j == model.id or j not in network.ids:
            raise ValueError(f"listener id {j} is not an existing subsystem")
    subs = []
    for s in network.subsystems:
        if s.id == model.id:
            continue
        cpl = dict(s.coupling)
        if s.id in incoming:
            cpl[model.id] = incoming[s.id]
        subs.append(replace(s, coupling=cpl))
    subs.append(model)
    return build_network(subs)


def _network_without(network: NetworkModel, subject: int,
                     mode: str) -> NetworkModel:
    subs = []
    for s in network.subsystems:
        if s.id == subject:
            if mode == UNPLUG_DETACH:
                subs.append(replace(s, coupling={}))
            continue
        cpl = {j: B for j, B in s.coupling.items() if j != subject}
        subs.append(replace(s, coupling=cpl))
    return build_network(subs)


def _rescaled_design(d: LocalDesign, ratio: float) -> LocalDesign:
    r = float(np.sqrt(ratio))
    return LocalDesign(id=d.id, L=d.L, H=d.H, h_mode=d.h_mode, theta=d.theta,
                       F=r * d.F, sigma=r * d.sigma, lam=r * d.lam, mu=d.mu)


def _carry_designs(pre: NetworkModel, post: NetworkModel,
                   cert: DesignCertificate,
                   skip: tuple[int, ...] = ()) -> dict[int, LocalDesign]:
    """Existing designs carried across an event, rescaled where the
    successor count changed."""
    out = {}
    for i in post.ids:
        if i in skip or i not in cert.designs:
            continue
        ratio = post.varsigma(i) / pre.varsigma(i)
        d = cert.designs[i]
        out[i] = d if ratio == 1.0 else _rescaled_design(d, ratio)
    return out


def _gamma_from_norms(network: NetworkModel, designs: dict[int, LocalDesign],
                      norms: dict[tuple[int, int], float]) -> np.ndarray:
    ids = network.ids
    g = np.zeros((len(ids), len(ids)))
    for a, i in enumerate(ids):
        pref = designs[i].prefactor
        for j in network.neighbors(i):
            if j != i:
                g[a, ids.index(j)] = pref * norms[(i, j)]
    return g


def _certificate(network: NetworkModel, designs: dict[int, LocalDesign],
                 norms: dict[tuple[int, int], float]) -> DesignCertificate:
    gamma = _gamma_from_norms(network, designs, norms)
    return DesignCertificate(ids=network.ids, designs=designs, gamma=gamma,
                             coupling_norms=dict(norms))


# --- join -------------------------------------------------------------------

def evaluate_plugin(network: NetworkModel, certificate: DesignCertificate,
                    model: SubsystemModel,
                    incoming: dict[int, np.ndarray] | None = None,
                    margin: float = 0.05, h_max: int = 10000,
                    ) -> AdmissionDecision:
    """Admission test for a joining subsystem.

    The subject either carries a fresh id, or the id of an existing
    subsystem that is currently isolated and reconnects with the same
    local model.  model.coupling holds the blocks the subject listens
    through; incoming maps each existing listener to the block the
    subject drives it through.

    Denial is a result, not an error: the decision lists every failed
    condition, and still carries the candidate network (and, when the
    envelope arithmetic stays valid, a best-effort certificate) so a
    caller can force the change and log it as uncertified.
    """
    incoming = dict(incoming or {})
    subject = model.id
    rho_before = certificate.rho_map()
    if subject in network.ids:
        if network.neighbors(subject) != (subject,) or \
                network.successors(subject) != (subject,):
            raise ValueError(f"subsystem {subject} already exists and is "
                             f"not isolated")
        old = network.subsystem(subject)
        same = all(np.array_equal(getattr(old, f), getattr(model, f))
                   for f in ("A", "C", "Q", "R"))
        if not same:
            raise ValueError("a join event cannot change the local model; "
                             "use a sensor event for output changes")
    post = _network_with_plug(network, model, incoming)

    reasons: list[str] = []
    lam_after: dict[int, float] = {}
    rescale_ok = True
    for j in post.neighbors(subject):
        if j == subject:
            continue
        ratio = post.varsigma(j) / network.varsigma(j)
        lam_p = float(np.sqrt(ratio)) * certificate.designs[j].lam
        lam_after[j] = lam_p
        if lam_p >= 1.0:
            rescale_ok = False
            reasons.append(f"subsystem {j}: rescaled closed loop loses its "
                           f"Schur certificate (rate {lam_p:.4f} >= 1)")
    if not rescale_ok:
        return AdmissionDecision(EVENT_PLUG, subject, False, reasons,
                                 rho_before, None, lam_after, post, None)

    predecessors = [PredecessorData(id=j,
                                    local_dynamics=network.subsystem(j).A,
                                    transform=certificate.designs[j].H)
                    for j in model.coupling]
    successors = []
    for j in incoming:
        d = certificate.designs[j]
        lam_p = lam_after.get(j, d.lam)
        scale = (1.0 - d.lam ** 2) / (1.0 - lam_p ** 2)
        successors.append(SuccessorData(
            id=j, transform=d.H, coupling=incoming[j],
            row_sum_after_rescale=scale * rho_before[j],
            prefactor_after=d.mu ** 2 / (1.0 - lam_p ** 2)))
    for j, lam_p in lam_after.items():
        if j in incoming:
            continue
        d = certificate.designs[j]
        scaled = (1.0 - d.lam ** 2) / (1.0 - lam_p ** 2) * rho_before[j]
        if scaled >= 1.0:
            reasons.append(f"subsystem {j}: row sum {scaled:.4f} reaches 1 "
                           f"after rescaling")

    winner, fallback, design_reasons = scalable_design(
        model, post.varsigma(subject), predecessors, successors,
        margin=margin, h_max=h_max)
    reasons.extend(design_reasons)
    chosen = winner if winner is not None else fallback
    if chosen is None:
        return AdmissionDecision(EVENT_PLUG, subject, False, reasons,
                                 rho_before, None, lam_after, post, None)
    lam_after[subject] = chosen.lam

    designs = _carry_designs(network, post, certificate, skip=(subject,))
    designs[subject] = chosen
    norms = {k: v for k, v in certificate.coupling_norms.items()
             if subject not in k}
    for j in model.coupling:
        norms[(subject, j)] = coupling_gain_norm(post, subject, j,
                                                 chosen.H, designs[j].H)
    for j in incoming:
        norms[(j, subject)] = coupling_gain_norm(post, j, subject,
                                                 designs[j].H, chosen.H)
    cert = _certificate(post, designs, norms)
    rho_after = cert.rho_map()
    for i in post.ids:
        if rho_after[i] >= 1.0 and not any(f"subsystem {i}:" in r or
                                           r.startswith("joining")
                                           for r in reasons):
            reasons.append(f"subsystem {i}: row sum {rho_after[i]:.4f} "
                           f">= 1 after the join")
    accepted = not reasons
    return AdmissionDecision(EVENT_PLUG, subject, accepted, reasons,
                             rho_before, rho_after, lam_after, post, cert)


def apply_plugin(network: NetworkModel, states: dict[int, EstimatorState],
                 decision: AdmissionDecision, init_mode: str = "scaled_dare",
                 force: bool = False,
                 ) -> tuple[NetworkModel, dict[int, EstimatorState]]:
    """Commit an admitted join: estimates carry over, the subject gets a
    zero estimate (or keeps its own when reconnecting) and a covariance
    initialized per init_mode on the post-event topology."""
    if not decision.accepted and not force:
        raise ValueError("join request was denied: " +
                         "; ".join(decision.reasons))
    if init_mode not in INIT_MODES:
        raise ValueError(f"unknown init mode {init_mode!r}; "
                         f"pick one of {INIT_MODES}")
    post = decision.network
    subject = decision.subject
    sub = post.subsystem(subject)
    if init_mode == "zero":
        P0 = np.zeros((sub.n, sub.n))
    elif init_mode == "local_dare":
        P0 = solve_dare(sub.A, sub.C, sub.Q, sub.R)
    else:
        sc = post.scaled(subject)
        P0 = solve_dare(sc.Atil[subject], sc.Ctil, sub.Q, sc.Rtil)
    out = dict(states)
    if subject in states:
        out[subject] = EstimatorState(xhat=states[subject].xhat, P=P0)
    else:
        out[subject] = EstimatorState(xhat=np.zeros(sub.n), P=P0)
    return post, out


# --- leave ------------------------------------------------------------------

def evaluate_unplug(network: NetworkModel, certificate: DesignCertificate,
                    subject: int, mode: str = UNPLUG_REMOVE,
                    ) -> AdmissionDecision:
    """Leave requests are always granted; this computes the shrunk
    certificate.  mode "remove" drops the subsystem, "detach" keeps it
    running with no couplings either way."""
    if subject not in network.ids:
        raise ValueError(f"unknown subsystem id {subject}")
    if mode not in (UNPLUG_REMOVE, UNPLUG_DETACH):
        raise ValueError(f"unknown unplug mode {mode!r}")
    rho_before = certificate.rho_map()
    post = _network_without(network, subject, mode)
    designs = _carry_designs(network, post, certificate)
    lam_after = {i: designs[i].lam for i in designs
                 if designs[i].lam != certificate.designs[i].lam}
    norms = {k: v for k, v in certificate.coupling_norms.items()
             if k[0] in post.ids and k[1] in post.ids
             and k[1] in post.neighbors(k[0])}
    cert = _certificate(post, designs, norms)
    return AdmissionDecision(EVENT_UNPLUG, subject, True, [], rho_before,
                             cert.rho_map(), lam_after, post, cert)


def apply_unplug(network: NetworkModel, states: dict[int, EstimatorState],
                 subject: int, mode: str = UNPLUG_REMOVE,
                 ) -> tuple[NetworkModel, dict[int, EstimatorState]]:
    """Commit a leave: remaining estimates and covariances carry over
    unchanged (they shrink monotonically from there)."""
    post = _network_without(network, subject, mode)
    out = {i: s for i, s in states.items() if i in post.ids}
    return post, out


# --- sensor changes ---------------------------------------------------------

def add_sensor(network: NetworkModel, certificate: DesignCertificate,
               subject: int, c_add: np.ndarray, r_add: np.ndarray,
               ) -> tuple[NetworkModel, DesignCertificate]:
    """Append output rows to one subsystem.  Always granted: padding the
    gain with zero columns leaves the closed loop, the envelope and the
    whole interaction matrix untouched."""
    sub = network.subsystem(subject)
    c_add = np.atleast_2d(np.asarray(c_add, dtype=float))
    r_add = np.atleast_2d(np.asarray(r_add, dtype=float))
    if c_add.shape[1] != sub.n:
        raise ValueError(f"added rows have {c_add.shape[1]} columns, "
                         f"state dimension is {sub.n}")
    if r_add.shape != (c_add.shape[0], c_add.shape[0]):
        raise ValueError("noise covariance of the added sensors must be "
                         "square and match the number of added rows")
    C_new = np.vstack([sub.C, c_add])
    R_new = np.block([
        [sub.R, np.zeros((sub.p, c_add.shape[0]))],
        [np.zeros((c_add.shape[0], sub.p)), r_add],
    ])
    subs = [replace(s, C=C_new, R=R_new) if s.id == subject else s
            for s in network.subsystems]
    post = build_network(subs)
    d = certificate.designs[subject]
    L_new = np.hstack([d.L, np.zeros((sub.n, c_add.shape[0]))])
    designs = dict(certificate.designs)
    designs[subject] = replace(d, L=L_new)
    cert = DesignCertificate(ids=certificate.ids, designs=designs,
                             gamma=certificate.gamma.copy(),
                             coupling_norms=dict(certificate.coupling_norms))
    return post, cert


def replace_sensors(network: NetworkModel, certificate: DesignCertificate,
                    subject: int, C_new: np.ndarray, R_new: np.ndarray,
                    margin: float = 0.05, h_max: int = 10000,
                    thetas: tuple[float, ...] = _THETA_GRID,
                    ) -> AdmissionDecision:
    """Swap one subsystem's output map and redesign its gain.

    The similarity transform stays fixed, so every coupling norm and
    every other row of the interaction matrix is reused verbatim; the
    update is confined to the subject's own row.  The current gain
    scaling is preferred when it still works, which makes a no-op
    replacement reproduce the existing design exactly.
    """
    sub = network.subsystem(subject)
    old = certificate.designs[subject]
    rho_before = certificate.rho_map()
    subs = [replace(s, C=np.asarray(C_new, dtype=float),
                    R=np.asarray(R_new, dtype=float))
            if s.id == subject else s for s in network.subsystems]
    post = build_network(subs)
    new_sub = post.subsystem(subject)
    sc = post.scaled(subject)
    At, Ct, Rt = sc.Atil[subject], sc.Ctil, sc.Rtil
    reasons: list[str] = []
    row_norms = sum(certificate.coupling_norms[(subject, j)]
                    for j in network.neighbors(subject) if j != subject)

    try:
        Ptil = solve_dare(At, Ct, new_sub.Q, Rt)
    except (RuntimeError, ValueError) as exc:
        return AdmissionDecision(
            EVENT_REPLACE_SENSORS, subject, False,
            [f"subsystem {subject}: local steady-state design failed with "
             f"the new sensors: {exc}"],
            rho_before, None, None, post, None)
    LK = kalman_gain(Ptil, At, Ct, Rt)

    ordered = (old.theta,) + tuple(t for t in thetas if t != old.theta)
    best = None
    best_rho = np.inf
    for th in ordered:
        L = th * LK
        F = At - L @ Ct
        sigma = spectral_radius(F)
        if sigma >= 0.995:
            continue
        F_hat = np.linalg.solve(old.H.T, (old.H @ F).T).T
        mu, lam = compute_envelope(F_hat, margin=margin, h_max=h_max)
        cand = LocalDesign(id=subject, L=L, H=old.H, h_mode=old.h_mode,
                           theta=th, F=F, sigma=sigma, lam=lam, mu=mu)
        rho = cand.prefactor * row_norms
        if rho < 1.0:
            best, best_rho = cand, rho
            break
        if rho < best_rho:
            best, best_rho = cand, rho
    if best is None:
        reasons.append(f"subsystem {subject}: no Schur-stable gain in the "
                       f"restricted family with the transform held fixed")
        return AdmissionDecision(EVENT_REPLACE_SENSORS, subject, False,
                                 reasons, rho_before, None, None, post, None)
    accepted = best_rho < 1.0
    if not accepted:
        reasons.append(f"subsystem {subject}: row sum {best_rho:.4f} >= 1 "
                       f"for every stabilizing candidate")
    designs = dict(certificate.designs)
    designs[subject] = best
    cert = _certificate(post, designs, certificate.coupling_norms)
    return AdmissionDecision(EVENT_REPLACE_SENSORS, subject, accepted,
                             reasons, rho_before, cert.rho_map(),
                             {subject: best.lam}, post, cert)


def apply_replace_sensors(network: NetworkModel,
                          states: dict[int, EstimatorState],
                          decision: AdmissionDecision, force: bool = False,
                          ) -> tuple[NetworkModel, dict[int, EstimatorState]]:
    if not decision.accepted and not force:
        raise ValueError("sensor replacement was denied: " +
                         "; ".join(decision.reasons))
    return decision.network, dict(states)


# --- covariance retraining after a sensor replacement ----------------------

@dataclass
class SensorCovarianceSchedule:
    """Precomputed covariance path after a sensor replacement.

    phase1 holds one covariance map per step: the changed subsystem is
    frozen and excluded from everyone's coupling sums until the rest
    settle (t_conv steps).  reinit is the changed subsystem's restart
    value for the step after, from which the full recursion resumes.
    """
    subject: int
    phase1: list[dict[int, np.ndarray]]
    t_conv: int
    reinit: np.ndarray


def sensor_pnp_covariance_procedure(network: NetworkModel,
                                    covs: dict[int, np.ndarray], subject: int,
                                    tol: float = 1e-9, max_iter: int = 50000,
                                    ) -> SensorCovarianceSchedule:
    """Two-phase covariance retraining for a replaced sensor set.

    network is the post-replacement model.  Phase 1 evolves every other
    subsystem as if the subject had left (its terms drop out of the
    coupling sums) while the subject's covariance stays frozen; the
    phase ends when the largest per-step change falls below tol.  The
    returned restart value is the subject's rescaled-pair steady state
    under its new sensors, to be installed on the following step.

    The covariance recursion never looks at data, so the whole path can
    be computed at the moment the replacement is granted.
    """
    if subject not in network.ids:
        raise ValueError(f"unknown subsystem id {subject}")
    detached = _network_without(network, subject, UNPLUG_DETACH)
    others = [i for i in network.ids if i != subject]
    cur = {i: np.array(covs[i], dtype=float) for i in network.ids}
    phase1: list[dict[int, np.ndarray]] = []
    t_conv = None
    for _ in range(max_iter):
        nxt = {i: dkf_cov_update(detached, i, cur) for i in others}
        nxt[subject] = cur[subject]
        delta = max((np.linalg.norm(nxt[i] - cur[i]) for i in others),
                    default=0.0)
        cur = nxt
        phase1.append(cur)
        if delta < tol:
            t_conv = len(phase1)
            break
    if t_conv is None:
        raise RuntimeError(f"settling phase did not converge within "
                           f"{max_iter} steps")
    sub = network.subsystem(subject)
    sc = network.scaled(subject)
    reinit = solve_dare(sc.Atil[subject], sc.Ctil, sub.Q, sc.Rtil)
    return SensorCovarianceSchedule(subject=subject, phase1=phase1,
                                    t_conv=t_conv, reinit=reinit)
