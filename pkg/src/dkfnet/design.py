"""Steady-state observer design and small-gain certification.

The distributed covariance recursion converges when a scaled small-gain
test passes.  Per subsystem the test needs a local observer for the
successor-rescaled pair (Atil_ii, Ctil_i), a similarity transform H_i,
and a geometric envelope ||(H_i F_i H_i^-1)^h|| <= mu_i lam_i^h for the
closed loop F_i = Atil_ii - L_i Ctil_i.  The interaction matrix

    Gamma[i, j] = mu_i^2 / (1 - lam_i^2) * || Ahat_ij Ahat_jj^-1 ||^2

with Ahat_ij = H_i A_ij H_j^-1 (j a neighbor of i, zero otherwise) then
certifies convergence when its spectral radius is below one; each row
sum rho_i < 1 is the decentralized sufficient version of the same test.

Certificates are deliberately conservative: a network whose coupled
recursion converges fine can still fail the test.  The search below
only explores the restricted family (gain scaling theta times the local
filter gain, H identity or an eigenvector transform), which keeps every
candidate cheap and the result reproducible.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .dkf import dkf_cov_update
from .network import NetworkModel
from .riccati import (
    kalman_gain,
    power_norm_envelope,
    psd_geq,
    solve_dare,
    spectral_radius,
    symmetrize,
)

INIT_MODES = ("zero", "local_dare", "scaled_dare")

H_IDENTITY = "identity"
H_DIAGONALIZING = "diagonalizing"


@dataclass
class LocalDesign:
    """Frozen local observer data for one subsystem."""
    id: int
    L: np.ndarray          # gain for the rescaled local pair
    H: np.ndarray
    h_mode: str
    theta: float
    F: np.ndarray          # Atil_ii - L Ctil_i
    sigma: float           # spectral radius of F
    lam: float
    mu: float

    @property
    def prefactor(self) -> float:
        return self.mu ** 2 / (1.0 - self.lam ** 2)


@dataclass
class DesignCertificate:
    """Per-subsystem designs plus the interaction matrix they induce.

    gamma rows/columns follow ascending subsystem id; coupling_norms
    caches ||Ahat_ij Ahat_jj^-1||^2 per directed edge so reconfiguration
    checks can reuse them without touching the dynamics again.
    """
    ids: list[int]
    designs: dict[int, LocalDesign]
    gamma: np.ndarray
    coupling_norms: dict[tuple[int, int], float] = field(default_factory=dict)

    @property
    def sigma_gamma(self) -> float:
        return spectral_radius(self.gamma)

    def rho(self, i: int) -> float:
        return float(self.gamma[self.ids.index(i)].sum())

    def rho_map(self) -> dict[int, float]:
        return {i: self.rho(i) for i in self.ids}


def design_local_observer(network: NetworkModel, i: int, theta: float = 1.0,
                          dare_tol: float = 1e-10,
                          dare_max_iter: int = 50000) -> tuple[np.ndarray, np.ndarray]:
    """Gain and closed loop for subsystem i's rescaled local pair.

    Solves the local steady-state problem for (Atil_ii, Ctil_i) and
    returns (L, F) with L = theta * Kalman gain and F = Atil_ii - L Ctil_i.

    Raises
    ------
    RuntimeError
        If the local steady-state iteration does not converge (e.g. the
        rescaled pair is not detectable).
    ValueError
        If the resulting F is not Schur stable.
    """
    sub = network.subsystem(i)
    sc = network.scaled(i)
    At = sc.Atil[i]
    try:
        Ptil = solve_dare(At, sc.Ctil, sub.Q, sc.Rtil,
                          tol=dare_tol, max_iter=dare_max_iter)
    except (RuntimeError, ValueError) as exc:
        raise RuntimeError(
            f"subsystem {i}: local steady-state design failed: {exc}") from exc
    L = theta * kalman_gain(Ptil, At, sc.Ctil, sc.Rtil)
    F = At - L @ sc.Ctil
    if spectral_radius(F) >= 1.0:
        raise ValueError(
            f"subsystem {i}: closed loop is not Schur stable for theta={theta} "
            f"(spectral radius {spectral_radius(F):.4f})")
    return L, F


def compute_envelope(F_hat: np.ndarray, margin: float = 0.05,
                     h_max: int = 10000) -> tuple[float, float]:
    """Envelope (mu, lam) for the transformed closed loop F_hat.

    lam = min(sigma + margin, (1 + sigma) / 2) keeps the rate strictly
    between the spectral radius and one; mu is the tight power-norm
    prefactor at that rate.
    """
    sigma = spectral_radius(F_hat)
    if sigma >= 1.0:
        raise ValueError(f"closed loop is not Schur (spectral radius {sigma:.4f})")
    lam = min(sigma + margin, (1.0 + sigma) / 2.0)
    mu = power_norm_envelope(F_hat, lam, h_max=h_max)
    return mu, lam


def diagonalizing_transform(F: np.ndarray, imag_tol: float = 1e-10,
                            gap_tol: float = 1e-9) -> np.ndarray | None:
    """H with H F H^-1 diagonal, when F has real distinct eigenvalues."""
    w, V = np.linalg.eig(F)
    if np.any(np.abs(w.imag) > imag_tol):
        return None
    wr = np.sort(w.real)
    if len(wr) > 1 and np.min(np.diff(wr)) <= gap_tol * max(1.0, np.max(np.abs(wr))):
        return None
    return np.linalg.inv(V.real)


def _transform(H_i: np.ndarray, M: np.ndarray, H_j: np.ndarray) -> np.ndarray:
    # H_i M H_j^-1 without forming the inverse
    return np.linalg.solve(H_j.T, (H_i @ M).T).T


def coupling_gain_norm(network: NetworkModel, i: int, j: int,
                       H_i: np.ndarray, H_j: np.ndarray) -> float:
    """||H_i A_ij A_jj^-1 H_j^-1||_2^2 for a directed edge i <- j."""
    A_jj = network.subsystem(j).A
    Z = np.linalg.solve(A_jj.T, network.coupling(i, j).T).T
    X = _transform(H_i, Z, H_j)
    return float(np.linalg.norm(X, 2) ** 2)


def compute_gamma(network: NetworkModel,
                  designs: dict[int, LocalDesign]) -> tuple[np.ndarray, dict]:
    """Interaction matrix and the coupling-norm cache behind it."""
    ids = network.ids
    M = len(ids)
    gamma = np.zeros((M, M))
    norms: dict[tuple[int, int], float] = {}
    for a, i in enumerate(ids):
        pref = designs[i].prefactor
        for j in network.neighbors(i):
            if j == i:
                continue
            norms[(i, j)] = coupling_gain_norm(network, i, j,
                                               designs[i].H, designs[j].H)
            gamma[a, ids.index(j)] = pref * norms[(i, j)]
    return gamma, norms


def _make_design(network: NetworkModel, i: int, theta: float, h_mode: str,
                 margin: float, h_max: int,
                 dare_cache: dict | None = None) -> LocalDesign | None:
    """One candidate design, or None when the candidate is infeasible.

    Candidates whose closed loop is nearly marginal (spectral radius
    above 0.995) are rejected outright: their envelope prefactor grows
    without bound, so they cannot improve any row with a live coupling.
    """
    sub = network.subsystem(i)
    sc = network.scaled(i)
    At = sc.Atil[i]
    if dare_cache is not None and i in dare_cache:
        LK = dare_cache[i]
    else:
        Ptil = solve_dare(At, sc.Ctil, sub.Q, sc.Rtil)
        LK = kalman_gain(Ptil, At, sc.Ctil, sc.Rtil)
        if dare_cache is not None:
            dare_cache[i] = LK
    L = theta * LK
    F = At - L @ sc.Ctil
    sigma = spectral_radius(F)
    if sigma >= 0.995:
        return None
    if h_mode == H_IDENTITY:
        H = np.eye(sub.n)
    else:
        H = diagonalizing_transform(F)
        if H is None:
            return None
    F_hat = _transform(H, F, H)
    mu, lam = compute_envelope(F_hat, margin=margin, h_max=h_max)
    return LocalDesign(id=i, L=L, H=H, h_mode=h_mode, theta=theta, F=F,
                       sigma=sigma, lam=lam, mu=mu)


def default_certificate(network: NetworkModel, margin: float = 0.05,
                        h_max: int = 10000) -> DesignCertificate:
    """Certificate with theta = 1 and H = identity everywhere."""
    designs = {}
    for i in network.ids:
        d = _make_design(network, i, 1.0, H_IDENTITY, margin, h_max)
        if d is None:
            raise ValueError(f"subsystem {i}: default design is infeasible")
        designs[i] = d
    gamma, norms = compute_gamma(network, designs)
    return DesignCertificate(ids=network.ids, designs=designs, gamma=gamma,
                             coupling_norms=norms)


def check_global(cert: DesignCertificate) -> bool:
    """Spectral small-gain test on the interaction matrix."""
    return cert.sigma_gamma < 1.0


def check_distributed(cert: DesignCertificate, i: int) -> tuple[float, bool]:
    """Row-sum test for subsystem i: (rho_i, rho_i < 1)."""
    rho = cert.rho(i)
    return rho, rho < 1.0


@dataclass
class SearchResult:
    certificate: DesignCertificate | None
    feasible: bool
    sigma_gamma: float
    message: str


def centralized_design_search(network: NetworkModel, margin: float = 0.05,
                              h_max: int = 10000,
                              max_rounds: int = 10) -> SearchResult:
    """Coordinate search over the restricted design family.

    Per subsystem the candidates are theta in [0, 1.5] in steps of 0.05
    scaling the local filter gain, combined with both H modes (identity,
    and the eigenvector transform when available).  Starting from
    (theta = 1, identity) each subsystem in turn keeps the candidate that
    minimizes the spectral radius of the interaction matrix; rounds
    repeat until no single change improves it.
    """
    ids = network.ids
    thetas = [round(0.05 * k, 2) for k in range(0, 31)]
    dare_cache: dict[int, np.ndarray] = {}

    candidates: dict[int, dict[tuple[float, str], LocalDesign]] = {}
    for i in ids:
        per: dict[tuple[float, str], LocalDesign] = {}
        try:
            for th in thetas:
                for mode in (H_IDENTITY, H_DIAGONALIZING):
                    d = _make_design(network, i, th, mode, margin, h_max,
                                     dare_cache)
                    if d is not None:
                        per[(th, mode)] = d
        except (RuntimeError, ValueError) as exc:
            return SearchResult(None, False, np.inf,
                                f"subsystem {i}: {exc}")
        if not per:
            return SearchResult(None, False, np.inf,
                                f"subsystem {i}: no feasible candidate in the "
                                f"restricted family")
        candidates[i] = per

    norm_cache: dict[tuple, float] = {}

    def gamma_for(assign: dict[int, tuple[float, str]]) -> np.ndarray:
        M = len(ids)
        g = np.zeros((M, M))
        for a, i in enumerate(ids):
            di = candidates[i][assign[i]]
            pref = di.prefactor
            for j in network.neighbors(i):
                if j == i:
                    continue
                key = (i, assign[i], j, assign[j])
                if key not in norm_cache:
                    dj = candidates[j][assign[j]]
                    norm_cache[key] = coupling_gain_norm(network, i, j,
                                                         di.H, dj.H)
                g[a, ids.index(j)] = pref * norm_cache[key]
        return g

    assign = {}
    for i in ids:
        if (1.0, H_IDENTITY) in candidates[i]:
            assign[i] = (1.0, H_IDENTITY)
        else:
            assign[i] = sorted(candidates[i])[0]
    best = spectral_radius(gamma_for(assign))

    for _ in range(max_rounds):
        improved = False
        for i in ids:
            for key in sorted(candidates[i]):
                if key == assign[i]:
                    continue
                trial = dict(assign)
                trial[i] = key
                s = spectral_radius(gamma_for(trial))
                if s < best - 1e-12:
                    best, assign = s, trial
                    improved = True
        if not improved:
            break

    designs = {i: candidates[i][assign[i]] for i in ids}
    gamma, norms = compute_gamma(network, designs)
    cert = DesignCertificate(ids=ids, designs=designs, gamma=gamma,
                             coupling_norms=norms)
    if check_global(cert):
        return SearchResult(cert, True, cert.sigma_gamma, "ok")
    return SearchResult(cert, False, cert.sigma_gamma,
                        "no certificate found: spectral radius of the "
                        f"interaction matrix is {cert.sigma_gamma:.4f}")


# --- covariance initialization and steady-state verification ---------------

def initialize_covariances(network: NetworkModel, mode: str,
                           dare_tol: float = 1e-10,
                           dare_max_iter: int = 50000) -> dict[int, np.ndarray]:
    """Initial P_i per subsystem: zeros or a local steady-state solution.

    mode "zero": P_i = 0.  mode "local_dare": steady state of the
    unscaled local pair (A_ii, C_i, Q_i, R_i).  mode "scaled_dare":
    steady state of the successor-rescaled pair.
    """
    if mode not in INIT_MODES:
        raise ValueError(f"unknown init mode {mode!r}; pick one of {INIT_MODES}")
    covs = {}
    for i in network.ids:
        sub = network.subsystem(i)
        if mode == "zero":
            covs[i] = np.zeros((sub.n, sub.n))
        elif mode == "local_dare":
            covs[i] = solve_dare(sub.A, sub.C, sub.Q, sub.R,
                                 tol=dare_tol, max_iter=dare_max_iter)
        else:
            sc = network.scaled(i)
            covs[i] = solve_dare(sc.Atil[i], sc.Ctil, sub.Q, sc.Rtil,
                                 tol=dare_tol, max_iter=dare_max_iter)
    return covs


def iterate_covariances(network: NetworkModel, covs: dict[int, np.ndarray],
                        tol: float = 1e-9, max_iter: int = 50000,
                        ) -> tuple[dict[int, np.ndarray], int, bool]:
    """Run the coupled covariance recursion to (near) steady state.

    Returns (final covariances, iterations used, converged flag); the
    stopping rule is max_i ||P_i(k+1) - P_i(k)||_F <= tol.
    """
    cur = {i: np.array(covs[i], dtype=float) for i in network.ids}
    for k in range(1, max_iter + 1):
        nxt = {i: dkf_cov_update(network, i, cur) for i in network.ids}
        delta = max(np.linalg.norm(nxt[i] - cur[i]) for i in network.ids)
        cur = nxt
        if delta <= tol:
            return cur, k, True
    return cur, max_iter, False


@dataclass
class PbarReport:
    """Steady-state verification: per-subsystem inequality + closed loop."""
    residual_min_eig: dict[int, float]
    inequality_ok: dict[int, bool]
    sigma_closed_loop: float
    tol: float

    @property
    def ok(self) -> bool:
        return all(self.inequality_ok.values()) and self.sigma_closed_loop < 1.0


def verify_pbar(network: NetworkModel, pbar: dict[int, np.ndarray],
                tol: float = 1e-8) -> PbarReport:
    """Check P_i >= sum of rescaled Riccati terms + Q_i, and the closed loop.

    The inequality is evaluated through the same covariance update the
    filter runs, so a verified set is exactly one the recursion respects.
    Also assembles the gains the set induces and reports the spectral
    radius of A - L C.
    """
    from .dkf import assemble_gain  # local import to avoid cycle noise
    from .riccati import min_eig

    res, ok = {}, {}
    for i in network.ids:
        rhs = dkf_cov_update(network, i, pbar)
        m = min_eig(np.asarray(pbar[i]) - rhs)
        res[i] = m
        ok[i] = bool(m >= -tol)
    g = network.assemble_global()
    L = assemble_gain(network, g, pbar)
    sigma = spectral_radius(g.A - L @ g.C)
    return PbarReport(residual_min_eig=res, inequality_ok=ok,
                      sigma_closed_loop=sigma, tol=tol)


# --- serialization ----------------------------------------------------------

def certificate_to_dict(cert: DesignCertificate) -> dict:
    return {
        "ids": cert.ids,
        "designs": {
            str(i): {
                "L": d.L.tolist(),
                "H": d.H.tolist(),
                "h_mode": d.h_mode,
                "theta": d.theta,
                "F": d.F.tolist(),
                "sigma": d.sigma,
                "lam": d.lam,
                "mu": d.mu,
            } for i, d in sorted(cert.designs.items())
        },
        "gamma": cert.gamma.tolist(),
        "rho": {str(i): cert.rho(i) for i in cert.ids},
        "sigma_gamma": cert.sigma_gamma,
        "coupling_norms": {f"{i},{j}": v
                           for (i, j), v in sorted(cert.coupling_norms.items())},
    }


def certificate_from_dict(data: dict) -> DesignCertificate:
    designs = {}
    for key, d in data["designs"].items():
        i = int(key)
        designs[i] = LocalDesign(
            id=i, L=np.asarray(d["L"], dtype=float),
            H=np.asarray(d["H"], dtype=float), h_mode=d["h_mode"],
            theta=float(d["theta"]), F=np.asarray(d["F"], dtype=float),
            sigma=float(d["sigma"]), lam=float(d["lam"]), mu=float(d["mu"]))
    norms = {}
    for key, v in data.get("coupling_norms", {}).items():
        i, j = key.split(",")
        norms[(int(i), int(j))] = float(v)
    return DesignCertificate(ids=[int(i) for i in data["ids"]],
                             designs=designs,
                             gamma=np.asarray(data["gamma"], dtype=float),
                             coupling_norms=norms)


def save_certificate(cert: DesignCertificate, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(certificate_to_dict(cert), fh, indent=2)


def load_certificate(path: str) -> DesignCertificate:
    with open(path) as fh:
        return certificate_from_dict(json.load(fh))
