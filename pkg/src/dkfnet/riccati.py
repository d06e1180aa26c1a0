"""Riccati-map primitives shared by every estimator in the package.

All covariance propagation in this package reduces to one operator: the
one-step Riccati map

    P  ->  A P A' - A P C' (C P C' + R)^-1 C P A' + Q

together with the matching filter gain A P C' (C P C' + R)^-1.  The
distributed update applies the map blockwise with rescaled matrices, the
centralized baseline applies it to the assembled system, and the
steady-state solver simply iterates it from zero.  Keeping the four or
five primitives in one place means every caller inherits the same
numerical policy: symmetrize after every update, never form an explicit
inverse (symmetric solves only), and test semidefiniteness through
eigenvalues of the symmetrized difference.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg


def symmetrize(X: np.ndarray) -> np.ndarray:
    """Return the symmetric part (X + X') / 2."""
    return (X + X.T) / 2.0


def _innovation_solve(S: np.ndarray, B: np.ndarray) -> np.ndarray:
    # S is the innovation covariance C P C' + R; positive definite whenever
    # R is.  Solve S X = B through a symmetric factorization and translate
    # a factorization breakdown into a caller-friendly error.
    try:
        return scipy.linalg.solve(symmetrize(S), B, assume_a="pos")
    except np.linalg.LinAlgError as exc:
        raise ValueError("innovation covariance is singular") from exc
    except ValueError as exc:
        raise ValueError("innovation covariance is singular") from exc


def riccati_update(P: np.ndarray, A: np.ndarray, C: np.ndarray,
                   Q: np.ndarray, R: np.ndarray) -> np.ndarray:
    """One step of the Riccati map.

    Parameters
    ----------
    P : (n, n) ndarray
        Current covariance, assumed symmetric PSD.
    A : (n, n) ndarray
        State transition matrix.
    C : (p, n) ndarray
        Output matrix.
    Q : (n, n) ndarray
        Process noise covariance (PSD).
    R : (p, p) ndarray
        Measurement noise covariance (PD).

    Returns
    -------
    (n, n) ndarray
        A P A' - A P C' (C P C' + R)^-1 C P A' + Q, symmetrized.

    Raises
    ------
    ValueError
        If the innovation covariance C P C' + R is singular.
    """
    PCt = P @ C.T
    S = C @ PCt + R
    # X = (C P C' + R)^-1 C P A'
    X = _innovation_solve(S, PCt.T @ A.T)
    out = A @ P @ A.T - (A @ PCt) @ X + Q
    return symmetrize(out)


def kalman_gain(P: np.ndarray, A: np.ndarray, C: np.ndarray,
                R: np.ndarray) -> np.ndarray:
    """Filter gain A P C' (C P C' + R)^-1 for the one-step predictor."""
    PCt = P @ C.T
    S = C @ PCt + R
    X = _innovation_solve(S, PCt.T @ A.T)
    return X.T


def solve_dare(A: np.ndarray, C: np.ndarray, Q: np.ndarray, R: np.ndarray,
               tol: float = 1e-10, max_iter: int = 50000) -> np.ndarray:
    """Steady-state predictor covariance by fixed-point iteration from zero.

    Iterates the Riccati map starting at P = 0.  For a detectable pair
    (A, C) and stabilizable (A, G) with G G' = Q this sequence is
    monotone nondecreasing and converges to the stabilizing solution of
    the discrete algebraic Riccati equation.

    Parameters
    ----------
    A, C, Q, R : ndarray
        System matrices as in `riccati_update`.
    tol : float
        Stop once the Frobenius norm of successive iterates drops to tol.
    max_iter : int
        Iteration cap.

    Returns
    -------
    (n, n) ndarray
        Fixed point of the Riccati map.

    Raises
    ------
    RuntimeError
        If the iteration has not converged after max_iter steps.
    """
    P = np.zeros_like(np.asarray(A, dtype=float))
    # divergence (e.g. an undetectable unstable mode) is detected through
    # the iteration itself, so overflow along the way is expected noise
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(max_iter):
            P_next = riccati_update(P, A, C, Q, R)
            if not np.all(np.isfinite(P_next)):
                raise RuntimeError(
                    "Riccati iteration diverged (non-finite iterate)")
            if np.linalg.norm(P_next - P) <= tol:
                return P_next
            P = P_next
    raise RuntimeError(
        f"Riccati iteration did not converge within {max_iter} steps "
        f"(residual {np.linalg.norm(riccati_update(P, A, C, Q, R) - P):.3e})")


def spectral_radius(M: np.ndarray) -> float:
    """Largest eigenvalue magnitude."""
    if M.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(M))))


def is_schur(M: np.ndarray, margin: float = 0.0) -> bool:
    """True when every eigenvalue lies strictly inside the unit circle."""
    return spectral_radius(M) < 1.0 - margin


def factor_psd(Q: np.ndarray, clip_tol: float = 1e-10) -> np.ndarray:
    """Full-rank factor G with G G' = Q for symmetric PSD Q.

    Eigenvalues in [-clip_tol, 0) are treated as rounding noise and
    clipped to zero; anything below -clip_tol is rejected.  The returned
    factor has one column per strictly positive eigenvalue, so
    rank(G) = rank(Q).

    Raises
    ------
    ValueError
        If Q has an eigenvalue below -clip_tol.
    """
    w, V = np.linalg.eigh(symmetrize(Q))
    if np.min(w, initial=0.0) < -clip_tol:
        raise ValueError(
            f"matrix is not PSD: eigenvalue {np.min(w):.3e} below {-clip_tol:.1e}")
    keep = w > clip_tol
    return V[:, keep] * np.sqrt(w[keep])


def psd_geq(X: np.ndarray, Y: np.ndarray, tol: float = 1e-8) -> bool:
    """Loewner comparison X >= Y up to tol on the smallest eigenvalue."""
    D = symmetrize(X - Y)
    if D.size == 0:
        return True
    return bool(np.min(np.linalg.eigvalsh(D)) >= -tol)


def min_eig(X: np.ndarray) -> float:
    """Smallest eigenvalue of the symmetrized matrix."""
    return float(np.min(np.linalg.eigvalsh(symmetrize(X))))


def power_norm_envelope(F: np.ndarray, lam: float, h_max: int = 10000) -> float:
    """Smallest mu with ||F^h||_2 <= mu * lam^h over the scanned horizon.

    Scans h = 0, 1, ... tracking the ratio ||F^h|| / lam^h through the
    normalized power (F / lam)^h, which stays bounded because
    lam > sigma(F).  The scan stops early once the ratio has decreased
    for 10 consecutive steps and sits below 1: from there on no later
    ratio can exceed the recorded maximum (submultiplicativity gives
    r_{h+m} <= r_h * r_m <= r_h * mu, so a new maximum in the tail would
    force r_h >= 1).

    Parameters
    ----------
    F : (n, n) ndarray
        Matrix whose power norms are enveloped; must satisfy
        sigma(F) < lam < 1.
    lam : float
        Decay rate of the envelope.
    h_max : int
        Hard cap on the scan.

    Returns
    -------
    float
        mu >= 1 such that ||F^h||_2 <= mu * lam^h for all scanned h.

    Raises
    ------
    ValueError
        If lam <= sigma(F) or lam >= 1.
    """
    sigma = spectral_radius(F)
    if lam <= sigma:
        raise ValueError(f"decay rate {lam} must exceed spectral radius {sigma}")
    if lam >= 1.0:
        raise ValueError(f"decay rate {lam} must be below 1")
    G = F / lam
    M = np.eye(F.shape[0])
    mu = 1.0
    r_prev = 1.0
    decreasing = 0
    for _ in range(1, h_max + 1):
        M = M @ G
        r = float(np.linalg.norm(M, 2))
        if r == 0.0:
            break
        mu = max(mu, r)
        decreasing = decreasing + 1 if r < r_prev else 0
        r_prev = r
        if decreasing >= 10 and r < 1.0:
            break
    return mu
