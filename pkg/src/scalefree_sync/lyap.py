"""Positive-definite certificates for neutrally stable matrices.

A continuous-time certificate satisfies ``P A + A^T P <= 0``; a discrete-time
one satisfies ``A^T P A - P <= 0``. Both are built from a real block
decomposition ``A = T blkdiag(A_h, A_b) T^-1`` that separates the strictly
stable part ``A_h`` from the semi-simple boundary part ``A_b``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .agent import CONTINUOUS, DISCRETE, _as2d, cluster_eigenvalues, is_neutrally_stable
from .errors import NotNeutrallyStable, NotSchur, ShapeMismatch

__all__ = [
    "CT_SEMIDEFINITE",
    "DT_SEMIDEFINITE",
    "DT_OBSERVER_Q",
    "Certificate",
    "SlackReport",
    "ct_certificate",
    "dt_certificate",
    "dt_observer_Q",
    "solve_discrete_lyapunov",
    "validate",
]

CT_SEMIDEFINITE = "ct_semidefinite"
DT_SEMIDEFINITE = "dt_semidefinite"
DT_OBSERVER_Q = "dt_observer_Q"
KINDS = (CT_SEMIDEFINITE, DT_SEMIDEFINITE, DT_OBSERVER_Q)

SPLIT_RTOL = 1e-8
SYMMETRY_TOL = 1e-12
PD_RTOL = 1e-10
SLACK_RTOL = 1e-8
RESIDUAL_RTOL = 1e-10
OBSERVER_WEIGHT = 4.0


@dataclass(frozen=True)
class Certificate:
    P: np.ndarray
    kind: str
    slack: float

    def to_dict(self) -> dict:
        return {"P": self.P.tolist(), "kind": self.kind, "slack": self.slack}

    @classmethod
    def from_dict(cls, d: dict) -> "Certificate":
        if d["kind"] not in KINDS:
            raise ValueError(f"unknown certificate kind {d['kind']!r}")
        return cls(np.array(d["P"], dtype=float), d["kind"], float(d["slack"]))


@dataclass(frozen=True)
class SlackReport:
    slack: float
    min_eig: float
    symmetric: bool
    positive_definite: bool
    inequality_ok: bool

    @property
    def passed(self) -> bool:
        return self.symmetric and self.positive_definite and self.inequality_ok


def _sym(M):
    return 0.5 * (M + M.T)


def _max_eig_sym(M) -> float:
    return float(np.linalg.eigvalsh(_sym(M)).max()) if M.size else 0.0


def ct_lhs(P, A):
    return P @ A + A.T @ P


def dt_lhs(P, A):
    return A.T @ P @ A - P


def solve_discrete_lyapunov(M, W) -> np.ndarray:
    """Solve ``M^T X M - X + W = 0`` by a direct Kronecker linear solve."""
    M, W = _as2d(M), _as2d(W)
    n = M.shape[0]
    if n == 0:
        return np.zeros((0, 0))
    # vec(M^T X M) = kron(M^T, M^T) vec(X) for column-major vec
    K = np.kron(M.T, M.T) - np.eye(n * n)
    x = np.linalg.solve(K, -W.reshape(-1, order="F"))
    return _sym(x.reshape(n, n, order="F"))


def _split(A, time_domain):
    """Return (T, A_h, A_b) with ``A = T blkdiag(A_h, A_b) T^-1``."""
    n = A.shape[0]
    scale = max(np.linalg.norm(A, 2), 1.0)
    if time_domain == CONTINUOUS:
        tol = SPLIT_RTOL * scale

        def inside(re, im):
            return re < -tol
    else:
        def inside(re, im):
            return np.hypot(re, im) < 1.0 - SPLIT_RTOL

    Tschur, Z, k = sla.schur(A, output="real", sort=inside)
    T11, T12, T22 = Tschur[:k, :k], Tschur[:k, k:], Tschur[k:, k:]
    if 0 < k < n:
        # T11 X - X T22 = -T12 removes the coupling block
        X = sla.solve_sylvester(T11, -T22, -T12)
    else:
        X = np.zeros((k, n - k))
    Y = np.eye(n)
    Y[:k, k:] = X
    return Z @ Y, T11, T22


def _boundary_metric(Ab) -> np.ndarray:
    """``P_b = (V V^H)^-1`` from an eigenbasis of the semi-simple boundary block.

    Each eigenvalue cluster contributes a null-space basis of ``A_b - lam I``;
    conjugate clusters use conjugate bases so ``V V^H`` is real.
    """
    nb = Ab.shape[0]
    if nb == 0:
        return np.zeros((0, 0))
    scale = max(np.linalg.norm(Ab, 2), 1.0)
    groups = cluster_eigenvalues(np.linalg.eigvals(Ab), 1e-7 * scale)
    cols = []
    done = []
    for g in groups:
        lam = g.mean()
        if any(abs(lam - np.conj(d)) <= 1e-7 * scale for d in done):
            continue
        k = g.size
        _, _, vh = np.linalg.svd(Ab - lam * np.eye(nb))
        basis = vh[nb - k:].conj().T
        cols.append(basis)
        done.append(lam)
        if abs(lam.imag) > 1e-7 * scale:
            cols.append(basis.conj())
            done.append(np.conj(lam))
    V = np.hstack(cols)
    G = (V @ V.conj().T).real
    return _sym(np.linalg.inv(G))


def _certificate(A, time_domain) -> np.ndarray:
    A = _as2d(A)
    if not is_neutrally_stable(A, time_domain):
        raise NotNeutrallyStable(f"matrix is not neutrally stable ({time_domain})")
    n = A.shape[0]
    T, Ah, Ab = _split(A, time_domain)
    k = Ah.shape[0]
    if time_domain == CONTINUOUS:
        Ph = sla.solve_continuous_lyapunov(Ah.T, -np.eye(k)) if k else np.zeros((0, 0))
    else:
        Ph = solve_discrete_lyapunov(Ah, np.eye(k))
    core = np.zeros((n, n))
    core[:k, :k] = _sym(Ph)
    core[k:, k:] = _boundary_metric(Ab)
    Tinv = np.linalg.inv(T)
    return _sym(Tinv.T @ core @ Tinv)


def ct_certificate(A) -> Certificate:
    """Certificate ``P > 0`` with ``P A + A^T P <= 0`` for neutrally stable ``A``."""
    A = _as2d(A)
    P = _certificate(A, CONTINUOUS)
    return Certificate(P, CT_SEMIDEFINITE, _max_eig_sym(ct_lhs(P, A)))


def dt_certificate(A) -> Certificate:
    """Certificate ``P > 0`` with ``A^T P A - P <= 0`` for neutrally stable ``A``."""
    A = _as2d(A)
    P = _certificate(A, DISCRETE)
    return Certificate(P, DT_SEMIDEFINITE, _max_eig_sym(dt_lhs(P, A)))


def _observer_residual(Q, M) -> float:
    R = M.T @ Q @ M - Q + OBSERVER_WEIGHT * np.eye(M.shape[0])
    return float(np.linalg.norm(R, 2) / max(np.linalg.norm(Q, 2), 1e-300))


def dt_observer_Q(A, H, C) -> Certificate:
    """Unique ``Q`` with ``(A-HC)^T Q (A-HC) - Q + 4I = 0``.

    The stored slack is the relative residual ``||lhs|| / ||Q||``.
    """
    A, H, C = _as2d(A), _as2d(H), _as2d(C)
    if H.shape != (A.shape[0], C.shape[0]) or C.shape[1] != A.shape[0]:
        raise ShapeMismatch(f"H {H.shape} / C {C.shape} incompatible with A {A.shape}")
    M = A - H @ C
    rho = float(np.max(np.abs(np.linalg.eigvals(M)))) if M.size else 0.0
    if rho >= 1.0:
        raise NotSchur(f"A - HC has spectral radius {rho:.6g} >= 1")
    Q = solve_discrete_lyapunov(M, OBSERVER_WEIGHT * np.eye(A.shape[0]))
    return Certificate(Q, DT_OBSERVER_Q, _observer_residual(Q, M))


def validate(cert: Certificate, A, H=None, C=None) -> SlackReport:
    """Recompute positivity and the certified inequality from scratch."""
    P = np.asarray(cert.P, dtype=float)
    A = _as2d(A)
    n = A.shape[0]
    if P.shape != (n, n):
        raise ShapeMismatch(f"P {P.shape} does not match A {A.shape}")
    pnorm = np.linalg.norm(P, 2)
    symmetric = bool(np.max(np.abs(P - P.T)) <= SYMMETRY_TOL * max(pnorm, 1.0))
    min_eig = float(np.linalg.eigvalsh(_sym(P)).min())
    pd = min_eig > PD_RTOL * pnorm
    if cert.kind == CT_SEMIDEFINITE:
        slack = _max_eig_sym(ct_lhs(P, A))
        ok = slack <= SLACK_RTOL * pnorm * max(np.linalg.norm(A, 2), 1.0)
    elif cert.kind == DT_SEMIDEFINITE:
        slack = _max_eig_sym(dt_lhs(P, A))
        ok = slack <= SLACK_RTOL * pnorm * max(np.linalg.norm(A, 2), 1.0)
    elif cert.kind == DT_OBSERVER_Q:
        if H is None or C is None:
            raise ShapeMismatch("observer certificate needs H and C")
        H, C = _as2d(H), _as2d(C)
        if H.shape != (n, C.shape[0]) or C.shape[1] != n:
            raise ShapeMismatch(f"H {H.shape} / C {C.shape} incompatible with A {A.shape}")
        slack = _observer_residual(P, A - H @ C)
        ok = slack <= RESIDUAL_RTOL
    else:
        raise ValueError(f"unknown certificate kind {cert.kind!r}")
    return SlackReport(float(slack), min_eig, symmetric, bool(pd), bool(ok))
