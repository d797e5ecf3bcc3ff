"""Agent state-space models and their structural property checks."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.optimize import linear_sum_assignment

from .errors import ShapeMismatch

__all__ = [
    "CONTINUOUS",
    "DISCRETE",
    "LtiModel",
    "StructuralReport",
    "load_model",
    "check_stabilizable_detectable",
    "is_stabilizable",
    "is_detectable",
    "check_neutrally_stable",
    "is_neutrally_stable",
    "transfer_matrix",
    "normal_rank",
    "invariant_zeros",
    "infinite_zero_structure",
    "relative_degree",
    "is_left_invertible",
    "is_minimum_phase",
    "is_weakly_minimum_phase",
    "feasibility_report",
]

CONTINUOUS = "continuous"
DISCRETE = "discrete"

BOUNDARY_RTOL = 1e-8  # eigenvalue-on-stability-boundary test
CLUSTER_RTOL = 1e-7  # eigenvalue clustering for multiplicities
RANK_RTOL = 1e-7
ZERO_BOUNDARY_TOL = 1e-8
NORMAL_RANK_SAMPLES = 8


def _as2d(x) -> np.ndarray:
    a = np.array(x, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        a = a.reshape(-1, 1)
    return a


@dataclass(frozen=True)
class LtiModel:
    """Shared agent model ``x+ = A x + B u, y = C x``."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    time_domain: str = CONTINUOUS

    def __post_init__(self):
        A, B, C = _as2d(self.A), _as2d(self.B), _as2d(self.C)
        n = A.shape[0]
        if A.shape != (n, n):
            raise ShapeMismatch(f"A must be square, got {A.shape}")
        if B.shape[0] != n:
            raise ShapeMismatch(f"B must have {n} rows, got {B.shape}")
        if C.shape[1] != n:
            raise ShapeMismatch(f"C must have {n} columns, got {C.shape}")
        if self.time_domain not in (CONTINUOUS, DISCRETE):
            raise ValueError(f"time_domain must be 'continuous' or 'discrete', got {self.time_domain!r}")
        for name, mat in (("A", A), ("B", B), ("C", C)):
            if not np.all(np.isfinite(mat)):
                raise ValueError(f"{name} has non-finite entries")
            mat.setflags(write=False)
            object.__setattr__(self, name, mat)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def p(self) -> int:
        return self.C.shape[0]

    @property
    def is_continuous(self) -> bool:
        return self.time_domain == CONTINUOUS

    @property
    def is_siso(self) -> bool:
        return self.m == 1 and self.p == 1

    @property
    def full_state(self) -> bool:
        return self.p == self.n and np.array_equal(self.C, np.eye(self.n))

    def with_output(self, C) -> "LtiModel":
        return LtiModel(self.A, self.B, C, self.time_domain)

    def to_dict(self) -> dict:
        return {
            "A": self.A.tolist(),
            "B": self.B.tolist(),
            "C": self.C.tolist(),
            "time_domain": self.time_domain,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LtiModel":
        missing = {"A", "B", "C", "time_domain"} - set(d)
        if missing:
            raise ValueError(f"model is missing fields {sorted(missing)}")
        return cls(d["A"], d["B"], d["C"], d["time_domain"])


def load_model(path) -> LtiModel:
    with open(path) as fh:
        return LtiModel.from_dict(json.load(fh))


# ---------------------------------------------------------------------------
# small numerical helpers

def _scale(A: np.ndarray) -> float:
    return max(np.linalg.norm(A, 2), 1.0) if A.size else 1.0


def _rank(M: np.ndarray, rtol: float = RANK_RTOL) -> int:
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    return int(np.sum(s > rtol * max(s[0], 1.0)))


def cluster_eigenvalues(eigs, tol: float) -> list[np.ndarray]:
    """Single-linkage groups of eigenvalues closer than ``tol``."""
    eigs = np.asarray(eigs, dtype=complex)
    unassigned = list(range(eigs.size))
    groups = []
    while unassigned:
        members = [unassigned.pop(0)]
        grew = True
        while grew:
            grew = False
            for k in list(unassigned):
                if np.min(np.abs(eigs[members] - eigs[k])) <= tol:
                    members.append(k)
                    unassigned.remove(k)
                    grew = True
        groups.append(eigs[members])
    return groups


def _boundary_distance(lam, time_domain) -> np.ndarray:
    """Signed distance to the stability boundary; positive means unstable."""
    lam = np.asarray(lam, dtype=complex)
    if time_domain == CONTINUOUS:
        return lam.real
    return np.abs(lam) - 1.0


def _unstable_or_boundary(A, time_domain):
    eig = np.linalg.eigvals(A)
    tol = BOUNDARY_RTOL * _scale(A) if time_domain == CONTINUOUS else BOUNDARY_RTOL
    return [g.mean() for g in cluster_eigenvalues(eig, CLUSTER_RTOL * _scale(A))
            if np.max(_boundary_distance(g, time_domain)) >= -tol]


def _pbh_ok(A, B, time_domain) -> bool:
    n = A.shape[0]
    for lam in _unstable_or_boundary(A, time_domain):
        M = np.hstack([A - lam * np.eye(n), B.astype(complex)])
        if _rank(M) < n:
            return False
    return True


def is_stabilizable(A, B, time_domain=CONTINUOUS) -> bool:
    """PBH test on the modes in the closed unstable region."""
    return _pbh_ok(_as2d(A), _as2d(B), time_domain)


def is_detectable(A, C, time_domain=CONTINUOUS) -> bool:
    A, C = _as2d(A), _as2d(C)
    return _pbh_ok(A.T, C.T, time_domain)


def check_stabilizable_detectable(m: LtiModel) -> tuple[bool, bool]:
    return is_stabilizable(m.A, m.B, m.time_domain), is_detectable(m.A, m.C, m.time_domain)


def is_neutrally_stable(A, time_domain=CONTINUOUS) -> bool:
    """Closed-region spectrum with semi-simple boundary eigenvalues.

    Semi-simplicity of a boundary cluster of size k is decided by
    ``rank(A - lam I) == n - k``.
    """
    A = _as2d(A)
    n = A.shape[0]
    if n == 0:
        return True
    scale = _scale(A)
    eig = np.linalg.eigvals(A)
    btol = BOUNDARY_RTOL * scale if time_domain == CONTINUOUS else BOUNDARY_RTOL
    if np.any(_boundary_distance(eig, time_domain) > btol):
        return False
    for group in cluster_eigenvalues(eig, CLUSTER_RTOL * scale):
        if np.max(np.abs(_boundary_distance(group, time_domain))) > btol:
            continue
        lam = group.mean()
        if _rank(A - lam * np.eye(n), rtol=1e-6) != n - group.size:
            return False
    return True


def check_neutrally_stable(m: LtiModel) -> bool:
    return is_neutrally_stable(m.A, m.time_domain)


def transfer_matrix(m: LtiModel, s: complex) -> np.ndarray:
    """``C (sI - A)^-1 B`` at a single complex frequency."""
    return m.C @ np.linalg.solve(s * np.eye(m.n) - m.A, m.B.astype(complex))


def _sample_points(m: LtiModel, seed: int, k: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    r = 1.0 + np.linalg.norm(m.A, 2)
    return r * (rng.uniform(0.5, 2.0, k) * np.exp(1j * rng.uniform(0, 2 * np.pi, k)))


def normal_rank(m: LtiModel, seeds=(20211, 90317)) -> int:
    """Normal rank of the transfer matrix from generic frequency samples.

    Two independent sample sets are drawn; the larger rank wins (a rank drop
    at a random point happens with probability zero).
    """
    if m.n == 0:
        return 0
    ranks = []
    for seed in seeds:
        pts = _sample_points(m, seed, NORMAL_RANK_SAMPLES)
        ranks.append(max(_rank(transfer_matrix(m, s), rtol=1e-9) for s in pts))
    return max(ranks)


def _rosenbrock(m: LtiModel, s: complex) -> np.ndarray:
    return np.block([
        [m.A - s * np.eye(m.n), m.B],
        [m.C, np.zeros((m.p, m.m))],
    ]).astype(complex)


def _finite_pencil_eigs(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.shape[0] == 0:
        return np.empty(0, dtype=complex)
    w = sla.eig(a, b, right=False, homogeneous_eigvals=True)
    alpha, beta = w
    mag = np.hypot(np.abs(alpha), np.abs(beta))
    finite = np.abs(beta) > 1e-9 * mag
    return alpha[finite] / beta[finite]


def invariant_zeros(m: LtiModel) -> np.ndarray:
    """Finite points where the Rosenbrock matrix loses normal rank.

    Square systems with full normal rank use the Rosenbrock pencil directly.
    Otherwise the pencil is compressed to its normal rank with two
    independent random projections: true zeros are eigenvalues of both
    compressed pencils, spurious ones depend on the projection. Candidates
    found by both are confirmed by a rank test on the full Rosenbrock matrix.
    """
    n, mm, p = m.n, m.m, m.p
    r = normal_rank(m)
    size = n + r
    E = np.zeros((n + p, n + mm))
    E[:n, :n] = np.eye(n)
    R0 = np.block([[m.A, m.B], [m.C, np.zeros((p, mm))]])
    if p == mm == r:
        zeros = _finite_pencil_eigs(R0, E)
        return _sort_complex(zeros)

    cands = []
    for seed in (7, 1234):
        rng = np.random.default_rng(seed)
        W1 = rng.standard_normal((size, n + p))
        W2 = rng.standard_normal((n + mm, size))
        cands.append(_finite_pencil_eigs(W1 @ R0 @ W2, W1 @ E @ W2))
    a, b = cands
    if a.size == 0 or b.size == 0:
        return np.empty(0, dtype=complex)
    cost = np.abs(a[:, None] - b[None, :])
    rows, cols = linear_sum_assignment(cost)
    scale = _scale(m.A)
    out = []
    for i, j in zip(rows, cols):
        z = 0.5 * (a[i] + b[j])
        if cost[i, j] > 1e-5 * max(scale, abs(z)):
            continue
        s = np.linalg.svd(_rosenbrock(m, z), compute_uv=False)
        if s[size - 1] <= 1e-7 * s[0]:
            out.append(z)
    return _sort_complex(np.array(out, dtype=complex))


def _sort_complex(z) -> np.ndarray:
    z = np.asarray(z, dtype=complex)
    z = np.where(np.abs(z.imag) < 1e-12 * np.maximum(1.0, np.abs(z)), z.real + 0j, z)
    return z[np.lexsort((z.imag, z.real))]


def _markov_toeplitz(m: LtiModel, k: int) -> np.ndarray:
    markov = []
    Ak_B = m.B
    for _ in range(k):
        markov.append(m.C @ Ak_B)
        Ak_B = m.A @ Ak_B
    p, mm = m.p, m.m
    T = np.zeros((k * p, k * mm))
    for row in range(k):
        for col in range(row + 1):
            T[row * p:(row + 1) * p, col * mm:(col + 1) * mm] = markov[row - col]
    return T


def infinite_zero_structure(m: LtiModel) -> list[int]:
    """Orders of the infinite zeros, ascending.

    Uses rank increments of block Toeplitz matrices of Markov parameters:
    ``rank(T_k) - rank(T_{k-1})`` counts the infinite zeros of order <= k.
    """
    r = normal_rank(m)
    orders = []
    prev_rank, prev_cum = 0, 0
    for k in range(1, m.n + 2):
        if prev_cum >= r:
            break
        rank_k = _rank(_markov_toeplitz(m, k), rtol=1e-9)
        cum = rank_k - prev_rank
        orders.extend([k] * (cum - prev_cum))
        prev_rank, prev_cum = rank_k, cum
    return orders


def relative_degree(m: LtiModel) -> int | None:
    """Relative degree of a SISO model; ``None`` for a zero transfer function."""
    orders = infinite_zero_structure(m)
    return orders[0] if orders else None


def is_left_invertible(m: LtiModel) -> bool:
    return normal_rank(m) == m.m


def _zero_region_flags(zeros, time_domain, siso: bool):
    """Return (minimum_phase, weakly_minimum_phase, boundary multiplicities)."""
    d = _boundary_distance(zeros, time_domain)
    minimum = bool(np.all(d < -ZERO_BOUNDARY_TOL))
    closed = bool(np.all(d <= ZERO_BOUNDARY_TOL))
    on_boundary = zeros[np.abs(d) <= ZERO_BOUNDARY_TOL]
    mults = [g.size for g in cluster_eigenvalues(on_boundary, CLUSTER_RTOL)]
    # the MIMO multiplicity question is left to the caller
    weak = closed and (not siso or all(k == 1 for k in mults))
    return minimum, weak, mults


def is_minimum_phase(m: LtiModel) -> bool:
    return _zero_region_flags(invariant_zeros(m), m.time_domain, m.is_siso)[0]


def is_weakly_minimum_phase(m: LtiModel) -> bool:
    return _zero_region_flags(invariant_zeros(m), m.time_domain, m.is_siso)[1]


@dataclass
class StructuralReport:
    time_domain: str
    siso: bool
    stabilizable: bool
    detectable: bool
    neutrally_stable: bool
    minimum_phase: bool
    weakly_minimum_phase: bool
    uniform_rank_one: bool
    relative_degree_one: bool | None
    left_invertible: bool
    invariant_zeros: list
    infinite_zero_orders: list
    normal_rank: int
    boundary_zero_multiplicities: list
    necessary: dict | None = None
    design: dict = field(default_factory=dict)

    @property
    def necessary_ok(self) -> bool | None:
        return None if self.necessary is None else all(self.necessary.values())

    @property
    def design_ok(self) -> bool:
        return all(self.design.values())

    @property
    def violations(self) -> list[str]:
        names = [k for k, ok in self.design.items() if not ok]
        if self.necessary:
            names += [k for k, ok in self.necessary.items() if not ok and k not in names]
        return names

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["invariant_zeros"] = [[float(z.real), float(z.imag)] for z in self.invariant_zeros]
        d["necessary_ok"] = self.necessary_ok
        d["design_ok"] = self.design_ok
        d["violations"] = self.violations
        return d


def feasibility_report(m: LtiModel) -> StructuralReport:
    """Run every structural check and evaluate both condition lists.

    ``necessary`` holds the SISO necessary conditions for a scale-free
    non-collaborative linear protocol (``None`` for MIMO models);
    ``design`` holds the sufficient design conditions of the time domain.
    """
    stab, det = check_stabilizable_detectable(m)
    neutral = check_neutrally_stable(m)
    zeros = invariant_zeros(m)
    minimum, weak, mults = _zero_region_flags(zeros, m.time_domain, m.is_siso)
    r = normal_rank(m)
    orders = infinite_zero_structure(m)
    uniform1 = r > 0 and _rank(m.C @ m.B, rtol=1e-9) == r
    rel1 = bool(abs((m.C @ m.B).item()) > 1e-12 * _scale(m.C) * _scale(m.B)) if m.is_siso else None

    if m.is_continuous:
        design = {
            "stabilizable_detectable": stab and det,
            "neutrally_stable": neutral,
            "minimum_phase": minimum,
            "uniform_rank_one": uniform1,
        }
        necessary = {
            "stabilizable_detectable": stab and det,
            "neutrally_stable": neutral,
            "weakly_minimum_phase": weak,
            "relative_degree_one": bool(rel1),
        } if m.is_siso else None
    else:
        design = {"stabilizable_detectable": stab and det, "neutrally_stable": neutral}
        necessary = dict(design) if m.is_siso else None

    return StructuralReport(
        time_domain=m.time_domain,
        siso=m.is_siso,
        stabilizable=stab,
        detectable=det,
        neutrally_stable=neutral,
        minimum_phase=minimum,
        weakly_minimum_phase=weak,
        uniform_rank_one=uniform1,
        relative_degree_one=rel1,
        left_invertible=r == m.m,
        invariant_zeros=list(zeros),
        infinite_zero_orders=orders,
        normal_rank=r,
        boundary_zero_multiplicities=mults,
        necessary=necessary,
        design=design,
    )
