"""Pre-compensated agents and their special-coordinate-basis block form.

A stable pre-compensator ``p' = Ap p + Bp v, u = Cp p + Dp v`` in series with
the agent gives the compensated agent ``(At, Bt, Ct)`` with state
``z = (x, p)``. For a left-invertible, uniform-rank-one compensated agent a
state transformation ``S`` exposes

    S At S^-1 = [[A11, A12], [A21, A22]],  S Bt = [0; Bbar],
    Ty Ct S^-1 = [[Cbar, 0], [0, I]]

where ``Ty`` is an output change of basis (a permutation followed by a unit
upper-triangular correction; identity when the outputs are already ordered).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.optimize import linear_sum_assignment

from .agent import (
    CONTINUOUS,
    LtiModel,
    _as2d,
    _rank,
    infinite_zero_structure,
    invariant_zeros,
    is_detectable,
    is_stabilizable,
    normal_rank,
)
from .errors import (
    DetectabilityLost,
    NotHurwitz,
    NotLeftInvertible,
    NotUniformRankOne,
    ShapeMismatch,
)

__all__ = [
    "PreCompensator",
    "CompensatedAgent",
    "ScbForm",
    "PrecompensatorReport",
    "identity_precompensator",
    "load_precompensator",
    "compose",
    "verify_lemma1",
    "verify_precompensator",
    "scb_decompose",
    "scb_from_transform",
    "match_multisets",
]

BLOCK_TOL = 1e-10


@dataclass(frozen=True)
class PreCompensator:
    Ap: np.ndarray
    Bp: np.ndarray
    Cp: np.ndarray
    Dp: np.ndarray

    def __post_init__(self):
        Dp = _as2d(self.Dp)
        m, mv = Dp.shape
        q = np.asarray(self.Ap).size and _as2d(self.Ap).shape[0]
        Ap = _as2d(self.Ap) if q else np.zeros((0, 0))
        Bp = _as2d(self.Bp).reshape(q, mv) if q else np.zeros((0, mv))
        Cp = _as2d(self.Cp).reshape(m, q) if q else np.zeros((m, 0))
        if Ap.shape != (q, q) or Bp.shape != (q, mv) or Cp.shape != (m, q):
            raise ShapeMismatch("inconsistent pre-compensator dimensions")
        if q and np.max(np.linalg.eigvals(Ap).real) >= 0:
            raise NotHurwitz("pre-compensator Ap must be Hurwitz")
        for name, mat in (("Ap", Ap), ("Bp", Bp), ("Cp", Cp), ("Dp", Dp)):
            mat.setflags(write=False)
            object.__setattr__(self, name, mat)

    @property
    def q(self) -> int:
        return self.Ap.shape[0]

    @property
    def m_v(self) -> int:
        return self.Dp.shape[1]

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("Ap", "Bp", "Cp", "Dp")}

    @classmethod
    def from_dict(cls, d: dict) -> "PreCompensator":
        missing = {"Ap", "Bp", "Cp", "Dp"} - set(d)
        if missing:
            raise ValueError(f"pre-compensator is missing fields {sorted(missing)}")
        return cls(d["Ap"], d["Bp"], d["Cp"], d["Dp"])


def identity_precompensator(m: int) -> PreCompensator:
    return PreCompensator(np.zeros((0, 0)), np.zeros((0, m)), np.zeros((m, 0)), np.eye(m))


def load_precompensator(path) -> PreCompensator:
    with open(path) as fh:
        return PreCompensator.from_dict(json.load(fh))


@dataclass(frozen=True)
class CompensatedAgent:
    At: np.ndarray
    Bt: np.ndarray
    Ct: np.ndarray
    n: int
    q: int

    @property
    def model(self) -> LtiModel:
        return LtiModel(self.At, self.Bt, self.Ct, CONTINUOUS)


def compose(m: LtiModel, pc: PreCompensator) -> CompensatedAgent:
    if pc.Dp.shape[0] != m.m:
        raise ShapeMismatch(f"pre-compensator drives {pc.Dp.shape[0]} inputs, agent has {m.m}")
    n, q = m.n, pc.q
    At = np.block([[m.A, m.B @ pc.Cp], [np.zeros((q, n)), pc.Ap]])
    Bt = np.vstack([m.B @ pc.Dp, pc.Bp])
    Ct = np.hstack([m.C, np.zeros((m.p, q))])
    return CompensatedAgent(At, Bt, Ct, n, q)


def match_multisets(a, b, tol) -> tuple[bool, float]:
    """Optimal one-to-one matching of two complex multisets; (ok, worst gap)."""
    a, b = np.asarray(a, dtype=complex), np.asarray(b, dtype=complex)
    if a.size != b.size:
        return False, np.inf
    if a.size == 0:
        return True, 0.0
    cost = np.abs(a[:, None] - b[None, :])
    r, c = linear_sum_assignment(cost)
    worst = float(cost[r, c].max())
    return bool(worst <= tol), worst


def _sub_multiset(small, big, tol):
    """Match every element of ``small`` to a distinct element of ``big``; return leftovers of ``big``."""
    small, big = np.asarray(small, dtype=complex), np.asarray(big, dtype=complex)
    if small.size == 0:
        return True, big
    if small.size > big.size:
        return False, big
    cost = np.abs(small[:, None] - big[None, :])
    r, c = linear_sum_assignment(cost)
    ok = bool(cost[r, c].max() <= tol)
    rest = np.delete(big, c)
    return ok, rest


@dataclass
class PrecompensatorReport:
    stabilizable_detectable: bool
    left_invertible: bool
    poles_union: bool
    infinite_zero_structure: bool
    zeros_ok: bool
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all((self.stabilizable_detectable, self.left_invertible, self.poles_union,
                    self.infinite_zero_structure, self.zeros_ok))

    @property
    def failures(self) -> list[str]:
        names = ("stabilizable_detectable", "left_invertible", "poles_union",
                 "infinite_zero_structure", "zeros_ok")
        return [k for k in names if not getattr(self, k)]

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in ("stabilizable_detectable", "left_invertible", "poles_union",
                                             "infinite_zero_structure", "zeros_ok")}
        d["passed"] = self.passed
        d["failures"] = self.failures
        d["details"] = self.details
        return d


def verify_precompensator(m: LtiModel, pc: PreCompensator) -> PrecompensatorReport:
    """Check the five properties a valid pre-compensator must give the series connection.

    The infinite-zero bullet accepts any compensated order that already
    occurs in the agent (squaring down removes infinite zeros but must not
    create higher-order ones).
    """
    ca = compose(m, pc)
    cm = ca.model
    stab = is_stabilizable(cm.A, cm.B) and is_detectable(cm.A, cm.C)
    r = normal_rank(cm)
    left = r == cm.m and r > 0

    poles = np.linalg.eigvals(cm.A)
    expected = np.concatenate([np.linalg.eigvals(m.A), np.linalg.eigvals(pc.Ap) if pc.q else []])
    poles_ok, pole_gap = match_multisets(poles, expected, 1e-8 * max(1.0, np.abs(expected).max(initial=0)))

    orders_agent = infinite_zero_structure(m)
    orders_comp = infinite_zero_structure(cm)
    inf_ok = bool(orders_comp) and set(orders_comp) <= set(orders_agent)

    z_agent = invariant_zeros(m)
    z_comp = invariant_zeros(cm)
    contained, extra = _sub_multiset(z_agent, z_comp, 1e-6 * max(1.0, np.abs(z_comp).max(initial=0)))
    zeros_ok = contained and bool(np.all(extra.real < 0))

    details = {
        "normal_rank": r,
        "inputs": cm.m,
        "pole_gap": pole_gap,
        "agent_infinite_zero_orders": orders_agent,
        "compensated_infinite_zero_orders": orders_comp,
        "agent_zeros": [[float(z.real), float(z.imag)] for z in z_agent],
        "compensated_zeros": [[float(z.real), float(z.imag)] for z in z_comp],
    }
    return PrecompensatorReport(stab, left, poles_ok, inf_ok, zeros_ok, details)


verify_lemma1 = verify_precompensator  # name used by the operations contract


@dataclass(frozen=True)
class ScbForm:
    """Block form of a compensated agent; ``S`` maps ``z`` to ``(zbar1, zbar2)``."""

    S: np.ndarray
    A11: np.ndarray
    A12: np.ndarray
    A21: np.ndarray
    A22: np.ndarray
    Bbar: np.ndarray
    Cbar: np.ndarray
    nbar: int
    output_transform: np.ndarray
    output_permutation: tuple

    @property
    def S_inv(self) -> np.ndarray:
        return np.linalg.inv(self.S)

    def to_dict(self) -> dict:
        d = {k: getattr(self, k).tolist() for k in ("S", "A11", "A12", "A21", "A22", "Bbar", "Cbar",
                                                      "output_transform")}
        d["nbar"] = self.nbar
        d["output_permutation"] = list(self.output_permutation)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScbForm":
        S = np.array(d["S"], dtype=float)
        Ty = np.array(d["output_transform"], dtype=float)
        nbar = int(d["nbar"])
        N, p = S.shape[0], Ty.shape[0]
        k = N - nbar
        shapes = {"A11": (k, k), "A12": (k, nbar), "A21": (nbar, k), "A22": (nbar, nbar),
                  "Bbar": (nbar, nbar), "Cbar": (p - nbar, k)}
        kw = {name: np.array(d[name], dtype=float).reshape(shape) for name, shape in shapes.items()}
        return cls(S=S, output_transform=Ty, nbar=nbar,
                   output_permutation=tuple(d["output_permutation"]), **kw)

    def check(self, ca: CompensatedAgent, tol: float = BLOCK_TOL) -> dict:
        """Residuals of every block-structure invariant (all should be <= tol)."""
        S, Si = self.S, self.S_inv
        k = S.shape[0] - self.nbar
        blocks = np.block([[self.A11, self.A12], [self.A21, self.A22]])
        Cform = np.block([
            [self.Cbar, np.zeros((self.Cbar.shape[0], self.nbar))],
            [np.zeros((self.nbar, k)), np.eye(self.nbar)],
        ])
        SB = S @ ca.Bt
        scale = max(1.0, np.linalg.norm(ca.At, 2))
        return {
            "A": float(np.max(np.abs(S @ ca.At @ Si - blocks), initial=0.0)) / scale,
            "B_top": float(np.max(np.abs(SB[:k]), initial=0.0)),
            "B_bar": float(np.max(np.abs(SB[k:] - self.Bbar), initial=0.0)),
            "C": float(np.max(np.abs(self.output_transform @ ca.Ct @ Si - Cform), initial=0.0)),
        }


def _output_transform(CB: np.ndarray):
    """Permutation + unit upper-triangular ``Ty`` with ``Ty CB = [0; M]``, ``M`` nonsingular."""
    p, mv = CB.shape
    # pivoted QR on CB^T selects the best-conditioned mv output rows
    _, _, piv = sla.qr(CB.T, pivoting=True)
    chosen = sorted(piv[:mv].tolist())
    rest = [i for i in range(p) if i not in chosen]
    perm = rest + chosen
    Pi = np.eye(p)[perm]
    CBp = Pi @ CB
    top, bot = CBp[: p - mv], CBp[p - mv:]
    U = np.eye(p)
    U[: p - mv, p - mv:] = -np.linalg.solve(bot.T, top.T).T
    return U @ Pi, tuple(perm)


def _complement_rows(Bt: np.ndarray) -> np.ndarray:
    """Orthonormal rows spanning the orthogonal complement of ``image(Bt)``.

    Canonical choice: orthonormalize the columns of the projector
    ``I - Bt Bt^+`` picked by pivoted QR, kept in natural order with a
    positive-diagonal ``R``. A system already in block form yields identity rows.
    """
    N, mv = Bt.shape
    k = N - mv
    Pi = np.eye(N) - Bt @ np.linalg.pinv(Bt)
    _, _, piv = sla.qr(Pi, pivoting=True)
    cols = sorted(piv[:k].tolist())
    Qm, R = np.linalg.qr(Pi[:, cols])
    Qm = Qm * np.sign(np.diag(R))
    return Qm.T


def scb_decompose(ca: CompensatedAgent) -> ScbForm:
    """Construct ``S`` for a left-invertible, uniform-rank-one compensated agent.

    ``zbar2`` collects the ``nbar = m_v`` outputs whose rows of ``Ct Bt`` form
    a nonsingular block; ``zbar1`` uses an orthonormal basis of the orthogonal
    complement of ``image(Bt)`` (see :func:`_complement_rows`) so that
    ``S Bt = [0; Bbar]``.
    """
    At, Bt, Ct = ca.At, ca.Bt, ca.Ct
    N, mv = Bt.shape
    p = Ct.shape[0]
    cm = ca.model
    r = normal_rank(cm)
    if r != mv:
        raise NotLeftInvertible(f"normal rank {r} < {mv} inputs")
    CB = Ct @ Bt
    if _rank(CB, rtol=1e-9) != mv:
        raise NotUniformRankOne(f"rank(Ct Bt) = {_rank(CB, rtol=1e-9)} < {mv}")
    Ty, perm = _output_transform(CB)
    Cy = Ty @ Ct
    C1, C2 = Cy[: p - mv], Cy[p - mv:]
    S = np.vstack([_complement_rows(Bt), C2])
    return scb_from_transform(ca, S, Ty, perm)


def scb_from_transform(ca: CompensatedAgent, S, output_transform=None, output_permutation=None,
                       tol: float = 1e-8) -> ScbForm:
    """Extract the blocks for a given ``S`` (e.g. a published one) and check the structure."""
    S = _as2d(S)
    N, mv = ca.Bt.shape
    p = ca.Ct.shape[0]
    if S.shape != (N, N):
        raise ShapeMismatch(f"S must be {N}x{N}, got {S.shape}")
    Ty = np.eye(p) if output_transform is None else _as2d(output_transform)
    perm = tuple(range(p)) if output_permutation is None else tuple(output_permutation)
    Si = np.linalg.inv(S)
    k = N - mv
    Ab = S @ ca.At @ Si
    Bbar = (S @ ca.Bt)[k:]
    Cbar = (Ty @ ca.Ct @ Si)[: p - mv, :k]
    form = ScbForm(
        S=S, A11=Ab[:k, :k], A12=Ab[:k, k:], A21=Ab[k:, :k], A22=Ab[k:, k:],
        Bbar=Bbar, Cbar=Cbar, nbar=mv, output_transform=Ty, output_permutation=perm,
    )
    res = form.check(ca)
    bad = {name: v for name, v in res.items() if v > tol}
    if bad:
        raise ShapeMismatch(f"S does not produce the block structure: {bad}")
    if _rank(Bbar, rtol=1e-9) != mv:
        raise NotUniformRankOne("Bbar is singular")
    if not is_detectable(form.A11, form.Cbar):
        raise DetectabilityLost("(A11, Cbar) is not detectable")
    return form
