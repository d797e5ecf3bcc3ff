"""Synthesis of the four scale-free non-collaborative protocols.

Every protocol is a linear system driven by the relative measurement
``zeta_i``::

    xc_i+ = Ac xc_i + Bc zeta_i,     u_i = Fc xc_i + Gc zeta_i

Continuous-time variants couple through the Laplacian ``L``; discrete-time
variants through ``I - D`` with ``D`` the row-stochastic matrix. Full-state
variants measure relative states, partial-state variants relative outputs.
Gains depend on the agent model only, never on the graph.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.optimize import minimize_scalar
from scipy.signal import place_poles

from .agent import CONTINUOUS, DISCRETE, LtiModel, _as2d, feasibility_report
from .errors import (
    DeltaTooLarge,
    EpsilonTooLarge,
    NotLeftInvertible,
    ObserverDesignFailed,
    PreconditionFailed,
)
from .lyap import (
    CT_SEMIDEFINITE,
    DT_SEMIDEFINITE,
    Certificate,
    ct_certificate,
    dt_certificate,
    dt_observer_Q,
    validate,
)
from .structure import (
    PreCompensator,
    ScbForm,
    compose,
    scb_decompose,
    scb_from_transform,
    verify_precompensator,
)

__all__ = [
    "CT_FULL",
    "CT_PARTIAL",
    "DT_FULL",
    "DT_PARTIAL",
    "KINDS",
    "Protocol",
    "CtFullProtocol",
    "CtPartialProtocol",
    "DtFullProtocol",
    "DtPartialProtocol",
    "DtGainConstants",
    "observer_poles",
    "place_observer",
    "dt_gain_constants",
    "synth_ct_full",
    "synth_ct_partial",
    "synth_dt_full",
    "synth_dt_partial",
    "synthesize",
    "protocol_from_dict",
    "load_protocol",
    "save_protocol",
]

CT_FULL = "ct_full"
CT_PARTIAL = "ct_partial"
DT_FULL = "dt_full"
DT_PARTIAL = "dt_partial"
KINDS = (CT_FULL, CT_PARTIAL, DT_FULL, DT_PARTIAL)


def _norm(M) -> float:
    return float(np.linalg.norm(M, 2)) if np.size(M) else 0.0


def _arr(x):
    return np.asarray(x, dtype=float).tolist()


class Protocol:
    """Common surface: realization, closed-loop blocks and serialization."""

    kind: str
    model: LtiModel
    overridden: bool

    @property
    def continuous(self) -> bool:
        return self.kind in (CT_FULL, CT_PARTIAL)

    @property
    def full_state(self) -> bool:
        return self.kind in (CT_FULL, DT_FULL)

    def realization(self):
        """Return ``(Ac, Bc, Fc, Gc)``."""
        raise NotImplementedError

    @property
    def measured_output(self) -> np.ndarray:
        """Matrix mapping agent state to the quantity exchanged over the network."""
        return np.eye(self.model.n) if self.full_state else self.model.C

    def loop_matrices(self):
        """Per-agent ``(F, G, E)`` with ``w = (x, xc)``.

        The stacked closed loop is ``I (x) F + W (x) (G E)`` where ``W`` is
        ``L`` (continuous time) or ``I - D`` (discrete time).
        """
        A, B = self.model.A, self.model.B
        Ac, Bc, Fc, Gc = self.realization()
        n, nc = A.shape[0], Ac.shape[0]
        F = np.block([[A, B @ Fc], [np.zeros((nc, n)), Ac]])
        G = np.vstack([B @ Gc, Bc])
        E = np.hstack([self.measured_output, np.zeros((self.measured_output.shape[0], nc))])
        return F, G, E

    def mode_block(self, lam: complex) -> np.ndarray:
        """Decoupled closed-loop block for coupling eigenvalue ``lam``.

        ``lam`` is a Laplacian eigenvalue in continuous time and an eigenvalue
        of ``D`` in discrete time (the block then uses ``1 - lam``).
        """
        F, G, E = self.loop_matrices()
        w = lam if self.continuous else 1.0 - lam
        return F + w * (G @ E)

    @property
    def state_dim(self) -> int:
        return self.model.n + self.realization()[0].shape[0]

    def to_dict(self) -> dict:
        raise NotImplementedError

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


# ---------------------------------------------------------------------------
# observer design

def observer_poles(k: int, time_domain: str) -> np.ndarray:
    """Preset locations: ``-1, -1.5, -2, ...`` (CT) or ``0, 0.1, -0.1, 0.2, ...`` (DT)."""
    if time_domain == CONTINUOUS:
        return -1.0 - 0.5 * np.arange(k)
    seq = [0.0]
    j = 1
    while len(seq) < k:
        seq += [0.1 * j, -0.1 * j]
        j += 1
    out = np.array(seq[:k])
    if np.any(np.abs(out) >= 1):
        raise ObserverDesignFailed(f"too many states ({k}) for the preset discrete pole pattern")
    return out


def _stable(M, time_domain) -> bool:
    if M.size == 0:
        return True
    eig = np.linalg.eigvals(M)
    return bool(np.max(eig.real) < 0) if time_domain == CONTINUOUS else bool(np.max(np.abs(eig)) < 1)


def place_observer(A, C, time_domain=CONTINUOUS) -> np.ndarray:
    """Gain ``H`` placing the observable eigenvalues of ``A - H C`` at the preset locations.

    Unobservable modes are left in place and must already be stable.
    """
    A, C = _as2d(A), np.atleast_2d(np.asarray(C, dtype=float))
    n, p = A.shape[0], C.shape[0]
    if p == 0 or not np.any(C):
        if not _stable(A, time_domain):
            raise ObserverDesignFailed("no measured output and A is not stable")
        return np.zeros((n, p))
    obs = np.vstack([C @ np.linalg.matrix_power(A, k) for k in range(n)])
    Vo = sla.orth(obs.T)
    no = Vo.shape[1]
    Vu = sla.null_space(obs)
    T = np.hstack([Vo, Vu])
    Aoo = Vo.T @ A @ Vo
    Co = C @ Vo
    if Vu.shape[1] and not _stable(Vu.T @ A @ Vu, time_domain):
        raise ObserverDesignFailed("unobservable modes are not stable (pair not detectable)")
    poles = observer_poles(no, time_domain)
    try:
        if no == 1 and p >= 1:
            # closed form avoids place_poles' rank restrictions for scalars
            j = int(np.argmax(np.abs(Co[0])))
            Ho = np.zeros((1, p))
            Ho[0, j] = (Aoo[0, 0] - poles[0]) / Co[0, j]
        else:
            Ho = place_poles(Aoo.T, Co.T, poles).gain_matrix.T
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise ObserverDesignFailed(f"pole placement failed: {exc}") from exc
    H = T @ np.vstack([Ho, np.zeros((n - no, p))])
    if not _stable(A - H @ C, time_domain):
        raise ObserverDesignFailed("observer error dynamics are not stable after placement")
    return H


# ---------------------------------------------------------------------------
# protocol types

@dataclass(frozen=True)
class CtFullProtocol(Protocol):
    model: LtiModel
    P: np.ndarray
    rho: float
    overridden: bool = False
    kind: str = field(default=CT_FULL, init=False)

    @property
    def gain(self) -> np.ndarray:
        return -self.rho * self.model.B.T @ self.P

    def realization(self):
        n, m = self.model.n, self.model.m
        return np.zeros((0, 0)), np.zeros((0, n)), np.zeros((m, 0)), self.gain

    def to_dict(self) -> dict:
        return {"kind": self.kind, "model": self.model.to_dict(), "P": _arr(self.P),
                "rho": self.rho, "overridden": self.overridden}


@dataclass(frozen=True)
class CtPartialProtocol(Protocol):
    model: LtiModel
    pre: PreCompensator
    scb: ScbForm
    P: np.ndarray
    H: np.ndarray
    rho: float
    overridden: bool = False
    kind: str = field(default=CT_PARTIAL, init=False)

    @property
    def compensated(self):
        return compose(self.model, self.pre)

    def feedback_gains(self):
        """``(K1, K2)``: ``v = -rho (K1 zhat1 + K2 zeta2)`` with ``K = Bt^T P S^-1``."""
        Bt = self.compensated.Bt
        K = Bt.T @ self.P @ self.scb.S_inv
        k1 = K.shape[1] - self.scb.nbar
        return K[:, :k1], K[:, k1:]

    def realization(self):
        pc, scb, rho = self.pre, self.scb, self.rho
        p = self.model.p
        nbar = scb.nbar
        K1, K2 = self.feedback_gains()
        k1 = K1.shape[1]
        Ty = scb.output_transform
        sel2 = np.hstack([np.zeros((nbar, p - nbar)), np.eye(nbar)]) @ Ty  # zeta -> zeta2
        obs_in = np.hstack([self.H, scb.A12]) @ Ty  # zeta -> observer input
        q = pc.q
        Ac = np.block([
            [pc.Ap, -rho * pc.Bp @ K1],
            [np.zeros((k1, q)), scb.A11 - self.H @ scb.Cbar],
        ])
        Bc = np.vstack([-rho * pc.Bp @ K2 @ sel2, obs_in])
        Fc = np.hstack([pc.Cp, -rho * pc.Dp @ K1])
        Gc = -rho * pc.Dp @ K2 @ sel2
        return Ac, Bc, Fc, Gc

    def to_dict(self) -> dict:
        return {"kind": self.kind, "model": self.model.to_dict(), "pre": self.pre.to_dict(),
                "scb": self.scb.to_dict(), "P": _arr(self.P), "H": _arr(self.H),
                "rho": self.rho, "overridden": self.overridden}


@dataclass(frozen=True)
class DtFullProtocol(Protocol):
    model: LtiModel
    P: np.ndarray
    epsilon: float
    epsilon_star: float
    overridden: bool = False
    kind: str = field(default=DT_FULL, init=False)

    @property
    def gain(self) -> np.ndarray:
        m = self.model
        return -self.epsilon * m.B.T @ self.P @ m.A

    def realization(self):
        n, m = self.model.n, self.model.m
        return np.zeros((0, 0)), np.zeros((0, n)), np.zeros((m, 0)), self.gain

    def to_dict(self) -> dict:
        return {"kind": self.kind, "model": self.model.to_dict(), "P": _arr(self.P),
                "epsilon": self.epsilon, "epsilon_star": self.epsilon_star,
                "overridden": self.overridden}


@dataclass(frozen=True)
class DtGainConstants:
    M1: float
    M2: float
    M3: float
    theta1: float
    theta2: float
    theta3: float
    kappa: float
    delta1: float
    delta2: float
    delta_star: float
    certified: bool = True
    M1_norm: float | None = None

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True)
class DtPartialProtocol(Protocol):
    model: LtiModel
    H: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    delta: float
    constants: DtGainConstants
    overridden: bool = False
    kind: str = field(default=DT_PARTIAL, init=False)

    @property
    def delta_star(self) -> float:
        return self.constants.delta_star

    def realization(self):
        m = self.model
        Ac = m.A - self.H @ m.C
        Fc = -self.delta * m.B.T @ self.P @ m.A
        return Ac, self.H, Fc, np.zeros((m.m, m.p))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "model": self.model.to_dict(), "H": _arr(self.H),
                "P": _arr(self.P), "Q": _arr(self.Q), "delta": self.delta,
                "constants": self.constants.to_dict(), "overridden": self.overridden}


# ---------------------------------------------------------------------------
# synthesis

def _require(cond: bool, assumption: str, detail: str = ""):
    if not cond:
        raise PreconditionFailed(assumption, detail)


def _certificate_from(P, A, time_domain) -> np.ndarray:
    kind = CT_SEMIDEFINITE if time_domain == CONTINUOUS else DT_SEMIDEFINITE
    if P is None:
        return (ct_certificate(A) if time_domain == CONTINUOUS else dt_certificate(A)).P
    P = _as2d(P)
    rep = validate(Certificate(P, kind, np.nan), A)
    _require(rep.passed, "certificate", f"supplied P fails validation: {rep}")
    return P


def synth_ct_full(m: LtiModel, rho: float = 1.0, P=None) -> CtFullProtocol:
    """Static protocol ``u_i = -rho B^T P zeta_i`` on relative states."""
    _require(m.time_domain == CONTINUOUS, "continuous_time")
    if rho <= 0:
        raise ValueError("rho must be positive")
    rep = feasibility_report(m)
    _require(rep.stabilizable, "stabilizable")
    _require(rep.neutrally_stable, "neutrally_stable")
    return CtFullProtocol(m, _certificate_from(P, m.A, CONTINUOUS), float(rho))


def synth_ct_partial(m: LtiModel, pc: PreCompensator, rho: float = 1.0, H=None, P=None,
                     scb: ScbForm | None = None) -> CtPartialProtocol:
    """Observer-based protocol for a pre-compensated agent.

    ``H``, ``P`` and ``scb`` may be supplied (e.g. published values); they are
    validated, otherwise designed.
    """
    _require(m.time_domain == CONTINUOUS, "continuous_time")
    if rho <= 0:
        raise ValueError("rho must be positive")
    comp_report = verify_precompensator(m, pc)
    if not comp_report.left_invertible:
        raise NotLeftInvertible("compensated agent is not left-invertible")
    _require(comp_report.passed, "precompensator", f"failed checks: {comp_report.failures}")
    ca = compose(m, pc)
    rep = feasibility_report(ca.model)
    for name, ok in rep.design.items():
        _require(ok, name, "compensated agent")
    scb = scb_decompose(ca) if scb is None else scb_from_transform(
        ca, scb.S, scb.output_transform, scb.output_permutation)
    if H is None:
        H = place_observer(scb.A11, scb.Cbar, CONTINUOUS)
    else:
        H = _as2d(H).reshape(scb.A11.shape[0], scb.Cbar.shape[0])
        if not _stable(scb.A11 - H @ scb.Cbar, CONTINUOUS):
            raise ObserverDesignFailed("supplied H does not make A11 - H Cbar Hurwitz")
    P = _certificate_from(P, ca.At, CONTINUOUS)
    return CtPartialProtocol(m, pc, scb, P, H, float(rho))


def synth_dt_full(m: LtiModel, epsilon: float | None = None, P=None,
                  override: bool = False) -> DtFullProtocol:
    """Static protocol ``u_i = -eps B^T P A zeta_i`` with ``eps <= 1/||B^T P B||``."""
    _require(m.time_domain == DISCRETE, "discrete_time")
    rep = feasibility_report(m)
    _require(rep.stabilizable, "stabilizable")
    _require(rep.neutrally_stable, "neutrally_stable")
    P = _certificate_from(P, m.A, DISCRETE)
    bpb = _norm(m.B.T @ P @ m.B)
    _require(bpb > 0, "stabilizable", "B^T P B vanishes")
    eps_star = 1.0 / bpb
    if epsilon is None:
        epsilon = eps_star
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    over = epsilon > eps_star
    if over and not override:
        raise EpsilonTooLarge(f"epsilon = {epsilon} exceeds epsilon* = {eps_star}")
    return DtFullProtocol(m, P, float(epsilon), float(eps_star), overridden=over)


def _positive_root(a: float, b: float) -> float:
    """Positive root of ``a d^2 + b d = 1`` (``inf`` when both vanish)."""
    disc = np.sqrt(b * b + 4.0 * a)
    return 2.0 / (b + disc) if b + disc > 0 else np.inf


def _delta1_grid(M, Q, BBPA, upper_hint, radii=(0.0, 0.25, 0.5, 0.75, 0.9, 0.99, 0.999),
                 n_angles=64) -> float:
    """Largest delta passing the observer-margin test on a finite grid of |lambda| < 1."""
    lams = np.array([r * np.exp(1j * t) for r in radii
                     for t in np.linspace(0, 2 * np.pi, n_angles, endpoint=False)])
    n = M.shape[0]

    def ok(d):
        for lam in lams:
            X = M + (1 - lam) * d * BBPA
            if np.linalg.eigvalsh(X.conj().T @ Q @ X - Q + 3 * np.eye(n)).max() > 0:
                return False
        return True

    lo, hi = 0.0, upper_hint
    while ok(hi) and hi < 1e6:
        lo, hi = hi, 2 * hi
    for _ in range(50):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if ok(mid) else (lo, mid)
    return lo


def _delta_chain(delta2, M1, M2, M3, theta1, theta2, theta3):
    kappa = 4 + 2 * M2 + 2 * M1 ** 2
    cands = [delta2]
    cands.append((0.5 / (theta2 * kappa)) ** (1 / 3) if theta2 > 0 else np.inf)
    cands.append(M1 / (theta1 * kappa) if theta1 > 0 else np.inf)
    cands.append(_positive_root(theta3 * kappa, M3))
    return kappa, float(min(cands))


def dt_gain_constants(m: LtiModel, H, P, Q, refine: bool = False) -> DtGainConstants:
    """Evaluate the constant chain that bounds the discrete partial-state gain.

    ``M1`` only enters as an upper bound on a cross term, so any larger value
    keeps the argument valid. When the norm product is small (a deadbeat
    observer gives zero) the chain would force ``delta* -> 0``; the bound is
    then raised within ``[M1, sqrt(2 + M2)]`` to the value maximizing
    ``delta*``. ``M1_norm`` keeps the raw product.
    """
    A, B, C = m.A, m.B, m.C
    M = A - H @ C
    BBPA = B @ B.T @ P @ A
    BtQ = B.T @ Q
    M1_norm = 2 * _norm(BtQ) * _norm(M)
    M2 = _norm(BtQ @ B)
    M3 = 2 * _norm(BtQ) * _norm(BBPA)
    ApB = A.T @ P @ B
    BPB = B.T @ P @ B
    theta1 = 2 * _norm(ApB)
    theta2 = 4 * _norm(ApB @ BPB @ B.T @ P @ A)
    theta3 = 2 * _norm(ApB @ BPB)
    b = _norm(BBPA)
    _require(b > 0, "stabilizable", "B B^T P A vanishes")
    qn = _norm(Q)
    a = _norm(M)
    # ||Q|| x^2 + 2 ||Q|| ||A-HC|| x = 1 with x = 2 delta ||B B^T P A||
    x = -a + np.sqrt(a * a + 1.0 / qn)
    delta1 = x / (2 * b)
    certified = True
    if refine:
        delta1 = max(delta1, _delta1_grid(M, Q, BBPA, delta1))
        certified = False
    delta2 = min(delta1, 1.0 / (2 * _norm(BPB)))

    def chain(m1):
        return _delta_chain(delta2, m1, M2, M3, theta1, theta2, theta3)

    M1 = M1_norm
    hi = np.sqrt(2 + M2)
    if hi > M1_norm:
        res = minimize_scalar(lambda v: -chain(v)[1], bounds=(M1_norm, hi), method="bounded",
                              options={"xatol": 1e-12 * hi})
        if -res.fun > chain(M1_norm)[1]:
            M1 = float(res.x)
    kappa, delta_star = chain(M1)
    return DtGainConstants(M1, M2, M3, theta1, theta2, theta3, kappa,
                           float(delta1), float(delta2), delta_star, certified, M1_norm)


def synth_dt_partial(m: LtiModel, delta: float | None = None, H=None, P=None,
                     override: bool = False, refine: bool = False) -> DtPartialProtocol:
    """Observer-based protocol ``chi+ = (A-HC) chi + H zeta, u = -delta B^T P A chi``."""
    _require(m.time_domain == DISCRETE, "discrete_time")
    rep = feasibility_report(m)
    _require(rep.stabilizable, "stabilizable")
    _require(rep.detectable, "detectable")
    _require(rep.neutrally_stable, "neutrally_stable")
    if H is None:
        H = place_observer(m.A, m.C, DISCRETE)
    else:
        H = _as2d(H).reshape(m.n, m.p)
        if not _stable(m.A - H @ m.C, DISCRETE):
            raise ObserverDesignFailed("supplied H does not make A - HC Schur")
    P = _certificate_from(P, m.A, DISCRETE)
    Q = dt_observer_Q(m.A, H, m.C).P
    consts = dt_gain_constants(m, H, P, Q, refine=refine)
    if delta is None:
        delta = consts.delta_star
    if delta <= 0:
        raise ValueError("delta must be positive")
    over = delta > consts.delta_star
    if over and not override:
        raise DeltaTooLarge(f"delta = {delta} exceeds delta* = {consts.delta_star:.6g}")
    return DtPartialProtocol(m, H, P, Q, float(delta), consts, overridden=over)


def synthesize(kind: str, m: LtiModel, pc: PreCompensator | None = None, *, rho=None,
               epsilon=None, delta=None, H=None, P=None, scb=None, override=False,
               refine=False) -> Protocol:
    """Dispatch on protocol kind."""
    if kind == CT_FULL:
        return synth_ct_full(m, 1.0 if rho is None else rho, P=P)
    if kind == CT_PARTIAL:
        if pc is None:
            raise PreconditionFailed("precompensator", "ct_partial needs a pre-compensator")
        return synth_ct_partial(m, pc, 1.0 if rho is None else rho, H=H, P=P, scb=scb)
    if kind == DT_FULL:
        return synth_dt_full(m, epsilon, P=P, override=override)
    if kind == DT_PARTIAL:
        return synth_dt_partial(m, delta, H=H, P=P, override=override, refine=refine)
    raise ValueError(f"unknown protocol kind {kind!r}; expected one of {KINDS}")


def _np(x):
    return np.array(x, dtype=float)


def protocol_from_dict(d: dict) -> Protocol:
    kind = d.get("kind")
    model = LtiModel.from_dict(d["model"])
    over = bool(d.get("overridden", False))
    if kind == CT_FULL:
        return CtFullProtocol(model, _np(d["P"]), float(d["rho"]), over)
    if kind == CT_PARTIAL:
        pre = PreCompensator.from_dict(d["pre"])
        scb = ScbForm.from_dict(d["scb"])
        H = _np(d["H"]).reshape(scb.A11.shape[0], scb.Cbar.shape[0])
        return CtPartialProtocol(model, pre, scb, _np(d["P"]), H, float(d["rho"]), over)
    if kind == DT_FULL:
        return DtFullProtocol(model, _np(d["P"]), float(d["epsilon"]), float(d["epsilon_star"]), over)
    if kind == DT_PARTIAL:
        consts = DtGainConstants(**d["constants"])
        H = _np(d["H"]).reshape(model.n, model.p)
        return DtPartialProtocol(model, H, _np(d["P"]), _np(d["Q"]), float(d["delta"]), consts, over)
    raise ValueError(f"unknown protocol kind {kind!r}")


def save_protocol(proto: Protocol, path) -> None:
    with open(path, "w") as fh:
        fh.write(proto.to_json())
        fh.write("\n")


def load_protocol(path) -> Protocol:
    with open(path) as fh:
        return protocol_from_dict(json.load(fh))
