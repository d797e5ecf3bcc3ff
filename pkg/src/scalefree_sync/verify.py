"""Spectral sweeps over the coupling-eigenvalue region and SISO necessity audits.

The synchronization guarantees quantify over every admissible coupling
eigenvalue (``Re lam > 0`` in continuous time, ``|lam| < 1`` in discrete
time). The sweeps evaluate the decoupled closed-loop block on a finite grid
of that region; they are an independent numerical cross-check of the
Lyapunov certificates, not a proof.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .agent import CONTINUOUS, LtiModel, feasibility_report, invariant_zeros, relative_degree
from .errors import NotSiso
from .protocols import Protocol

__all__ = [
    "SweepReport",
    "AuditReport",
    "ct_grid",
    "dt_grid",
    "ct_sweep",
    "dt_sweep",
    "sweep",
    "siso_necessity_audit",
    "static_gain_witness",
]

STRICT_MARGIN = 1e-10


@dataclass
class SweepReport:
    grid: np.ndarray
    margins: np.ndarray
    worst_margin: float
    worst_lambda: complex
    passed: bool

    def to_dict(self) -> dict:
        return {
            "n_points": int(self.grid.size),
            "worst_margin": self.worst_margin,
            "worst_lambda": [self.worst_lambda.real, self.worst_lambda.imag],
            "pass": self.passed,
            "n_failed": int(np.sum(self.margins >= 0)),
        }


def ct_grid(n_re: int = 10, n_im: int = 10, lo: float = 1e-3, hi: float = 1e3) -> np.ndarray:
    """Log-spaced real parts times ``{0, +-log-spaced}`` imaginary parts."""
    re = np.logspace(np.log10(lo), np.log10(hi), n_re)
    mag = np.logspace(np.log10(lo), np.log10(hi), n_im)
    im = np.concatenate([-mag[::-1], [0.0], mag])
    return (re[:, None] + 1j * im[None, :]).ravel()


def dt_grid(radii=(0.0, 0.25, 0.5, 0.75, 0.999), n_angles: int = 32) -> np.ndarray:
    ang = np.linspace(0.0, 2 * np.pi, n_angles, endpoint=False)
    return np.array([r * np.exp(1j * a) for r in radii for a in ang])


def _report(grid, margins) -> SweepReport:
    k = int(np.argmax(margins))
    worst = float(margins[k])
    return SweepReport(grid, margins, worst, complex(grid[k]), worst < 0)


def ct_sweep(protocol: Protocol, grid=None) -> SweepReport:
    """Margin ``max Re eig(block) + 1e-10`` at every grid point; pass iff all negative."""
    grid = ct_grid() if grid is None else np.asarray(grid, dtype=complex)
    margins = np.array([np.linalg.eigvals(protocol.mode_block(lam)).real.max() + STRICT_MARGIN
                        for lam in grid])
    return _report(grid, margins)


def dt_sweep(protocol: Protocol, grid=None) -> SweepReport:
    """Spectral radius margins; the ``lam = 0`` points only need radius <= 1 + 1e-10."""
    grid = dt_grid() if grid is None else np.asarray(grid, dtype=complex)
    margins = np.empty(grid.size)
    for k, lam in enumerate(grid):
        radius = np.abs(np.linalg.eigvals(protocol.mode_block(lam))).max()
        bound = 1.0 + STRICT_MARGIN if lam == 0 else 1.0 - STRICT_MARGIN
        margins[k] = radius - bound
    return _report(grid, margins)


def sweep(protocol: Protocol, grid=None) -> SweepReport:
    return ct_sweep(protocol, grid) if protocol.continuous else dt_sweep(protocol, grid)


@dataclass
class AuditReport:
    time_domain: str
    conditions: dict
    witnesses: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.conditions.values())

    @property
    def violations(self) -> list[str]:
        return [k for k, ok in self.conditions.items() if not ok]

    def to_dict(self) -> dict:
        return {"time_domain": self.time_domain, "conditions": self.conditions,
                "violations": self.violations, "witnesses": self.witnesses, "pass": self.passed}


def _cplx(z):
    return [float(np.real(z)), float(np.imag(z))]


def siso_necessity_audit(m: LtiModel) -> AuditReport:
    """Evaluate the SISO necessary conditions and explain every failure.

    Continuous time: stabilizable and detectable, neutrally stable, weakly
    minimum phase, relative degree one. Discrete time: the first two.
    """
    if not m.is_siso:
        raise NotSiso(f"model has {m.m} inputs and {m.p} outputs")
    rep = feasibility_report(m)
    conds = dict(rep.necessary)
    wit = {}
    eig = np.linalg.eigvals(m.A)
    if not conds["stabilizable_detectable"]:
        wit["stabilizable_detectable"] = {"stabilizable": rep.stabilizable, "detectable": rep.detectable}
    if not conds["neutrally_stable"]:
        if m.time_domain == CONTINUOUS:
            k = int(np.argmax(eig.real))
            detail = "eigenvalue in the open right half-plane" if eig[k].real > 1e-8 else \
                "repeated imaginary-axis eigenvalue with a Jordan block"
        else:
            k = int(np.argmax(np.abs(eig)))
            detail = "eigenvalue outside the unit circle" if abs(eig[k]) > 1 + 1e-8 else \
                "repeated unit-circle eigenvalue with a Jordan block"
        wit["neutrally_stable"] = {"eigenvalue": _cplx(eig[k]), "reason": detail}
    if "weakly_minimum_phase" in conds and not conds["weakly_minimum_phase"]:
        z = invariant_zeros(m)
        bad = z[z.real > -1e-8]
        wit["weakly_minimum_phase"] = {"zeros": [_cplx(v) for v in bad]}
    if "relative_degree_one" in conds and not conds["relative_degree_one"]:
        wit["relative_degree_one"] = {"relative_degree": relative_degree(m)}
    return AuditReport(m.time_domain, conds, wit)


def static_gain_witness(m: LtiModel, gains=None, grid=None):
    """Grid points where no static gain ``u = -k zeta`` stabilizes the SISO block.

    Returns the list of witness eigenvalues; an empty list means every grid
    point admits some stabilizing gain in ``gains``.
    """
    if not m.is_siso:
        raise NotSiso("static gain witness is SISO only")
    gains = np.logspace(-3, 3, 61) if gains is None else np.asarray(gains, dtype=float)
    ct = m.time_domain == CONTINUOUS
    grid = (ct_grid() if ct else dt_grid(radii=(0.25, 0.5, 0.75, 0.999))) if grid is None else grid
    BC = m.B @ m.C
    out = []
    for lam in grid:
        w = lam if ct else 1.0 - lam
        ok = False
        for k in gains:
            ev = np.linalg.eigvals(m.A - k * w * BC)
            if (ev.real.max() < 0) if ct else (np.abs(ev).max() < 1):
                ok = True
                break
        if not ok:
            out.append(complex(lam))
    return out
