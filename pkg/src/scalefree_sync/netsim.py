"""Closed-loop network simulation and the decoupled-modes oracle."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.spatial.distance import pdist

from . import _kernels
from .errors import Divergence, ShapeMismatch, SpectrumMismatch
from .graphs import DiGraph, has_spanning_tree, laplacian, nonzero_spectrum, row_stochastic
from .protocols import Protocol
from .structure import match_multisets

__all__ = [
    "DEFAULT_DT",
    "DEFAULT_CT_HORIZON",
    "DEFAULT_DT_STEPS",
    "DIVERGENCE_THRESHOLD",
    "Scenario",
    "Trajectory",
    "ModeBlock",
    "SyncSummary",
    "coupling_matrix",
    "stacked_closed_loop",
    "simulate",
    "decoupled_oracle",
    "sync_metrics",
    "write_outputs",
]

DEFAULT_DT = 1e-3
DEFAULT_CT_HORIZON = 50.0
DEFAULT_DT_STEPS = 2000
DIVERGENCE_THRESHOLD = 1e12
ORACLE_TOL = 1e-6


def coupling_matrix(protocol: Protocol, graph: DiGraph, din_bar=None) -> np.ndarray:
    """``L`` for continuous-time protocols, ``I - D`` for discrete-time ones."""
    if protocol.continuous:
        return laplacian(graph).L
    return np.eye(graph.n) - row_stochastic(graph, din_bar).D


@dataclass
class Scenario:
    protocol: Protocol
    graph: DiGraph
    x0: np.ndarray | None = None
    protocol_x0: np.ndarray | None = None
    horizon: float | int | None = None
    dt: float = DEFAULT_DT
    din_bar: np.ndarray | None = None
    seed: int = 0
    record_every: int | None = None
    stop_tol: float | None = None

    def __post_init__(self):
        N, n = self.graph.n, self.protocol.model.n
        nc = self.protocol.state_dim - n
        if not has_spanning_tree(self.graph):
            raise ValueError("graph has no directed spanning tree")
        if self.protocol.continuous and not self.dt > 0:
            raise ValueError("dt must be positive")
        rng = np.random.default_rng(self.seed)
        if self.x0 is None:
            self.x0 = rng.standard_normal((N, n))
        self.x0 = np.asarray(self.x0, dtype=float)
        if self.x0.shape != (N, n):
            raise ShapeMismatch(f"x0 must be {(N, n)}, got {self.x0.shape}")
        if self.protocol_x0 is None:
            self.protocol_x0 = np.zeros((N, nc))
        self.protocol_x0 = np.asarray(self.protocol_x0, dtype=float).reshape(N, nc)
        if self.horizon is None:
            self.horizon = DEFAULT_CT_HORIZON if self.protocol.continuous else DEFAULT_DT_STEPS
        if self.record_every is None:
            self.record_every = max(1, int(round(0.01 / self.dt))) if self.protocol.continuous else 1

    @property
    def model(self):
        return self.protocol.model

    @property
    def n_steps(self) -> int:
        if self.protocol.continuous:
            return int(round(self.horizon / self.dt))
        return int(self.horizon)

    @property
    def step_size(self) -> float:
        return self.dt if self.protocol.continuous else 1.0

    def coupling(self) -> np.ndarray:
        return coupling_matrix(self.protocol, self.graph, self.din_bar)


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # (T, N, n)
    protocol_states: np.ndarray  # (T, N, nc)
    sync_error: np.ndarray
    diverged: bool = False

    def __post_init__(self):
        if not (len(self.times) == len(self.states) == len(self.protocol_states) == len(self.sync_error)):
            raise ShapeMismatch("trajectory arrays have inconsistent lengths")


def stacked_closed_loop(protocol: Protocol, coupling: np.ndarray) -> np.ndarray:
    """Full network matrix ``I (x) F + W (x) G E``."""
    F, G, E = protocol.loop_matrices()
    N = coupling.shape[0]
    return np.kron(np.eye(N), F) + np.kron(coupling, G @ E)


def simulate(s: Scenario, backend: str | None = None) -> Trajectory:
    """Integrate (CT) or iterate (DT) the network; raise :class:`Divergence` on blow-up.

    With ``s.stop_tol`` set, the run ends at the first record whose sync error
    is at most ``stop_tol`` times the initial one.
    """
    F, G, E = s.protocol.loop_matrices()
    Wc = sp.csr_matrix(s.coupling())
    Wc.sort_indices()
    w0 = np.hstack([s.x0, s.protocol_x0])
    n = s.model.n
    stop = -1.0
    if s.stop_tol is not None:
        stop = s.stop_tol * float(pdist(s.x0).max()) if s.graph.n > 1 else 0.0
    rec, sync, steps, diverged = _kernels.run(
        w0, F, G, E, Wc.indptr, Wc.indices, Wc.data,
        s.step_size, s.n_steps, s.record_every, n, s.protocol.continuous, DIVERGENCE_THRESHOLD,
        stop, backend=backend,
    )
    tr = Trajectory(steps * s.step_size, rec[:, :, :n], rec[:, :, n:], sync, diverged)
    if diverged:
        raise Divergence(f"sync error exceeded {DIVERGENCE_THRESHOLD:g} at t = {tr.times[-1]:g}", tr)
    return tr


@dataclass
class ModeBlock:
    lam: complex
    matrix: np.ndarray
    spectrum: np.ndarray


def decoupled_oracle(s: Scenario, tol: float = ORACLE_TOL) -> list[ModeBlock]:
    """Per-eigenvalue closed-loop blocks, cross-checked against the stacked matrix.

    One block per nonzero Laplacian eigenvalue (CT) or non-unit eigenvalue of
    ``D`` (DT). Their spectra plus one copy of the synchronized-mode block
    (``F`` itself) must reproduce the stacked closed-loop spectrum.
    """
    proto = s.protocol
    if proto.continuous:
        lams = nonzero_spectrum(laplacian(s.graph))
    else:
        lams = nonzero_spectrum(row_stochastic(s.graph, s.din_bar))
    blocks = []
    for lam in lams:
        M = proto.mode_block(lam)
        blocks.append(ModeBlock(complex(lam), M, np.linalg.eigvals(M)))
    F, _, _ = proto.loop_matrices()
    union = np.concatenate([np.linalg.eigvals(F)] + [b.spectrum for b in blocks])
    full = np.linalg.eigvals(stacked_closed_loop(proto, s.coupling()))
    scale = max(1.0, float(np.abs(full).max(initial=0.0)))
    ok, gap = match_multisets(union, full, tol * scale)
    if not ok:
        raise SpectrumMismatch(f"decoupled spectra differ from stacked spectrum by {gap:.3g}")
    return blocks


@dataclass
class SyncSummary:
    initial_sync_error: float
    final_sync_error: float
    time_to_threshold: float | None
    tolerance: float
    pair_errors: np.ndarray = field(repr=False)

    def to_dict(self) -> dict:
        return {
            "initial_sync_error": self.initial_sync_error,
            "final_sync_error": self.final_sync_error,
            "time_to_threshold": self.time_to_threshold,
            "tolerance": self.tolerance,
            "reached": self.time_to_threshold is not None,
        }


def sync_metrics(tr: Trajectory, tol: float = 1e-6) -> SyncSummary:
    """Final error, first time below ``tol`` times the initial error, and ``x_i - x_1`` series."""
    if len(tr.times) == 0:
        raise ValueError("empty trajectory")
    e0 = float(tr.sync_error[0])
    below = np.nonzero(tr.sync_error <= tol * e0)[0]
    ttt = float(tr.times[below[0]]) if below.size else None
    pair = tr.states - tr.states[:, :1, :]
    return SyncSummary(e0, float(tr.sync_error[-1]), ttt, tol, pair)


def write_outputs(tr: Trajectory, outdir, extra_summary: dict | None = None, tol: float = 1e-6) -> dict:
    """Write ``trajectory.csv``, ``sync_error.csv`` and ``summary.json`` into ``outdir``."""
    import os

    os.makedirs(outdir, exist_ok=True)
    with open(os.path.join(outdir, "trajectory.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "agent", "state_index", "value"])
        T, N, n = tr.states.shape
        for k in range(T):
            t = repr(float(tr.times[k]))
            for i in range(N):
                for j in range(n):
                    w.writerow([t, i + 1, j + 1, repr(float(tr.states[k, i, j]))])
    with open(os.path.join(outdir, "sync_error.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "sync_error"])
        for t, e in zip(tr.times, tr.sync_error):
            w.writerow([repr(float(t)), repr(float(e))])
    summary = sync_metrics(tr, tol).to_dict()
    summary["diverged"] = tr.diverged
    summary["n_records"] = int(len(tr.times))
    summary["final_time"] = float(tr.times[-1])
    if extra_summary:
        summary.update(extra_summary)
    with open(os.path.join(outdir, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary
