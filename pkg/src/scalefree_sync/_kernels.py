"""Hot loops of the network simulator.

Each agent carries a local state ``w_i`` (agent state first, then protocol
state). One evaluation of the network vector field is

    y_j = E w_j,   s_i = sum_j W_ij y_j,   f_i = F w_i + G s_i

with ``W`` stored in CSR form. Continuous time integrates ``w' = f`` with
classical RK4; discrete time iterates ``w+ = f``. A run stops early once the
recorded sync error drops to ``stop_level`` (negative disables this).

Two interchangeable backends exist: numba-compiled loops and a vectorized
numpy path. Set ``SCALEFREE_SYNC_NUMBA=0`` to force numpy (numba is also
skipped automatically when it cannot be imported).
"""
from __future__ import annotations

import os

import numpy as np
import scipy.sparse as sp
from scipy.spatial.distance import pdist

try:  # pragma: no cover - exercised implicitly
    import numba
except ImportError:  # pragma: no cover
    numba = None

__all__ = ["BACKEND", "numba_available", "run", "run_numpy", "run_numba", "n_records"]


def _env_wants_numba() -> bool:
    return os.environ.get("SCALEFREE_SYNC_NUMBA", "1").strip().lower() not in ("0", "false", "no", "off")


def numba_available() -> bool:
    return numba is not None


BACKEND = "numba" if (numba is not None and _env_wants_numba()) else "numpy"


def n_records(n_steps: int, every: int) -> int:
    return n_steps // every + 1 + (1 if n_steps % every else 0)


# ---------------------------------------------------------------------------
# numpy backend

def _field_numpy(W, F, G, E, Wc):
    return W @ F.T + (Wc @ (W @ E.T)) @ G.T


def _sync_numpy(X) -> float:
    return float(pdist(X).max()) if X.shape[0] > 1 else 0.0


def run_numpy(w0, F, G, E, indptr, indices, data, h, n_steps, every, n_x, continuous, threshold,
              stop_level=-1.0):
    N = w0.shape[0]
    Wc = sp.csr_matrix((data, indices, indptr), shape=(N, N))
    n_rec = n_records(n_steps, every)
    rec = np.empty((n_rec, N, w0.shape[1]))
    sync = np.empty(n_rec)
    steps = np.empty(n_rec, dtype=np.int64)
    W = w0.copy()
    rec[0], sync[0], steps[0] = W, _sync_numpy(W[:, :n_x]), 0
    r = 1
    for k in range(1, n_steps + 1):
        if continuous:
            k1 = _field_numpy(W, F, G, E, Wc)
            k2 = _field_numpy(W + 0.5 * h * k1, F, G, E, Wc)
            k3 = _field_numpy(W + 0.5 * h * k2, F, G, E, Wc)
            k4 = _field_numpy(W + h * k3, F, G, E, Wc)
            W = W + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        else:
            W = _field_numpy(W, F, G, E, Wc)
        if k % every == 0 or k == n_steps:
            s = _sync_numpy(W[:, :n_x])
            rec[r], sync[r], steps[r] = W, s, k
            r += 1
            if not np.isfinite(s) or s > threshold:
                return rec[:r], sync[:r], steps[:r], True
            if s <= stop_level:
                break
    return rec[:r], sync[:r], steps[:r], False


# ---------------------------------------------------------------------------
# numba backend

if numba is not None:

    @numba.njit(cache=True)
    def _field_nb(W, F, G, E, indptr, indices, data, out, Y, S):
        N, k = W.shape
        p = E.shape[0]
        for j in range(N):
            for a in range(p):
                acc = 0.0
                for b in range(k):
                    acc += E[a, b] * W[j, b]
                Y[j, a] = acc
        for i in range(N):
            for a in range(p):
                S[i, a] = 0.0
            for ptr in range(indptr[i], indptr[i + 1]):
                j = indices[ptr]
                wij = data[ptr]
                for a in range(p):
                    S[i, a] += wij * Y[j, a]
            for a in range(k):
                acc = 0.0
                for b in range(k):
                    acc += F[a, b] * W[i, b]
                for b in range(p):
                    acc += G[a, b] * S[i, b]
                out[i, a] = acc

    @numba.njit(cache=True)
    def _sync_nb(W, n_x):
        N = W.shape[0]
        best = 0.0
        for i in range(N):
            for j in range(i + 1, N):
                acc = 0.0
                for a in range(n_x):
                    d = W[i, a] - W[j, a]
                    acc += d * d
                if acc > best:
                    best = acc
        return np.sqrt(best)

    @numba.njit(cache=True)
    def _run_nb(w0, F, G, E, indptr, indices, data, h, n_steps, every, n_x, continuous, threshold,
                stop_level, rec, sync, steps):
        N, k = w0.shape
        p = E.shape[0]
        W = w0.copy()
        k1 = np.empty_like(W)
        k2 = np.empty_like(W)
        k3 = np.empty_like(W)
        k4 = np.empty_like(W)
        tmp = np.empty_like(W)
        Y = np.empty((N, p))
        S = np.empty((N, p))
        rec[0] = W
        sync[0] = _sync_nb(W, n_x)
        steps[0] = 0
        r = 1
        for step in range(1, n_steps + 1):
            if continuous:
                _field_nb(W, F, G, E, indptr, indices, data, k1, Y, S)
                for i in range(N):
                    for a in range(k):
                        tmp[i, a] = W[i, a] + 0.5 * h * k1[i, a]
                _field_nb(tmp, F, G, E, indptr, indices, data, k2, Y, S)
                for i in range(N):
                    for a in range(k):
                        tmp[i, a] = W[i, a] + 0.5 * h * k2[i, a]
                _field_nb(tmp, F, G, E, indptr, indices, data, k3, Y, S)
                for i in range(N):
                    for a in range(k):
                        tmp[i, a] = W[i, a] + h * k3[i, a]
                _field_nb(tmp, F, G, E, indptr, indices, data, k4, Y, S)
                for i in range(N):
                    for a in range(k):
                        W[i, a] = W[i, a] + (h / 6.0) * (k1[i, a] + 2.0 * k2[i, a] + 2.0 * k3[i, a] + k4[i, a])
            else:
                _field_nb(W, F, G, E, indptr, indices, data, tmp, Y, S)
                for i in range(N):
                    for a in range(k):
                        W[i, a] = tmp[i, a]
            if step % every == 0 or step == n_steps:
                s = _sync_nb(W, n_x)
                rec[r] = W
                sync[r] = s
                steps[r] = step
                r += 1
                if not np.isfinite(s) or s > threshold:
                    return r, True
                if s <= stop_level:
                    break
        return r, False


def run_numba(w0, F, G, E, indptr, indices, data, h, n_steps, every, n_x, continuous, threshold,
              stop_level=-1.0):
    if numba is None:
        raise RuntimeError("numba is not installed")
    N, k = w0.shape
    n_rec = n_records(n_steps, every)
    rec = np.empty((n_rec, N, k))
    sync = np.empty(n_rec)
    steps = np.empty(n_rec, dtype=np.int64)
    args = [np.ascontiguousarray(a, dtype=np.float64) for a in (w0, F, G, E)]
    used, diverged = _run_nb(
        *args,
        np.ascontiguousarray(indptr, dtype=np.int64),
        np.ascontiguousarray(indices, dtype=np.int64),
        np.ascontiguousarray(data, dtype=np.float64),
        float(h), int(n_steps), int(every), int(n_x), bool(continuous), float(threshold),
        float(stop_level), rec, sync, steps,
    )
    return rec[:used], sync[:used], steps[:used], bool(diverged)


def run(*args, backend: str | None = None):
    """Dispatch to the selected backend (default: module-level ``BACKEND``)."""
    backend = backend or BACKEND
    if backend == "numba":
        return run_numba(*args)
    if backend == "numpy":
        return run_numpy(*args)
    raise ValueError(f"unknown backend {backend!r}")
