"""Benchmark agents with published protocol parameters.

Two three-state agents share the oscillator-plus-integrator structure; the
continuous one is squared down by a first-order pre-compensator, the discrete
one is single-input single-output. ``ring_60`` is the 60-agent directed ring
used for both, and ``illustrative_4`` is a small spanning-tree graph for
quick runs (its topology is representative, not a published one).
"""
import numpy as np

from .agent import CONTINUOUS, DISCRETE, LtiModel
from .graphs import DiGraph, cycle
from .structure import PreCompensator, ScbForm, compose, scb_from_transform

__all__ = [
    "ct_agent",
    "ct_precompensator",
    "ct_P",
    "ct_S_inv",
    "ct_scb",
    "ct_H",
    "ct_A11",
    "ct_A12",
    "ct_Cbar",
    "ct_Bt",
    "dt_agent",
    "dt_H",
    "dt_P",
    "DT_DELTA",
    "ring_60",
    "illustrative_4",
]


def ct_agent() -> LtiModel:
    A = [[0, 1, 1], [-1, 0, 1], [0, 0, 0]]
    C = [[1, 0, 0], [0, 1, 0]]
    return LtiModel(A, np.eye(3), C, CONTINUOUS)


def ct_precompensator() -> PreCompensator:
    return PreCompensator([[-2.0]], [[1.0]], [[0.0], [0.0], [1.0]], [[0.0], [1.0], [0.0]])


def ct_P() -> np.ndarray:
    return np.array([
        [1.0, 0.0, -1.0, -0.6],
        [0.0, 1.0, 1.0, 0.2],
        [-1.0, 1.0, 3.0, 1.3],
        [-0.6, 0.2, 1.3, 2.0],
    ])


def ct_S_inv() -> np.ndarray:
    return np.array([
        [1.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
        [0.0, 0.0, 1.0, 0.0],
        [0.0, -1.0, 0.0, 1.0],
    ])


def ct_scb() -> ScbForm:
    """Structural form of the compensated agent in the published coordinates."""
    ca = compose(ct_agent(), ct_precompensator())
    return scb_from_transform(ca, np.linalg.inv(ct_S_inv()))


def ct_H() -> np.ndarray:
    return np.array([[1.0], [0.0], [1.0]])


def ct_A11() -> np.ndarray:
    return np.array([[0.0, 0.0, 1.0], [-1.0, -2.0, 1.0], [0.0, -1.0, 0.0]])


def ct_A12() -> np.ndarray:
    return np.array([[1.0], [2.0], [1.0]])


def ct_Cbar() -> np.ndarray:
    return np.array([[1.0, 0.0, 0.0]])


def ct_Bt() -> np.ndarray:
    return np.array([[0.0], [1.0], [0.0], [1.0]])


def dt_agent() -> LtiModel:
    A = [[0, 1, 1], [-1, 0, 1], [0, 0, 1]]
    return LtiModel(A, [[0], [0], [1]], [[1, 0, 0]], DISCRETE)


def dt_H() -> np.ndarray:
    return np.array([[0.5], [-0.5], [0.4]])


def dt_P() -> np.ndarray:
    return np.array([[1.0, 0.0, -1.0], [0.0, 1.0, 0.0], [-1.0, 0.0, 2.0]])


DT_DELTA = 0.1


def ring_60() -> DiGraph:
    """``a_{i+1,i} = a_{1,60} = 1``."""
    return cycle(60)


def illustrative_4() -> DiGraph:
    """1 -> 2, 2 -> 3, 1 -> 4, 4 -> 3 (node 1 is the root)."""
    w = np.zeros((4, 4))
    w[1, 0] = w[2, 1] = w[3, 0] = w[2, 3] = 1.0
    return DiGraph(w)
