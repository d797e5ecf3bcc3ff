"""Scale-free non-collaborative synchronization protocols for linear multi-agent systems."""
from .agent import CONTINUOUS, DISCRETE, LtiModel, feasibility_report, load_model
from .graphs import DiGraph, cycle, from_spec, laplacian, path, random_tree, row_stochastic, star
from .lyap import Certificate, ct_certificate, dt_certificate, dt_observer_Q, validate
from .netsim import Scenario, Trajectory, decoupled_oracle, simulate, sync_metrics
from .protocols import (
    CT_FULL,
    CT_PARTIAL,
    DT_FULL,
    DT_PARTIAL,
    load_protocol,
    save_protocol,
    synth_ct_full,
    synth_ct_partial,
    synth_dt_full,
    synth_dt_partial,
    synthesize,
)
from .structure import PreCompensator, compose, scb_decompose, verify_precompensator
from .verify import ct_sweep, dt_sweep, siso_necessity_audit, sweep

__version__ = "0.1.0"

__all__ = [
    "CONTINUOUS",
    "DISCRETE",
    "LtiModel",
    "feasibility_report",
    "load_model",
    "DiGraph",
    "cycle",
    "path",
    "star",
    "random_tree",
    "from_spec",
    "laplacian",
    "row_stochastic",
    "Certificate",
    "ct_certificate",
    "dt_certificate",
    "dt_observer_Q",
    "validate",
    "PreCompensator",
    "compose",
    "scb_decompose",
    "verify_precompensator",
    "CT_FULL",
    "CT_PARTIAL",
    "DT_FULL",
    "DT_PARTIAL",
    "synthesize",
    "synth_ct_full",
    "synth_ct_partial",
    "synth_dt_full",
    "synth_dt_partial",
    "load_protocol",
    "save_protocol",
    "Scenario",
    "Trajectory",
    "simulate",
    "decoupled_oracle",
    "sync_metrics",
    "sweep",
    "ct_sweep",
    "dt_sweep",
    "siso_necessity_audit",
]
