"""Command-line front end: ``scalefree-sync {check,synth,simulate,sweep,batch}``.

Exit codes: 0 success, 1 infeasible model or failed check, 2 bad input,
3 divergence during simulation.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .agent import CONTINUOUS, LtiModel, feasibility_report, load_model
from .errors import BoundTooSmall, Divergence, ShapeMismatch, SyncToolkitError
from .graphs import DiGraph, from_spec, read_edge_list
from .netsim import Scenario, simulate, write_outputs
from .protocols import (
    CT_FULL,
    CT_PARTIAL,
    DT_FULL,
    DT_PARTIAL,
    KINDS,
    Protocol,
    load_protocol,
    save_protocol,
    synthesize,
)
from .structure import (
    compose,
    identity_precompensator,
    load_precompensator,
    scb_from_transform,
    verify_precompensator,
)
from .verify import siso_necessity_audit, sweep

log = logging.getLogger("scalefree_sync")

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_DIVERGED = 0, 1, 2, 3
OUTPUT_ROOT_ENV = "SCALEFREE_SYNC_OUTPUT_ROOT"
PROTOCOL_FILE = "protocol.json"


class InputError(Exception):
    pass


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (complex, np.complexfloating)):
        return [float(x.real), float(x.imag)]
    if isinstance(x, (np.floating, float)):
        return float(x)
    return x


def _dump(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True)


def output_root() -> Path:
    root = os.environ.get(OUTPUT_ROOT_ENV)
    return Path(root) if root else Path.cwd()


# ---------------------------------------------------------------------------
# configuration

@dataclass
class RunConfig:
    model: str | None = None
    kind: str | None = None
    precompensator: str | None = None
    protocol: str | None = None
    graph: str | None = None
    gains: dict = field(default_factory=dict)
    override_gain_bound: bool = False
    fixed: dict = field(default_factory=dict)
    simulation: dict = field(default_factory=dict)
    output_dir: str = "out"
    base_dir: Path = field(default_factory=Path.cwd, repr=False)

    _SIM_KEYS = ("horizon", "dt", "seed", "record_every", "din_bar", "stop_tol")
    _GAIN_KEYS = ("rho", "epsilon", "delta")

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise InputError("config must be a JSON object")
        known = {f for f in cls.__dataclass_fields__ if f != "base_dir"}
        unknown = set(raw) - known
        if unknown:
            raise InputError(f"unknown config fields {sorted(unknown)}")
        cfg = cls(**raw, base_dir=path.resolve().parent)
        cfg.validate()
        return cfg

    def validate(self):
        if self.kind is not None and self.kind not in KINDS:
            raise InputError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.model is None and self.protocol is None:
            raise InputError("config needs a model or a protocol file")
        for key in ("model", "precompensator", "protocol"):
            p = getattr(self, key)
            if p is not None and not self.resolve(p).is_file():
                raise InputError(f"{key} file not found: {p}")
        bad = set(self.simulation) - set(self._SIM_KEYS)
        if bad:
            raise InputError(f"unknown simulation fields {sorted(bad)}")
        bad = set(self.gains) - set(self._GAIN_KEYS)
        if bad:
            raise InputError(f"unknown gain fields {sorted(bad)}")

    def resolve(self, p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p

    def outdir(self) -> Path:
        p = Path(self.output_dir)
        return p if p.is_absolute() else output_root() / p

    def load_graph(self) -> DiGraph:
        if self.graph is None:
            raise InputError("config has no graph")
        candidate = self.resolve(self.graph)
        if candidate.is_file():
            return read_edge_list(candidate)
        try:
            return from_spec(self.graph)
        except ValueError as exc:
            raise InputError(str(exc)) from exc


def _kind_for(m: LtiModel, requested: str | None) -> str:
    if requested:
        return requested
    ct = m.time_domain == CONTINUOUS
    if m.full_state:
        return CT_FULL if ct else DT_FULL
    return CT_PARTIAL if ct else DT_PARTIAL


def _check_kind(m: LtiModel, kind: str):
    if (kind in (CT_FULL, CT_PARTIAL)) != (m.time_domain == CONTINUOUS):
        raise InputError(f"protocol kind {kind} does not match a {m.time_domain}-time model")


def build_protocol(cfg: RunConfig, override: bool = False) -> Protocol:
    if cfg.protocol is not None:
        return load_protocol(cfg.resolve(cfg.protocol))
    m = load_model(cfg.resolve(cfg.model))
    kind = _kind_for(m, cfg.kind)
    _check_kind(m, kind)
    pc = load_precompensator(cfg.resolve(cfg.precompensator)) if cfg.precompensator else None
    if kind == CT_PARTIAL and pc is None:
        pc = identity_precompensator(m.m)
    fixed = {k: (None if v is None else np.asarray(v, dtype=float)) for k, v in cfg.fixed.items()}
    bad = set(fixed) - {"H", "P", "S_inv"}
    if bad:
        raise InputError(f"unknown fixed fields {sorted(bad)}")
    scb = None
    if fixed.get("S_inv") is not None:
        if kind != CT_PARTIAL:
            raise InputError("S_inv only applies to ct_partial")
        scb = scb_from_transform(compose(m, pc), np.linalg.inv(fixed["S_inv"]))
    return synthesize(kind, m, pc, H=fixed.get("H"), P=fixed.get("P"), scb=scb,
                      override=override or cfg.override_gain_bound, **cfg.gains)


def _bound_lines(proto: Protocol) -> list[str]:
    if proto.kind == DT_FULL:
        return [f"epsilon* = {proto.epsilon_star!r}", f"epsilon  = {proto.epsilon!r}"]
    if proto.kind == DT_PARTIAL:
        return [f"delta* = {proto.delta_star!r}", f"delta  = {proto.delta!r}"]
    return [f"rho = {proto.rho!r}"]


# ---------------------------------------------------------------------------
# commands

def cmd_check(args) -> int:
    try:
        m = load_model(args.model)
        pc = load_precompensator(args.precompensator) if args.precompensator else None
    except (OSError, json.JSONDecodeError, ValueError, KeyError, TypeError) as exc:
        raise InputError(f"cannot read inputs: {exc}") from exc
    kind = _kind_for(m, args.kind)
    _check_kind(m, kind)
    report = {"kind": kind, "model": feasibility_report(m).to_dict()}
    if kind in (CT_FULL, DT_FULL):
        checks = {"stabilizable": report["model"]["stabilizable"],
                  "neutrally_stable": report["model"]["neutrally_stable"]}
    elif kind == DT_PARTIAL or pc is None:
        checks = dict(report["model"]["design"])
    else:
        comp_report = verify_precompensator(m, pc)
        report["precompensator"] = comp_report.to_dict()
        comp = feasibility_report(compose(m, pc).model)
        report["compensated"] = comp.to_dict()
        checks = {f"precompensator.{k}": getattr(comp_report, k) for k in
                  ("stabilizable_detectable", "left_invertible", "poles_union",
                   "infinite_zero_structure", "zeros_ok")}
        checks.update({f"compensated.{k}": v for k, v in comp.design.items()})
    if m.is_siso:
        report["necessity_audit"] = siso_necessity_audit(m).to_dict()
    failed = [k for k, ok in checks.items() if not ok]
    report["checks"] = checks
    report["violations"] = failed
    print(_dump(report))
    for k in failed:
        print(f"violation: {k}", file=sys.stderr)
    return EXIT_FAIL if failed else EXIT_OK


def cmd_synth(args) -> int:
    cfg = RunConfig.load(args.config)
    proto = build_protocol(cfg, args.override_gain_bound)
    out = Path(args.out) if args.out else cfg.outdir() / PROTOCOL_FILE
    out.parent.mkdir(parents=True, exist_ok=True)
    save_protocol(proto, out)
    for line in _bound_lines(proto):
        print(line)
    if proto.overridden:
        print("warning: gain above its certified bound (override in effect)", file=sys.stderr)
    print(f"wrote {out}")
    return EXIT_OK


def _run_simulation(cfg: RunConfig, override: bool, backend: str | None = None) -> int:
    proto = build_protocol(cfg, override)
    graph = cfg.load_graph()
    outdir = cfg.outdir()
    outdir.mkdir(parents=True, exist_ok=True)
    extra = {"kind": proto.kind, "n_agents": graph.n, "overridden": proto.overridden,
             "seed": int(cfg.simulation.get("seed", 0))}
    if proto.overridden:
        rep = sweep(proto)
        extra["sweep"] = rep.to_dict()
        if not rep.passed:
            print(f"warning: overridden gain fails the spectral sweep at lambda = "
                  f"{rep.worst_lambda} (margin {rep.worst_margin:.3g})", file=sys.stderr)
    sim = dict(cfg.simulation)
    if sim.get("din_bar") is not None:
        sim["din_bar"] = np.asarray(sim["din_bar"], dtype=float)
    try:
        scen = Scenario(proto, graph, **sim)
    except (ValueError, TypeError) as exc:
        raise InputError(str(exc)) from exc
    save_protocol(proto, outdir / PROTOCOL_FILE)
    try:
        tr = simulate(scen, backend=backend)
    except Divergence as exc:
        write_outputs(exc.trajectory, outdir, extra)
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    summary = write_outputs(tr, outdir, extra)
    print(_dump({k: summary[k] for k in ("initial_sync_error", "final_sync_error",
                                          "time_to_threshold", "final_time")}))
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = RunConfig.load(args.config)
    if args.protocol:
        cfg.protocol = str(Path(args.protocol).resolve())
    if args.output_dir:
        cfg.output_dir = args.output_dir
    return _run_simulation(cfg, args.override_gain_bound, args.backend)


def cmd_sweep(args) -> int:
    if args.protocol:
        path = Path(args.protocol)
    else:
        cfg = RunConfig.load(args.config)
        path = cfg.resolve(cfg.protocol) if cfg.protocol else cfg.outdir() / PROTOCOL_FILE
    if not path.is_file():
        raise InputError(f"protocol file not found: {path}")
    try:
        proto = load_protocol(path)
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise InputError(f"cannot read protocol {path}: {exc}") from exc
    rep = sweep(proto)
    print(f"{'lambda':>28}  {'margin':>12}  status")
    order = np.argsort(rep.margins)[::-1][: args.top]
    for k in order:
        lam = complex(rep.grid[k])
        status = "FAIL" if rep.margins[k] >= 0 else "ok"
        print(f"{lam.real:13.6g}{lam.imag:+13.6g}j  {rep.margins[k]:12.4e}  {status}")
    print(f"worst margin {rep.worst_margin:.6e} at lambda = {rep.worst_lambda}: "
          f"{'PASS' if rep.passed else 'FAIL'}")
    if args.json:
        Path(args.json).write_text(_dump(rep.to_dict()) + "\n")
    return EXIT_OK if rep.passed else EXIT_FAIL


def _batch_worker(job) -> tuple[str, int, str]:
    cfg_path, outdir, override = job
    try:
        cfg = RunConfig.load(cfg_path)
        cfg.output_dir = outdir
        code = _run_simulation(cfg, override)
        return cfg_path, code, ""
    except Exception as exc:  # reported per scenario, batch keeps going
        return cfg_path, _exit_code_for(exc), f"{type(exc).__name__}: {exc}"


def cmd_batch(args) -> int:
    jobs, used = [], set()
    for k, path in enumerate(args.configs):
        cfg = RunConfig.load(path)
        out = cfg.outdir()
        if out in used:
            out = out.with_name(f"{out.name}-{k + 1}")
        used.add(out)
        jobs.append((str(path), str(out), args.override_gain_bound))
    with ProcessPoolExecutor(max_workers=args.jobs) as pool:
        results = list(pool.map(_batch_worker, jobs))
    worst = EXIT_OK
    for (path, code, msg), (_, out, _) in zip(results, jobs):
        print(f"{code}  {path} -> {out}" + (f"  ({msg})" if msg else ""))
        worst = max(worst, code)
    return worst


# ---------------------------------------------------------------------------

def _exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, Divergence):
        return EXIT_DIVERGED
    if isinstance(exc, (InputError, ShapeMismatch, BoundTooSmall)):
        return EXIT_INPUT
    if isinstance(exc, SyncToolkitError):
        return EXIT_FAIL
    if isinstance(exc, (OSError, ValueError, KeyError, TypeError, json.JSONDecodeError)):
        return EXIT_INPUT
    raise exc


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="scalefree-sync", description="Synthesize and simulate scale-free synchronization protocols.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", help="structural checks for a model (and pre-compensator)")
    p.add_argument("model")
    p.add_argument("--precompensator")
    p.add_argument("--kind", choices=KINDS)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("synth", help="synthesize a protocol and write it as JSON")
    p.add_argument("config")
    p.add_argument("--out", help="protocol file (default: <output_dir>/protocol.json)")
    p.add_argument("--override-gain-bound", action="store_true")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("simulate", help="simulate a network and write CSV/JSON outputs")
    p.add_argument("config")
    p.add_argument("--protocol", help="use a previously synthesized protocol file")
    p.add_argument("--output-dir")
    p.add_argument("--backend", choices=("numba", "numpy"))
    p.add_argument("--override-gain-bound", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="spectral sweep of a synthesized protocol")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("config", nargs="?")
    src.add_argument("--protocol")
    p.add_argument("--top", type=int, default=10, help="rows of the worst-offender table")
    p.add_argument("--json", help="also write the report to this file")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("batch", help="run several simulate configs concurrently")
    p.add_argument("configs", nargs="+")
    p.add_argument("-j", "--jobs", type=int, default=None)
    p.add_argument("--override-gain-bound", action="store_true")
    p.set_defaults(func=cmd_batch)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except Exception as exc:
        code = _exit_code_for(exc)
        print(f"error: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
