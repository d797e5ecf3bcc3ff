"""Acceptance gate: one PASS/FAIL line per criterion.

Run under pytest (lines appear in the terminal summary) or directly with
``python3 tests/test_acceptance.py``.
"""
import json
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from conftest import ACCEPTANCE_LINES, random_neutral, random_spanning_graph  # noqa: E402
from scalefree_sync import fixtures as fx  # noqa: E402
from scalefree_sync import graphs as g  # noqa: E402
from scalefree_sync import protocols as pr  # noqa: E402
from scalefree_sync.agent import CONTINUOUS, DISCRETE, LtiModel, feasibility_report  # noqa: E402
from scalefree_sync.errors import NotNeutrallyStable  # noqa: E402
from scalefree_sync.lyap import (  # noqa: E402
    CT_SEMIDEFINITE,
    DT_SEMIDEFINITE,
    Certificate,
    ct_certificate,
    dt_certificate,
    validate,
)
from scalefree_sync.netsim import Scenario, decoupled_oracle, simulate, stacked_closed_loop, sync_metrics  # noqa: E402
from scalefree_sync.structure import compose, match_multisets, verify_precompensator  # noqa: E402
from scalefree_sync.verify import siso_necessity_audit, sweep  # noqa: E402

REL_TOL = 1e-6


def _sync_check(scenario):
    tr = simulate(scenario)
    m = sync_metrics(tr, tol=REL_TOL)
    ratio = m.final_sync_error / m.initial_sync_error if m.initial_sync_error else 0.0
    return m.time_to_threshold is not None, m, ratio


# --- criteria ---------------------------------------------------------------

def certificates():
    ct = validate(Certificate(fx.ct_P(), CT_SEMIDEFINITE, np.nan),
                  compose(fx.ct_agent(), fx.ct_precompensator()).At)
    dt = validate(Certificate(fx.dt_P(), DT_SEMIDEFINITE, np.nan), fx.dt_agent().A)
    ok = all(r.positive_definite and r.slack <= 1e-8 for r in (ct, dt))
    return ok, f"ct slack {ct.slack:.2e}, dt slack {dt.slack:.2e}", 1.0


def cycle60_ct():
    p = pr.synth_ct_partial(fx.ct_agent(), fx.ct_precompensator(), rho=1.0, H=fx.ct_H(),
                            P=fx.ct_P(), scb=fx.ct_scb())
    reached, m, ratio = _sync_check(Scenario(p, g.cycle(60), horizon=50.0, dt=1e-3, seed=1))
    return reached, f"error ratio at t=50: {ratio:.3e} (need <= {REL_TOL:g})", 60.0


def cycle60_dt():
    p = pr.synth_dt_partial(fx.dt_agent(), delta=fx.DT_DELTA, H=fx.dt_H(), P=fx.dt_P(),
                            override=True)
    reached, m, ratio = _sync_check(Scenario(p, g.cycle(60), horizon=2000, seed=1))
    return reached, (f"error ratio after 2000 steps: {ratio:.3e} (need <= {REL_TOL:g}); "
                     f"certified delta* = {p.constants.delta_star:.4g}"), 30.0


def epsilon_star():
    e = pr.synth_dt_full(fx.dt_agent(), P=fx.dt_P()).epsilon_star
    return abs(e - 0.5) <= 1e-12, f"epsilon* = {e!r}", None


# horizons long enough for the slowest graph (cycle(60)); runs stop at the threshold
SCALE_FREE_RUNS = {
    pr.CT_FULL: dict(horizon=5000.0, dt=0.01, record_every=100),
    pr.CT_PARTIAL: dict(horizon=5000.0, dt=0.01, record_every=100),
    pr.DT_FULL: dict(horizon=200_000, record_every=100),
    pr.DT_PARTIAL: dict(horizon=20_000_000, record_every=1000),
}


def _synth(kind):
    if kind == pr.CT_FULL:
        return pr.synth_ct_full(fx.ct_agent())
    if kind == pr.CT_PARTIAL:
        return pr.synth_ct_partial(fx.ct_agent(), fx.ct_precompensator())
    if kind == pr.DT_FULL:
        return pr.synth_dt_full(fx.dt_agent())
    return pr.synth_dt_partial(fx.dt_agent())


def _bounds_bytes(p):
    if p.kind == pr.DT_FULL:
        return json.dumps({"epsilon_star": p.epsilon_star}).encode()
    if p.kind == pr.DT_PARTIAL:
        return json.dumps(p.constants.to_dict(), sort_keys=True).encode()
    return json.dumps({"rho": p.rho}).encode()


def scale_free():
    graphs = {"path(4)": g.path(4), "star(8)": g.star(8), "cycle(10)": g.cycle(10),
              "random_tree(25)": g.random_tree(25, seed=0), "cycle(60)": g.cycle(60)}
    failures, slowest = [], {}
    for kind, sim in SCALE_FREE_RUNS.items():
        p = _synth(kind)
        ref = _bounds_bytes(p)
        worst = 0.0
        for name, graph in graphs.items():
            if _bounds_bytes(_synth(kind)) != ref:
                failures.append(f"{kind}: bounds changed for {name}")
            reached, m, _ = _sync_check(Scenario(p, graph, seed=0, stop_tol=REL_TOL, **sim))
            if not reached:
                failures.append(f"{kind} on {name}")
            else:
                worst = max(worst, m.time_to_threshold)
        slowest[kind] = worst
    detail = "; ".join(failures) if failures else \
        "slowest threshold times " + ", ".join(f"{k} {v:g}" for k, v in slowest.items())
    return not failures, detail, None


def oracle():
    rng = np.random.default_rng(2024)
    protos = [_synth(k) for k in (pr.CT_FULL, pr.CT_PARTIAL, pr.DT_FULL, pr.DT_PARTIAL)]
    worst = 0.0
    for k in range(20):
        p = protos[k % 4]
        s = Scenario(p, random_spanning_graph(rng, int(rng.integers(2, 9))))
        blocks = decoupled_oracle(s)
        F = p.loop_matrices()[0]
        union = np.concatenate([np.linalg.eigvals(F)] + [b.spectrum for b in blocks])
        full = np.linalg.eigvals(stacked_closed_loop(p, s.coupling()))
        ok, gap = match_multisets(union, full, 1e-6)
        if not ok:
            return False, f"scenario {k} ({p.kind}) gap {gap:.2e}", None
        worst = max(worst, gap)
    return True, f"20 scenarios, largest spectral gap {worst:.2e}", None


def sweep_soundness():
    details = []
    ok = True
    for kind in (pr.CT_FULL, pr.CT_PARTIAL, pr.DT_FULL, pr.DT_PARTIAL):
        rep = sweep(_synth(kind))
        ok &= rep.passed
        details.append(f"{kind} {rep.worst_margin:.1e}")
    base = pr.synth_dt_full(fx.dt_agent())
    bad_eps = pr.synth_dt_full(fx.dt_agent(), epsilon=3 * base.epsilon_star, override=True)
    ct = pr.synth_ct_full(fx.ct_agent())
    bad_rho = pr.CtFullProtocol(ct.model, ct.P, -1.0)
    for name, p in (("3eps*", bad_eps), ("rho<0", bad_rho)):
        rep = sweep(p)
        n_fail = rep.to_dict()["n_failed"]
        ok &= n_fail > 0
        details.append(f"{name} fails at {n_fail} points")
    return ok, ", ".join(details), None


def necessity():
    dbl = siso_necessity_audit(LtiModel([[0, 1], [0, 0]], [[0], [1]], [[1, 0]], CONTINUOUS))
    dt = siso_necessity_audit(LtiModel([[1.1]], [[1.0]], [[1.0]], DISCRETE))
    rejected = not dbl.passed and not dt.passed and "neutrally_stable" in dt.violations \
        and {"neutrally_stable", "relative_degree_one"} <= set(dbl.violations)
    ct_ok = verify_precompensator(fx.ct_agent(), fx.ct_precompensator()).passed and \
        feasibility_report(compose(fx.ct_agent(), fx.ct_precompensator()).model).design_ok
    dt_ok = feasibility_report(fx.dt_agent()).design_ok
    detail = f"double integrator {dbl.violations}, dt 1.1 {dt.violations}, " \
             f"example agents pass: ct {ct_ok}, dt {dt_ok}"
    return rejected and ct_ok and dt_ok, detail, None


def lyap_suite():
    rng = np.random.default_rng(31)
    bad = 0
    for td, build in ((CONTINUOUS, ct_certificate), (DISCRETE, dt_certificate)):
        for _ in range(100):
            A = random_neutral(rng, int(rng.integers(1, 7)), td)
            try:
                cert = build(A)
            except NotNeutrallyStable:
                bad += 1
                continue
            rep = validate(cert, A)
            tol = 1e-8 * np.linalg.norm(cert.P, 2) * max(1.0, np.linalg.norm(A, 2))
            if not (rep.passed and rep.positive_definite and rep.slack <= tol):
                bad += 1
    return bad == 0, f"{bad} of 200 certificates invalid", 30.0


CRITERIA = [
    ("reference certificates validate", certificates),
    ("60-cycle reproduction (CT)", cycle60_ct),
    ("60-cycle reproduction (DT)", cycle60_dt),
    ("epsilon* arithmetic", epsilon_star),
    ("scale-free sweep", scale_free),
    ("oracle equivalence", oracle),
    ("spectral-sweep soundness", sweep_soundness),
    ("necessity audit", necessity),
    ("Lyapunov certificate suite", lyap_suite),
]


def evaluate(name, fn):
    t0 = time.perf_counter()
    ok, detail, limit = fn()
    elapsed = time.perf_counter() - t0
    if limit is not None and elapsed >= limit:
        ok = False
        detail += f"; runtime {elapsed:.1f}s over {limit:g}s limit"
    return ok, f"{'PASS' if ok else 'FAIL'}  {name}: {detail} [{elapsed:.1f}s]"


@pytest.mark.parametrize("name,fn", CRITERIA, ids=[c[0] for c in CRITERIA])
def test_criterion(name, fn, request):
    ok, line = evaluate(name, fn)
    print(line)
    request.config.stash[ACCEPTANCE_LINES].append(line)
    assert ok, line


if __name__ == "__main__":
    results = [evaluate(name, fn) for name, fn in CRITERIA]
    for _, line in results:
        print(line)
    sys.exit(0 if all(ok for ok, _ in results) else 1)
