import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import random_neutral
from scalefree_sync import fixtures as fx
from scalefree_sync import protocols as pr
from scalefree_sync.agent import CONTINUOUS, DISCRETE, LtiModel
from scalefree_sync.errors import (
    DeltaTooLarge,
    EpsilonTooLarge,
    NotLeftInvertible,
    ObserverDesignFailed,
    PreconditionFailed,
)
from scalefree_sync.structure import PreCompensator

SKEW = np.array([[0.0, 1.0], [-1.0, 0.0]])


def rot(t):
    return np.array([[np.cos(t), -np.sin(t)], [np.sin(t), np.cos(t)]])


def ct_grid(rng, k=200):
    re = 10 ** rng.uniform(-3, 3, k)
    im = rng.uniform(-1e3, 1e3, k)
    return re + 1j * im


def dt_grid(rng, k=200):
    r = rng.uniform(0, 1 - 1e-3, k)
    return r * np.exp(2j * np.pi * rng.random(k))


def max_re(M):
    return np.linalg.eigvals(M).real.max()


def radius(M):
    return np.abs(np.linalg.eigvals(M)).max()


def test_ct_full_skew_example():
    p = pr.synth_ct_full(LtiModel(SKEW, np.eye(2), np.eye(2), CONTINUOUS), P=np.eye(2))
    assert np.allclose(p.gain, -np.eye(2))
    for lam in (0.1, 1.0, 1 + 5j):
        assert max_re(p.mode_block(lam)) < 0


def test_ct_full_example_with_full_state():
    m = fx.ct_agent().with_output(np.eye(3))
    p = pr.synth_ct_full(m)
    rng = np.random.default_rng(0)
    assert all(max_re(p.mode_block(lam)) < -1e-10 for lam in ct_grid(rng))


def test_ct_full_rejects_jordan():
    with pytest.raises(PreconditionFailed) as exc:
        pr.synth_ct_full(LtiModel([[0, 1], [0, 0]], [[0], [1]], np.eye(2), CONTINUOUS))
    assert exc.value.assumption == "neutrally_stable"


def test_ct_partial_reference_parameters():
    p = pr.synth_ct_partial(fx.ct_agent(), fx.ct_precompensator(), H=fx.ct_H(), P=fx.ct_P(),
                            scb=fx.ct_scb())
    assert max_re(p.scb.A11 - p.H @ p.scb.Cbar) < 0
    rng = np.random.default_rng(1)
    assert all(max_re(p.mode_block(lam)) < -1e-10 for lam in ct_grid(rng))


def test_ct_partial_auto_observer_poles():
    p = pr.synth_ct_partial(fx.ct_agent(), fx.ct_precompensator())
    ev = np.sort(np.linalg.eigvals(p.scb.A11 - p.H @ p.scb.Cbar).real)
    assert np.allclose(ev, np.sort(pr.observer_poles(3, CONTINUOUS)), atol=1e-8)
    assert p.state_dim == 2 * (3 + 1) - 1  # 2(n + q) - nbar


def test_ct_partial_rejects_non_left_invertible():
    pc = PreCompensator([[-2.0]], [[1.0]], np.zeros((3, 1)), np.zeros((3, 1)))
    with pytest.raises(NotLeftInvertible):
        pr.synth_ct_partial(fx.ct_agent(), pc)


def test_ct_partial_rejects_bad_H():
    with pytest.raises(ObserverDesignFailed):
        pr.synth_ct_partial(fx.ct_agent(), fx.ct_precompensator(), H=-fx.ct_H(), scb=fx.ct_scb())


def test_dt_full_epsilon_star():
    p = pr.synth_dt_full(fx.dt_agent(), P=fx.dt_P())
    assert abs(p.epsilon_star - 0.5) <= 1e-12 and p.epsilon == p.epsilon_star
    with pytest.raises(EpsilonTooLarge):
        pr.synth_dt_full(fx.dt_agent(), epsilon=0.6, P=fx.dt_P())
    over = pr.synth_dt_full(fx.dt_agent(), epsilon=0.6, P=fx.dt_P(), override=True)
    assert over.overridden
    q = pr.synth_dt_full(LtiModel(rot(0.4), np.eye(2), np.eye(2), DISCRETE), P=np.eye(2))
    assert q.epsilon_star == pytest.approx(1.0, abs=1e-15)


def test_dt_full_degenerate_input():
    with pytest.raises(PreconditionFailed):
        pr.synth_dt_full(LtiModel(rot(0.4), np.zeros((2, 1)), np.eye(2), DISCRETE))


def test_dt_partial_reference_values():
    p = pr.synth_dt_partial(fx.dt_agent(), H=fx.dt_H(), P=fx.dt_P(), delta=1e-3)
    c = p.constants
    assert 0.1 > c.delta_star > 0
    with pytest.raises(DeltaTooLarge):
        pr.synth_dt_partial(fx.dt_agent(), H=fx.dt_H(), P=fx.dt_P(), delta=fx.DT_DELTA)
    q = pr.synth_dt_partial(fx.dt_agent(), H=fx.dt_H(), P=fx.dt_P(), delta=fx.DT_DELTA, override=True)
    assert q.overridden and q.delta == 0.1


def test_dt_partial_constants_invariants():
    for p in (pr.synth_dt_partial(fx.dt_agent()),
              pr.synth_dt_partial(fx.dt_agent(), H=fx.dt_H(), P=fx.dt_P())):
        c = p.constants
        assert p.delta <= c.delta_star <= c.delta2 <= c.delta1
        for name in ("M1", "M2", "M3", "theta1", "theta2", "theta3", "kappa", "delta1", "delta2", "delta_star"):
            assert getattr(c, name) > 0, name
        assert c.kappa == 4 + 2 * c.M2 + 2 * c.M1 ** 2
        assert c.M1 >= c.M1_norm
        # the three proof conditions at delta*
        d = c.delta_star
        assert 3 - d ** 3 * c.theta2 * c.kappa >= 2.5 - 1e-12
        assert c.M1 + d * c.theta1 * c.kappa <= 2 * c.M1 * (1 + 1e-12)
        assert d * c.M3 + d ** 2 * c.theta3 * c.kappa <= 1 + 1e-12


def test_dt_partial_deadbeat():
    m = LtiModel(rot(0.3), np.eye(2), np.eye(2), DISCRETE)
    p = pr.synth_dt_partial(m, H=rot(0.3), P=np.eye(2))
    assert np.allclose(p.Q, 4 * np.eye(2))
    c = p.constants
    assert c.M1_norm == 0.0 and c.delta_star > 0
    assert all(np.isfinite(v) for v in c.to_dict().values())


def test_dt_partial_auto_observer_poles():
    p = pr.synth_dt_partial(fx.dt_agent())
    ev = np.sort(np.linalg.eigvals(fx.dt_agent().A - p.H @ fx.dt_agent().C).real)
    assert np.allclose(ev, np.sort(pr.observer_poles(3, DISCRETE)), atol=1e-6)


def test_refined_delta_is_flagged():
    c = pr.synth_dt_partial(fx.dt_agent(), H=fx.dt_H(), P=fx.dt_P(), refine=True).constants
    assert not c.certified and c.delta1 >= pr.synth_dt_partial(
        fx.dt_agent(), H=fx.dt_H(), P=fx.dt_P()).constants.delta1


@pytest.mark.parametrize("kw", [{"delta": 0.0}, {"delta": -1.0}])
def test_nonpositive_gains(kw):
    with pytest.raises(ValueError):
        pr.synth_dt_partial(fx.dt_agent(), **kw)
    with pytest.raises(ValueError):
        pr.synth_ct_full(fx.ct_agent(), rho=0.0)


def test_grid_invariants_all_variants():
    rng = np.random.default_rng(4)
    ct_lams, dt_lams = ct_grid(rng), dt_grid(rng)
    p = pr.synth_dt_full(fx.dt_agent())
    assert all(radius(p.mode_block(l)) < 1 - 1e-10 for l in dt_lams)
    q = pr.synth_dt_partial(fx.dt_agent())
    assert all(radius(q.mode_block(l)) < 1 - 1e-10 for l in dt_lams)
    r = pr.synth_ct_partial(fx.ct_agent(), fx.ct_precompensator())
    assert all(max_re(r.mode_block(l)) < -1e-10 for l in ct_lams)


@given(st.integers(1, 5), st.integers(0, 2**31 - 1), st.sampled_from([CONTINUOUS, DISCRETE]))
def test_random_full_state_protocols_stabilize_grid(n, seed, td):
    rng = np.random.default_rng(seed)
    A = random_neutral(rng, n, td)
    B = rng.standard_normal((n, int(rng.integers(1, n + 1))))
    m = LtiModel(A, B, np.eye(n), td)
    try:
        p = pr.synth_ct_full(m) if td == CONTINUOUS else pr.synth_dt_full(m)
    except PreconditionFailed:
        return  # random B may leave a boundary mode uncontrollable
    lams = np.array([0.3, 1.0, 2 + 3j, 0.01 + 10j]) if td == CONTINUOUS else \
        np.array([0.0 + 0.5j, -0.9, 0.5, 0.99 * np.exp(0.3j)])
    for lam in lams:
        M = p.mode_block(lam)
        assert (max_re(M) < 0) if td == CONTINUOUS else (radius(M) < 1)


def _roundtrip(p, tmp_path):
    path = tmp_path / "p.json"
    pr.save_protocol(p, path)
    q = pr.load_protocol(path)
    assert type(q) is type(p)
    for a, b in zip(p.realization(), q.realization()):
        assert a.shape == b.shape
        if a.size:
            assert np.max(np.abs(a - b)) <= 1e-15
    return q


def test_serialization_roundtrip(tmp_path):
    protos = [pr.synth_ct_full(fx.ct_agent()),
              pr.synth_ct_partial(fx.ct_agent(), fx.ct_precompensator()),
              pr.synth_ct_partial(fx.ct_agent(), fx.ct_precompensator(), H=fx.ct_H(), P=fx.ct_P(),
                                  scb=fx.ct_scb()),
              pr.synth_dt_full(fx.dt_agent()),
              pr.synth_dt_partial(fx.dt_agent())]
    for p in protos:
        q = _roundtrip(p, tmp_path)
        assert q.to_json() == p.to_json()
    d = json.loads(protos[-1].to_json())
    assert {"M1", "M2", "M3", "theta1", "theta2", "theta3", "kappa", "delta1", "delta2",
            "delta_star"} <= set(d["constants"])


def test_synthesize_dispatch():
    assert pr.synthesize(pr.DT_FULL, fx.dt_agent()).kind == pr.DT_FULL
    with pytest.raises(PreconditionFailed):
        pr.synthesize(pr.DT_FULL, fx.ct_agent())
    with pytest.raises(ValueError):
        pr.synthesize("mixed", fx.dt_agent())
