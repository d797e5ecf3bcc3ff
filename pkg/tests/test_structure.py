import json

import numpy as np
import pytest

from conftest import well_conditioned
from scalefree_sync import fixtures as fx
from scalefree_sync.agent import CONTINUOUS, LtiModel, is_detectable
from scalefree_sync.errors import NotHurwitz, NotUniformRankOne, ShapeMismatch
from scalefree_sync.structure import (
    CompensatedAgent,
    PreCompensator,
    ScbForm,
    compose,
    identity_precompensator,
    match_multisets,
    scb_decompose,
    scb_from_transform,
    verify_precompensator,
)


def test_identity_precompensator_passthrough():
    m = fx.ct_agent()
    ca = compose(m, identity_precompensator(3))
    assert np.array_equal(ca.At, m.A) and np.array_equal(ca.Bt, m.B) and np.array_equal(ca.Ct, m.C)


def test_compose_example_blocks_and_spectrum():
    m, pc = fx.ct_agent(), fx.ct_precompensator()
    ca = compose(m, pc)
    assert np.array_equal(ca.At[:3, :3], m.A)
    assert np.array_equal(ca.At[:3, 3:], m.B @ pc.Cp)
    assert np.array_equal(ca.At[3:, :3], np.zeros((1, 3)))
    assert np.array_equal(ca.Bt, np.vstack([m.B @ pc.Dp, pc.Bp]))
    assert np.array_equal(ca.Bt, fx.ct_Bt())
    ok, _ = match_multisets(np.linalg.eigvals(ca.At), np.array([1j, -1j, 0, -2]), 1e-10)
    assert ok


def test_precompensator_rejects_unstable():
    with pytest.raises(NotHurwitz):
        PreCompensator([[0.5]], [[1.0]], [[1.0]], [[0.0]])
    with pytest.raises(ShapeMismatch):
        compose(fx.ct_agent(), PreCompensator([[-1.0]], [[1.0]], [[1.0], [0.0]], [[0.0], [1.0]]))


def test_precompensator_example_passes():
    rep = verify_precompensator(fx.ct_agent(), fx.ct_precompensator())
    assert rep.passed, rep.failures


def test_precompensator_identity_on_left_invertible_agent():
    m = LtiModel([[0, 1], [-1, 0]], [[0], [1]], [[1, 1]], CONTINUOUS)
    assert verify_precompensator(m, identity_precompensator(1)).passed


def test_precompensator_disconnected_input_fails():
    pc = PreCompensator([[-2.0]], [[1.0]], np.zeros((3, 1)), np.zeros((3, 1)))
    rep = verify_precompensator(fx.ct_agent(), pc)
    assert not rep.left_invertible and "left_invertible" in rep.failures


def test_reference_scb_blocks():
    ca = compose(fx.ct_agent(), fx.ct_precompensator())
    form = fx.ct_scb()
    assert np.allclose(form.A11, fx.ct_A11(), atol=1e-12)
    assert np.allclose(form.A12, fx.ct_A12(), atol=1e-12)
    assert np.allclose(form.Cbar, fx.ct_Cbar(), atol=1e-12)
    assert all(v <= 1e-10 for v in form.check(ca).values())


def test_scb_decompose_example():
    ca = compose(fx.ct_agent(), fx.ct_precompensator())
    form = scb_decompose(ca)
    assert form.nbar == 1
    assert all(v <= 1e-10 for v in form.check(ca).values())
    assert is_detectable(form.A11, form.Cbar)
    assert np.linalg.matrix_rank(form.Bbar) == 1
    # same A11 spectrum as the published coordinates (similar blocks)
    ok, _ = match_multisets(np.linalg.eigvals(form.A11), np.linalg.eigvals(fx.ct_A11()), 1e-8)
    assert ok


def test_scb_fixed_point():
    A = np.array([[-1.0, 0.3, 1.0], [0.2, -2.0, 0.5], [1.0, 2.0, 3.0]])
    B = np.array([[0.0], [0.0], [1.0]])
    C = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    ca = compose(LtiModel(A, B, C, CONTINUOUS), identity_precompensator(1))
    form = scb_decompose(ca)
    assert np.allclose(form.S, np.eye(3), atol=1e-14)
    assert np.allclose(form.output_transform, np.eye(2))


def test_scb_rank_deficient():
    m = LtiModel([[0, 1], [0, 0]], [[0], [1]], [[1, 0]], CONTINUOUS)
    with pytest.raises(NotUniformRankOne):
        scb_decompose(compose(m, identity_precompensator(1)))


def test_scb_rejects_bad_transform():
    ca = compose(fx.ct_agent(), fx.ct_precompensator())
    with pytest.raises(ShapeMismatch):
        scb_from_transform(ca, np.eye(4))


def test_scb_json_roundtrip():
    form = fx.ct_scb()
    back = ScbForm.from_dict(json.loads(json.dumps(form.to_dict())))
    for name in ("S", "A11", "A12", "A21", "A22", "Bbar", "Cbar", "output_transform"):
        assert np.array_equal(getattr(back, name), getattr(form, name))
    assert back.output_permutation == form.output_permutation


def random_scb_system(rng):
    nbar = int(rng.integers(1, 3))
    k = int(rng.integers(1, 4))
    p1 = int(rng.integers(1, k + 1))
    N = k + nbar
    A = rng.standard_normal((N, N))
    Cbar = rng.standard_normal((p1, k))
    Bbar = well_conditioned(rng, nbar)
    B_form = np.vstack([np.zeros((k, nbar)), Bbar])
    C_form = np.block([[Cbar, np.zeros((p1, nbar))], [np.zeros((nbar, k)), np.eye(nbar)]])
    T = well_conditioned(rng, N)
    R = well_conditioned(rng, p1 + nbar)  # output mixing
    Ti = np.linalg.inv(T)
    return CompensatedAgent(Ti @ A @ T, Ti @ B_form, R @ C_form @ T, N, 0)


def test_random_scb_recovery():
    rng = np.random.default_rng(99)
    for _ in range(30):
        ca = random_scb_system(rng)
        form = scb_decompose(ca)
        res = form.check(ca)
        assert res["A"] <= 1e-10 and res["B_top"] <= 1e-10 and res["C"] <= 1e-10, res
        Si = form.S_inv
        blocks = np.block([[form.A11, form.A12], [form.A21, form.A22]])
        rel = np.linalg.norm(Si @ blocks @ form.S - ca.At) / max(1.0, np.linalg.norm(ca.At))
        assert rel <= 1e-10


def test_pole_union_property():
    rng = np.random.default_rng(5)
    for _ in range(20):
        n, q, m = 3, int(rng.integers(1, 3)), 2
        A = rng.standard_normal((n, n))
        Ap = -np.diag(rng.uniform(0.5, 3.0, q))
        pc = PreCompensator(Ap, rng.standard_normal((q, m)), rng.standard_normal((m, q)),
                            rng.standard_normal((m, m)))
        mod = LtiModel(A, rng.standard_normal((n, m)), rng.standard_normal((2, n)), CONTINUOUS)
        ca = compose(mod, pc)
        union = np.concatenate([np.linalg.eigvals(A), np.linalg.eigvals(Ap)])
        ok, gap = match_multisets(np.linalg.eigvals(ca.At), union, 1e-8)
        assert ok, gap
        assert verify_precompensator(mod, pc).poles_union


def test_contract_alias():
    from scalefree_sync.structure import verify_lemma1

    assert verify_lemma1 is verify_precompensator
