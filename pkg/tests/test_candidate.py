import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from odecert.candidate import (
    EXP_FIRST_ORDER,
    EXP_SECOND_ORDER,
    LAGARIS_LINEAR,
    ClosedFormCandidate,
    MlpCandidate,
    Reparametrization,
    default_reparametrization,
    initial_condition_defect,
    jet_eval,
    synthetic_constant_residual_candidate,
)
from odecert.model import ComplexRoot, FirstOrderConstant, HigherOrderConstant, Interval, get_case

finite = st.floats(-5, 5, allow_nan=False)


@settings(max_examples=40, deadline=None)
@given(st.sampled_from([LAGARIS_LINEAR, EXP_FIRST_ORDER]), finite, finite, st.integers(0, 999))
def test_first_order_reparametrizations_fix_value(kind, t0, u0, seed):
    cand = MlpCandidate.init([1, 6, 1], Reparametrization(kind, t0, (u0,)), seed=seed)
    assert cand.jets(np.array([t0]), 0)[0].value[0] == pytest.approx(u0, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(finite, finite, finite, st.integers(0, 999))
def test_second_order_reparametrization_fixes_value_and_slope(t0, u0, du0, seed):
    cand = MlpCandidate.init([1, 6, 6, 1], Reparametrization(EXP_SECOND_ORDER, t0, (u0,), (du0,)),
                             seed=seed)
    jet = cand.jets(np.array([t0]), 1)[0]
    assert jet.derivative(0)[0] == pytest.approx(u0, abs=1e-12)
    assert jet.derivative(1)[0] == pytest.approx(du0, abs=1e-12)


def test_default_reparametrization_per_problem():
    for name in ("fo-poly", "ho-osc-log", "nc-sin", "sys-jordan6"):
        case = get_case(name)
        rep = default_reparametrization(case.problem)
        cand = MlpCandidate.init([1, 4, case.problem.dim], rep, seed=1)
        assert initial_condition_defect(case.problem, cand) <= 1e-14
    third = HigherOrderConstant((ComplexRoot(1.0),) * 3, (0.0, 0.0, 0.0), None, Interval(0, 1))
    with pytest.raises(ValueError):
        default_reparametrization(third)


def test_complex_initial_values_split_into_two_outputs():
    p = FirstOrderConstant(ComplexRoot(1.0, 2.0), 1.0 - 0.5j, None, Interval(0, 1))
    rep = default_reparametrization(p)
    assert rep.u0 == (1.0, -0.5)
    cand = MlpCandidate.init([1, 4, 2], rep, seed=0, complex_output=True)
    assert cand.output_dim == 1
    assert cand.jets(np.array([0.0]), 0)[0].value[0] == pytest.approx(1.0 - 0.5j)


def test_snapshot_roundtrip_is_exact(tmp_path):
    cand = MlpCandidate.init([1, 5, 3, 2], Reparametrization(EXP_FIRST_ORDER, 0.0, (1.0, -2.0)),
                             seed=7)
    path = tmp_path / "snap.json"
    path.write_text(json.dumps(cand.snapshot()))
    back = MlpCandidate.from_snapshot(json.loads(path.read_text()))
    t = np.linspace(0, 3, 33)
    for a, b in zip(cand.jets(t, 2), back.jets(t, 2)):
        for ca, cb in zip(a.coeffs, b.coeffs):
            np.testing.assert_array_equal(ca, cb)
    assert back.digest() == cand.digest()
    assert back.sizes == [1, 5, 3, 2]


def test_snapshot_rejects_foreign_documents():
    snap = MlpCandidate.init([1, 2, 1], Reparametrization(EXP_FIRST_ORDER, 0.0, (0.0,))).snapshot()
    for key, bad in (("format", "other"), ("version", 99), ("activation", "relu")):
        with pytest.raises(ValueError):
            MlpCandidate.from_snapshot({**snap, key: bad})


def test_layer_validation():
    rep = Reparametrization(EXP_FIRST_ORDER, 0.0, (0.0,))
    good = MlpCandidate.init([1, 3, 1], rep)
    with pytest.raises(ValueError):
        MlpCandidate(good.layers[::-1], rep)
    with pytest.raises(ValueError):
        MlpCandidate(good.layers, Reparametrization(EXP_FIRST_ORDER, 0.0, (0.0, 1.0)))
    with pytest.raises(ValueError):
        Reparametrization("bogus", 0.0, (0.0,))
    with pytest.raises(ValueError):
        Reparametrization(EXP_SECOND_ORDER, 0.0, (0.0,))


def test_jet_order_limits():
    cand = ClosedFormCandidate(lambda t: t * t)
    with pytest.raises(ValueError):
        jet_eval(cand, [0.0], -1)
    with pytest.raises(ValueError):
        jet_eval(cand, [0.0], 7)
    assert jet_eval(cand, [2.0], 2)[0].derivative(2)[0] == 2.0


def test_chunked_evaluation_matches_single_pass():
    cand = MlpCandidate.init([1, 4, 1], Reparametrization(EXP_FIRST_ORDER, 0.0, (1.0,)), seed=3)
    t = np.linspace(0, 3, 2 * cand.chunk + 7)
    whole = cand.jets_with(cand.params(), t, 1)[0]
    chunked = cand.jets(t, 1)[0]
    for a, b in zip(whole.coeffs, chunked.coeffs):
        np.testing.assert_array_equal(a, b)


def test_synthetic_candidate_closed_form():
    case = get_case("fo-poly")
    cand = synthetic_constant_residual_candidate(case.problem, 0.3, case.exact)
    t = np.linspace(0, 3, 7)
    dev = cand.jets(t, 0)[0].value - case.exact_jets(t, 0)[0].value
    np.testing.assert_allclose(dev, 0.3 * (1 - np.exp(-3 * t)) / 3, atol=1e-15)
    assert initial_condition_defect(case.problem, cand) == 0.0
    zero = FirstOrderConstant(ComplexRoot(0.0), 0.0, None, Interval(0, 1))
    flat = synthetic_constant_residual_candidate(zero, 0.5, lambda t: t * 0.0)
    np.testing.assert_allclose(flat.jets(t, 0)[0].value, 0.5 * t)
    with pytest.raises(ValueError):
        synthetic_constant_residual_candidate(
            FirstOrderConstant(ComplexRoot(1.0, 1.0), 0.0, None, Interval(0, 1)), 0.1, lambda t: t)
