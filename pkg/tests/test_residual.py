import math

import numpy as np
import pytest

from odecert import jets as J
from odecert.candidate import ClosedFormCandidate, synthetic_constant_residual_candidate
from odecert.model import Interval, case_names, get_case
from odecert.residual import (
    Partition,
    ResidualProfile,
    nested_profiles,
    residual_at,
    residual_norms,
    residual_profile,
    sup_residual,
    uniform_points,
)


def exact_candidate(case):
    return ClosedFormCandidate(case.exact, case.problem.dim, label=case.name)


def perturbed_fo_poly(amplitude=0.01):
    case = get_case("fo-poly")
    return case, ClosedFormCandidate(lambda t: case.exact(t) + amplitude * J.sin(5.0 * t))


@pytest.mark.parametrize("name", case_names())
def test_exact_solution_has_no_residual(name):
    case = get_case(name)
    t = np.linspace(case.problem.domain.t0, case.problem.domain.t1, 97)
    r = residual_at(case.problem, exact_candidate(case), t)
    assert r.shape == (97, case.problem.dim)
    assert np.max(np.abs(r)) <= 1e-9


def test_synthetic_candidate_has_constant_residual():
    case = get_case("fo-exp")
    cand = synthetic_constant_residual_candidate(case.problem, 0.3, case.exact)
    r = residual_at(case.problem, cand, np.linspace(0, 3, 301))
    np.testing.assert_allclose(r[:, 0], 0.3, atol=1e-12)


def test_perturbation_residual_matches_differentiated_form():
    _, cand = perturbed_fo_poly()
    case = get_case("fo-poly")
    t = np.linspace(0, 3, 200)
    r = residual_at(case.problem, cand, t)[:, 0]
    np.testing.assert_allclose(r, 0.01 * (5 * np.cos(5 * t) + 3 * np.sin(5 * t)), atol=1e-12)


def test_sup_residual_matches_analytic_maximum():
    case, cand = perturbed_fo_poly()
    # |0.01 (5 cos 5t + 3 sin 5t)| peaks at 0.01 sqrt(34) where tan 5t = 3/5, inside [0, 3]
    assert abs(sup_residual(case.problem, cand, case.problem.domain, 4096) - 0.01 * math.sqrt(34)) < 1e-5


def test_sup_residual_of_exact_and_constant():
    case = get_case("fo-trig")
    assert sup_residual(case.problem, exact_candidate(case), Interval(0, 1), 16) <= 1e-9
    cand = synthetic_constant_residual_candidate(case.problem, 0.25, case.exact)
    for g in (2, 7, 64):
        assert sup_residual(case.problem, cand, Interval(0.5, 2.5), g) == pytest.approx(0.25, abs=1e-12)
    with pytest.raises(ValueError):
        sup_residual(case.problem, cand, Interval(0, 1), 1)


def test_scalar_time_and_dimension_check():
    case = get_case("sys-jordan6")
    assert residual_at(case.problem, exact_candidate(case), 1.0).shape == (6,)
    with pytest.raises(ValueError):
        residual_at(case.problem, ClosedFormCandidate(lambda t: t), 1.0)


def test_residual_scales_linearly_with_deviation():
    case = get_case("fo-poly")
    base = sup_residual(case.problem, perturbed_fo_poly(0.01)[1], case.problem.domain, 512)
    for c in (0.5, 3.0):
        scaled = sup_residual(case.problem, perturbed_fo_poly(0.01 * c)[1], case.problem.domain, 512)
        assert scaled == pytest.approx(c * base, rel=1e-9)


def test_profile_single_cell_is_global_max():
    case, cand = perturbed_fo_poly()
    prof = residual_profile(case.problem, cand, 1, 300)
    grid = uniform_points(case.problem.domain, 300)
    assert prof.eps[0] == residual_norms(case.problem, cand, grid).max()
    assert prof.epsilon == prof.eps[0]


def test_profile_shares_endpoints_between_cells():
    case, cand = perturbed_fo_poly()
    prof = residual_profile(case.problem, cand, 4, 8)
    norms = residual_norms(case.problem, cand, uniform_points(case.problem.domain, 32))
    for i in range(4):
        assert prof.eps[i] == norms[8 * i:8 * i + 9].max()


def test_constant_residual_profile_is_flat():
    case = get_case("fo-log")
    cand = synthetic_constant_residual_candidate(case.problem, 0.05, case.exact)
    prof = residual_profile(case.problem, cand, 10, 16)
    np.testing.assert_allclose(prof.eps, 0.05, atol=1e-12)


def test_nested_profiles_are_monotone_and_match_direct():
    case, cand = perturbed_fo_poly()
    profs, diag = nested_profiles(case.problem, cand, (1, 10, 100), 32)
    for coarse, fine in ((1, 10), (10, 100)):
        k = fine // coarse
        parent = np.repeat(profs[coarse].eps, k)
        assert np.all(profs[fine].eps <= parent)
        np.testing.assert_array_equal(profs[fine].eps.reshape(coarse, k).max(axis=1), profs[coarse].eps)
    direct = residual_profile(case.problem, cand, 100, 32)
    np.testing.assert_array_equal(direct.eps, profs[100].eps)
    assert diag.densities == (16, 32, 64)
    assert not diag.grid_sensitive


def test_grid_diagnostic_flags_undersampled_residual():
    case, cand = perturbed_fo_poly()
    # 1, 2 and 4 subintervals on [0, 3] miss the peak at different distances
    _, diag = nested_profiles(case.problem, cand, (1,), 2)
    assert diag.densities == (1, 2, 4)
    assert diag.grid_sensitive
    assert diag.relative_change > 0.1


def test_nested_levels_must_divide():
    case, cand = perturbed_fo_poly()
    with pytest.raises(ValueError):
        nested_profiles(case.problem, cand, (1, 10, 25), 8)
    with pytest.raises(ValueError):
        nested_profiles(case.problem, cand, (), 8)


def test_partition_refine_is_nested():
    dom = Interval(0.0, 3.0)
    p = Partition(dom, [0.0, 0.5, 2.0, 3.0])
    fine = p.refine(4)
    assert fine.n_cells == 12
    assert np.all(np.isin(p.cuts, fine.cuts))
    assert np.all(p.coarser_index(fine) == np.repeat([0, 1, 2], 4))
    u = Partition.uniform(dom, 10)
    assert np.all(np.isin(u.cuts, u.refine(10).cuts))


def test_partition_validation():
    dom = Interval(0.0, 1.0)
    with pytest.raises(ValueError):
        Partition(dom, [0.0, 0.5, 0.5, 1.0])
    with pytest.raises(ValueError):
        Partition(dom, [0.1, 1.0])
    with pytest.raises(ValueError):
        Partition.uniform(dom, 4).coarser_index(Partition.uniform(dom, 3))


def test_profile_validation_and_lift():
    dom = Interval(0.0, 1.0)
    with pytest.raises(ValueError):
        ResidualProfile(Partition.uniform(dom, 2), [0.1])
    with pytest.raises(ValueError):
        ResidualProfile(Partition.uniform(dom, 2), [0.1, -1.0])
    prof = ResidualProfile(Partition.uniform(dom, 2), [0.1, 0.2])
    lifted = prof.lifted(Partition.uniform(dom, 6))
    np.testing.assert_array_equal(lifted.eps, [0.1, 0.1, 0.1, 0.2, 0.2, 0.2])


def test_profile_csv():
    prof = ResidualProfile(Partition.uniform(Interval(0.0, 3.0), 3), [0.1, 0.25, 1 / 3])
    text = prof.to_csv()
    assert text.split("\n")[0] == "cell_index,s_left,s_right,epsilon"
    assert text.split("\n")[3] == "2,2,3,0.33333333333333331"
    assert float(text.split("\n")[3].split(",")[3]) == 1 / 3


def test_uniform_points_hit_nested_cuts_exactly():
    dom = Interval(0.0, 3.0)
    grid = uniform_points(dom, 100 * 256)
    cuts = Partition.uniform(dom, 10).cuts
    assert np.all(np.isin(cuts, grid))
