import json
import math

import numpy as np
import pytest

from odecert import jets as J
from odecert.bounds import CertificationError
from odecert.candidate import ClosedFormCandidate, synthetic_constant_residual_candidate
from odecert.harness import (
    CERTIFIED_AND_VERIFIED,
    CERTIFIED_ONLY,
    SUMMARY_COLUMNS,
    VIOLATION,
    run_case,
    run_suite,
    summary_csv,
    worker_count,
)
from odecert.model import ManufacturedCase, get_case
from odecert.trainer import TrainConfig


def exact_candidate(case):
    return ClosedFormCandidate(case.exact, case.problem.dim, label=case.name)


@pytest.mark.parametrize("name", ["fo-log", "ho-osc-sin2", "ho-exp-poly", "nc-sin", "sys-jordan6"])
def test_exact_candidate_gets_vanishing_bounds(name):
    case = get_case(name)
    cert = run_case(case, candidate=exact_candidate(case), eval_grid=101, grid_per_cell=16)
    assert cert.verdict == CERTIFIED_AND_VERIFIED
    assert cert.max_error <= 1e-12
    for n in cert.levels:
        assert cert.bound_curves[n].values.max() <= 1e-8


def test_sharp_candidate_touches_the_bound():
    case = get_case("fo-trig")
    cand = synthetic_constant_residual_candidate(case.problem, 0.2, case.exact)
    cert = run_case(case, candidate=cand, eval_grid=301, grid_per_cell=8)
    assert cert.verdict == CERTIFIED_AND_VERIFIED
    for n in cert.levels:
        assert abs(cert.margin(n)) <= 1e-12
    np.testing.assert_allclose(cert.error_curve, 0.2 * (1 - np.exp(-3 * cert.times)) / 3,
                               atol=1e-13)


def test_undersampled_deviation_is_reported_as_violation():
    # a bump that vanishes with its slope on every grid node hides from the residual sampler
    case = get_case("fo-poly")
    h = 3.0 / 8
    cand = ClosedFormCandidate(lambda t: case.exact(t) + 0.05 * J.sin(t * (math.pi / h)) ** 2)
    cert = run_case(case, candidate=cand, partition_levels=(1,), eval_grid=1000, grid_per_cell=8)
    assert cert.verdict == VIOLATION
    assert cert.grid_diagnostic.grid_sensitive
    assert any("grid-sensitive" in n for n in cert.notes)


def test_no_exact_solution_is_certified_only():
    case = get_case("fo-exp")
    blind = ManufacturedCase("blind", case.problem, None)
    cert = run_case(blind, candidate=exact_candidate(case), eval_grid=50, grid_per_cell=8)
    assert cert.verdict == CERTIFIED_ONLY
    assert cert.max_error is None and cert.margin(1) is None
    assert cert.curves_csv().split("\n")[1].endswith(",")


def test_initial_condition_defect_is_refused():
    case = get_case("fo-poly")
    shifted = ClosedFormCandidate(lambda t: case.exact(t) + 1e-6)
    with pytest.raises(CertificationError):
        run_case(case, candidate=shifted)


def test_level_and_grid_validation():
    case = get_case("fo-poly")
    with pytest.raises(ValueError):
        run_case(case, candidate=exact_candidate(case), partition_levels=(1, 3, 10))
    with pytest.raises(ValueError):
        run_case(case, candidate=exact_candidate(case), eval_grid=1)


def test_trained_run_and_written_certificate(tmp_path):
    case = get_case("fo-exp")
    cert = run_case(case, TrainConfig(epochs=5, samples_per_epoch=64, validation_points=32),
                    eval_grid=200, grid_per_cell=16)
    assert cert.verdict == CERTIFIED_AND_VERIFIED
    assert cert.training["epochs"] == 5
    out = cert.write(tmp_path / "c")
    names = sorted(p.name for p in out.iterdir())
    assert names == ["bound_curve_1.csv", "bound_curve_10.csv", "bound_curve_100.csv",
                     "certificate.json", "curves.csv", "residual_profile_1.csv",
                     "residual_profile_10.csv", "residual_profile_100.csv"]
    for p in out.iterdir():
        assert b"\r" not in p.read_bytes()
    doc = json.loads((out / "certificate.json").read_text())
    assert doc["verdict"] == CERTIFIED_AND_VERIFIED
    assert [lv["cells"] for lv in doc["levels"]] == [1, 10, 100]
    assert doc["levels"][0]["theorem"] == "first-order-constant"
    assert "wall_time" not in json.dumps(doc)
    rows = (out / "curves.csv").read_text().splitlines()
    assert rows[0] == "t,bound_1,bound_10,bound_100,abs_error"
    assert len(rows) == 201
    values = np.array([[float(x) for x in r.split(",")] for r in rows[1:]])
    assert np.all(values[:, 1] >= values[:, 2]) and np.all(values[:, 2] >= values[:, 3])
    assert np.all(values[:, 4] <= values[:, 3] + 1e-9)


def test_suite_subset_serial_matches_pool(tmp_path):
    kw = dict(epochs=3, levels=(1, 10), eval_grid=50, grid_per_cell=8, names=["fo-poly", "nc-exp"])
    serial = run_suite(tmp_path / "a", workers=1, **kw)
    pooled = run_suite(tmp_path / "b", workers=2, **kw)
    assert [c.case_name for c in serial] == ["fo-poly", "nc-exp"]
    for name in ("summary.csv", "fo-poly/certificate.json", "nc-exp/curves.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    header = (tmp_path / "a" / "summary.csv").read_text().splitlines()[0]
    assert header == ",".join(SUMMARY_COLUMNS)
    assert summary_csv(serial) == summary_csv(pooled)


def test_worker_count_env(monkeypatch):
    monkeypatch.setenv("ODE_CERTIFY_THREADS", "3")
    assert worker_count() == 3
    monkeypatch.setenv("ODE_CERTIFY_THREADS", "0")
    assert worker_count() == 1
    monkeypatch.setenv("ODE_CERTIFY_THREADS", "many")
    with pytest.raises(ValueError):
        worker_count()
    monkeypatch.delenv("ODE_CERTIFY_THREADS")
    assert worker_count() >= 1
