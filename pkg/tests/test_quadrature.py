import math

import numpy as np
import pytest

from odecert.quadrature import QuadratureError, adaptive_simpson, cumulative_simpson


@pytest.mark.parametrize("f, a, b, exact", [
    (math.exp, 0.0, 1.0, math.e - 1),
    (math.sin, 0.0, math.pi, 2.0),
    (lambda x: 1 / (1 + x * x), -1.0, 1.0, math.pi / 2),
    (lambda x: math.sqrt(x), 1.0, 4.0, 14 / 3),
    (lambda x: x**3, 2.0, 2.0, 0.0),
])
def test_known_integrals(f, a, b, exact):
    assert adaptive_simpson(f, a, b, abs_tol=1e-13) == pytest.approx(exact, abs=1e-11)


def test_cubic_exact_on_first_pass():
    calls = []

    def f(x):
        calls.append(x)
        return 4 * x**3 - x

    assert adaptive_simpson(f, 0.0, 2.0, abs_tol=1e-14) == pytest.approx(14.0, abs=1e-13)
    assert len(calls) == 5


def test_reversed_limits_change_sign():
    assert adaptive_simpson(math.exp, 1.0, 0.0, abs_tol=1e-13) == pytest.approx(1 - math.e, abs=1e-11)


def test_relative_tolerance():
    big = adaptive_simpson(lambda x: 1e8 * math.exp(x), 0.0, 5.0, abs_tol=0.0, rel_tol=1e-12)
    assert big == pytest.approx(1e8 * (math.exp(5) - 1), rel=1e-11)


def test_cumulative_matches_running_integral():
    knots = [0.0, 0.3, 0.3, 1.0, 2.5]
    out = cumulative_simpson(math.cos, knots, abs_tol=1e-13)
    np.testing.assert_allclose(out, np.sin(knots), atol=1e-12)
    with pytest.raises(ValueError):
        cumulative_simpson(math.cos, [0.0, 1.0, 0.5])


def test_failures_raise():
    with pytest.raises(QuadratureError):
        adaptive_simpson(lambda x: 1 / x if x else math.inf, 0.0, 1.0)
    with pytest.raises(QuadratureError):
        adaptive_simpson(lambda x: math.sin(1 / x) if x else 0.0, 0.0, 1.0,
                         abs_tol=1e-15, max_depth=8)
