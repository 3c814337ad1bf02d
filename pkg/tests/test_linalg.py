import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from odecert.linalg import SingularMatrixError, cond, induced_norm, inverse, random_orthogonal


def sampled_norm(a, p, n=20000, seed=0):
    """Lower estimate of the induced norm from random unit vectors plus the basis."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, a.shape[1]))
    x = np.vstack([x, np.eye(a.shape[1]), np.sign(rng.standard_normal((n, a.shape[1])))])
    x /= np.linalg.norm(x, p, axis=1, keepdims=True)
    return np.linalg.norm(x @ a.T, p, axis=1).max()


def test_identity_and_diagonal():
    for p in (1, 2, np.inf):
        assert induced_norm(np.eye(4), p) == 1.0
        assert induced_norm(np.diag([2.0, -3.0]), p) == pytest.approx(3.0, rel=1e-15)
        assert cond(np.diag([2.0, 3.0]), p) == pytest.approx(1.5)


def test_known_matrix():
    a = np.array([[1.0, -2.0], [3.0, 4.0]])
    assert induced_norm(a, 1) == 6.0
    assert induced_norm(a, np.inf) == 7.0
    # largest singular value from the eigenvalues of A^T A
    assert induced_norm(a, 2) == pytest.approx(np.sqrt(max(np.linalg.eigvalsh(a.T @ a))), rel=1e-14)


@pytest.mark.parametrize("p", [1, 2, np.inf])
def test_norm_dominates_random_directions(p):
    a = np.random.default_rng(3).standard_normal((4, 4))
    est = sampled_norm(a, p)
    assert est <= induced_norm(a, p) * (1 + 1e-12)
    assert est >= 0.9 * induced_norm(a, p)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 8), st.integers(0, 10_000))
def test_inverse_roundtrip(n, seed):
    a = np.random.default_rng(seed).standard_normal((n, n)) + n * np.eye(n)
    np.testing.assert_allclose(inverse(a) @ a, np.eye(n), atol=1e-10)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 10), st.integers(0, 10_000))
def test_random_orthogonal(n, seed):
    q = random_orthogonal(n, seed)
    np.testing.assert_allclose(q.T @ q, np.eye(n), atol=1e-13)
    assert cond(q) == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_array_equal(q, random_orthogonal(n, seed))


def test_singular_refused():
    with pytest.raises(SingularMatrixError):
        inverse(np.array([[1.0, 2.0], [2.0, 4.0]]))
    with pytest.raises(SingularMatrixError):
        inverse(np.zeros((3, 3)))
    with pytest.raises(ValueError):
        inverse(np.ones((2, 3)))
    with pytest.raises(ValueError):
        induced_norm(np.eye(2), 3)
