"""Independent reference computations used by the tests.

Nothing here imports the package: kernels are integrated directly with a
small standalone adaptive Simpson rule, and divided differences that cancel
badly in double precision are evaluated with mpmath.
"""

import math

import mpmath


def simpson(f, a, b, tol=1e-13, depth=50):
    """Plain recursive adaptive Simpson with Richardson correction."""
    if a == b:
        return 0.0

    def rec(a, b, fa, fm, fb, whole, tol, depth):
        m = 0.5 * (a + b)
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        left = (m - a) / 6 * (fa + 4 * flm + fm)
        right = (b - m) / 6 * (fm + 4 * frm + fb)
        if depth <= 0 or abs(left + right - whole) <= 15 * tol:
            return left + right + (left + right - whole) / 15
        return (rec(a, m, fa, flm, fm, left, tol / 2, depth - 1)
                + rec(m, b, fm, frm, fb, right, tol / 2, depth - 1))

    fa, fb, fm = f(a), f(b), f(0.5 * (a + b))
    return rec(a, b, fa, fm, fb, (b - a) / 6 * (fa + 4 * fm + fb), tol, depth)


def chain_kernel(lams, dps=60):
    """Convolution of ``e^(-lam_k s)`` as a float function of ``s``.

    Uses the divided-difference form in high precision; repeated roots are
    split by a 1e-25 perturbation, far below double precision.
    """
    with mpmath.workdps(dps):
        roots = [mpmath.mpf(x) + k * mpmath.mpf("1e-25") for k, x in enumerate(lams)]
        coef = []
        for k, lk in enumerate(roots):
            prod = mpmath.mpf(1)
            for j, lj in enumerate(roots):
                if j != k:
                    prod *= lj - lk
            coef.append(1 / prod)

    def kernel(s):
        with mpmath.workdps(dps):
            return float(sum(c * mpmath.exp(-lk * s) for c, lk in zip(coef, roots)))

    return kernel


def phi_quadrature(s, lams, tol=1e-14):
    """``int_0^s K(sigma) dsigma`` for the chain kernel of ``lams``."""
    return simpson(chain_kernel(lams), 0.0, s, tol=tol)


def phi_recurrence(t, lams, tol=1e-12):
    """``phi_k(t) = int_0^t e^(-lam_k (t - tau)) phi_{k-1}(tau) dtau`` with ``phi_1`` closed."""
    lam1 = lams[0]

    def phi1(x):
        return x if lam1 == 0 else (1 - math.exp(-lam1 * x)) / lam1

    fn = phi1
    for lam in lams[1:]:
        fn = (lambda prev, lam: lambda x: simpson(
            lambda tau: math.exp(-lam * (x - tau)) * prev(tau), 0.0, x, tol=tol))(fn, lam)
    return fn(t)


def h_quadrature(s, lam, k, tol=1e-15):
    return simpson(lambda x: x ** (k - 1) / math.factorial(k - 1) * math.exp(-lam * x), 0.0, s, tol=tol)


def polyexp_quadrature(a, b, t, lam, m, tol=1e-15):
    hi = min(b, t)
    if hi <= a:
        return 0.0
    return simpson(lambda tau: (t - tau) ** m / math.factorial(m) * math.exp(-lam * (t - tau)),
                   a, hi, tol=tol)
