"""Adaptive Simpson quadrature."""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np


class QuadratureError(RuntimeError):
    pass


def adaptive_simpson(
    f: Callable[[float], float],
    a: float,
    b: float,
    abs_tol: float = 1e-10,
    rel_tol: float = 0.0,
    max_depth: int = 60,
    max_evals: int = 2_000_000,
) -> float:
    """Integrate ``f`` over ``[a, b]`` with Richardson-corrected adaptive Simpson.

    Intervals are refined until ``|S_left + S_right - S_whole| <= 15 * tol``,
    with the tolerance split in half at each bisection.  ``rel_tol`` is
    applied against the whole-interval Simpson estimate.

    Raises QuadratureError when the evaluation budget or depth is exhausted.
    """
    if a == b:
        return 0.0
    fa, fm, fb = f(a), f(0.5 * (a + b)), f(b)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    tol = max(abs_tol, rel_tol * abs(whole))
    evals = 3
    total = 0.0
    # explicit stack, left-to-right so the summation order is deterministic
    stack = [(a, b, fa, fm, fb, whole, tol, 0)]
    while stack:
        lo, hi, flo, fmid, fhi, s, eps, depth = stack.pop()
        mid = 0.5 * (lo + hi)
        lm, rm = 0.5 * (lo + mid), 0.5 * (mid + hi)
        flm, frm = f(lm), f(rm)
        evals += 2
        left = (mid - lo) / 6.0 * (flo + 4.0 * flm + fmid)
        right = (hi - mid) / 6.0 * (fmid + 4.0 * frm + fhi)
        delta = left + right - s
        if not math.isfinite(delta):
            raise QuadratureError(f"non-finite integrand on [{lo}, {hi}]")
        if abs(delta) <= 15.0 * eps or depth >= max_depth:
            if depth >= max_depth and abs(delta) > 15.0 * eps:
                raise QuadratureError(
                    f"adaptive Simpson hit max depth {max_depth} on [{lo}, {hi}]"
                )
            total += left + right + delta / 15.0
            continue
        if evals > max_evals:
            raise QuadratureError(f"adaptive Simpson exceeded {max_evals} evaluations")
        stack.append((mid, hi, fmid, frm, fhi, right, 0.5 * eps, depth + 1))
        stack.append((lo, mid, flo, flm, fmid, left, 0.5 * eps, depth + 1))
    return total


def cumulative_simpson(
    f: Callable[[float], float], knots: Sequence[float], abs_tol: float = 1e-10
) -> np.ndarray:
    """Running integrals ``F[i] = int_{knots[0]}^{knots[i]} f`` for increasing knots.

    The tolerance budget is shared between segments in proportion to length.
    """
    x = np.asarray(knots, dtype=float)
    if np.any(np.diff(x) < 0):
        raise ValueError("knots must be nondecreasing")
    out = np.zeros_like(x)
    span = x[-1] - x[0] if x.size else 0.0
    acc = 0.0
    for i in range(1, x.size):
        width = x[i] - x[i - 1]
        if width > 0:
            acc += adaptive_simpson(f, x[i - 1], x[i], abs_tol=abs_tol * width / span)
        out[i] = acc
    return out
