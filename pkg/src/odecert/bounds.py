"""A-posteriori error bounds driven by per-cell residual sup-norms.

Every bound has the shape ``sum_i eps_i * W_i(t)`` (systems take a p-norm of
several such sums), where ``W_i(t)`` integrates a nonnegative kernel over the
part of cell ``i`` lying before ``t``.  Kernel integrals are evaluated in
forms free of catastrophic cancellation; when roots nearly coincide the
divided-difference closed form is abandoned for a matrix exponential.

Bounds for a coarse profile can be evaluated on a finer nested partition
(``atomic=``).  The coarse epsilons are then repeated onto the fine cells and
both are summed in the same order, so refining the residual profile can never
increase a bound, not even by a rounding error.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.linalg

from . import linalg
from .model import (
    FirstOrderConstant,
    HigherOrderConstant,
    LinearSystem,
    NonconstantFirstOrder,
    OdeProblem,
)
from .quadrature import adaptive_simpson
from .residual import Partition, ResidualProfile

ABSOLUTE = "AbsoluteError"
RELATIVE = "RelativeToNaturalResponse"

TAG_FIRST_ORDER = "first-order-constant"
TAG_RELATIVE = "first-order-relative"
TAG_HIGHER_ORDER = "higher-order-constant"
TAG_SYSTEM = "linear-system-jordan"
TAG_NONCONSTANT = "nonconstant-first-order"

SERIES_SWITCH = 1.0       # lam_max * s at or below which phi_n uses its power series
GAP_TOL = 1e-6            # relative root gap below which the closed form is not used
AMPLIFICATION_LIMIT = 1e4  # cancellation budget for the closed form
H_SERIES_SWITCH = 30.0


class CertificationError(ValueError):
    """The problem lies outside the class for which a bound is proven."""


# ---------------------------------------------------------------------------
# kernels, in the elapsed time s = t - t0


def _check_nonneg(lams: Sequence[float]) -> tuple:
    lams = tuple(float(x) for x in lams)
    if not lams:
        raise ValueError("need at least one root")
    if any(not math.isfinite(x) for x in lams):
        raise ValueError("roots must be finite")
    if any(x < 0 for x in lams):
        raise ValueError(f"roots must be nonnegative, got {lams}")
    return lams


def _elapsed(t, t0: float) -> np.ndarray:
    s = np.asarray(t, dtype=float) - t0
    if np.any(s < 0):
        raise ValueError("t must not precede t0")
    return s


def _expm1_ratio(x: np.ndarray) -> np.ndarray:
    """``(1 - e^-x) / x`` with the value 1 at ``x = 0``."""
    x = np.asarray(x, dtype=float)
    out = np.ones_like(x)
    nz = x != 0
    out[nz] = -np.expm1(-x[nz]) / x[nz]
    return out


def _h(s: np.ndarray, lam: float, k: int) -> np.ndarray:
    """``int_0^s sigma^(k-1)/(k-1)! e^(-lam sigma) dsigma`` for ``lam >= 0``."""
    s = np.asarray(s, dtype=float)
    if lam == 0:
        return s**k / math.factorial(k)
    x = lam * s
    out = np.empty_like(s)
    small = x <= H_SERIES_SWITCH
    if small.any():
        xs = x[small]
        term = np.full_like(xs, 1.0 / math.factorial(k))
        total = term.copy()
        for i in range(1, 400):
            term = term * xs / (k + i)
            total += term
            if np.all(term <= 1e-17 * total):
                break
        out[small] = s[small] ** k * np.exp(-xs) * total
    large = ~small
    if large.any():
        xl = x[large]
        partial = np.zeros_like(xl)
        term = np.ones_like(xl)
        for j in range(k):
            partial += term
            term = term * xl / (j + 1)
        out[large] = (1.0 - np.exp(-xl) * partial) / lam**k
    return out


def h_k(t, lam: float, k: int, t0: float = 0.0):
    """``(1/lam^k)(1 - e^(-lam s) sum_{j<k} (lam s)^j / j!)``, ``s = t - t0``.

    Evaluated through a positive series (or the complement form once
    ``lam * s`` is large) so small ``lam`` loses no accuracy; ``lam = 0``
    gives ``s^k / k!``.
    """
    (lam,) = _check_nonneg([lam])
    if k < 1:
        raise ValueError("k must be a positive integer")
    out = _h(_elapsed(t, t0), lam, int(k))
    return float(out) if np.ndim(out) == 0 else out


def H_k(t, lam: float, k: int, t0: float = 0.0):
    """``h_1 + ... + h_k``."""
    if k < 1:
        raise ValueError("k must be a positive integer")
    (lam,) = _check_nonneg([lam])
    s = _elapsed(t, t0)
    out = sum(_h(s, lam, j) for j in range(1, int(k) + 1))
    return float(out) if np.ndim(out) == 0 else out


def _polyexp(s_lo: np.ndarray, delta: np.ndarray, lam: float, m: int) -> np.ndarray:
    """``int_{s_lo}^{s_lo+delta} s^m/m! e^(-lam s) ds`` as a sum of nonnegative terms."""
    acc = np.zeros(np.broadcast(s_lo, delta).shape)
    for j in range(m + 1):
        acc = acc + s_lo ** (m - j) / math.factorial(m - j) * _h(delta, lam, j + 1)
    return np.exp(-lam * s_lo) * acc


def polyexp_integral(a: float, b: float, t: float, lam: float, m: int) -> float:
    """``int_a^min(b,t) (t-tau)^m/m! e^(-lam (t-tau)) dtau`` (zero when ``t <= a``)."""
    (lam,) = _check_nonneg([lam])
    if b < a:
        raise ValueError("need a <= b")
    hi = min(b, t)
    if hi <= a:
        return 0.0
    return float(_polyexp(np.float64(t - hi), np.float64(hi - a), lam, int(m)))


def exp_kernel_integral(a: float, b: float, t: float, lam: float) -> float:
    """``int_a^min(b,t) e^(-lam (t-tau)) dtau`` for any real ``lam``."""
    if b < a:
        raise ValueError("need a <= b")
    hi = min(b, t)
    if hi <= a:
        return 0.0
    delta = hi - a
    return float(math.exp(-lam * (t - hi)) * delta * _expm1_ratio(np.float64(lam * delta)))


def _complete_symmetric(lams: tuple, terms: int) -> np.ndarray:
    h = np.zeros(terms)
    h[0] = 1.0
    for lam in lams:
        for j in range(1, terms):
            h[j] += lam * h[j - 1]
    return h


def _phi_series(s: np.ndarray, lams: tuple, terms: int = 40) -> np.ndarray:
    # phi_n(s) = sum_j (-1)^j h_j(lams) s^(n+j) / (n+j)!, used for lam_max * s <= 1
    n = len(lams)
    h = _complete_symmetric(lams, terms)
    power = s**n / math.factorial(n)
    total = np.zeros_like(s)
    for j in range(terms):
        total += (-1) ** j * h[j] * power
        power = power * s / (n + j + 1)
    return total


def _divided_coefficients(lams: tuple) -> np.ndarray:
    n = len(lams)
    c = np.empty(n)
    for k in range(n):
        c[k] = 1.0 / math.prod(lams[j] - lams[k] for j in range(n) if j != k)
    return c


def _roots_separated(lams: tuple) -> bool:
    tol = GAP_TOL * (1.0 + max(lams))
    srt = sorted(lams)
    return all(b - a >= tol for a, b in zip(srt, srt[1:]))


def _phi_closed(s: np.ndarray, lams: tuple) -> tuple[np.ndarray, np.ndarray]:
    c = _divided_coefficients(lams)
    parts = np.stack([c[k] * _h(s, lam, 1) for k, lam in enumerate(lams)])
    value = parts.sum(axis=0)
    scale = np.abs(parts).sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        amplification = np.where(value > 0, scale / value, np.inf)
    return value, amplification


def _phi_expm(s: float, lams: tuple) -> float:
    # phi_n(s) is entry (n-1, 0) of int_0^s exp(-L sigma) dsigma, L lower bidiagonal
    n = len(lams)
    lmat = np.diag(lams) - np.diag(np.ones(n - 1), -1)
    aug = np.zeros((2 * n, 2 * n))
    aug[:n, :n] = -lmat * s
    aug[:n, n:] = np.eye(n) * s
    return float(scipy.linalg.expm(aug)[n - 1, n])


def _phi_methods(s: np.ndarray, lams: tuple) -> tuple[np.ndarray, np.ndarray]:
    """Values and the branch used per point: 0 equal, 1 series, 2 closed, 3 expm."""
    s = np.asarray(s, dtype=float)
    shape = s.shape
    s = s.ravel()
    n = len(lams)
    if n == 1 or len(set(lams)) == 1:
        return _h(s, lams[0], n).reshape(shape), np.zeros(shape, dtype=int)
    out = np.empty_like(s)
    method = np.empty(s.shape, dtype=int)
    near = max(lams) * s <= SERIES_SWITCH
    out[near] = _phi_series(s[near], lams)
    method[near] = 1
    idx = np.flatnonzero(~near)
    if idx.size:
        ok = np.zeros(idx.size, dtype=bool)
        if _roots_separated(lams):
            value, amp = _phi_closed(s[idx], lams)
            ok = amp <= AMPLIFICATION_LIMIT
            out[idx[ok]] = value[ok]
            method[idx[ok]] = 2
        for i in idx[~ok]:
            out[i] = _phi_expm(float(s[i]), lams)
            method[i] = 3
    out, method = out.reshape(shape), method.reshape(shape)
    return np.maximum(out, 0.0), method


_METHOD_NAMES = ("equal-roots", "series", "closed-form", "matrix-exponential")


def phi_n(t, lambdas: Sequence[float], t0: float = 0.0):
    """``int_0^s K(sigma) dsigma`` where ``K`` is the convolution of ``e^(-lam_k s)``.

    For distinct positive roots this is
    ``1/prod(lam) - sum_k e^(-lam_k s) / (lam_k prod_{j!=k}(lam_j - lam_k))``.
    Coincident and zero roots are handled by their limits.
    """
    lams = _check_nonneg(lambdas)
    s = _elapsed(t, t0)
    out, _ = _phi_methods(np.atleast_1d(s), lams)
    return float(out[0]) if np.ndim(s) == 0 else out.reshape(s.shape)


def phi2(t, lam1: float, lam2: float, t0: float = 0.0):
    return phi_n(t, (lam1, lam2), t0)


def phi_method(t: float, lambdas: Sequence[float], t0: float = 0.0) -> str:
    """Name of the evaluation branch :func:`phi_n` takes at ``t``."""
    lams = _check_nonneg(lambdas)
    _, method = _phi_methods(np.atleast_1d(_elapsed(float(t), t0)), lams)
    return _METHOD_NAMES[int(method[0])]


# ---------------------------------------------------------------------------
# per-cell weights


def _clip(left: np.ndarray, right: np.ndarray, times: np.ndarray):
    """Elapsed-time window ``[s_lo, s_lo + delta]`` of each (time, cell) pair."""
    hi = np.minimum(right[None, :], times[:, None])
    delta = np.maximum(hi - left[None, :], 0.0)
    s_lo = np.maximum(times[:, None] - hi, 0.0)
    return s_lo, delta


def _real_parts(roots) -> tuple:
    return tuple(float(r.lam) for r in roots)


def _first_order_weights(lam: float, left, right, times) -> np.ndarray:
    s_lo, delta = _clip(left, right, times)
    return np.exp(-lam * s_lo) * delta * _expm1_ratio(lam * delta)


def _higher_order_weights(lams: tuple, left, right, times) -> np.ndarray:
    s_lo, delta = _clip(left, right, times)
    if len(set(lams)) == 1:
        return _polyexp(s_lo, delta, lams[0], len(lams) - 1)
    active = delta > 0
    w = np.zeros_like(delta)
    lo, _ = _phi_methods(s_lo[active], lams)
    hi, _ = _phi_methods(s_lo[active] + delta[active], lams)
    w[active] = np.maximum(hi - lo, 0.0)
    return w


def _require_nonneg_roots(lams: tuple, what: str):
    if any(x < 0 for x in lams):
        raise CertificationError(
            f"{what} bounds are only proven for roots with nonnegative real part; got {lams}"
        )


def _domain_times(problem: OdeProblem, times) -> np.ndarray:
    t = np.atleast_1d(np.asarray(times, dtype=float))
    if t.ndim != 1:
        raise ValueError("times must be one-dimensional")
    if np.any(np.diff(t) <= 0):
        raise ValueError("times must be strictly increasing")
    if not problem.domain.contains(t):
        raise ValueError("times must lie within the problem domain")
    return t


def _on_atomic(profile: ResidualProfile, atomic: Optional[Partition]) -> ResidualProfile:
    if atomic is None or atomic is profile.partition:
        return profile
    return profile.lifted(atomic)


def _check_profile(problem: OdeProblem, profile: ResidualProfile):
    d, p = problem.domain, profile.partition.interval
    if (d.t0, d.t1) != (p.t0, p.t1):
        raise ValueError("profile partition does not cover the problem domain")


def _first_order_values(problem: FirstOrderConstant, prof: ResidualProfile, t) -> np.ndarray:
    part = prof.partition
    return _first_order_weights(float(problem.root.lam), part.left, part.right, t) @ prof.eps


def _higher_order_values(problem: HigherOrderConstant, prof: ResidualProfile, t) -> np.ndarray:
    lams = _real_parts(problem.roots)
    _require_nonneg_roots(lams, "higher-order")
    part = prof.partition
    return _higher_order_weights(lams, part.left, part.right, t) @ prof.eps


def system_component_bounds(problem: LinearSystem, prof: ResidualProfile, t) -> np.ndarray:
    """Bounds on each modal error component, shape ``(len(t), dim)``."""
    lams = tuple(float(b.root.lam) for b in problem.blocks)
    _require_nonneg_roots(lams, "system")
    p = problem.norm_p
    minv = linalg.induced_norm(problem.modal_inverse, p)
    part = prof.partition
    s_lo, delta = _clip(part.left, part.right, t)
    comps = []
    for block in problem.blocks:
        lam = float(block.root.lam)
        # chain position j accumulates kernels of degree 0 .. size-1-j
        per_degree = [_polyexp(s_lo, delta, lam, m) @ prof.eps for m in range(block.size)]
        running = np.zeros(t.shape)
        tail = []
        for m in range(block.size):
            running = running + per_degree[m]
            tail.append(running)
        comps.extend(reversed(tail))
    return minv * np.stack(comps, axis=-1)


def _system_values(problem: LinearSystem, prof: ResidualProfile, t) -> np.ndarray:
    comps = system_component_bounds(problem, prof, t)
    p = problem.norm_p
    m_norm = linalg.induced_norm(problem.modal_matrix, p)
    return m_norm * np.linalg.norm(comps, ord=p, axis=-1)


def system_asymptotic_cap(problem: LinearSystem, epsilon: float) -> float:
    """``n^(1/p) max_k sum_{j<=size_k} lam_k^-j cond(M) eps`` (requires all roots positive)."""
    lams = [float(b.root.lam) for b in problem.blocks]
    if any(x <= 0 for x in lams):
        raise CertificationError("the asymptotic constant needs strictly positive roots")
    p = problem.norm_p
    root = problem.dim ** (1.0 / p) if math.isfinite(p) else 1.0
    chain = max(sum(b.root.lam ** -j for j in range(1, b.size + 1)) for b in problem.blocks)
    return root * chain * linalg.cond(problem.modal_matrix, p) * epsilon


def _log_integrating_factor(problem: NonconstantFirstOrder, knots: np.ndarray):
    """``P - P(t0)`` at the knots and as a scalar function."""
    t0 = problem.domain.t0
    if problem.P is not None:
        base = float(np.asarray(problem.P(np.array([t0])))[0])

        def big_p(x: float) -> float:
            return float(np.asarray(problem.P(np.array([x])))[0]) - base

        vals = np.asarray(problem.P(knots), dtype=float) - base
        return vals, big_p

    def p_scalar(x: float) -> float:
        return float(np.asarray(problem.p(np.array([x])))[0])

    vals = np.zeros_like(knots)
    for i in range(1, knots.size):
        vals[i] = vals[i - 1] + adaptive_simpson(p_scalar, knots[i - 1], knots[i], abs_tol=1e-10)

    def big_p(x: float) -> float:
        i = max(int(np.searchsorted(knots, x, side="right")) - 1, 0)
        return vals[i] + adaptive_simpson(p_scalar, knots[i], x, abs_tol=1e-12)

    return vals, big_p


def _nonconstant_values(problem: NonconstantFirstOrder, prof: ResidualProfile, t) -> np.ndarray:
    part = prof.partition
    knots = np.union1d(part.cuts, t)
    p_knots, big_p = _log_integrating_factor(problem, knots)
    shift = float(p_knots.max())

    def weight(x: float) -> float:
        return math.exp(big_p(x) - shift)

    seg = np.array([
        adaptive_simpson(weight, a, b, abs_tol=1e-14, rel_tol=1e-12)
        for a, b in zip(knots[:-1], knots[1:])
    ])
    cell = np.searchsorted(part.cuts, knots[:-1], side="right") - 1
    acc = np.concatenate([[0.0], np.cumsum(prof.eps[cell] * np.maximum(seg, 0.0))])
    at = np.searchsorted(knots, t)
    return np.exp(shift - p_knots[at]) * acc[at]


_DISPATCH = {
    FirstOrderConstant: (_first_order_values, TAG_FIRST_ORDER),
    HigherOrderConstant: (_higher_order_values, TAG_HIGHER_ORDER),
    LinearSystem: (_system_values, TAG_SYSTEM),
    NonconstantFirstOrder: (_nonconstant_values, TAG_NONCONSTANT),
}


def _evaluate(problem, profile, times, atomic=None) -> tuple[np.ndarray, str]:
    try:
        fn, tag = _DISPATCH[type(problem)]
    except KeyError:
        raise TypeError(f"no bound for {type(problem).__name__}") from None
    _check_profile(problem, profile)
    t = _domain_times(problem, times)
    return fn(problem, _on_atomic(profile, atomic), t), tag


def _scalar_bound(kind, problem, profile, t) -> float:
    if not isinstance(problem, kind):
        raise TypeError(f"expected {kind.__name__}, got {type(problem).__name__}")
    values, _ = _evaluate(problem, profile, [t])
    return float(values[0])


def bound_first_order(problem: FirstOrderConstant, profile: ResidualProfile, t: float) -> float:
    """``sum_i eps_i int_{I_i, tau<=t} e^(-lam (t-tau)) dtau``; holds for any real ``lam``."""
    return _scalar_bound(FirstOrderConstant, problem, profile, t)


def bound_higher_order(problem: HigherOrderConstant, profile: ResidualProfile, t: float) -> float:
    return _scalar_bound(HigherOrderConstant, problem, profile, t)


def bound_system(problem: LinearSystem, profile: ResidualProfile, t: float) -> float:
    return _scalar_bound(LinearSystem, problem, profile, t)


def bound_nonconstant(problem: NonconstantFirstOrder, profile: ResidualProfile, t: float) -> float:
    return _scalar_bound(NonconstantFirstOrder, problem, profile, t)


def bound_first_order_relative(problem: FirstOrderConstant, epsilon: float, t) -> float:
    """Error relative to the growing natural response ``u0 e^(|lam| (t-t0))``.

    Only defined for ``lam < 0`` and ``u0 != 0``.
    """
    lam = float(problem.root.lam)
    if lam >= 0:
        raise CertificationError("the relative bound needs a negative root (growing solution)")
    u0 = abs(complex(problem.u0))
    if u0 == 0:
        raise CertificationError("the relative bound is undefined for u0 = 0")
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    s = _elapsed(t, problem.domain.t0)
    out = -np.expm1(-abs(lam) * s) * epsilon / (abs(lam) * u0)
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# curves


@dataclass(frozen=True, eq=False)
class BoundCurve:
    times: np.ndarray
    values: np.ndarray
    kind: str
    theorem_tag: str
    partition_cells: int

    def __post_init__(self):
        if self.times.shape != self.values.shape:
            raise ValueError("times and values must have the same length")
        if np.any(self.values < 0):
            raise ValueError("bound values must be nonnegative")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "bound", "kind", "theorem_tag", "cells"])
        for t, v in zip(self.times, self.values):
            w.writerow([f"{t:.17g}", f"{v:.17g}", self.kind, self.theorem_tag, self.partition_cells])
        return buf.getvalue()


def bound_curve(problem: OdeProblem, profile: ResidualProfile, times,
                atomic: Optional[Partition] = None) -> BoundCurve:
    """Absolute error bound at each time.

    ``atomic`` is an optional refinement of the profile partition on which to
    carry out the cell sums; pass the finest partition when comparing levels.
    """
    values, tag = _evaluate(problem, profile, times, atomic)
    t = np.atleast_1d(np.asarray(times, dtype=float))
    return BoundCurve(t, values, ABSOLUTE, tag, profile.n_cells)


def relative_bound_curve(problem: FirstOrderConstant, profile: ResidualProfile, times) -> BoundCurve:
    t = _domain_times(problem, times)
    values = np.atleast_1d(bound_first_order_relative(problem, profile.epsilon, t))
    return BoundCurve(t, values, RELATIVE, TAG_RELATIVE, profile.n_cells)

