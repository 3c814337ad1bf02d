"""Certified problem classes and the manufactured-solution suite."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Optional, Sequence, Union

import numpy as np

from . import catalog, linalg
from .jets import Jet, as_backend

Forcing = Callable[[np.ndarray], np.ndarray]
ValueFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ComplexRoot:
    """Characteristic factor ``x + lam + i*omega``."""

    lam: float
    omega: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.lam) and math.isfinite(self.omega)):
            raise ValueError(f"root must be finite, got ({self.lam}, {self.omega})")

    @property
    def value(self) -> complex:
        return complex(self.lam, self.omega)


@dataclass(frozen=True)
class Interval:
    t0: float
    t1: float

    def __post_init__(self):
        if not (math.isfinite(self.t0) and math.isfinite(self.t1)):
            raise ValueError("interval endpoints must be finite")
        if not self.t0 < self.t1:
            raise ValueError(f"need t0 < t1, got [{self.t0}, {self.t1}]")

    @property
    def length(self) -> float:
        return self.t1 - self.t0

    def contains(self, t) -> bool:
        t = np.asarray(t)
        return bool(np.all((t >= self.t0) & (t <= self.t1)))


@dataclass(frozen=True)
class JordanBlock:
    root: ComplexRoot
    size: int

    def __post_init__(self):
        if self.size < 1:
            raise ValueError("Jordan block size must be positive")


def _scalar(c: complex):
    c = complex(c)
    return c.real if c.imag == 0.0 else c


@dataclass(frozen=True, eq=False)
class FirstOrderConstant:
    """``u' + (lam + i omega) u = f``."""

    root: ComplexRoot
    u0: complex
    forcing: Optional[Forcing]
    domain: Interval

    kind = "first_order_constant"
    dim = 1
    order = 1

    @property
    def initial_conditions(self) -> np.ndarray:
        return np.array([[_scalar(self.u0)]])


@dataclass(frozen=True, eq=False)
class HigherOrderConstant:
    """``u^(n) + a_{n-1} u^(n-1) + ... + a_0 u = f`` given by its characteristic roots."""

    roots: tuple
    ics: tuple
    forcing: Optional[Forcing]
    domain: Interval

    kind = "higher_order_constant"
    dim = 1

    def __post_init__(self):
        object.__setattr__(self, "roots", tuple(self.roots))
        object.__setattr__(self, "ics", tuple(self.ics))
        if not self.roots:
            raise ValueError("need at least one characteristic root")
        if len(self.ics) != len(self.roots):
            raise ValueError(
                f"{len(self.roots)} roots need {len(self.roots)} initial conditions, "
                f"got {len(self.ics)}"
            )

    @property
    def order(self) -> int:
        return len(self.roots)

    @cached_property
    def coefficients(self) -> list:
        return [_scalar(a) for a in expand_characteristic(self.roots)]

    @property
    def initial_conditions(self) -> np.ndarray:
        return np.array([[_scalar(c)] for c in self.ics])


@dataclass(frozen=True, eq=False)
class LinearSystem:
    """``u' + M J M^-1 u = f`` with ``J`` assembled from Jordan blocks."""

    modal_matrix: np.ndarray
    blocks: tuple
    u0: np.ndarray
    forcing: Optional[Forcing]
    domain: Interval
    norm_p: float = 2

    kind = "linear_system"
    order = 1

    def __post_init__(self):
        m = np.atleast_2d(np.asarray(self.modal_matrix))
        object.__setattr__(self, "modal_matrix", m)
        object.__setattr__(self, "blocks", tuple(self.blocks))
        object.__setattr__(self, "u0", np.atleast_1d(np.asarray(self.u0)))
        n = m.shape[0]
        if m.shape != (n, n):
            raise ValueError(f"modal matrix must be square, got {m.shape}")
        if sum(b.size for b in self.blocks) != n:
            raise ValueError("Jordan block sizes must sum to the system dimension")
        if self.u0.shape != (n,):
            raise ValueError(f"u0 must have length {n}")
        c = linalg.cond(m, 2)
        if not math.isfinite(c):
            raise ValueError("modal matrix is not invertible")

    @property
    def dim(self) -> int:
        return self.modal_matrix.shape[0]

    @cached_property
    def jordan_matrix(self) -> np.ndarray:
        n = self.dim
        complex_ = any(b.root.omega != 0.0 for b in self.blocks)
        j = np.zeros((n, n), dtype=complex if complex_ else float)
        i = 0
        for b in self.blocks:
            for k in range(b.size):
                j[i + k, i + k] = _scalar(b.root.value)
                if k + 1 < b.size:
                    j[i + k, i + k + 1] = 1.0
            i += b.size
        return j

    @cached_property
    def modal_inverse(self) -> np.ndarray:
        return linalg.inverse(self.modal_matrix)

    @cached_property
    def system_matrix(self) -> np.ndarray:
        a = self.modal_matrix @ self.jordan_matrix @ self.modal_inverse
        if np.iscomplexobj(a) and not np.any(a.imag):
            a = a.real
        return a

    @property
    def initial_conditions(self) -> np.ndarray:
        return self.u0[None, :]


@dataclass(frozen=True, eq=False)
class NonconstantFirstOrder:
    """``u' + (p(t) + i q(t)) u = f`` with optional antiderivative ``P`` of ``p``."""

    p: ValueFn
    u0: complex
    forcing: Optional[Forcing]
    domain: Interval
    q: Optional[ValueFn] = None
    P: Optional[ValueFn] = None

    kind = "nonconstant_first_order"
    dim = 1
    order = 1

    @property
    def initial_conditions(self) -> np.ndarray:
        return np.array([[_scalar(self.u0)]])


OdeProblem = Union[FirstOrderConstant, HigherOrderConstant, LinearSystem, NonconstantFirstOrder]


def expand_characteristic(roots: Sequence[ComplexRoot]) -> list[complex]:
    """Coefficients ``a_0..a_{n-1}`` of the monic ``prod(x + lam_k + i omega_k)``."""
    if len(roots) < 1:
        raise ValueError("need at least one root")
    poly = np.array([1.0 + 0j])  # highest degree first
    for r in roots:
        poly = np.convolve(poly, np.array([1.0, r.value]))
    return [complex(a) for a in poly[::-1][:-1]]


def apply_operator(problem: OdeProblem, u: Sequence[Jet], t: np.ndarray) -> list:
    """``L u`` for state jets ``u`` (one jet per component) at times ``t``.

    Returns one array per component on the backend of the jets.
    """
    if len(u) != problem.dim:
        raise ValueError(f"expected {problem.dim} state components, got {len(u)}")
    if any(j.order < problem.order for j in u):
        raise ValueError(f"state jets must have order >= {problem.order}")
    if isinstance(problem, FirstOrderConstant):
        return [u[0].derivative(1) + _scalar(problem.root.value) * u[0].value]
    if isinstance(problem, HigherOrderConstant):
        n = problem.order
        out = u[0].derivative(n)
        for k, a in enumerate(problem.coefficients):
            if a != 0:
                out = out + a * u[0].derivative(k)
        return [out]
    if isinstance(problem, LinearSystem):
        a = problem.system_matrix
        out = []
        for i in range(problem.dim):
            acc = u[i].derivative(1)
            for j in range(problem.dim):
                if a[i, j] != 0:
                    acc = acc + _scalar(a[i, j]) * u[j].value
            out.append(acc)
        return out
    if isinstance(problem, NonconstantFirstOrder):
        coef = np.asarray(problem.p(t), dtype=float)
        if problem.q is not None:
            coef = coef + 1j * np.asarray(problem.q(t), dtype=float)
        return [u[0].derivative(1) + as_backend(coef, u[0].value) * u[0].value]
    raise TypeError(f"unsupported problem type {type(problem).__name__}")


def forcing_values(problem: OdeProblem, t: np.ndarray) -> np.ndarray:
    """Forcing at ``t`` as an array of shape ``(len(t), dim)``."""
    t = np.asarray(t, dtype=float)
    if problem.forcing is None:
        raise ValueError("problem has no forcing term")
    f = np.asarray(problem.forcing(t))
    return f.reshape(t.shape + (problem.dim,))


@dataclass(frozen=True, eq=False)
class ManufacturedCase:
    """A problem together with its exact solution (a jet function of time).

    ``exact`` may be ``None`` for problems loaded from a config file that only
    name a forcing term; those can be certified but not verified.
    """

    name: str
    problem: OdeProblem
    exact: Optional[Callable]
    notes: str = ""
    hidden: tuple = (32, 32)
    sample_domain: Optional[Interval] = None

    def exact_jets(self, t, order: int) -> list[Jet]:
        if self.exact is None:
            raise ValueError(f"case {self.name!r} has no exact solution")
        out = self.exact(Jet.variable(np.asarray(t, dtype=float), order))
        return [out] if isinstance(out, Jet) else list(out)


def exact_eval(case: ManufacturedCase, t) -> np.ndarray:
    """Exact solution at ``t``: shape ``(dim,)`` for scalar ``t``, else ``(N, dim)``."""
    t = np.asarray(t, dtype=float)
    domains = [case.problem.domain] + ([case.sample_domain] if case.sample_domain else [])
    if not any(d.contains(t) for d in domains):
        raise ValueError(f"t outside the domain of {case.name!r}")
    vals = [np.broadcast_to(j.value, t.shape) for j in case.exact_jets(t, 0)]
    return np.stack(vals, axis=-1)


def derived_forcing(problem: OdeProblem, exact: Callable) -> Forcing:
    """Forcing ``f := L(u_exact)`` computed through jets."""

    def forcing(t):
        t = np.asarray(t, dtype=float)
        out = exact(Jet.variable(t, problem.order))
        comps = [out] if isinstance(out, Jet) else list(out)
        vals = apply_operator(problem, comps, t)
        return np.stack([np.broadcast_to(v, t.shape) for v in vals], axis=-1)

    return forcing


def manufacture(name: str, problem: OdeProblem, exact: Callable, **kw) -> ManufacturedCase:
    problem = dataclasses.replace(problem, forcing=derived_forcing(problem, exact))
    return ManufacturedCase(name=name, problem=problem, exact=exact, **kw)


def operator_self_check(case: ManufacturedCase, probes: int = 100) -> float:
    """Max ``|L(exact) - f|`` over uniformly spaced probes of the domain."""
    if case.exact is None:
        raise ValueError(f"case {case.name!r} has no exact solution")
    d = case.problem.domain
    t = np.linspace(d.t0, d.t1, probes)
    lhs = derived_forcing(case.problem, case.exact)(t)
    return float(np.max(np.abs(lhs - forcing_values(case.problem, t))))


def _modal_exact(m: np.ndarray, modal: Callable) -> Callable:
    def exact(t: Jet) -> list[Jet]:
        v = modal(t)
        out = []
        for i in range(m.shape[0]):
            acc = v[0] * float(m[i, 0])
            for j in range(1, m.shape[1]):
                acc = acc + v[j] * float(m[i, j])
            out.append(acc)
        return out

    return exact


def manufactured_suite(seed: int = 42) -> list[ManufacturedCase]:
    """The 17 manufactured-solution experiments (4 + 8 + 4 + 1)."""
    dom = Interval(0.0, 3.0)
    lookup = catalog.lookup
    cases = []

    fo = FirstOrderConstant(ComplexRoot(3.0), 2.0, None, dom)
    for name, expr in [
        ("fo-poly", "exp(-3t)+t^2+t+1"),
        ("fo-trig", "exp(-3t)+sin(3t)+cos(3t)"),
        ("fo-exp", "exp(-3t)+exp(t)"),
        ("fo-log", "exp(-3t)-3log(t+1)+1/(t+1)"),
    ]:
        cases.append(manufacture(name, fo, lookup(expr), notes=f"u' + 3u = f, u = {expr}"))

    osc = (ComplexRoot(0.0, 1.0), ComplexRoot(0.0, -1.0))
    for name, expr, ics in [
        ("ho-osc-exp", "sin(t)+cos(t)+exp(t)", (2.0, 2.0)),
        ("ho-osc-poly", "sin(t)+cos(t)+t^2+t+1", (2.0, 2.0)),
        ("ho-osc-log", "sin(t)+cos(t)+log(t+1)", (1.0, 2.0)),
        ("ho-osc-sin2", "sin(t)+cos(t)+sin(t^2)", (1.0, 1.0)),
    ]:
        p = HigherOrderConstant(osc, ics, None, dom)
        cases.append(manufacture(name, p, lookup(expr), notes=f"u'' + u = f, u = {expr}"))

    decay = (ComplexRoot(1.0), ComplexRoot(3.0))
    for name, expr, ics in [
        ("ho-exp-exp", "exp(-t)+exp(-3t)+exp(t)", (3.0, -3.0)),
        ("ho-exp-poly", "exp(-t)+exp(-3t)+t^2+t+1", (3.0, -3.0)),
        ("ho-exp-log", "exp(-t)+exp(-3t)+log(t+1)", (2.0, -3.0)),
        ("ho-exp-trig", "exp(-t)+exp(-3t)+sin(t)+cos(t)", (3.0, -3.0)),
    ]:
        p = HigherOrderConstant(decay, ics, None, dom)
        cases.append(
            manufacture(name, p, lookup(expr), notes=f"u'' + 4u' + 3u = f, u = {expr}")
        )

    for name, p_expr, anti, expr, u0 in [
        ("nc-rational", "1/(t+1)", "log(t+1)", "1/(t+1)+t*cos(t)", 1.0),
        ("nc-exp", "2t/(t^2+1)", "log(t^2+1)", "1/(t^2+1)+exp(t)", 2.0),
        ("nc-sin", "cos(t)/(1+sin(t))", "log(1+sin(t))", "1/(1+sin(t))+t^2", 1.0),
        ("nc-log", "(t+2)/(t+1)", "t+log(t+1)", "exp(-t)/(t+1)+log(t+1)", 1.0),
    ]:
        p = NonconstantFirstOrder(
            p=value_fn(lookup(p_expr)), u0=u0, forcing=None, domain=dom,
            P=value_fn(lookup(anti)),
        )
        cases.append(
            manufacture(name, p, lookup(expr), notes=f"u' + ({p_expr}) u = f, u = {expr}")
        )

    m = linalg.random_orthogonal(6, seed)
    blocks = (
        JordanBlock(ComplexRoot(4.0), 3),
        JordanBlock(ComplexRoot(3.0), 2),
        JordanBlock(ComplexRoot(2.0), 1),
    )
    sys = LinearSystem(m, blocks, m @ np.ones(6), None, dom, norm_p=2)
    cases.append(
        manufacture(
            "sys-jordan6", sys, _modal_exact(m, lookup("jordan6-modal")),
            notes=f"u' + M J M^-1 u = f, random orthogonal M (seed {seed})",
            hidden=(512, 512), sample_domain=Interval(-1.0, 4.0),
        )
    )
    return cases


def value_fn(jet_fn: Callable) -> ValueFn:
    """Plain ``t -> value`` view of a catalog jet function."""

    def fn(t):
        t = np.asarray(t, dtype=float)
        return np.broadcast_to(jet_fn(Jet.variable(t, 0)).value, t.shape)

    return fn


def get_case(name: str, seed: int = 42) -> ManufacturedCase:
    for case in manufactured_suite(seed):
        if case.name == name:
            return case
    raise KeyError(f"unknown case {name!r}")


def case_names() -> list[str]:
    return [c.name for c in manufactured_suite()]
