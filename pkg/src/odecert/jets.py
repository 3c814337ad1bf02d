"""Truncated Taylor arithmetic for functions of a single scalar variable.

A :class:`Jet` stores the Taylor coefficients ``c[k] = u^(k)(t) / k!`` of a
function at one or many evaluation points.  Each coefficient may be a Python
scalar, a numpy array or a torch tensor; all arithmetic below only uses
elementwise operators plus ``exp/log/sin/cos/tanh`` looked up on the matching
backend, so the same code serves closed-form evaluation (numpy) and network
training (torch autograd).
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

MAX_ORDER = 6

try:  # torch is only needed for training; evaluation works without it
    import torch as _torch
except ImportError:  # pragma: no cover
    _torch = None


def _lib(x):
    if _torch is not None and isinstance(x, _torch.Tensor):
        return _torch
    return np


def _zero_like(x):
    return x * 0


class Jet:
    """Taylor coefficients of a scalar function at one point (or a batch)."""

    __slots__ = ("coeffs",)

    def __init__(self, coeffs: Sequence):
        coeffs = list(coeffs)
        if not coeffs:
            raise ValueError("a jet needs at least one coefficient")
        self.coeffs = coeffs

    @classmethod
    def variable(cls, t, order: int) -> "Jet":
        """The identity function ``t -> t`` expanded at ``t``."""
        if order < 0 or order > MAX_ORDER:
            raise ValueError(f"jet order must be in [0, {MAX_ORDER}], got {order}")
        zero = _zero_like(t)
        coeffs = [t]
        if order >= 1:
            coeffs.append(zero + 1.0)
        coeffs.extend(zero for _ in range(order - 1))
        return cls(coeffs)

    @classmethod
    def constant(cls, value, order: int, like=None) -> "Jet":
        zero = 0.0 if like is None else _zero_like(like)
        return cls([zero + value] + [zero] * order)

    @property
    def order(self) -> int:
        return len(self.coeffs) - 1

    @property
    def value(self):
        return self.coeffs[0]

    def derivative(self, k: int):
        """k-th derivative, i.e. ``k! * coeffs[k]``."""
        return self.coeffs[k] * math.factorial(k)

    def derivatives(self) -> list:
        return [self.derivative(k) for k in range(len(self.coeffs))]

    def truncate(self, order: int) -> "Jet":
        return Jet(self.coeffs[: order + 1])

    def __repr__(self) -> str:
        return f"Jet(order={self.order}, coeffs={self.coeffs!r})"

    # arithmetic ---------------------------------------------------------

    def _pair(self, other):
        if isinstance(other, Jet):
            n = min(len(self.coeffs), len(other.coeffs))
            return self.coeffs[:n], other.coeffs[:n]
        zero = _zero_like(self.coeffs[0])
        return self.coeffs, [other + zero] + [zero] * (len(self.coeffs) - 1)

    def __add__(self, other):
        a, b = self._pair(other)
        return Jet([x + y for x, y in zip(a, b)])

    __radd__ = __add__

    def __sub__(self, other):
        a, b = self._pair(other)
        return Jet([x - y for x, y in zip(a, b)])

    def __rsub__(self, other):
        return (-self) + other

    def __neg__(self):
        return Jet([-c for c in self.coeffs])

    def __mul__(self, other):
        if not isinstance(other, Jet):
            return Jet([c * other for c in self.coeffs])
        a, b = self._pair(other)
        out = []
        for k in range(len(a)):
            acc = a[0] * b[k]
            for j in range(1, k + 1):
                acc = acc + a[j] * b[k - j]
            out.append(acc)
        return Jet(out)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, Jet):
            return Jet([c / other for c in self.coeffs])
        a, b = self._pair(other)
        q = []
        for k in range(len(a)):
            acc = a[k]
            for j in range(1, k + 1):
                acc = acc - b[j] * q[k - j]
            q.append(acc / b[0])
        return Jet(q)

    def __rtruediv__(self, other):
        return Jet.constant(other, self.order, like=self.coeffs[0]) / self

    def __pow__(self, n: int):
        if not isinstance(n, int):
            raise TypeError("only integer powers are supported")
        if n < 0:
            return 1.0 / (self ** (-n))
        result = Jet.constant(1.0, self.order, like=self.coeffs[0])
        base = self
        while n:
            if n & 1:
                result = result * base
            base = base * base
            n >>= 1
        return result


def exp(a: Jet) -> Jet:
    c = a.coeffs
    y = [_lib(c[0]).exp(c[0])]
    for k in range(1, len(c)):
        acc = c[1] * y[k - 1]
        for j in range(2, k + 1):
            acc = acc + j * c[j] * y[k - j]
        y.append(acc / k)
    return Jet(y)


def log(a: Jet) -> Jet:
    c = a.coeffs
    y = [_lib(c[0]).log(c[0])]
    for k in range(1, len(c)):
        acc = c[k]
        for j in range(1, k):
            acc = acc - (j / k) * y[j] * c[k - j]
        y.append(acc / c[0])
    return Jet(y)


def _sincos(a: Jet) -> tuple[Jet, Jet]:
    c = a.coeffs
    lib = _lib(c[0])
    s = [lib.sin(c[0])]
    co = [lib.cos(c[0])]
    for k in range(1, len(c)):
        sk = c[1] * co[k - 1]
        ck = c[1] * s[k - 1]
        for j in range(2, k + 1):
            sk = sk + j * c[j] * co[k - j]
            ck = ck + j * c[j] * s[k - j]
        s.append(sk / k)
        co.append(-ck / k)
    return Jet(s), Jet(co)


def sin(a: Jet) -> Jet:
    return _sincos(a)[0]


def cos(a: Jet) -> Jet:
    return _sincos(a)[1]


def tanh(a: Jet) -> Jet:
    # y' = (1 - y^2) a'
    c = a.coeffs
    y = [_lib(c[0]).tanh(c[0])]
    z = [1.0 - y[0] * y[0]]
    for k in range(1, len(c)):
        acc = c[1] * z[k - 1]
        for j in range(2, k + 1):
            acc = acc + j * c[j] * z[k - j]
        y.append(acc / k)
        zk = y[0] * y[k]
        for j in range(1, k + 1):
            zk = zk + y[j] * y[k - j]
        z.append(-zk)
    return Jet(y)


JetFunction = Callable[[Jet], "Jet | list[Jet]"]


def evaluate(fn: JetFunction, t, order: int = 0):
    """Evaluate a jet function at ``t`` and return its derivatives up to ``order``.

    Returns an array of shape ``(order + 1, *shape(t))`` for scalar-valued
    functions and ``(order + 1, *shape(t), dim)`` for vector-valued ones.
    """
    t = np.asarray(t, dtype=float)
    out = fn(Jet.variable(t, order))
    if isinstance(out, Jet):
        return np.stack([np.broadcast_to(d, t.shape) for d in out.derivatives()])
    comps = [[np.broadcast_to(d, t.shape) for d in j.derivatives()] for j in out]
    return np.stack([np.stack(level, axis=-1) for level in zip(*comps)])


def as_backend(values, like):
    """Convert a numpy array to the backend (and device) of ``like``."""
    if _torch is not None and isinstance(like, _torch.Tensor):
        values = np.array(values)
        dtype = _torch.complex128 if np.iscomplexobj(values) else like.dtype
        return _torch.as_tensor(values, dtype=dtype, device=like.device)
    return values
