"""Registered expression catalog.

Config files refer to forcing terms, exact solutions and variable
coefficients by name; every entry is a jet function ``T -> Jet`` (or a list
of jets for vector-valued entries) so that derivatives come for free.
"""

from __future__ import annotations

from typing import Callable

from . import jets as J
from .jets import Jet

CATALOG: dict[str, Callable] = {}


def register(name: str):
    def deco(fn):
        if name in CATALOG:
            raise ValueError(f"duplicate catalog entry {name!r}")
        CATALOG[name] = fn
        return fn

    return deco


def lookup(name: str) -> Callable:
    try:
        return CATALOG[name]
    except KeyError:
        raise KeyError(f"unknown catalog expression {name!r}") from None


def _sc(t: Jet) -> Jet:
    return J.sin(t) + J.cos(t)


# elementary -------------------------------------------------------------

register("0")(lambda t: t * 0.0)
register("1")(lambda t: t * 0.0 + 1.0)
register("t")(lambda t: t)
register("exp(t)")(J.exp)
register("sin(t)")(J.sin)
register("cos(t)")(J.cos)
register("log(t+1)")(lambda t: J.log(t + 1.0))

# first-order constant coefficient: u' + 3u = f, u(0) = 2

register("exp(-3t)+t^2+t+1")(lambda t: J.exp(-3.0 * t) + t * t + t + 1.0)
register("exp(-3t)+sin(3t)+cos(3t)")(
    lambda t: J.exp(-3.0 * t) + J.sin(3.0 * t) + J.cos(3.0 * t)
)
register("exp(-3t)+exp(t)")(lambda t: J.exp(-3.0 * t) + J.exp(t))
register("exp(-3t)-3log(t+1)+1/(t+1)")(
    lambda t: J.exp(-3.0 * t) - 3.0 * J.log(t + 1.0) + 1.0 / (t + 1.0)
)

# second-order: u'' + u = f

register("sin(t)+cos(t)+exp(t)")(lambda t: _sc(t) + J.exp(t))
register("sin(t)+cos(t)+t^2+t+1")(lambda t: _sc(t) + t * t + t + 1.0)
register("sin(t)+cos(t)+log(t+1)")(lambda t: _sc(t) + J.log(t + 1.0))
register("sin(t)+cos(t)+sin(t^2)")(lambda t: _sc(t) + J.sin(t * t))

# second-order: u'' + 4u' + 3u = f


def _decay(t: Jet) -> Jet:
    return J.exp(-t) + J.exp(-3.0 * t)


register("exp(-t)+exp(-3t)+exp(t)")(lambda t: _decay(t) + J.exp(t))
register("exp(-t)+exp(-3t)+t^2+t+1")(lambda t: _decay(t) + t * t + t + 1.0)
register("exp(-t)+exp(-3t)+log(t+1)")(lambda t: _decay(t) + J.log(t + 1.0))
register("exp(-t)+exp(-3t)+sin(t)+cos(t)")(lambda t: _decay(t) + _sc(t))

# nonconstant coefficients: u' + p(t) u = f

register("1/(t+1)")(lambda t: 1.0 / (t + 1.0))
register("2t/(t^2+1)")(lambda t: 2.0 * t / (t * t + 1.0))
register("cos(t)/(1+sin(t))")(lambda t: J.cos(t) / (1.0 + J.sin(t)))
register("(t+2)/(t+1)")(lambda t: (t + 2.0) / (t + 1.0))

register("log(t^2+1)")(lambda t: J.log(t * t + 1.0))
register("log(1+sin(t))")(lambda t: J.log(1.0 + J.sin(t)))
register("t+log(t+1)")(lambda t: t + J.log(t + 1.0))

register("1/(t+1)+t*cos(t)")(lambda t: 1.0 / (t + 1.0) + t * J.cos(t))
register("1/(t^2+1)+exp(t)")(lambda t: 1.0 / (t * t + 1.0) + J.exp(t))
register("1/(1+sin(t))+t^2")(lambda t: 1.0 / (1.0 + J.sin(t)) + t * t)
register("exp(-t)/(t+1)+log(t+1)")(lambda t: J.exp(-t) / (t + 1.0) + J.log(t + 1.0))


# six-dimensional Jordan system, modal coordinates v = M^-1 u.
# Particular part solves v' + J v = g for the tabulated g with v_p(0) = 0;
# homogeneous part is exp(-J t) (1, ..., 1).


@register("jordan6-modal")
def _jordan6_modal(t: Jet) -> list[Jet]:
    e4, e3, e2 = J.exp(-4.0 * t), J.exp(-3.0 * t), J.exp(-2.0 * t)
    return [
        J.sin(t) + e4 * (1.0 - t + 0.5 * t * t),
        J.exp(t) - 1.0 + e4 * (1.0 - t),
        t * t + e4,
        t * t * t + e3 * (1.0 - t),
        J.exp(2.0 * t) - 1.0 + e3,
        J.log(t + 1.0) + e2,
    ]
