"""TOML problem files.

A file describes one problem by naming catalog expressions::

    name = "decay"
    variant = "first_order"        # first_order | higher_order | system | nonconstant
    domain = [0.0, 3.0]
    root = 3.0                     # or [lam, omega]
    u0 = 2.0
    exact = "exp(-3t)+t^2+t+1"     # forcing is derived from it

    [train]
    epochs = 500
    seed = 1
    hidden = [32, 32]

Without ``exact`` a ``forcing`` expression is required and the problem can be
certified but not verified.  Higher-order problems take ``roots`` and
``ics``; systems take ``blocks`` (tables with ``root`` and ``size``), ``u0``,
``modal_matrix`` (a nested list or ``"orthogonal:SEED"``) and optionally
``norm_p`` and ``exact_modal`` (the solution in modal coordinates);
nonconstant problems take ``p`` and optionally ``P`` (an antiderivative of
``p``) and ``q``.
"""

from __future__ import annotations

import sys
from dataclasses import replace
from typing import Any

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import catalog, linalg
from .candidate import ClosedFormCandidate, initial_condition_defect
from .jets import Jet
from .model import (
    ComplexRoot,
    FirstOrderConstant,
    HigherOrderConstant,
    Interval,
    JordanBlock,
    LinearSystem,
    ManufacturedCase,
    NonconstantFirstOrder,
    _modal_exact,
    manufacture,
    value_fn,
)
from .trainer import TrainConfig


class ConfigError(ValueError):
    pass


_VARIANTS = ("first_order", "higher_order", "system", "nonconstant")
_TRAIN_KEYS = {"epochs", "seed", "learning_rate", "samples_per_epoch", "validation_points",
               "sample_domain", "hidden", "beta1", "beta2", "adam_epsilon"}


def _root(x) -> ComplexRoot:
    if isinstance(x, (list, tuple)):
        if len(x) != 2:
            raise ConfigError(f"a root is a number or [lam, omega], got {x!r}")
        return ComplexRoot(float(x[0]), float(x[1]))
    return ComplexRoot(float(x))


def _complex(x) -> complex:
    if isinstance(x, (list, tuple)):
        return complex(float(x[0]), float(x[1]))
    return complex(float(x))


def _scalar(x):
    c = _complex(x)
    return c.real if c.imag == 0 else c


def _interval(x, what: str) -> Interval:
    if not isinstance(x, (list, tuple)) or len(x) != 2:
        raise ConfigError(f"{what} must be [t0, t1]")
    return Interval(float(x[0]), float(x[1]))


def _expr(name: str):
    try:
        return catalog.lookup(name)
    except KeyError as e:
        raise ConfigError(str(e)) from None


def _vector_forcing(names: list):
    fns = [_expr(n) for n in names]

    def forcing(t):
        t = np.asarray(t, dtype=float)
        jt = Jet.variable(t, 0)
        return np.stack([np.broadcast_to(f(jt).value, t.shape) for f in fns], axis=-1)

    return forcing


def _scalar_forcing(name: str):
    fn = value_fn(_expr(name))
    return lambda t: fn(t)[..., None]


def _modal_matrix(spec, n: int) -> np.ndarray:
    if isinstance(spec, str):
        kind, _, seed = spec.partition(":")
        if kind != "orthogonal" or not seed.isdigit():
            raise ConfigError(f"modal_matrix string must be 'orthogonal:SEED', got {spec!r}")
        return linalg.random_orthogonal(n, int(seed))
    m = np.array(spec, dtype=float)
    if m.shape != (n, n):
        raise ConfigError(f"modal_matrix must be {n}x{n}")
    return m


def _build_problem(doc: dict, domain: Interval):
    variant = doc.get("variant")
    if variant not in _VARIANTS:
        raise ConfigError(f"variant must be one of {_VARIANTS}, got {variant!r}")
    if variant == "first_order":
        return FirstOrderConstant(_root(doc["root"]), _scalar(doc["u0"]), None, domain)
    if variant == "higher_order":
        return HigherOrderConstant(tuple(_root(r) for r in doc["roots"]),
                                   tuple(_scalar(c) for c in doc["ics"]), None, domain)
    if variant == "system":
        blocks = tuple(JordanBlock(_root(b["root"]), int(b["size"])) for b in doc["blocks"])
        n = sum(b.size for b in blocks)
        m = _modal_matrix(doc.get("modal_matrix", "orthogonal:42"), n)
        u0 = np.array([_scalar(x) for x in doc["u0"]]) if "u0" in doc else m @ np.ones(n)
        norm = doc.get("norm_p", 2)
        norm = np.inf if norm in ("inf", "Inf") else float(norm)
        return LinearSystem(m, blocks, u0, None, domain, norm_p=norm)
    q = value_fn(_expr(doc["q"])) if "q" in doc else None
    anti = value_fn(_expr(doc["P"])) if "P" in doc else None
    return NonconstantFirstOrder(value_fn(_expr(doc["p"])), _scalar(doc["u0"]), None,
                                 domain, q=q, P=anti)


def case_from_dict(doc: dict, default_name: str = "config") -> tuple[ManufacturedCase, dict]:
    """Problem case plus the ``[train]`` table (validated, not yet applied)."""
    doc = dict(doc)
    train = dict(doc.pop("train", {}))
    unknown = set(train) - _TRAIN_KEYS
    if unknown:
        raise ConfigError(f"unknown [train] keys: {sorted(unknown)}")
    name = str(doc.get("name", default_name))
    domain = _interval(doc.get("domain", [0.0, 3.0]), "domain")
    try:
        problem = _build_problem(doc, domain)
    except KeyError as e:
        raise ConfigError(f"missing key {e.args[0]!r} for variant {doc.get('variant')!r}") from None
    hidden = tuple(int(h) for h in train.pop("hidden", (32, 32)))
    sample = train.get("sample_domain")
    sample_domain = _interval(sample, "sample_domain") if sample is not None else None
    kw = {"hidden": hidden, "sample_domain": sample_domain}

    exact = None
    if "exact" in doc:
        exact = _expr(doc["exact"])
    elif "exact_modal" in doc:
        if not isinstance(problem, LinearSystem):
            raise ConfigError("exact_modal only applies to systems")
        exact = _modal_exact(problem.modal_matrix, _expr(doc["exact_modal"]))
    if exact is not None:
        label = doc.get("exact") or doc.get("exact_modal")
        defect = initial_condition_defect(problem, ClosedFormCandidate(exact, problem.dim))
        if defect > 1e-12:
            raise ConfigError(f"exact solution {label!r} misses the initial conditions by {defect:.3g}")
        case = manufacture(name, problem, exact, notes=f"from config, exact = {label}", **kw)
        return case, train

    if "forcing" not in doc:
        raise ConfigError("need either an exact solution or a forcing expression")
    f = doc["forcing"]
    if isinstance(f, list):
        if len(f) != problem.dim:
            raise ConfigError(f"forcing needs {problem.dim} components")
        forcing = _vector_forcing(f)
    elif problem.dim == 1:
        forcing = _scalar_forcing(f)
    else:
        raise ConfigError("system forcing must be a list of expressions")
    case = ManufacturedCase(name, replace(problem, forcing=forcing), None,
                            notes="from config, forcing only", **kw)
    return case, train


def load_case(path) -> tuple[ManufacturedCase, dict]:
    with open(path, "rb") as fh:
        try:
            doc = tomllib.load(fh)
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"{path}: {e}") from None
    stem = str(path).rsplit("/", 1)[-1].rsplit(".", 1)[0]
    return case_from_dict(doc, stem)


def train_config(hints: dict[str, Any], base: TrainConfig) -> TrainConfig:
    """``base`` with the ``[train]`` hints applied."""
    kw = {k: v for k, v in hints.items() if k != "hidden"}
    if "sample_domain" in kw:
        kw["sample_domain"] = _interval(kw["sample_domain"], "sample_domain")
    return replace(base, **kw)
