"""Candidate approximate solutions evaluated through Taylor jets.

Three flavours share one small interface (``output_dim`` and
``jets(t, order)``):

* :class:`MlpCandidate` - a tanh multilayer perceptron wrapped in an
  initial-condition reparametrization;
* :class:`ClosedFormCandidate` - any jet function of time (exact solutions,
  hand-built perturbations);
* :func:`synthetic_constant_residual_candidate` - a closed form whose residual
  is identically a prescribed constant, used to probe bound sharpness.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from . import jets as J
from .jets import MAX_ORDER, Jet
from .model import FirstOrderConstant, OdeProblem

SNAPSHOT_FORMAT = "odecert-mlp"
SNAPSHOT_VERSION = 1

LAGARIS_LINEAR = "lagaris_linear"
EXP_FIRST_ORDER = "exp_first_order"
EXP_SECOND_ORDER = "exp_second_order"
_KINDS = (LAGARIS_LINEAR, EXP_FIRST_ORDER, EXP_SECOND_ORDER)


@dataclass(frozen=True)
class Reparametrization:
    """Map from raw network output to a function meeting the initial conditions.

    ``u0`` (and ``u0_prime``) hold one real entry per raw network output.
    """

    kind: str
    t0: float
    u0: tuple
    u0_prime: Optional[tuple] = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown reparametrization {self.kind!r}")
        object.__setattr__(self, "u0", tuple(float(x) for x in self.u0))
        if self.u0_prime is not None:
            object.__setattr__(self, "u0_prime", tuple(float(x) for x in self.u0_prime))
        if self.kind == EXP_SECOND_ORDER:
            if self.u0_prime is None:
                raise ValueError("exp_second_order needs u0_prime")
            if len(self.u0_prime) != len(self.u0):
                raise ValueError("u0 and u0_prime lengths differ")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "t0": self.t0,
            "u0": list(self.u0),
            "u0_prime": None if self.u0_prime is None else list(self.u0_prime),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Reparametrization":
        return cls(d["kind"], float(d["t0"]), tuple(d["u0"]), d.get("u0_prime"))


def reparametrize(raw: Sequence[Jet], reparam: Reparametrization, t) -> list[Jet]:
    """Apply ``reparam`` to raw network jets evaluated at ``t``."""
    if len(raw) != len(reparam.u0):
        raise ValueError(f"{len(raw)} network outputs but {len(reparam.u0)} initial values")
    s = Jet.variable(t, raw[0].order) - reparam.t0
    if reparam.kind == LAGARIS_LINEAR:
        return [u0 + s * nn for nn, u0 in zip(raw, reparam.u0)]
    if reparam.kind == EXP_FIRST_ORDER:
        factor = 1.0 - J.exp(-s)
        return [u0 + factor * nn for nn, u0 in zip(raw, reparam.u0)]
    factor = 1.0 - J.exp(-(s * s))
    return [
        u0 + s * du0 + factor * nn
        for nn, u0, du0 in zip(raw, reparam.u0, reparam.u0_prime)
    ]


def default_reparametrization(problem: OdeProblem, t0: Optional[float] = None) -> Reparametrization:
    """Exponential reparametrization matching the problem's initial conditions.

    Complex initial values are split into real and imaginary network outputs.
    """
    t0 = problem.domain.t0 if t0 is None else t0
    ics = np.asarray(problem.initial_conditions)
    if np.iscomplexobj(ics):
        ics = np.concatenate([ics.real, ics.imag], axis=1)
    if problem.order == 1:
        return Reparametrization(EXP_FIRST_ORDER, t0, tuple(ics[0]))
    if problem.order == 2:
        return Reparametrization(EXP_SECOND_ORDER, t0, tuple(ics[0]), tuple(ics[1]))
    raise ValueError(
        f"no reparametrization enforces {problem.order} initial conditions; "
        "supply a closed-form candidate instead"
    )


def _combine(comps: list[Jet], complex_output: bool) -> list[Jet]:
    if not complex_output:
        return comps
    half = len(comps) // 2
    return [re + im * 1j for re, im in zip(comps[:half], comps[half:])]


def _concat(chunks: list[list[Jet]]) -> list[Jet]:
    if len(chunks) == 1:
        return chunks[0]
    out = []
    for comp in zip(*chunks):
        out.append(Jet([np.concatenate(level) for level in zip(*(j.coeffs for j in comp))]))
    return out


@dataclass(eq=False)
class Layer:
    weights: np.ndarray  # (out, in)
    biases: np.ndarray  # (out,)


def mlp_forward(params: Sequence, t, order: int) -> list[Jet]:
    """Jets of a tanh MLP ``R -> R^m`` at the points ``t``.

    ``params`` is a sequence of ``(weights, biases)`` pairs, numpy or torch.
    """
    coeffs = Jet.variable(t[:, None], order).coeffs
    last = len(params) - 1
    for i, (w, b) in enumerate(params):
        coeffs = [c @ w.T for c in coeffs]
        coeffs[0] = coeffs[0] + b
        if i < last:
            coeffs = J.tanh(Jet(coeffs)).coeffs
    width = params[-1][0].shape[0]
    return [Jet([c[:, k] for c in coeffs]) for k in range(width)]


class MlpCandidate:
    """Frozen tanh network plus reparametrization."""

    activation = "tanh"
    chunk = 4096

    def __init__(self, layers: Sequence[Layer], reparam: Reparametrization,
                 complex_output: bool = False):
        layers = [Layer(np.asarray(l.weights, dtype=float), np.asarray(l.biases, dtype=float))
                  for l in layers]
        if not layers:
            raise ValueError("need at least one layer")
        if layers[0].weights.shape[1] != 1:
            raise ValueError("the network input must be scalar time")
        for a, b in zip(layers, layers[1:]):
            if b.weights.shape[1] != a.weights.shape[0]:
                raise ValueError("layer shapes do not chain")
        for l in layers:
            if l.biases.shape != (l.weights.shape[0],):
                raise ValueError("bias length does not match layer width")
        raw_out = layers[-1].weights.shape[0]
        if len(reparam.u0) != raw_out:
            raise ValueError("reparametrization size does not match network output")
        if complex_output and raw_out % 2:
            raise ValueError("complex output needs an even number of raw outputs")
        self.layers = layers
        self.reparam = reparam
        self.complex_output = complex_output

    @classmethod
    def init(cls, sizes: Sequence[int], reparam: Reparametrization, seed: int = 0,
             complex_output: bool = False) -> "MlpCandidate":
        """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases."""
        rng = np.random.default_rng(seed)
        layers = []
        for fan_in, fan_out in zip(sizes, sizes[1:]):
            bound = np.sqrt(1.0 / fan_in)
            w = rng.uniform(-bound, bound, size=(fan_out, fan_in))
            b = rng.uniform(-bound, bound, size=fan_out)
            layers.append(Layer(w, b))
        return cls(layers, reparam, complex_output)

    @property
    def sizes(self) -> list[int]:
        return [self.layers[0].weights.shape[1]] + [l.weights.shape[0] for l in self.layers]

    @property
    def output_dim(self) -> int:
        raw = self.layers[-1].weights.shape[0]
        return raw // 2 if self.complex_output else raw

    def params(self) -> list[tuple[np.ndarray, np.ndarray]]:
        return [(l.weights, l.biases) for l in self.layers]

    def jets_with(self, params: Sequence, t, order: int) -> list[Jet]:
        """Reparametrized jets for externally supplied (e.g. torch) parameters."""
        raw = mlp_forward(params, t, order)
        return _combine(reparametrize(raw, self.reparam, t), self.complex_output)

    def jets(self, t, order: int) -> list[Jet]:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        params = self.params()
        chunks = [
            self.jets_with(params, t[i:i + self.chunk], order)
            for i in range(0, t.size, self.chunk)
        ]
        return _concat(chunks)

    def with_params(self, params: Sequence) -> "MlpCandidate":
        layers = [Layer(np.array(w, dtype=float), np.array(b, dtype=float)) for w, b in params]
        return MlpCandidate(layers, self.reparam, self.complex_output)

    # snapshot format -------------------------------------------------------

    def snapshot(self) -> dict:
        return {
            "format": SNAPSHOT_FORMAT,
            "version": SNAPSHOT_VERSION,
            "activation": self.activation,
            "complex_output": self.complex_output,
            "reparam": self.reparam.to_dict(),
            "layers": [
                {
                    "shape": list(l.weights.shape),
                    "weights": [float(x) for x in l.weights.ravel(order="C")],
                    "biases": [float(x) for x in l.biases],
                }
                for l in self.layers
            ],
        }

    @classmethod
    def from_snapshot(cls, snap: dict) -> "MlpCandidate":
        if snap.get("format") != SNAPSHOT_FORMAT:
            raise ValueError("not an MLP candidate snapshot")
        if snap.get("version") != SNAPSHOT_VERSION:
            raise ValueError(f"unsupported snapshot version {snap.get('version')!r}")
        if snap.get("activation", "tanh") != "tanh":
            raise ValueError("only tanh networks are supported")
        layers = []
        for l in snap["layers"]:
            w = np.array(l["weights"], dtype=float).reshape(l["shape"])
            layers.append(Layer(w, np.array(l["biases"], dtype=float)))
        return cls(layers, Reparametrization.from_dict(snap["reparam"]),
                   bool(snap.get("complex_output", False)))

    def digest(self) -> str:
        return snapshot_digest(self.snapshot())


def snapshot_digest(snap: dict) -> str:
    blob = json.dumps(snap, sort_keys=True, separators=(",", ":")).encode()
    return "sha256:" + hashlib.sha256(blob).hexdigest()


class ClosedFormCandidate:
    """Candidate given by a jet function of time."""

    def __init__(self, fn: Callable, output_dim: int = 1, label: str = "closed-form"):
        self.fn = fn
        self.output_dim = output_dim
        self.label = label

    def jets(self, t, order: int) -> list[Jet]:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = self.fn(Jet.variable(t, order))
        comps = [out] if isinstance(out, Jet) else list(out)
        if len(comps) != self.output_dim:
            raise ValueError("closed form returned the wrong number of components")
        return comps

    def digest(self) -> str:
        return "closed-form:" + self.label


def jet_eval(candidate, t, order: int) -> list[Jet]:
    """Jets of every output component, so that ``coeffs[k] * k!`` is the k-th derivative."""
    if order < 0 or order > MAX_ORDER:
        raise ValueError(f"jet order must be in [0, {MAX_ORDER}], got {order}")
    return candidate.jets(t, order)


def synthetic_constant_residual_candidate(problem: FirstOrderConstant, epsilon: float,
                                          exact: Callable) -> ClosedFormCandidate:
    """``u*(t) + eps (1 - exp(-lam (t - t0))) / lam``: residual is exactly ``eps``.

    ``exact`` is the jet function of the problem's exact solution.
    """
    if not isinstance(problem, FirstOrderConstant):
        raise TypeError("synthetic candidates need a first-order constant-coefficient problem")
    if problem.root.omega != 0.0:
        raise ValueError("synthetic candidate requires omega == 0")
    lam, t0 = problem.root.lam, problem.domain.t0

    def fn(t: Jet) -> Jet:
        s = t - t0
        if lam == 0.0:
            dev = s * epsilon
        else:
            dev = (1.0 - J.exp(s * (-lam))) * (epsilon / lam)
        return exact(t) + dev

    return ClosedFormCandidate(fn, 1, label=f"constant-residual(eps={epsilon!r})")


def initial_condition_defect(problem: OdeProblem, candidate) -> float:
    """Largest mismatch between the candidate and the problem's initial data."""
    n = problem.order
    t0 = np.array([problem.domain.t0])
    comps = candidate.jets(t0, max(n - 1, 0))
    ics = np.asarray(problem.initial_conditions)  # (n, dim)
    worst = 0.0
    for k in range(n):
        got = np.array([np.asarray(c.derivative(k))[0] for c in comps])
        worst = max(worst, float(np.max(np.abs(got - ics[k]))))
    return worst

