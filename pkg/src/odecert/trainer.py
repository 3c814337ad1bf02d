"""Residual-loss training of MLP candidates with Adam.

Each epoch draws a fresh uniform sample, takes one full-batch Adam step on
``(|I| / N) * sum ||L u(t_i) - f(t_i)||^2`` and scores the updated weights on
a fixed validation grid.  The weights with the lowest validation loss win.
Derivatives in time come from Taylor jets built out of torch operations, so
weight gradients are plain reverse-mode autograd through the jet arithmetic.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
import torch

from .candidate import MlpCandidate, Reparametrization
from .jets import as_backend
from .model import Interval, OdeProblem, apply_operator, forcing_values

CHECKPOINT_FORMAT = "odecert-checkpoint"


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 1000
    samples_per_epoch: int = 1024
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_epsilon: float = 1e-8
    seed: int = 0
    sample_domain: Optional[Interval] = None
    validation_points: int = 512

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be nonnegative")
        if self.samples_per_epoch < 1 or self.validation_points < 2:
            raise ValueError("need at least one sample and two validation points")
        if not self.learning_rate > 0:
            raise ValueError("learning rate must be positive")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("Adam betas must lie in (0, 1)")
        if self.seed < 0:
            raise ValueError("seed must be unsigned")

    def domain_for(self, problem: OdeProblem) -> Interval:
        return self.sample_domain or problem.domain

    def to_dict(self) -> dict:
        d = asdict(self)
        if self.sample_domain is not None:
            d["sample_domain"] = [self.sample_domain.t0, self.sample_domain.t1]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if d.get("sample_domain") is not None:
            d["sample_domain"] = Interval(*d["sample_domain"])
        return cls(**d)


@dataclass
class TrainReport:
    loss_history: list = field(default_factory=list)
    validation_history: list = field(default_factory=list)
    best_epoch: int = -1  # -1: the initial weights were kept
    best_validation_loss: float = math.inf
    wall_time: float = 0.0
    diverged: bool = False
    message: str = ""

    def to_dict(self) -> dict:
        d = asdict(self)
        if not math.isfinite(self.best_validation_loss):
            d["best_validation_loss"] = None
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainReport":
        d = dict(d)
        if d.get("best_validation_loss") is None:
            d["best_validation_loss"] = math.inf
        return cls(**d)


def _torch_params(params: Sequence) -> list[tuple[torch.Tensor, torch.Tensor]]:
    return [
        (torch.tensor(w, dtype=torch.float64, requires_grad=True),
         torch.tensor(b, dtype=torch.float64, requires_grad=True))
        for w, b in params
    ]


def residual_loss_torch(problem: OdeProblem, candidate: MlpCandidate, params: Sequence,
                        t: np.ndarray, length: float) -> torch.Tensor:
    """Differentiable loss for torch ``params`` plugged into ``candidate``'s architecture."""
    tt = torch.as_tensor(t, dtype=torch.float64)
    comps = candidate.jets_with(params, tt, problem.order)
    lu = apply_operator(problem, comps, t)
    f = forcing_values(problem, t)
    total = 0
    for i, r in enumerate(lu):
        r = r - as_backend(np.ascontiguousarray(f[:, i]), r)
        total = total + (r.abs() ** 2 if r.is_complex() else r * r).sum()
    return total * (length / t.size)


def validation_grid(domain: Interval, points: int) -> np.ndarray:
    """Cell midpoints of a uniform grid; endpoints are avoided because sample
    domains may extend up to a singularity of the forcing."""
    return domain.t0 + domain.length * ((np.arange(points) + 0.5) / points)


def loss(problem: OdeProblem, candidate: MlpCandidate, sample_points, length: Optional[float] = None) -> float:
    """``(|I|/N) sum ||residual(t_i)||^2``; ``|I|`` defaults to the problem domain length."""
    t = np.asarray(sample_points, dtype=float)
    length = problem.domain.length if length is None else length
    with torch.no_grad():
        params = [(torch.as_tensor(w, dtype=torch.float64), torch.as_tensor(b, dtype=torch.float64))
                  for w, b in candidate.params()]
        return float(residual_loss_torch(problem, candidate, params, t, length))


def train(problem: OdeProblem, reparam: Reparametrization, net_shape: Sequence[int],
          config: TrainConfig, complex_output: bool = False) -> tuple[MlpCandidate, TrainReport]:
    """Train a fresh network of layer sizes ``net_shape`` (input 1, output matching the problem).

    A non-finite loss stops training; the best snapshot seen so far is
    returned and the report is flagged ``diverged``.
    """
    net_shape = list(net_shape)
    out = net_shape[-1] // 2 if complex_output else net_shape[-1]
    if net_shape[0] != 1 or out != problem.dim:
        raise ValueError(f"network shape {net_shape} does not map time to {problem.dim} outputs")
    start = time.perf_counter()
    init = MlpCandidate.init(net_shape, reparam, seed=config.seed, complex_output=complex_output)
    report = TrainReport()
    best = init
    if config.epochs == 0:
        report.wall_time = time.perf_counter() - start
        return init, report

    domain = config.domain_for(problem)
    rng = np.random.default_rng([config.seed, 1])
    val_t = validation_grid(domain, config.validation_points)
    params = _torch_params(init.params())
    flat = [p for pair in params for p in pair]
    opt = torch.optim.Adam(flat, lr=config.learning_rate,
                           betas=(config.beta1, config.beta2), eps=config.adam_epsilon)

    for epoch in range(config.epochs):
        t = np.sort(rng.uniform(domain.t0, domain.t1, config.samples_per_epoch))
        opt.zero_grad()
        value = residual_loss_torch(problem, init, params, t, domain.length)
        if not torch.isfinite(value):
            report.diverged = True
            report.message = f"non-finite training loss at epoch {epoch}"
            break
        value.backward()
        opt.step()
        report.loss_history.append(value.item())
        with torch.no_grad():
            val = float(residual_loss_torch(problem, init, params, val_t, domain.length))
        if not math.isfinite(val):
            report.diverged = True
            report.message = f"non-finite validation loss at epoch {epoch}"
            break
        report.validation_history.append(val)
        if val < report.best_validation_loss:
            report.best_validation_loss = val
            report.best_epoch = epoch
            best = init.with_params([(w.detach().numpy(), b.detach().numpy()) for w, b in params])

    report.wall_time = time.perf_counter() - start
    return best, report


def save_checkpoint(path, candidate: MlpCandidate, report: TrainReport,
                    config: Optional[TrainConfig] = None, case: Optional[str] = None):
    doc = {
        "format": CHECKPOINT_FORMAT,
        "case": case,
        "candidate": candidate.snapshot(),
        "digest": candidate.digest(),
        "report": report.to_dict(),
        "config": None if config is None else config.to_dict(),
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_checkpoint(path) -> tuple[MlpCandidate, Optional[TrainReport], dict]:
    """Read a checkpoint (or a bare candidate snapshot)."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") == CHECKPOINT_FORMAT:
        cand = MlpCandidate.from_snapshot(doc["candidate"])
        report = TrainReport.from_dict(doc["report"]) if doc.get("report") else None
        return cand, report, doc
    return MlpCandidate.from_snapshot(doc), None, {"candidate": doc}


def with_epochs(config: TrainConfig, epochs: int) -> TrainConfig:
    return replace(config, epochs=epochs)
