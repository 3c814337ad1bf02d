"""End-to-end experiments: train (or load) a candidate, certify it, verify it.

A :class:`Certificate` bundles the residual profiles, the bound curves on a
shared evaluation grid and, when the exact solution is known, the measured
error together with a verdict.  Serialized certificates and CSVs contain no
timing information, so equal seeds give byte-identical files.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from . import __version__
from .bounds import CertificationError, bound_curve
from .candidate import MlpCandidate, default_reparametrization, initial_condition_defect
from .model import (
    FirstOrderConstant,
    HigherOrderConstant,
    LinearSystem,
    ManufacturedCase,
    NonconstantFirstOrder,
    exact_eval,
    get_case,
    manufactured_suite,
)
from .residual import GridDiagnostic, check_nested, nested_profiles, problem_norm, uniform_points
from .trainer import TrainConfig, TrainReport, train

SCHEMA_VERSION = 1
VERIFY_SLACK = 1e-9
IC_TOLERANCE = 1e-12
DEFAULT_LEVELS = (1, 10, 100)
DEFAULT_EVAL_GRID = 1000
QUICK_EPOCHS = 100
FULL_EPOCHS = 1000

CERTIFIED_AND_VERIFIED = "CERTIFIED_AND_VERIFIED"
CERTIFIED_ONLY = "CERTIFIED_ONLY"
VIOLATION = "VIOLATION"


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def problem_summary(problem) -> dict:
    d = {
        "kind": problem.kind,
        "dim": problem.dim,
        "order": problem.order,
        "domain": [problem.domain.t0, problem.domain.t1],
    }
    if isinstance(problem, FirstOrderConstant):
        d["root"] = [problem.root.lam, problem.root.omega]
    elif isinstance(problem, HigherOrderConstant):
        d["roots"] = [[r.lam, r.omega] for r in problem.roots]
    elif isinstance(problem, LinearSystem):
        d["blocks"] = [{"root": [b.root.lam, b.root.omega], "size": b.size} for b in problem.blocks]
        d["norm_p"] = "inf" if problem.norm_p == np.inf else problem.norm_p
    elif isinstance(problem, NonconstantFirstOrder):
        d["antiderivative_supplied"] = problem.P is not None
    return d


@dataclass(eq=False)
class Certificate:
    case_name: str
    problem: dict
    candidate_digest: str
    levels: tuple
    profiles: dict
    bound_curves: dict
    times: np.ndarray
    error_curve: Optional[np.ndarray]
    verdict: str
    grid_diagnostic: GridDiagnostic
    training: Optional[dict] = None
    notes: list = field(default_factory=list)

    @property
    def max_error(self) -> Optional[float]:
        return None if self.error_curve is None else float(self.error_curve.max())

    def margin(self, level: int) -> Optional[float]:
        """Smallest ``bound - error`` over the evaluation grid."""
        if self.error_curve is None:
            return None
        return float(np.min(self.bound_curves[level].values - self.error_curve))

    def curves_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t"] + [f"bound_{n}" for n in self.levels] + ["abs_error"])
        for i, t in enumerate(self.times):
            row = [_fmt(t)] + [_fmt(self.bound_curves[n].values[i]) for n in self.levels]
            row.append("" if self.error_curve is None else _fmt(self.error_curve[i]))
            w.writerow(row)
        return buf.getvalue()

    def to_dict(self) -> dict:
        curves_digest = "sha256:" + hashlib.sha256(self.curves_csv().encode()).hexdigest()
        return {
            "schema_version": SCHEMA_VERSION,
            "generator": f"odecert {__version__}",
            "case": self.case_name,
            "problem": self.problem,
            "candidate_digest": self.candidate_digest,
            "verdict": self.verdict,
            "verification_slack": VERIFY_SLACK,
            "eval_points": int(self.times.size),
            "levels": [
                {
                    "cells": n,
                    "theorem": self.bound_curves[n].theorem_tag,
                    "kind": self.bound_curves[n].kind,
                    "grid_per_cell": self.profiles[n].grid_per_cell,
                    "norm_p": _norm_label(self.profiles[n].norm_p),
                    "epsilon": self.profiles[n].epsilon,
                    "cell_epsilons": [float(e) for e in self.profiles[n].eps],
                    "max_bound": float(self.bound_curves[n].values.max()),
                    "final_bound": float(self.bound_curves[n].values[-1]),
                    "min_margin": self.margin(n),
                }
                for n in self.levels
            ],
            "max_error": self.max_error,
            "grid_diagnostic": self.grid_diagnostic.to_dict(),
            "training": self.training,
            "notes": list(self.notes),
            "curves_sha256": curves_digest,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def write(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_text(out / "curves.csv", self.curves_csv())
        for n in self.levels:
            _write_text(out / f"bound_curve_{n}.csv", self.bound_curves[n].to_csv())
            _write_text(out / f"residual_profile_{n}.csv", self.profiles[n].to_csv())
        _write_text(out / "certificate.json", self.to_json())
        return out


def _norm_label(p):
    return "inf" if p == np.inf else p


def _write_text(path: Path, text: str):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def measured_error(case: ManufacturedCase, candidate, times: np.ndarray) -> np.ndarray:
    """``|u - u*|`` (the problem's p-norm for systems) at ``times``."""
    got = np.stack([np.asarray(c.value) for c in candidate.jets(times, 0)], axis=-1)
    diff = got - exact_eval(case, times)
    if diff.shape[-1] == 1:
        return np.abs(diff[:, 0])
    return np.linalg.norm(diff, ord=problem_norm(case.problem), axis=-1)


def training_summary(report: TrainReport, config: TrainConfig) -> dict:
    return {
        "epochs": config.epochs,
        "seed": config.seed,
        "best_epoch": report.best_epoch,
        "best_validation_loss": report.to_dict()["best_validation_loss"],
        "final_training_loss": report.loss_history[-1] if report.loss_history else None,
        "diverged": report.diverged,
    }


def train_case(case: ManufacturedCase, config: TrainConfig) -> tuple[MlpCandidate, TrainReport]:
    problem = case.problem
    if config.sample_domain is None and case.sample_domain is not None:
        config = replace(config, sample_domain=case.sample_domain)
    reparam = default_reparametrization(problem)
    complex_output = np.iscomplexobj(problem.initial_conditions)
    width = 2 * problem.dim if complex_output else problem.dim
    return train(problem, reparam, [1, *case.hidden, width], config, complex_output)


def run_case(case: ManufacturedCase, train_config: Optional[TrainConfig] = None,
             partition_levels: Sequence[int] = DEFAULT_LEVELS,
             eval_grid: int = DEFAULT_EVAL_GRID, grid_per_cell: int = 256,
             candidate=None, report: Optional[TrainReport] = None) -> Certificate:
    """Certify ``candidate`` (trained here when omitted) on every partition level."""
    levels = tuple(check_nested(partition_levels))
    if eval_grid < 2:
        raise ValueError("eval_grid must be at least 2")
    problem = case.problem
    training = None
    notes = []
    diverged = False
    if candidate is None:
        config = train_config or TrainConfig()
        candidate, report = train_case(case, config)
        training = training_summary(report, config)
        diverged = report.diverged
    elif report is not None:
        diverged = report.diverged
    if diverged:
        notes.append(f"training diverged: {report.message}")

    defect = initial_condition_defect(problem, candidate)
    if defect > IC_TOLERANCE:
        raise CertificationError(
            f"candidate misses the initial conditions by {defect:.3e}; bounds assume an exact start"
        )

    profiles, diag = nested_profiles(problem, candidate, levels, grid_per_cell)
    if diag.grid_sensitive:
        notes.append("grid-sensitive: residual estimate moved by more than 1% across grid densities")
    times = uniform_points(problem.domain, eval_grid - 1)
    finest = profiles[levels[-1]].partition
    curves = {n: bound_curve(problem, profiles[n], times, atomic=finest) for n in levels}

    error = None
    if case.exact is not None:
        error = measured_error(case, candidate, times)
    if error is not None and any(
        np.any(error > curves[n].values + VERIFY_SLACK) for n in levels
    ):
        verdict = VIOLATION
    elif error is None or diverged:
        verdict = CERTIFIED_ONLY
    else:
        verdict = CERTIFIED_AND_VERIFIED

    digest = candidate.digest()
    return Certificate(case.name, problem_summary(problem), digest, levels, profiles, curves,
                       times, error, verdict, diag, training, notes)


# suite ---------------------------------------------------------------------


def worker_count() -> int:
    env = os.environ.get("ODE_CERTIFY_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ValueError(f"ODE_CERTIFY_THREADS must be an integer, got {env!r}") from None
        return max(n, 1)
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)


def _run_named(name: str, epochs: int, seed: int, levels: tuple, eval_grid: int,
               grid_per_cell: int, out_dir: Optional[str]) -> Certificate:
    import torch

    # one intra-op thread everywhere so serial and pooled runs agree bit-for-bit
    previous = torch.get_num_threads()
    torch.set_num_threads(1)
    try:
        cert = run_case(get_case(name), TrainConfig(epochs=epochs, seed=seed), levels,
                        eval_grid, grid_per_cell)
    finally:
        torch.set_num_threads(previous)
    if out_dir is not None:
        cert.write(Path(out_dir) / name)
    return cert


SUMMARY_COLUMNS = ["case", "verdict", "epsilon_1", "epsilon_finest", "final_bound_1",
                   "final_bound_finest", "max_error", "min_margin_finest", "grid_sensitive"]


def summary_csv(certs: Iterable[Certificate]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_COLUMNS)
    for c in certs:
        lo, hi = c.levels[0], c.levels[-1]
        w.writerow([
            c.case_name, c.verdict,
            _fmt(c.profiles[lo].epsilon), _fmt(c.profiles[hi].epsilon),
            _fmt(c.bound_curves[lo].values[-1]), _fmt(c.bound_curves[hi].values[-1]),
            "" if c.max_error is None else _fmt(c.max_error),
            "" if c.margin(hi) is None else _fmt(c.margin(hi)),
            str(c.grid_diagnostic.grid_sensitive).lower(),
        ])
    return buf.getvalue()


def run_suite(out_dir=None, epochs: int = FULL_EPOCHS, seed: int = 0,
              levels: Sequence[int] = DEFAULT_LEVELS, eval_grid: int = DEFAULT_EVAL_GRID,
              grid_per_cell: int = 256, names: Optional[Sequence[str]] = None,
              workers: Optional[int] = None) -> list[Certificate]:
    """Run every manufactured case; results come back in catalog order."""
    names = list(names) if names is not None else [c.name for c in manufactured_suite()]
    levels = tuple(check_nested(levels))
    workers = worker_count() if workers is None else max(int(workers), 1)
    out = None if out_dir is None else str(out_dir)
    args = [(n, epochs, seed, levels, eval_grid, grid_per_cell, out) for n in names]
    if workers == 1 or len(names) == 1:
        certs = [_run_named(*a) for a in args]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(names))) as pool:
            futures = [pool.submit(_run_named, *a) for a in args]
            certs = [f.result() for f in futures]
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        _write_text(Path(out_dir) / "summary.csv", summary_csv(certs))
    return certs

