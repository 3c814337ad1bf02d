"""Residual evaluation and per-cell residual sup-norm profiles.

Sup-norms are estimated as maxima over uniform grids, which can only
under-estimate the true supremum.  Profiles for nested partitions are all read
off one global grid so that refining a partition can never increase any
cell's estimate.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .jets import Jet
from .model import Interval, LinearSystem, OdeProblem, apply_operator, forcing_values

DEFAULT_GRID = 256


def uniform_points(interval: Interval, n: int) -> np.ndarray:
    """``n + 1`` evenly spaced points; index ``i`` is ``t0 + L * (i / n)`` exactly.

    Using the same formula everywhere makes cut points of nested partitions
    and grid points coincide bit-for-bit.
    """
    if n < 1:
        raise ValueError("need at least one subdivision")
    i = np.arange(n + 1)
    pts = interval.t0 + interval.length * (i / n)
    pts[-1] = interval.t1
    return pts


@dataclass(frozen=True, eq=False)
class Partition:
    interval: Interval
    cuts: np.ndarray

    def __post_init__(self):
        cuts = np.asarray(self.cuts, dtype=float)
        if cuts.ndim != 1 or cuts.size < 2:
            raise ValueError("a partition needs at least two cut points")
        if np.any(np.diff(cuts) <= 0):
            raise ValueError("cut points must be strictly increasing")
        if cuts[0] != self.interval.t0 or cuts[-1] != self.interval.t1:
            raise ValueError("cut points must start at t0 and end at t1")
        object.__setattr__(self, "cuts", cuts)

    @classmethod
    def uniform(cls, interval: Interval, n_cells: int) -> "Partition":
        return cls(interval, uniform_points(interval, n_cells))

    @property
    def n_cells(self) -> int:
        return self.cuts.size - 1

    @property
    def left(self) -> np.ndarray:
        return self.cuts[:-1]

    @property
    def right(self) -> np.ndarray:
        return self.cuts[1:]

    def cell(self, i: int) -> Interval:
        return Interval(float(self.cuts[i]), float(self.cuts[i + 1]))

    def is_uniform(self) -> bool:
        return np.array_equal(self.cuts, uniform_points(self.interval, self.n_cells))

    def refine(self, k: int) -> "Partition":
        """Split every cell into ``k`` equal parts (nested: old cuts are kept)."""
        if k < 1:
            raise ValueError("refinement factor must be positive")
        if self.is_uniform():
            return Partition.uniform(self.interval, self.n_cells * k)
        pieces = [self.cuts[:1]]
        for a, b in zip(self.left, self.right):
            inner = uniform_points(Interval(float(a), float(b)), k)
            pieces.append(inner[1:])
        return Partition(self.interval, np.concatenate(pieces))

    def coarser_index(self, fine: "Partition") -> np.ndarray:
        """For each cell of the nested partition ``fine``, the index of its parent cell."""
        if not np.all(np.isin(self.cuts, fine.cuts)):
            raise ValueError("partitions are not nested")
        return np.searchsorted(self.cuts, fine.left, side="right") - 1


@dataclass(frozen=True, eq=False)
class ResidualProfile:
    partition: Partition
    eps: np.ndarray
    norm_p: float = 2
    grid_per_cell: int = DEFAULT_GRID

    def __post_init__(self):
        eps = np.asarray(self.eps, dtype=float)
        if eps.shape != (self.partition.n_cells,):
            raise ValueError("need one epsilon per cell")
        if np.any(eps < 0) or not np.all(np.isfinite(eps)):
            raise ValueError("epsilons must be finite and nonnegative")
        object.__setattr__(self, "eps", eps)

    @property
    def epsilon(self) -> float:
        """Global residual bound (max over cells)."""
        return float(self.eps.max())

    @property
    def n_cells(self) -> int:
        return self.partition.n_cells

    @classmethod
    def constant(cls, interval: Interval, epsilon: float, n_cells: int = 1) -> "ResidualProfile":
        return cls(Partition.uniform(interval, n_cells), np.full(n_cells, float(epsilon)))

    def scaled(self, c: float) -> "ResidualProfile":
        if c < 0:
            raise ValueError("scale must be nonnegative")
        return ResidualProfile(self.partition, self.eps * c, self.norm_p, self.grid_per_cell)

    def lifted(self, fine: Partition) -> "ResidualProfile":
        """The same piecewise-constant bound expressed on a nested finer partition."""
        parent = self.partition.coarser_index(fine)
        return ResidualProfile(fine, self.eps[parent], self.norm_p, self.grid_per_cell)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["cell_index", "s_left", "s_right", "epsilon"])
        for i, (a, b, e) in enumerate(zip(self.partition.left, self.partition.right, self.eps)):
            w.writerow([i, f"{a:.17g}", f"{b:.17g}", f"{e:.17g}"])
        return buf.getvalue()


def _state_jets(candidate, t, order: int) -> list[Jet]:
    return candidate.jets(t, order)


def residual_at(problem: OdeProblem, candidate, t) -> np.ndarray:
    """``L u - f`` at ``t``; shape ``(N, dim)`` (``(dim,)`` for scalar ``t``)."""
    t_arr = np.asarray(t, dtype=float)
    flat = np.atleast_1d(t_arr)
    if candidate.output_dim != problem.dim:
        raise ValueError(
            f"candidate has {candidate.output_dim} outputs, problem needs {problem.dim}"
        )
    comps = _state_jets(candidate, flat, problem.order)
    lu = apply_operator(problem, comps, flat)
    lu = np.stack([np.broadcast_to(np.asarray(c), flat.shape) for c in lu], axis=-1)
    r = lu - forcing_values(problem, flat)
    return r.reshape(t_arr.shape + (problem.dim,))


def residual_norms(problem: OdeProblem, candidate, t, norm_p=None) -> np.ndarray:
    r = residual_at(problem, candidate, np.atleast_1d(np.asarray(t, dtype=float)))
    if r.shape[-1] == 1:
        return np.abs(r[..., 0])
    p = problem_norm(problem) if norm_p is None else norm_p
    return np.linalg.norm(r, ord=p, axis=-1)


def problem_norm(problem: OdeProblem) -> float:
    return problem.norm_p if isinstance(problem, LinearSystem) else 2


def sup_residual(problem: OdeProblem, candidate, cell: Interval,
                 grid_per_cell: int = DEFAULT_GRID, norm_p=None) -> float:
    """Grid maximum of the residual norm over ``cell`` (endpoints included).

    ``grid_per_cell`` counts subintervals, so ``grid_per_cell + 1`` points
    are evaluated.  The result is a lower estimate of the true supremum.
    """
    if grid_per_cell < 2:
        raise ValueError("grid_per_cell must be at least 2")
    return float(residual_norms(problem, candidate, uniform_points(cell, grid_per_cell), norm_p).max())


def _cell_maxima(norms: np.ndarray, n_cells: int, per_cell: int) -> np.ndarray:
    # norms has n_cells * per_cell + 1 entries; shared endpoints count for both cells
    body = norms[:-1].reshape(n_cells, per_cell).max(axis=1)
    right = norms[per_cell::per_cell]
    return np.maximum(body, right)


def residual_profile(problem: OdeProblem, candidate, n_cells: int,
                     grid_per_cell: int = DEFAULT_GRID, norm_p=None) -> ResidualProfile:
    """Uniform partition with one grid-sup estimate per cell."""
    if n_cells < 1:
        raise ValueError("n_cells must be at least 1")
    if grid_per_cell < 2:
        raise ValueError("grid_per_cell must be at least 2")
    p = problem_norm(problem) if norm_p is None else norm_p
    grid = uniform_points(problem.domain, n_cells * grid_per_cell)
    norms = residual_norms(problem, candidate, grid, p)
    eps = _cell_maxima(norms, n_cells, grid_per_cell)
    return ResidualProfile(Partition.uniform(problem.domain, n_cells), eps, p, grid_per_cell)


def check_nested(levels: Sequence[int]) -> list[int]:
    levels = [int(n) for n in levels]
    if not levels or any(n < 1 for n in levels):
        raise ValueError("partition levels must be positive integers")
    for a, b in zip(levels, levels[1:]):
        if b % a:
            raise ValueError(f"partition levels must each divide the next ({a} -> {b})")
    return levels


@dataclass(frozen=True)
class GridDiagnostic:
    """Global residual estimate at three grid densities (per finest cell)."""

    densities: tuple
    epsilons: tuple
    relative_change: float
    threshold: float = 0.01

    @property
    def grid_sensitive(self) -> bool:
        return self.relative_change > self.threshold

    def to_dict(self) -> dict:
        return {
            "densities": list(self.densities),
            "epsilons": list(self.epsilons),
            "relative_change": self.relative_change,
            "grid_sensitive": self.grid_sensitive,
        }


def nested_profiles(problem: OdeProblem, candidate, levels: Iterable[int],
                    grid_per_cell: int = DEFAULT_GRID, norm_p=None
                    ) -> tuple[dict[int, ResidualProfile], GridDiagnostic]:
    """Profiles for nested uniform partitions read off a single shared grid.

    The grid has ``grid_per_cell`` subintervals per cell of the finest level,
    so each coarse-cell estimate is exactly the max of its children.  The
    grid is evaluated once at double density to report how much the global
    estimate moves between ``grid_per_cell / 2``, ``grid_per_cell`` and
    ``2 * grid_per_cell`` points per cell.
    """
    levels = check_nested(levels)
    if grid_per_cell < 2:
        raise ValueError("grid_per_cell must be at least 2")
    p = problem_norm(problem) if norm_p is None else norm_p
    finest = levels[-1]
    dense = residual_norms(
        problem, candidate, uniform_points(problem.domain, finest * grid_per_cell * 2), p
    )
    norms = dense[::2]
    fine_eps = _cell_maxima(norms, finest, grid_per_cell)
    fine_part = Partition.uniform(problem.domain, finest)
    profiles = {}
    for n in levels:
        k = finest // n
        eps = fine_eps.reshape(n, k).max(axis=1)
        profiles[n] = ResidualProfile(Partition.uniform(problem.domain, n), eps, p, grid_per_cell)
    assert fine_part.n_cells == finest

    densities, estimates = [], []
    if grid_per_cell % 2 == 0:
        densities.append(grid_per_cell // 2)
        estimates.append(float(dense[::4].max()))
    densities += [grid_per_cell, 2 * grid_per_cell]
    estimates += [float(norms.max()), float(dense.max())]
    ref = estimates[-1]
    change = 0.0 if ref == 0 else (max(estimates) - min(estimates)) / ref
    return profiles, GridDiagnostic(tuple(densities), tuple(estimates), change)
