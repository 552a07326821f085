"""
Limiting spectrum of a sum of independent unitarily invariant matrices.

For factors with limiting laws X_1..X_J the Stieltjes transform G of the sum
and auxiliary unknowns rho_1..rho_J solve

    G = (J - 1) / (z + sum_j 1/rho_j)
    G = E[1 / (X_j + 1/rho_j)]          for every j.

The solver works with w_j = 1/rho_j (so Im w_j < 0) and the Picard map

    w_j <- -z + sum_{i != j} (1 / g_i(w_i) - w_i),   g_i(w) = E[1/(X_i + w)],

which is the subordination iteration for free additive convolution and keeps
every iterate in the admissible half-plane.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _fixed_point as fp
from .errors import AmbiguousFixedPoint, DegenerateMeasure, NonConvergence
from .measures import SpectralMeasure
from .stieltjes import as_half_plane, transform

__all__ = ["SumFixedPointState", "solve_sum", "solve_sum_grid", "sum_residual"]


@dataclass(frozen=True)
class SumFixedPointState:
    z: complex
    g: complex
    rho: tuple[complex, ...]
    residual: float
    iterations: int


def _g(m: SpectralMeasure, w: complex) -> complex:
    return complex(np.sum(m.weights / (m.locations + w)))


def sum_residual(measures: Sequence[SpectralMeasure], z: complex, g: complex, rho: Sequence[complex]) -> float:
    """Largest absolute defect over both equations of the sum system."""
    inv = np.array([1.0 / r for r in rho], dtype=complex)
    J = len(measures)
    if J == 1:
        # the first equation degenerates to G (z + 1/rho) = 0
        first = abs(g * (z + inv.sum()))
    else:
        first = abs(g - (J - 1) / (z + inv.sum()))
    second = max(abs(g - _g(m, w)) for m, w in zip(measures, inv))
    return float(max(first, second))


def _validate(measures: Sequence[SpectralMeasure]):
    if len(measures) < 1:
        raise ValueError("need at least one measure")
    for j, m in enumerate(measures):
        if m.is_degenerate():
            raise DegenerateMeasure(f"measure {j} has all of its mass at zero")


class _SumSystem:
    def __init__(self, measures: Sequence[SpectralMeasure]):
        self.measures = list(measures)
        self.J = len(measures)
        self.means = np.array([m.mean() for m in measures])
        self.top = max(1.0, max(m.support_bound for m in measures))

    def phi(self, w: np.ndarray, z: complex) -> np.ndarray:
        h = np.array([1.0 / _g(m, wj) - wj for m, wj in zip(self.measures, w)])
        return -z + h.sum() - h

    def g_of(self, w: np.ndarray, z: complex) -> complex:
        return (self.J - 1) / (z + w.sum())

    def residual(self, w: np.ndarray, z: complex) -> float:
        return sum_residual(self.measures, z, self.g_of(w, z), 1.0 / w)

    @staticmethod
    def admissible(w: np.ndarray) -> bool:
        return bool(np.all(w.imag < 0))

    def start(self, z: complex) -> np.ndarray:
        # large-|z| behaviour of the subordination functions
        return -z + (self.means.sum() - self.means) + 0j

    def solve_at(self, z, x0, budget, cfg):
        return fp.iterate(lambda w: self.phi(w, z), x0,
                          residual=lambda w: self.residual(w, z),
                          admissible=self.admissible, cfg=cfg, budget=budget)

    def state(self, z, w, iterations) -> SumFixedPointState:
        g = self.g_of(w, z)
        rho = tuple(complex(1.0 / wj) for wj in w)
        return SumFixedPointState(z, complex(g), rho, sum_residual(self.measures, z, g, rho), iterations)


def _solve(system: _SumSystem, z: complex, cfg: fp.SolverConfig, initial=None) -> tuple[np.ndarray, int]:
    w, n, _ = fp.continuation_solve(lambda zz, x0, b: system.solve_at(zz, x0, b, cfg),
                                    z, system.start, system.top, cfg, initial)
    if cfg.check_uniqueness:
        try:
            alt, _, _ = system.solve_at(z, np.full(system.J, -1j), None, cfg)
        except NonConvergence:
            alt = None
        fp.check_unique(w, alt, cfg, f"sum system at z={z}")
    return w, n


def solve_sum(measures: Sequence[SpectralMeasure], z, cfg: fp.SolverConfig | None = None) -> SumFixedPointState:
    """Stieltjes transform of the sum of J free factors at one point ``z``.

    Parameters
    ----------
    measures : sequence of SpectralMeasure
        Limiting spectral laws of the J summands.
    z : complex
        Point in the open upper half-plane.
    cfg : SolverConfig, optional

    Returns
    -------
    SumFixedPointState
        ``g`` is G(z); ``rho`` holds the J auxiliary unknowns.

    Raises
    ------
    DegenerateMeasure
        A summand has all of its mass at zero.
    NonConvergence
        The iteration budget ran out.
    AmbiguousFixedPoint
        Only with ``cfg.check_uniqueness``: a second start converged elsewhere.
    """
    cfg = cfg or fp.SolverConfig()
    z = as_half_plane(z)
    _validate(measures)
    if len(measures) == 1:
        g = transform(measures[0], z)
        rho = (complex(-1.0 / z),)
        return SumFixedPointState(z, g, rho, sum_residual(measures, z, g, rho), 0)
    system = _SumSystem(measures)
    w, n = _solve(system, z, cfg)
    return system.state(z, w, n)


def solve_sum_grid(measures: Sequence[SpectralMeasure], z_list, cfg: fp.SolverConfig | None = None,
                   *, warm_start: bool = True, strict: bool = True) -> list:
    """Solve along a path of points, each solution seeding the next one.

    A failure at point ``k`` raises with ``index=k``. With ``strict=False`` the
    exception is stored in place of that point's state and the sweep goes on.
    """
    cfg = cfg or fp.SolverConfig()
    zs = [as_half_plane(z) for z in z_list]
    if not zs:
        raise ValueError("z_list must be nonempty")
    _validate(measures)
    if len(measures) == 1:
        return [solve_sum(measures, z, cfg) for z in zs]
    system = _SumSystem(measures)
    states = []
    previous = None
    for k, z in enumerate(zs):
        try:
            w, n = _solve(system, z, cfg, previous if warm_start else None)
        except (NonConvergence, AmbiguousFixedPoint) as exc:
            if strict:
                exc.index = k
                raise
            states.append(exc)
            continue
        states.append(system.state(z, w, n))
        previous = w
    return states
