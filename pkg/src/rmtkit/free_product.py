"""
Limiting spectrum of a product of two free unitarily invariant matrices.

The Stieltjes transform G of X_1 X_2 and two auxiliary unknowns pi_1, pi_2
solve

    G = -(1/z) E[1 / (1 + pi_j X_j)]    for j = 1, 2
    G = 1 / (z (z pi_1 pi_2 - 1)).

Writing t_j(pi) = E[1/(1 + pi X_j)], both equations say t_1(pi_1) =
t_2(pi_2) = t with pi_1 pi_2 = (t - 1)/(t z). The Picard map alternates

    pi_1 <- (t_2(pi_2) - 1) / (t_2(pi_2) z pi_2)
    pi_2 <- (t_1(pi_1) - 1) / (t_1(pi_1) z pi_1)

which is exact after one sweep when both factors are point masses. Longer
products are handled by folding: invert the two-factor transform, re-discretize
it and multiply by the next factor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _fixed_point as fp
from .errors import AmbiguousFixedPoint, DegenerateMeasure, InversionFailed, NonConvergence
from .measures import SpectralMeasure
from .stieltjes import as_half_plane, cdf_from_density

__all__ = [
    "ProductFixedPointState",
    "solve_product",
    "solve_product_grid",
    "solve_product_chain",
    "product_residual",
    "quantile_atoms",
]

CHAIN_ATOMS = 512
CHAIN_MARGIN = 0.25
CHAIN_GRID_POINTS = 4001


@dataclass(frozen=True)
class ProductFixedPointState:
    z: complex
    g: complex
    pi1: complex
    pi2: complex
    residual: float
    iterations: int


def _t(m: SpectralMeasure, pi: complex) -> complex:
    return complex(np.sum(m.weights / (1.0 + pi * m.locations)))


def product_residual(m1: SpectralMeasure, m2: SpectralMeasure, z: complex,
                     g: complex, pi1: complex, pi2: complex) -> float:
    """Largest absolute defect over the three product equations."""
    defects = (
        g - (-_t(m1, pi1) / z),
        g - (-_t(m2, pi2) / z),
        g - 1.0 / (z * (z * pi1 * pi2 - 1.0)),
    )
    return float(max(abs(d) for d in defects))


class _ProductSystem:
    def __init__(self, m1: SpectralMeasure, m2: SpectralMeasure):
        for j, m in enumerate((m1, m2), start=1):
            if m.is_degenerate():
                raise DegenerateMeasure(f"factor {j} has all of its mass at zero")
        self.m1, self.m2 = m1, m2
        self.top = max(1.0, m1.support_bound * m2.support_bound)

    def phi(self, v: np.ndarray, z: complex) -> np.ndarray:
        t2 = _t(self.m2, v[1])
        p1 = (t2 - 1.0) / (t2 * z * v[1])
        t1 = _t(self.m1, p1)
        p2 = (t1 - 1.0) / (t1 * z * p1)
        return np.array([p1, p2])

    @staticmethod
    def g_of(v: np.ndarray, z: complex) -> complex:
        return 1.0 / (z * (z * v[0] * v[1] - 1.0))

    def residual(self, v, z):
        return product_residual(self.m1, self.m2, z, self.g_of(v, z), v[0], v[1])

    def admissible(self, v: np.ndarray, z: complex) -> bool:
        if np.any(v == 0):
            return False
        with np.errstate(all="ignore"):
            g = self.g_of(v, z)
        return bool(np.isfinite(g) and g.imag > 0)

    def start(self, z: complex) -> np.ndarray:
        # leading large-|z| behaviour: pi_1 ~ -E[X_2]/z, pi_2 ~ -E[X_1]/z
        scale = self.top
        means = []
        for m in (self.m2, self.m1):
            mu = m.mean()
            means.append(mu if abs(mu) > 1e-6 * scale else 1e-3 * scale)
        return np.array([-means[0] / z, -means[1] / z])

    def solve_at(self, z, x0, budget, cfg):
        return fp.iterate(lambda v: self.phi(v, z), x0,
                          residual=lambda v: self.residual(v, z),
                          admissible=lambda v: self.admissible(v, z), cfg=cfg, budget=budget)

    def state(self, z, v, n) -> ProductFixedPointState:
        g = complex(self.g_of(v, z))
        return ProductFixedPointState(z, g, complex(v[0]), complex(v[1]),
                                      product_residual(self.m1, self.m2, z, g, v[0], v[1]), n)


def _solve(system: _ProductSystem, z, cfg, initial=None):
    v, n, _ = fp.continuation_solve(lambda zz, x0, b: system.solve_at(zz, x0, b, cfg),
                                    z, system.start, system.top, cfg, initial)
    if cfg.check_uniqueness:
        try:
            alt, _, _ = system.solve_at(z, np.array([1j, 1j]), None, cfg)
        except NonConvergence:
            alt = None
        fp.check_unique(np.array([system.g_of(v, z)]),
                        None if alt is None else np.array([system.g_of(alt, z)]),
                        cfg, f"product system at z={z}")
    return v, n


def solve_product(m1: SpectralMeasure, m2: SpectralMeasure, z,
                  cfg: fp.SolverConfig | None = None) -> ProductFixedPointState:
    """Stieltjes transform of ``X_1 X_2`` for free factors at one point ``z``."""
    cfg = cfg or fp.SolverConfig()
    z = as_half_plane(z)
    system = _ProductSystem(m1, m2)
    v, n = _solve(system, z, cfg)
    return system.state(z, v, n)


def solve_product_grid(m1: SpectralMeasure, m2: SpectralMeasure, z_list,
                       cfg: fp.SolverConfig | None = None, *, warm_start: bool = True,
                       strict: bool = True) -> list:
    """Solve along a path of points with warm starts.

    A failure at point ``k`` raises with ``index=k``. With ``strict=False`` the
    exception is stored in place of that point's state and the sweep goes on.
    """
    cfg = cfg or fp.SolverConfig()
    zs = [as_half_plane(z) for z in z_list]
    if not zs:
        raise ValueError("z_list must be nonempty")
    system = _ProductSystem(m1, m2)
    out, previous = [], None
    for k, z in enumerate(zs):
        try:
            v, n = _solve(system, z, cfg, previous if warm_start else None)
        except (NonConvergence, AmbiguousFixedPoint) as exc:
            if strict:
                exc.index = k
                raise
            out.append(exc)
            continue
        out.append(system.state(z, v, n))
        previous = v
    return out


def quantile_atoms(x: np.ndarray, cdf: np.ndarray, atom_count: int) -> SpectralMeasure:
    """Equal-weight atoms at the quantile midpoints of a tabulated CDF."""
    u = (np.arange(1, atom_count + 1) - 0.5) / atom_count
    idx = np.clip(np.searchsorted(cdf, u, side="left"), 1, len(x) - 1)
    lo, hi = cdf[idx - 1], cdf[idx]
    frac = np.where(hi > lo, (u - lo) / np.where(hi > lo, hi - lo, 1.0), 0.5)
    loc = x[idx - 1] + np.clip(frac, 0.0, 1.0) * (x[idx] - x[idx - 1])
    return SpectralMeasure.from_atoms(locations=loc, weights=np.full(atom_count, 1.0 / atom_count))


def _chain_grid(running: SpectralMeasure, factor: SpectralMeasure, points: int, margin: float):
    bound = running.support_bound * factor.support_bound
    half = (1.0 + margin) * bound
    return np.linspace(-half, half, points)


def solve_product_chain(measures: Sequence[SpectralMeasure], z_grid=None, inversion_grid=None,
                        cfg: fp.SolverConfig | None = None, *, epsilon: float | None = None,
                        atom_count: int = CHAIN_ATOMS, grid_points: int = CHAIN_GRID_POINTS,
                        margin: float = CHAIN_MARGIN):
    """Left fold of two-factor products over ``J >= 2`` factors.

    Each link solves the product of the running law with the next factor on
    ``inversion_grid + i*epsilon``, turns ``Im G / pi`` into a normalized CDF and
    re-discretizes it into ``atom_count`` quantile atoms.

    Parameters
    ----------
    measures : sequence of SpectralMeasure
    z_grid : array of complex, optional
        Points at which the final link's states are reported. Defaults to the
        final link's inversion points.
    inversion_grid : array of float, optional
        Real grid used by every link. By default each link uses
        ``grid_points`` points on ``[-(1+margin) B, (1+margin) B]`` with B the
        product of the two factors' support bounds.
    epsilon : float, optional
        Distance above the real axis for inversion. Defaults to the grid spacing.

    Returns
    -------
    (SpectralMeasure, list of ProductFixedPointState)

    Raises
    ------
    NonConvergence, InversionFailed
        Annotated with the failing link through the ``link`` attribute.
    """
    cfg = cfg or fp.SolverConfig()
    if len(measures) < 2:
        raise ValueError("a chain needs at least two factors")
    running = measures[0]
    states: list[ProductFixedPointState] = []
    for link, factor in enumerate(measures[1:], start=1):
        x = (np.asarray(inversion_grid, dtype=float) if inversion_grid is not None
             else _chain_grid(running, factor, grid_points, margin))
        if x.size < 2 or not np.all(np.diff(x) > 0):
            raise ValueError("inversion grid must be strictly increasing with at least two points")
        eps = float(epsilon) if epsilon is not None else float(np.min(np.diff(x)))
        try:
            link_states = solve_product_grid(running, factor, x + 1j * eps, cfg)
        except NonConvergence as exc:
            exc.link = link
            exc.args = (f"chain link {link}: {exc.args[0]}",)
            raise
        density = np.array([s.g.imag for s in link_states]) / math.pi
        if not np.all(np.isfinite(density)) or density.max() <= 0:
            err = InversionFailed(f"chain link {link}: inverted density is empty on the grid")
            err.link = link
            raise err
        cdf = cdf_from_density(x, np.clip(density, 0.0, None), normalize=True)
        previous = running
        running = quantile_atoms(x, cdf, atom_count)
        states = link_states
    if z_grid is not None:
        try:
            states = solve_product_grid(previous, measures[-1], z_grid, cfg)
        except NonConvergence as exc:
            exc.link = len(measures) - 1
            raise
    return running, states
