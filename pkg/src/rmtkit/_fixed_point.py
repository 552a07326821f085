"""Shared machinery for the three coupled-equation solvers.

Each solver supplies a Picard map ``phi`` whose fixed points solve its system,
a residual on the original equations and an admissibility test (the iterate
must stay in the upper half-plane where the transforms live). The engine
takes Newton steps on ``x - phi(x)`` with a forward-difference Jacobian, which
is exact in the limit because every map here is holomorphic in its unknowns.
A Newton step is halved until it is admissible and reduces ``|x - phi(x)|``;
when 60 halvings do not produce such a step, a damped Picard step is taken
instead, itself halved until admissible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import AmbiguousFixedPoint, NonConvergence

__all__ = ["SolverConfig"]

_MAX_HALVINGS = 60
# rungs per decade when walking Im z down from the ladder top
_LADDER_RUNGS_PER_DECADE = 2
# extra rungs inserted when a step down the ladder fails
_MAX_REFINEMENTS = 40
# a warm start that has not converged after this many steps is abandoned
_WARM_BUDGET = 100


@dataclass(frozen=True)
class SolverConfig:
    """Convergence settings shared by all solvers.

    ``tolerance`` bounds the maximum absolute defect over the solver's
    equations. ``damping`` scales the Picard fallback step. With
    ``check_uniqueness`` each solve is repeated from a second admissible start
    and the two answers are compared.
    """

    tolerance: float = 1e-10
    max_iterations: int = 10000
    damping: float = 0.5
    check_uniqueness: bool = False

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")


def _finite(x: np.ndarray) -> bool:
    return bool(np.all(np.isfinite(x)))


def _jacobian(F, x, fx):
    n = x.size
    jac = np.empty((n, n), dtype=complex)
    for k in range(n):
        h = 1e-7 * max(1.0, abs(x[k]))
        xp = x.copy()
        xp[k] += h
        jac[:, k] = (F(xp) - fx) / h
    return jac


def _polish(F, x, res, residual, admissible, accept):
    """One extra Newton step once within tolerance; kept only if it lowers the residual.

    The residual bounds the equation defect, not the distance to the root; the
    quadratic convergence of a final step closes that gap.
    """
    if res == 0:
        return x, res
    with np.errstate(all="ignore"):
        fx = F(x)
        try:
            cand = x + np.linalg.solve(_jacobian(F, x, fx), -fx)
        except np.linalg.LinAlgError:
            return x, res
        if not (_finite(cand) and admissible(cand) and (accept is None or accept(cand))):
            return x, res
        r = residual(cand)
    return (cand, r) if r < res else (x, res)


def iterate(phi: Callable[[np.ndarray], np.ndarray], x0: np.ndarray, *,
            residual: Callable[[np.ndarray], float],
            admissible: Callable[[np.ndarray], bool],
            cfg: SolverConfig, budget: int | None = None,
            accept: Callable[[np.ndarray], bool] | None = None) -> tuple[np.ndarray, int, float]:
    """Drive ``x`` to a fixed point of ``phi``; returns ``(x, iterations, residual)``.

    ``accept``, if given, is checked on the converged point; a root it rejects
    raises :class:`NonConvergence` so that callers can retry from elsewhere.
    """
    budget = cfg.max_iterations if budget is None else budget
    x = np.asarray(x0, dtype=complex).copy()
    if not admissible(x):
        raise NonConvergence("initial point is not admissible", iterations=0)

    def F(v):
        with np.errstate(all="ignore"):
            return v - phi(v)

    res = math.inf
    for it in range(budget + 1):
        with np.errstate(all="ignore"):
            res = residual(x)
        if res <= cfg.tolerance:
            if accept is not None and not accept(x):
                raise NonConvergence("converged to a root outside the solution domain",
                                     residual=float(res), iterations=it)
            x, res = _polish(F, x, res, residual, admissible, accept)
            return x, it, res
        if it == budget:
            break
        fx = F(x)
        fnorm = np.max(np.abs(fx))
        moved = False
        with np.errstate(all="ignore"):
            try:
                step = np.linalg.solve(_jacobian(F, x, fx), -fx)
            except np.linalg.LinAlgError:
                step = None
        if step is not None and _finite(step):
            t = 1.0
            for _ in range(_MAX_HALVINGS):
                cand = x + t * step
                if _finite(cand) and admissible(cand):
                    fc = F(cand)
                    if _finite(fc) and np.max(np.abs(fc)) < fnorm:
                        x, moved = cand, True
                        break
                t *= 0.5
        if not moved:
            with np.errstate(all="ignore"):
                target = phi(x)
            d = cfg.damping
            for _ in range(_MAX_HALVINGS):
                cand = x + d * (target - x)
                if _finite(cand) and admissible(cand):
                    x, moved = cand, True
                    break
                d *= 0.5
        if not moved:
            raise NonConvergence("no admissible step after 60 halvings",
                                 residual=float(res), iterations=it)
    raise NonConvergence(f"no convergence within {budget} iterations (residual {res:.3e})",
                         residual=float(res), iterations=budget)


def ladder(z: complex, top: float) -> list[complex]:
    """Points ``Re z + i y`` with ``y`` falling geometrically from ``top`` to ``Im z``."""
    if z.imag >= top:
        return [z]
    decades = math.log10(top / z.imag)
    rungs = max(1, math.ceil(decades * _LADDER_RUNGS_PER_DECADE))
    ys = top * (z.imag / top) ** (np.arange(0, rungs + 1) / rungs)
    pts = [complex(z.real, y) for y in ys[:-1]]
    return pts + [z]


def continuation_solve(solve_at: Callable[[complex, np.ndarray, int | None], tuple[np.ndarray, int, float]],
                       z: complex, start: Callable[[complex], np.ndarray], top: float,
                       cfg: SolverConfig, initial: np.ndarray | None = None) -> tuple[np.ndarray, int, float]:
    """Solve at ``z``, warm-starting from ``initial`` or walking down an Im z ladder.

    ``solve_at(z, x0, budget)`` runs :func:`iterate` for one point. A warm start
    that fails falls back to the ladder. A rung that cannot be solved from the
    previous rung's solution within a short budget is halved (geometrically in
    Im z) and retried.
    The iteration count includes every attempt.
    """
    used = 0
    if initial is not None:
        try:
            x, n, res = solve_at(z, np.asarray(initial, dtype=complex), min(_WARM_BUDGET, cfg.max_iterations))
            return x, n, res
        except NonConvergence as exc:
            used += exc.iterations or 0
    points = ladder(z, top)
    x = start(points[0])
    res = math.inf
    previous = None  # last rung solved successfully
    pending = list(reversed(points))
    refinements = 0
    while pending:
        zk = pending[-1]
        remaining = cfg.max_iterations - used
        if remaining <= 0:
            raise NonConvergence(f"iteration budget exhausted on the continuation path at {zk}",
                                 iterations=used)
        mid = None
        if previous is not None and refinements < _MAX_REFINEMENTS:
            mid = complex(zk.real, math.sqrt(previous.imag * zk.imag))
            if not previous.imag > mid.imag > zk.imag:
                mid = None
        # a rung that can still be split gets a short budget; a slow rung is
        # cheaper to split than to grind through
        budget = min(_WARM_BUDGET, remaining) if mid is not None else remaining
        try:
            xk, n, res = solve_at(zk, x, budget)
        except NonConvergence as exc:
            used += exc.iterations or 0
            if mid is None:
                exc.iterations = used
                raise
            pending.append(mid)
            refinements += 1
            continue
        pending.pop()
        used += n
        x, previous = xk, zk
    return x, used, res


def check_unique(first: np.ndarray, second: np.ndarray | None, cfg: SolverConfig, what: str):
    if second is None:
        return
    gap = float(np.max(np.abs(first - second)))
    if gap > 100 * cfg.tolerance:
        raise AmbiguousFixedPoint(f"{what}: two admissible starts converged to states {gap:.3e} apart")
