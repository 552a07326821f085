"""Stieltjes transforms of atom measures and numerical inversion."""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from .errors import InvalidGrid, InversionFailed
from .measures import SpectralMeasure

__all__ = [
    "as_half_plane",
    "transform",
    "invert_density",
    "cdf_from_density",
]

_DENSITY_CLIP = 1e-12


def as_half_plane(z) -> complex:
    """Validate a transform argument: finite with strictly positive imaginary part.

    A ``(re, im)`` tuple of two reals is accepted as well.
    """
    if isinstance(z, tuple):
        if len(z) != 2 or any(isinstance(c, complex) for c in z):
            raise ValueError(f"a point given as a tuple must be (re, im), got {z!r}")
        z = complex(float(z[0]), float(z[1]))
    z = complex(z)
    if not (math.isfinite(z.real) and math.isfinite(z.imag)):
        raise ValueError(f"transform argument must be finite, got {z!r}")
    if not z.imag > 0:
        raise ValueError(f"transform argument must lie in the upper half-plane, got {z!r}")
    return z


def transform(m: SpectralMeasure, z):
    """``E[1/(X - z)]`` for a scalar or an array of points ``z``.

    Uses the convention ``G(z) = E[1/(X - z)]``, so ``Im G > 0`` on the upper
    half-plane and ``G(z) ~ -1/z`` at infinity.
    """
    if isinstance(z, tuple) or np.ndim(z) == 0:
        zc = as_half_plane(z)
        return complex(np.sum(m.weights / (m.locations - zc)))
    zs = np.asarray(z, dtype=complex)
    if np.any(zs.imag <= 0) or not np.all(np.isfinite(zs)):
        raise ValueError("every transform argument must be finite with Im z > 0")
    flat = zs.ravel()
    out = np.empty(flat.shape, dtype=complex)
    # chunk to bound the (points x atoms) temporary
    step = max(1, 2_000_000 // max(m.size, 1))
    for start in range(0, flat.size, step):
        block = flat[start:start + step]
        out[start:start + step] = (m.weights / (m.locations[None, :] - block[:, None])).sum(axis=1)
    return out.reshape(zs.shape)


def invert_density(g: Callable[[complex], complex], x_grid, epsilon: float):
    """Density ``Im g(x + i eps) / pi`` on ``x_grid``.

    Returns the grid and the density as two arrays. Values below zero by less
    than 1e-12 (rounding) are clipped to zero.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    x = np.asarray(x_grid, dtype=float).ravel()
    values = np.empty(x.size)
    for k, xk in enumerate(x):
        try:
            gk = complex(g(complex(xk, epsilon)))
        except Exception as exc:  # evaluator-specific failures are surfaced uniformly
            raise InversionFailed(f"evaluator failed at x={xk!r}: {exc}") from exc
        if not (math.isfinite(gk.real) and math.isfinite(gk.imag)):
            raise InversionFailed(f"evaluator returned a non-finite value at x={xk!r}")
        values[k] = gk.imag / math.pi
    if np.any(values < -_DENSITY_CLIP * np.maximum(1.0, np.abs(values).max())):
        raise InversionFailed("evaluator produced a negative density; it is not a Stieltjes transform")
    return x, np.clip(values, 0.0, None)


def cdf_from_density(x, density, *, normalize: bool = False) -> np.ndarray:
    """Cumulative trapezoid integral of ``density`` over the grid ``x``.

    The result is clipped to ``[0, 1]``. With ``normalize=True`` it is first
    divided by the total captured mass, which removes the tail mass lost
    outside a finite grid.
    """
    x = np.asarray(x, dtype=float).ravel()
    d = np.asarray(density, dtype=float).ravel()
    if x.shape != d.shape or x.size == 0:
        raise InvalidGrid("grid and density must be nonempty and of equal length")
    if x.size > 1 and not np.all(np.diff(x) > 0):
        raise InvalidGrid("grid must be strictly increasing")
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (d[1:] + d[:-1]) * np.diff(x))])
    if normalize and cum[-1] > 0:
        cum = cum / cum[-1]
    return np.clip(cum, 0.0, 1.0)
