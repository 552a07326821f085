"""
Compactly supported spectral measures stored as weighted atoms.

Every limiting eigenvalue law in the package (factor spectra, channel gains,
transmit powers) is an atom list. Continuous laws enter through
quantile-midpoint discretization, so all expectations used by the solvers
are finite sums and every residual can be evaluated exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Iterable, Mapping, Sequence

import numpy as np
from scipy import stats

from .errors import InvalidMeasure, MeasureTooLarge

__all__ = [
    "SpectralMeasure",
    "JointChannelMeasure",
    "point_mass",
    "from_samples",
    "discretize_family",
    "mean",
    "joint_independent",
    "measure_from_json",
    "channel_from_json",
    "EXPONENTIAL_TAIL",
    "DEFAULT_JOINT_CAP",
]

#: Probability mass cut from the exponential tail before renormalizing.
EXPONENTIAL_TAIL = 1e-8
DEFAULT_JOINT_CAP = 10**6

_NORM_TOL = 1e-12
# User-supplied weights (e.g. JSON with few digits) are accepted this far from
# unit total and then renormalized.
_INPUT_NORM_TOL = 1e-6
_MERGE_RTOL = 1e-12


def _merge_sorted(locations: np.ndarray, weights: np.ndarray):
    order = np.argsort(locations, kind="stable")
    locations = locations[order]
    weights = weights[order]
    keep_loc = [locations[0]]
    keep_w = [weights[0]]
    for x, w in zip(locations[1:], weights[1:]):
        if abs(x - keep_loc[-1]) <= _MERGE_RTOL * max(1.0, abs(x), abs(keep_loc[-1])):
            keep_w[-1] += w
        else:
            keep_loc.append(x)
            keep_w.append(w)
    return np.asarray(keep_loc, dtype=float), np.asarray(keep_w, dtype=float)


@dataclass(frozen=True, eq=False)
class SpectralMeasure:
    """Probability measure on the real line with finitely many atoms.

    Use :meth:`from_atoms` (or the module constructors) rather than building
    the dataclass directly; it sorts, merges duplicates and normalizes.
    """

    locations: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        loc = np.asarray(self.locations, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if loc.ndim != 1 or loc.shape != w.shape or loc.size == 0:
            raise InvalidMeasure("locations and weights must be nonempty 1-D arrays of equal length")
        if not np.all(np.isfinite(loc)) or not np.all(np.isfinite(w)):
            raise InvalidMeasure("atom locations and weights must be finite")
        if np.any(w <= 0):
            raise InvalidMeasure("atom weights must be positive")
        if loc.size > 1 and not np.all(np.diff(loc) > 0):
            raise InvalidMeasure("atom locations must be strictly increasing")
        if abs(w.sum() - 1.0) > _NORM_TOL:
            raise InvalidMeasure(f"weights sum to {w.sum()!r}, not 1")
        loc.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "locations", loc)
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_atoms(cls, atoms: Iterable[Sequence[float]] | None = None, *,
                   locations=None, weights=None) -> "SpectralMeasure":
        """Build from ``[(location, weight), ...]`` or parallel arrays."""
        if atoms is not None:
            pairs = [tuple(a) for a in atoms]
            if not pairs:
                raise InvalidMeasure("empty atom list")
            if any(len(p) != 2 for p in pairs):
                raise InvalidMeasure("each atom must be a (location, weight) pair")
            locations = [p[0] for p in pairs]
            weights = [p[1] for p in pairs]
        loc = np.asarray(locations, dtype=float).ravel()
        w = np.asarray(weights, dtype=float).ravel()
        if loc.size == 0 or loc.shape != w.shape:
            raise InvalidMeasure("locations and weights must be nonempty and of equal length")
        if not np.all(np.isfinite(loc)) or not np.all(np.isfinite(w)):
            raise InvalidMeasure("atom locations and weights must be finite")
        if np.any(w <= 0):
            raise InvalidMeasure("atom weights must be positive")
        total = w.sum()
        if abs(total - 1.0) > _INPUT_NORM_TOL:
            raise InvalidMeasure(f"weights sum to {total!r}, not 1")
        loc, w = _merge_sorted(loc, w / total)
        return cls(loc, w / w.sum())

    @property
    def atoms(self) -> list[tuple[float, float]]:
        return [(float(x), float(w)) for x, w in zip(self.locations, self.weights)]

    @property
    def support_bound(self) -> float:
        return float(np.max(np.abs(self.locations)))

    @property
    def size(self) -> int:
        return int(self.locations.size)

    def mean(self) -> float:
        return float(np.dot(self.weights, self.locations))

    def moment(self, k: int) -> float:
        return float(np.dot(self.weights, self.locations ** k))

    def expect(self, f) -> Any:
        """``E[f(X)]`` for a vectorized ``f``."""
        return np.dot(self.weights, f(self.locations))

    def is_degenerate(self) -> bool:
        """True when all mass sits at zero."""
        return bool(np.all(self.locations == 0.0))

    def shifted(self, c: float) -> "SpectralMeasure":
        return SpectralMeasure.from_atoms(locations=self.locations + c, weights=self.weights)

    def scaled(self, c: float) -> "SpectralMeasure":
        return SpectralMeasure.from_atoms(locations=self.locations * c, weights=self.weights)

    def cdf(self, x) -> np.ndarray:
        """Right-continuous distribution function at ``x``."""
        cum = np.cumsum(self.weights)
        idx = np.searchsorted(self.locations, np.asarray(x, dtype=float), side="right")
        return np.where(idx > 0, cum[np.maximum(idx - 1, 0)], 0.0)

    def to_json(self) -> dict:
        return {"atoms": [[float(x), float(w)] for x, w in zip(self.locations, self.weights)]}

    def __eq__(self, other):
        if not isinstance(other, SpectralMeasure):
            return NotImplemented
        return (np.array_equal(self.locations, other.locations)
                and np.array_equal(self.weights, other.weights))

    def __hash__(self):
        return hash((self.locations.tobytes(), self.weights.tobytes()))

    def __repr__(self):
        if self.size <= 4:
            return f"SpectralMeasure(atoms={self.atoms})"
        return (f"SpectralMeasure(<{self.size} atoms on "
                f"[{self.locations[0]:.4g}, {self.locations[-1]:.4g}]>)")


def point_mass(a: float) -> SpectralMeasure:
    if not math.isfinite(a):
        raise InvalidMeasure(f"point mass location must be finite, got {a!r}")
    return SpectralMeasure(np.array([float(a)]), np.array([1.0]))


def from_samples(values: Iterable[float]) -> SpectralMeasure:
    """Empirical distribution: each distinct value weighted by its frequency."""
    arr = np.asarray(list(values), dtype=float)
    if arr.size == 0:
        raise InvalidMeasure("cannot build an empirical measure from no samples")
    if not np.all(np.isfinite(arr)):
        raise InvalidMeasure("samples must be finite")
    loc, counts = np.unique(arr, return_counts=True)
    return SpectralMeasure.from_atoms(locations=loc, weights=counts / arr.size)


def mean(m: SpectralMeasure) -> float:
    return m.mean()


def _midpoints(atom_count: int) -> np.ndarray:
    return (np.arange(1, atom_count + 1) - 0.5) / atom_count


def discretize_family(family: str | Mapping[str, Any], atom_count: int = 256, **params) -> SpectralMeasure:
    """Equal-weight atoms at the quantile midpoints ``q((k - 1/2)/M)``.

    Parameters
    ----------
    family : str or mapping
        One of ``"exponential"`` (``mean``), ``"uniform"`` (``a``, ``b``),
        ``"semicircle"`` (``variance``) or ``"bernoulli"`` (``p``, ``lo``,
        ``hi``). A mapping may carry the name under ``"family"`` together with
        the parameters.
    atom_count : int
        Number of atoms M. Ignored by the two-point Bernoulli law.

    Notes
    -----
    The exponential law is truncated at its ``1 - 1e-8`` quantile and
    renormalized, so its quantile function is evaluated at ``u (1 - 1e-8)``.
    ``bernoulli(p, lo, hi)`` puts mass ``p`` on ``hi`` and ``1 - p`` on ``lo``.
    """
    if isinstance(family, Mapping):
        params = {**{k: v for k, v in family.items() if k not in ("family", "atom_count")}, **params}
        atom_count = int(family.get("atom_count", atom_count))
        family = family["family"]
    try:
        atom_count = int(atom_count)
    except (TypeError, ValueError):
        raise InvalidMeasure(f"atom_count must be an integer, got {atom_count!r}") from None
    if atom_count < 1:
        raise InvalidMeasure("atom_count must be at least 1")

    def param(name, default=None):
        value = params.get(name, default)
        if value is None:
            raise InvalidMeasure(f"{family} family requires parameter {name!r}")
        try:
            value = float(value)
        except (TypeError, ValueError):
            raise InvalidMeasure(f"parameter {name!r} must be a number") from None
        if not math.isfinite(value):
            raise InvalidMeasure(f"parameter {name!r} must be finite")
        return value

    u = _midpoints(atom_count)
    if family == "exponential":
        scale = param("mean", 1.0)
        if scale <= 0:
            raise InvalidMeasure("exponential mean must be positive")
        loc = -scale * np.log1p(-u * (1.0 - EXPONENTIAL_TAIL))
    elif family == "uniform":
        a, b = param("a", 0.0), param("b", 1.0)
        if not b > a:
            raise InvalidMeasure("uniform requires a < b")
        loc = a + (b - a) * u
    elif family == "semicircle":
        var = param("variance", 1.0)
        if var <= 0:
            raise InvalidMeasure("semicircle variance must be positive")
        # scipy's semicircular law lives on [-1, 1]; radius is 2 * sqrt(variance)
        loc = 2.0 * math.sqrt(var) * stats.semicircular.ppf(u)
    elif family == "bernoulli":
        p, lo, hi = param("p"), param("lo", 0.0), param("hi", 1.0)
        if not 0.0 <= p <= 1.0:
            raise InvalidMeasure("bernoulli p must lie in [0, 1]")
        if p == 0.0:
            return point_mass(lo)
        if p == 1.0 or lo == hi:
            return point_mass(hi)
        return SpectralMeasure.from_atoms([(lo, 1.0 - p), (hi, p)])
    else:
        raise InvalidMeasure(f"unknown family {family!r}")
    return SpectralMeasure.from_atoms(locations=loc, weights=np.full(atom_count, 1.0 / atom_count))


@dataclass(frozen=True, eq=False)
class JointChannelMeasure:
    """Joint law of the per-transmitter channel gains ``(H_1, ..., H_J)``.

    ``points`` has shape ``(atoms, J)``; ``weights`` has shape ``(atoms,)``.
    """

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] != w.shape[0] or w.ndim != 1 or w.size == 0 or pts.shape[1] < 1:
            raise InvalidMeasure("points must be (atoms, J) and weights (atoms,)")
        if not np.all(np.isfinite(pts)) or not np.all(np.isfinite(w)):
            raise InvalidMeasure("channel atoms must be finite")
        if np.any(pts < 0):
            raise InvalidMeasure("channel gains must be nonnegative")
        if np.any(w <= 0):
            raise InvalidMeasure("channel atom weights must be positive")
        total = w.sum()
        if abs(total - 1.0) > _INPUT_NORM_TOL:
            raise InvalidMeasure(f"channel weights sum to {total!r}, not 1")
        w = w / total
        pts.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_atoms(cls, atoms: Iterable[tuple[Sequence[float], float]]) -> "JointChannelMeasure":
        pairs = list(atoms)
        if not pairs:
            raise InvalidMeasure("empty channel atom list")
        pts = np.array([np.atleast_1d(np.asarray(h, dtype=float)) for h, _ in pairs])
        return cls(pts, np.array([w for _, w in pairs], dtype=float))

    @property
    def dimension(self) -> int:
        return int(self.points.shape[1])

    @property
    def atoms(self) -> list[tuple[tuple[float, ...], float]]:
        return [(tuple(float(v) for v in h), float(w)) for h, w in zip(self.points, self.weights)]

    def marginal(self, i: int) -> SpectralMeasure:
        return SpectralMeasure.from_atoms(locations=self.points[:, i], weights=self.weights)

    def means(self) -> np.ndarray:
        return self.weights @ self.points

    def to_json(self) -> dict:
        return {"atoms": [[[float(v) for v in h], float(w)] for h, w in zip(self.points, self.weights)]}

    def __repr__(self):
        return f"JointChannelMeasure(J={self.dimension}, atoms={self.points.shape[0]})"


def joint_independent(marginals: Sequence[SpectralMeasure], cap: int = DEFAULT_JOINT_CAP) -> JointChannelMeasure:
    """Tensor-product joint law; weights are products of marginal weights."""
    if not marginals:
        raise InvalidMeasure("need at least one marginal")
    count = math.prod(m.size for m in marginals)
    if count > cap:
        raise MeasureTooLarge(f"independent joint law would have {count} atoms (cap {cap})")
    grids = np.meshgrid(*[m.locations for m in marginals], indexing="ij")
    wgrids = np.meshgrid(*[m.weights for m in marginals], indexing="ij")
    points = np.stack([g.ravel() for g in grids], axis=1)
    weights = np.prod(np.stack([g.ravel() for g in wgrids], axis=1), axis=1)
    return JointChannelMeasure(points, weights)


def measure_from_json(obj: Mapping[str, Any]) -> SpectralMeasure:
    """Parse ``{"atoms": [[x, w], ...]}``, ``{"samples": [...]}`` or a family spec."""
    if not isinstance(obj, Mapping):
        raise InvalidMeasure("measure must be a JSON object")
    if "atoms" in obj:
        atoms = obj["atoms"]
        if not isinstance(atoms, list):
            raise InvalidMeasure("'atoms' must be a list of [location, weight] pairs")
        return SpectralMeasure.from_atoms(atoms)
    if "samples" in obj:
        return from_samples(obj["samples"])
    if "family" in obj:
        return discretize_family(obj)
    raise InvalidMeasure("measure needs one of 'atoms', 'samples' or 'family'")


def channel_from_json(obj: Mapping[str, Any]) -> JointChannelMeasure:
    """Parse ``{"atoms": [[[h1, ..., hJ], w], ...]}`` or ``{"independent": [measure, ...]}``."""
    if not isinstance(obj, Mapping):
        raise InvalidMeasure("channel must be a JSON object")
    if "independent" in obj:
        marginals = obj["independent"]
        if not isinstance(marginals, list) or not marginals:
            raise InvalidMeasure("'independent' must be a nonempty list of measures")
        cap = int(obj.get("cap", DEFAULT_JOINT_CAP))
        return joint_independent([measure_from_json(m) for m in marginals], cap=cap)
    if "atoms" in obj:
        return JointChannelMeasure.from_atoms(obj["atoms"])
    raise InvalidMeasure("channel needs 'atoms' or 'independent'")
