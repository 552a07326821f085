"""
Finite-N Monte Carlo counterparts of the asymptotic solvers.

Every sampler takes an :class:`RngStream` (or a ready ``numpy`` Generator), so a
trial is reproduced bit-for-bit from its ``(seed, stream_id)`` pair. Trial ``t``
of a Monte Carlo average uses ``stream_id = t``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import linalg as sla

from .cdma import CdmaScenario
from .errors import (
    InvalidDimensions,
    NotHermitian,
    SingularCorrelation,
    UnsupportedDiagnostic,
    UnsupportedFactorSign,
)
from .measures import SpectralMeasure
from .stieltjes import as_half_plane

__all__ = [
    "RngStream",
    "EnsembleInstance",
    "SinrTable",
    "ConcentrationStats",
    "sample_haar",
    "sample_signatures",
    "sample_measure",
    "empirical_stieltjes",
    "build_sum",
    "build_product_hermitized",
    "build_cdma",
    "empirical_sinr",
    "empirical_tau_iid",
    "concentration_check",
    "mc_sum_stieltjes",
    "mc_product_stieltjes",
    "mc_cdma_stieltjes",
    "mc_sinr",
]

_HERMITIAN_TOL = 1e-10


@dataclass(frozen=True)
class RngStream:
    """Seed plus stream index; distinct stream ids give independent draws."""

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if self.stream_id < 0:
            raise ValueError("stream_id must be nonnegative")

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))))

    def child(self, stream_id: int) -> "RngStream":
        return RngStream(self.seed, stream_id)


def _gen(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError("rng must be an RngStream or a numpy Generator")


def _haar_columns(n: int, m: int, g: np.random.Generator) -> np.ndarray:
    # thin QR of an n x m Ginibre block gives the first m columns of a Haar unitary
    z = (g.standard_normal((n, m)) + 1j * g.standard_normal((n, m))) / math.sqrt(2.0)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    return q * (d / np.abs(d))


def sample_haar(n: int, rng) -> np.ndarray:
    """Haar-distributed ``n x n`` unitary.

    QR of a complex Ginibre matrix, with the phases of R's diagonal moved into
    Q; plain QR output is not Haar.
    """
    if n < 1:
        raise InvalidDimensions("n must be at least 1")
    return _haar_columns(n, n, _gen(rng))


def sample_signatures(kind: str, n: int, k: int, rng) -> np.ndarray:
    """``n x k`` signature matrix: isometric (Haar columns) or i.i.d. with variance 1/n entries."""
    if n < 1 or k < 1:
        raise InvalidDimensions("n and k must be at least 1")
    if kind == "isometric":
        if k > n:
            raise InvalidDimensions(f"isometric signatures need k <= n, got k={k}, n={n}")
        return _haar_columns(n, k, _gen(rng))
    if kind == "iid":
        g = _gen(rng)
        return (g.standard_normal((n, k)) + 1j * g.standard_normal((n, k))) / math.sqrt(2.0 * n)
    raise ValueError(f"unknown signature kind {kind!r}")


def sample_measure(measure: SpectralMeasure, size: int, gen: np.random.Generator) -> np.ndarray:
    """I.i.d. draws from an atom measure."""
    idx = gen.choice(measure.size, size=size, p=measure.weights)
    return measure.locations[idx]


def _hermitian(matrix) -> np.ndarray:
    m = np.asarray(matrix)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise NotHermitian("matrix must be square")
    defect = np.max(np.abs(m - m.conj().T)) if m.size else 0.0
    if defect > _HERMITIAN_TOL * max(1.0, np.max(np.abs(m))):
        raise NotHermitian(f"symmetry defect {defect:.3e} exceeds {_HERMITIAN_TOL:g}")
    return (m + m.conj().T) / 2


def empirical_stieltjes(matrix, z):
    """``(1/N) sum_k 1/(lambda_k - z)`` over the eigenvalues of a Hermitian matrix.

    ``z`` may be a scalar or an array of points in the upper half-plane.
    """
    eig = np.linalg.eigvalsh(_hermitian(matrix))
    if np.ndim(z) == 0:
        zc = as_half_plane(z)
        return complex(np.mean(1.0 / (eig - zc)))
    zs = np.asarray(z, dtype=complex)
    if np.any(zs.imag <= 0):
        raise ValueError("every point must have Im z > 0")
    return np.mean(1.0 / (eig[None, :] - zs.ravel()[:, None]), axis=1).reshape(zs.shape)


def _conjugate(v: np.ndarray, d: np.ndarray) -> np.ndarray:
    return (v * d) @ v.conj().T


def build_sum(measures: Sequence[SpectralMeasure], n: int, rng) -> np.ndarray:
    """``sum_j V_j D_j V_j^H`` with independent Haar ``V_j`` and i.i.d. diagonal draws ``D_j``."""
    if n < 1:
        raise InvalidDimensions("n must be at least 1")
    g = _gen(rng)
    out = np.zeros((n, n), dtype=complex)
    for m in measures:
        d = sample_measure(m, n, g)
        out += _conjugate(sample_haar(n, g), d)
    return (out + out.conj().T) / 2


def build_product_hermitized(m1: SpectralMeasure, m2: SpectralMeasure, n: int, rng) -> np.ndarray:
    """Hermitian ``X_2^{1/2} X_1 X_2^{1/2}``, isospectral to ``X_1 X_2``.

    Both factors are Haar-conjugated diagonals; their laws must live on ``[0, inf)``.
    """
    if n < 1:
        raise InvalidDimensions("n must be at least 1")
    for j, m in enumerate((m1, m2), start=1):
        if m.locations[0] < 0:
            raise UnsupportedFactorSign(f"factor {j} has negative support")
    g = _gen(rng)
    x1 = _conjugate(sample_haar(n, g), sample_measure(m1, n, g))
    v2 = sample_haar(n, g)
    root2 = v2 * np.sqrt(sample_measure(m2, n, g))
    out = root2.conj().T @ x1 @ root2
    # root2^H X_1 root2 has the spectrum of X_2^{1/2} X_1 X_2^{1/2} (conjugated by V_2)
    return (out + out.conj().T) / 2


@dataclass(frozen=True, eq=False)
class EnsembleInstance:
    """One finite-N CDMA realization.

    The channel of transmitter j is ``H_j = V diag(factors[j])`` with a shared
    Haar ``V``; ``factors[j]`` holds square roots of the sampled gains.
    """

    n: int
    kind: str
    factors: tuple[np.ndarray, ...]
    haar_factors: tuple[np.ndarray, ...]
    signatures: tuple[np.ndarray, ...]
    powers: tuple[np.ndarray, ...]
    noise_variance: float
    signature_kinds: tuple[str, ...] = ()
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def J(self) -> int:
        return len(self.signatures)

    @property
    def ks(self) -> tuple[int, ...]:
        return tuple(s.shape[1] for s in self.signatures)

    def channel(self, j: int) -> np.ndarray:
        return self.haar_factors[0] * self.factors[j]

    def effective_signatures(self, j: int) -> np.ndarray:
        """Columns ``h_{j,k} = H_j s_{j,k}``."""
        return self.channel(j) @ self.signatures[j]

    def interference(self) -> np.ndarray:
        """``sum_j (H_j S_j A_j)(H_j S_j A_j)^H``."""
        if "interference" not in self._cache:
            out = np.zeros((self.n, self.n), dtype=complex)
            for j in range(self.J):
                b = self.effective_signatures(j) * np.sqrt(self.powers[j])
                out += b @ b.conj().T
            self._cache["interference"] = (out + out.conj().T) / 2
        return self._cache["interference"]

    def correlation(self, z=None) -> np.ndarray:
        """``-z I + interference``; by default ``z = -noise_variance``."""
        z = -self.noise_variance if z is None else complex(z)
        return self.interference() - z * np.eye(self.n)


def build_cdma(scenario: CdmaScenario, n: int, rng) -> EnsembleInstance:
    """Sample a CDMA instance with ``K_j = round(alpha_j n)`` streams per transmitter."""
    if n < 1:
        raise InvalidDimensions("n must be at least 1")
    ks = [int(round(t.alpha * n)) for t in scenario.transmitters]
    for j, (t, k) in enumerate(zip(scenario.transmitters, ks)):
        if k < 1:
            raise InvalidDimensions(f"transmitter {j}: round(alpha n) = 0 at n={n}")
        if t.isometric and k > n:
            raise InvalidDimensions(f"transmitter {j}: isometric with K={k} > n={n}")
    g = _gen(rng)
    v = sample_haar(n, g)
    ch = scenario.channel
    rows = ch.points[g.choice(len(ch.weights), size=n, p=ch.weights)]
    factors = tuple(np.sqrt(rows[:, j]) for j in range(scenario.J))
    sigs, pows = [], []
    for t, k in zip(scenario.transmitters, ks):
        sigs.append(sample_signatures(t.signature_kind, n, k, g))
        pows.append(sample_measure(t.power, k, g))
    return EnsembleInstance(n=n, kind="cdma", factors=factors, haar_factors=(v,), signatures=tuple(sigs),
                            powers=tuple(pows), noise_variance=float(scenario.noise_variance),
                            signature_kinds=tuple(t.signature_kind for t in scenario.transmitters))


@dataclass(frozen=True, eq=False)
class SinrTable:
    """Per-stream results plus per-transmitter trace forms.

    ``transmitter``, ``stream``, ``rho`` and ``sinr`` are flat arrays with one
    entry per stream. ``rho_trace[j]`` is the trace-form estimate of rho_j
    (NaN for a fully loaded isometric transmitter).
    """

    transmitter: np.ndarray
    stream: np.ndarray
    rho: np.ndarray
    sinr: np.ndarray
    rho_trace: np.ndarray

    def mean_rho(self, j: int) -> float:
        return float(np.mean(self.rho[self.transmitter == j]))

    def mean_sinr(self, j: int) -> float:
        return float(np.mean(self.sinr[self.transmitter == j]))


def _cholesky(r: np.ndarray):
    try:
        return sla.cho_factor(r, lower=True, check_finite=True)
    except (np.linalg.LinAlgError, sla.LinAlgError) as exc:
        raise SingularCorrelation("correlation matrix is singular or not positive definite") from exc


def empirical_sinr(instance: EnsembleInstance, noise_variance: float | None = None) -> SinrTable:
    """MMSE SINR of every stream of a CDMA instance.

    Each stream's ``rho = h^H R_d^{-1} h`` with ``R_d = R - P h h^H`` is obtained
    from ``q = h^H R^{-1} h`` as ``q / (1 - P q)``, so R is factored once.
    ``noise_variance`` overrides the instance's value.
    """
    sigma2 = instance.noise_variance if noise_variance is None else float(noise_variance)
    n = instance.n
    r = instance.interference() + sigma2 * np.eye(n)
    factor = _cholesky(r)
    tx, st, rho_all, sinr_all, trace = [], [], [], [], []
    for j in range(instance.J):
        h = instance.effective_signatures(j)
        p = instance.powers[j]
        q = np.real(np.einsum("ik,ik->k", h.conj(), sla.cho_solve(factor, h)))
        rho = q / (1.0 - p * q)
        tx.append(np.full(h.shape[1], j))
        st.append(np.arange(h.shape[1]))
        rho_all.append(rho)
        sinr_all.append(p * rho)
        hj = instance.channel(j)
        m = hj.conj().T @ sla.cho_solve(factor, hj)
        if instance.signature_kinds and instance.signature_kinds[j] == "isometric":
            k = h.shape[1]
            if k == n:
                trace.append(math.nan)
            else:
                s = instance.signatures[j]
                ups = np.eye(n) - s @ s.conj().T
                trace.append(float(np.real(np.trace(ups @ m))) / (n - k))
        else:
            trace.append(float(np.real(np.trace(m))) / n)
    return SinrTable(np.concatenate(tx), np.concatenate(st), np.concatenate(rho_all),
                     np.concatenate(sinr_all), np.array(trace))


def empirical_tau_iid(instance: EnsembleInstance, j: int, z=None) -> complex:
    """``(1/N) tr[H_j S_j A_j^4 S_j^H H_j^H R^{-1}]`` with ``R = -z I + interference``.

    ``z`` defaults to ``-noise_variance``. Only defined for i.i.d. signatures.
    """
    if instance.signature_kinds and instance.signature_kinds[j] != "iid":
        raise UnsupportedDiagnostic("the empirical tau diagnostic covers i.i.d. signatures only")
    h = instance.effective_signatures(j)
    p = instance.powers[j]
    r = instance.correlation(z)
    x = np.linalg.solve(r, h)
    # tr[B P^2 B^H R^{-1}] = sum_k P_k^2 h_k^H R^{-1} h_k
    return complex(np.sum(p ** 2 * np.einsum("ik,ik->k", h.conj(), x)) / instance.n)


@dataclass(frozen=True)
class ConcentrationStats:
    kind: str
    n: int
    k: int
    trials: int
    max_deviation: float
    mean_deviation: float


def concentration_check(measure: SpectralMeasure, n: int, k: int, trials: int, rng,
                        kind: str = "isometric") -> ConcentrationStats:
    """Deviation of a random quadratic form from its trace surrogate.

    For ``kind="isometric"`` a Haar unitary supplies k columns S and an extra
    column s orthogonal to them; the statistic is ``|s^H X s - tr[Pi X]/(n - k)|``
    with ``Pi = I - S S^H``. For ``kind="iid"`` it is ``|y^H X y - tr[X]/n|`` with
    i.i.d. entries of variance 1/n (k is unused). X is a Haar-conjugated
    diagonal of i.i.d. draws from ``measure``, sampled afresh per trial.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    if kind == "isometric" and not 0 <= k < n:
        raise InvalidDimensions("isometric check needs 0 <= k < n")
    if kind not in ("iid", "isometric"):
        raise ValueError(f"unknown kind {kind!r}")
    g = _gen(rng)
    dev = np.empty(trials)
    for t in range(trials):
        x = _conjugate(sample_haar(n, g), sample_measure(measure, n, g))
        if kind == "isometric":
            u = _haar_columns(n, k + 1, g)
            s_other, s = u[:, :k], u[:, k]
            trace = (np.trace(x) - np.trace(s_other.conj().T @ x @ s_other)).real / (n - k)
        else:
            s = sample_signatures("iid", n, 1, g)[:, 0]
            trace = np.trace(x).real / n
        dev[t] = abs((s.conj() @ x @ s).real - trace)
    return ConcentrationStats(kind, n, k, trials, float(dev.max()), float(dev.mean()))


def _streams(seed: int, trials: int):
    if trials < 1:
        raise ValueError("trials must be at least 1")
    return [RngStream(seed, t) for t in range(trials)]


def mc_sum_stieltjes(measures: Sequence[SpectralMeasure], n: int, z, trials: int, seed: int):
    """Trial-averaged empirical transform of :func:`build_sum` matrices."""
    return sum(empirical_stieltjes(build_sum(measures, n, r), z) for r in _streams(seed, trials)) / trials


def mc_product_stieltjes(m1: SpectralMeasure, m2: SpectralMeasure, n: int, z, trials: int, seed: int):
    """Trial-averaged empirical transform of :func:`build_product_hermitized` matrices."""
    return sum(empirical_stieltjes(build_product_hermitized(m1, m2, n, r), z)
               for r in _streams(seed, trials)) / trials


def mc_cdma_stieltjes(scenario: CdmaScenario, n: int, z, trials: int, seed: int):
    """Trial-averaged empirical transform of the CDMA interference matrix."""
    return sum(empirical_stieltjes(build_cdma(scenario, n, r).interference(), z)
               for r in _streams(seed, trials)) / trials


def mc_sinr(scenario: CdmaScenario, n: int, trials: int, seed: int,
            noise_variances: Sequence[float] | None = None) -> np.ndarray:
    """Stream- and trial-averaged SINR, shape ``(len(noise_variances), J)``.

    One instance per trial is shared by every noise level. By default only the
    scenario's own noise variance is used.
    """
    levels = [scenario.noise_variance] if noise_variances is None else list(noise_variances)
    acc = np.zeros((len(levels), scenario.J))
    for r in _streams(seed, trials):
        inst = build_cdma(scenario, n, r)
        for a, s2 in enumerate(levels):
            table = empirical_sinr(inst, s2)
            acc[a] += [table.mean_sinr(j) for j in range(scenario.J)]
    return acc / trials
