"""
Limiting spectrum and MMSE SINR for DS/MC-CDMA with jointly diagonalizable
channels.

The received correlation matrix is ``sigma^2 I + sum_j (H_j S_j A_j)(H_j S_j A_j)^H``
with J transmitters. Transmitter j has load ``alpha_j = K_j / N``, i.i.d. or
isometric signatures, transmit powers ``P_j = |A_{j,k}|^2`` and channel gains
``H_j`` (eigenvalues of ``H_j H_j^H``) whose joint law is given by a
:class:`~rmtkit.measures.JointChannelMeasure`. The summands are not free, so
the free-sum solver does not apply.

Unknowns rho_j, tau_j solve, with pbar_j = E[P_j],

    calP_j = E[P_j / (1 + P_j rho_j)]
    calH_j = E[H_j / (-z + sum_i (alpha_i pbar_i - tau_i) H_i)]
    rho_j  = calH_j                                   (i.i.d.)
           = calH_j / (1 - alpha_j rho_j calP_j)      (isometric)
    tau_j  = alpha_j (pbar_j - calP_j)                (i.i.d.)
           = alpha_j (pbar_j - calP_j) - (alpha_j pbar_j - tau_j)^2 calH_j   (isometric)

and the transform is ``G(z) = -(1/z) (1 - sum_j alpha_j rho_j calP_j)``. At
``z = -sigma^2 + i eps`` the per-stream SINR is ``P_{j,k} Re(rho_j)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from . import _fixed_point as fp
from .errors import (
    AmbiguousFixedPoint,
    DegenerateMeasure,
    EvaluationPole,
    InvalidScenario,
    NonConvergence,
    SpectralEdge,
)
from .measures import JointChannelMeasure, SpectralMeasure
from .stieltjes import as_half_plane

__all__ = [
    "SIGNATURE_KINDS",
    "TransmitterSpec",
    "CdmaScenario",
    "CdmaFixedPointState",
    "SweepRow",
    "eval_calP",
    "eval_calH",
    "cdma_residual",
    "solve_theorem1",
    "solve_theorem1_grid",
    "sinr",
    "sinr_sweep",
    "noise_for_snr",
    "DEFAULT_EPSILON",
]

SIGNATURE_KINDS = ("iid", "isometric")
DEFAULT_EPSILON = 1e-8
# Im(rho) may exceed eps by this factor (times Re(rho)/sigma^2) before the
# evaluation point is treated as touching the spectrum
_EDGE_FACTOR = 1e3
# slack on the half-plane tests. A fully loaded isometric transmitter with a
# single power level has tau = 0 and Im(z rho) = 0 exactly, so converged
# iterates sit on the boundary up to the solver's accuracy; spurious roots
# miss it by O(1)
_DOMAIN_SLACK = 1e-8
# with no noise the evaluation point is first probed at this distance from the
# axis; an atom of the spectrum at 0 shows up there as Im(rho) ~ 1/eps
_PROBE_EPSILON = 1e-3


@dataclass(frozen=True)
class TransmitterSpec:
    alpha: float
    signature_kind: str
    power: SpectralMeasure

    def __post_init__(self):
        if self.signature_kind not in SIGNATURE_KINDS:
            raise InvalidScenario(f"signature kind must be one of {SIGNATURE_KINDS}, got {self.signature_kind!r}")
        if not (math.isfinite(self.alpha) and self.alpha > 0):
            raise InvalidScenario("alpha must be positive")
        if self.signature_kind == "isometric" and self.alpha > 1:
            raise InvalidScenario("isometric requires alpha <= 1")
        if self.power.locations[0] < 0:
            raise InvalidScenario("transmit powers must be nonnegative")

    @property
    def isometric(self) -> bool:
        return self.signature_kind == "isometric"


@dataclass(frozen=True)
class CdmaScenario:
    transmitters: tuple[TransmitterSpec, ...]
    channel: JointChannelMeasure
    noise_variance: float

    def __post_init__(self):
        object.__setattr__(self, "transmitters", tuple(self.transmitters))
        if not self.transmitters:
            raise InvalidScenario("need at least one transmitter")
        if self.channel.dimension != len(self.transmitters):
            raise InvalidScenario(f"channel dimension {self.channel.dimension} does not match "
                                  f"{len(self.transmitters)} transmitters")
        if not (math.isfinite(self.noise_variance) and self.noise_variance >= 0):
            raise InvalidScenario("noise_variance must be finite and nonnegative")

    @property
    def J(self) -> int:
        return len(self.transmitters)

    @property
    def alphas(self) -> np.ndarray:
        return np.array([t.alpha for t in self.transmitters])

    @property
    def pbar(self) -> np.ndarray:
        return np.array([t.power.mean() for t in self.transmitters])

    def with_noise(self, noise_variance: float) -> "CdmaScenario":
        return replace(self, noise_variance=noise_variance)


@dataclass(frozen=True)
class CdmaFixedPointState:
    z: complex
    g: complex
    rho: tuple[complex, ...]
    tau: tuple[complex, ...]
    calP: tuple[complex, ...]
    calH: tuple[complex, ...]
    pbar: tuple[float, ...]
    residual: float
    iterations: int


@dataclass(frozen=True)
class SweepRow:
    snr_db: float
    noise_variance: float
    transmitter: int
    sinr: float
    sinr_db: float
    rho: complex
    residual: float
    iterations: int
    status: str = "ok"


def eval_calP(power: SpectralMeasure, rho: complex) -> complex:
    """``E[P / (1 + P rho)]`` over the power law."""
    den = 1.0 + power.locations * rho
    if np.any(den == 0):
        raise EvaluationPole(f"1 + P rho vanishes at rho={rho!r}")
    return complex(np.sum(power.weights * power.locations / den))


def eval_calH(channel: JointChannelMeasure, j: int, weights: Sequence[complex], z) -> complex:
    """``E[H_j / (-z + sum_i weights_i H_i)]`` over the joint channel law (``j`` is 0-based)."""
    wts = np.asarray(weights, dtype=complex)
    den = -complex(z) + channel.points @ wts
    return complex(np.sum(channel.weights * channel.points[:, j] / den))


class _CdmaSystem:
    def __init__(self, scenario: CdmaScenario):
        self.sc = scenario
        self.J = scenario.J
        for j, t in enumerate(scenario.transmitters):
            if t.power.is_degenerate():
                raise DegenerateMeasure(f"transmitter {j} power law has all of its mass at zero")
        hmeans = scenario.channel.means()
        for j in range(self.J):
            if hmeans[j] <= 0:
                raise DegenerateMeasure(f"channel {j} has all of its mass at zero")
        self.alpha = scenario.alphas
        self.pbar = scenario.pbar
        self.iso = np.array([t.isometric for t in scenario.transmitters])
        self.p_loc = [t.power.locations for t in scenario.transmitters]
        self.p_w = [t.power.weights for t in scenario.transmitters]
        self.H = scenario.channel.points
        self.Hw = scenario.channel.weights
        self.hmean = hmeans
        self.p2 = np.array([t.power.moment(2) for t in scenario.transmitters])
        hmax = self.H.max(axis=0)
        pmax = np.array([t.power.locations[-1] for t in scenario.transmitters])
        self.top = max(1.0, float(np.sum(pmax * hmax * (1 + np.sqrt(self.alpha)) ** 2)))

    def aux(self, rho, tau, z):
        calP = np.array([np.sum(w * p / (1.0 + p * r)) for p, w, r in zip(self.p_loc, self.p_w, rho)])
        den = -z + self.H @ (self.alpha * self.pbar - tau)
        calH = (self.Hw / den) @ self.H
        return calP, calH

    def rhs(self, rho, tau, z):
        calP, calH = self.aux(rho, tau, z)
        a = self.alpha
        rho_new = np.where(self.iso, calH / (1.0 - a * rho * calP), calH)
        tau_new = a * (self.pbar - calP)
        tau_new = np.where(self.iso, tau_new - (a * self.pbar - tau) ** 2 * calH, tau_new)
        return rho_new, tau_new, calP, calH

    def phi(self, v, z):
        rho_new, tau_new, _, _ = self.rhs(v[:self.J], v[self.J:], z)
        return np.concatenate([rho_new, tau_new])

    def g_of(self, rho, calP, z):
        return -(1.0 - np.sum(self.alpha * rho * calP)) / z

    def residual(self, v, z):
        rho, tau = v[:self.J], v[self.J:]
        rho_new, tau_new, calP, calH = self.rhs(rho, tau, z)
        r = max(np.max(np.abs(rho - rho_new)), np.max(np.abs(tau - tau_new)))
        return float(r) if np.isfinite(r) else math.inf

    def admissible(self, v, z):
        # tau may sit exactly on the real axis, so iterates are only kept away
        # from Im rho <= 0 and from poles; the half-plane test on tau is
        # applied to converged roots by in_domain
        rho, tau = v[:self.J], v[self.J:]
        if not np.all(rho.imag > 0):
            return False
        with np.errstate(all="ignore"):
            calP, calH = self.aux(rho, tau, z)
        return bool(np.all(np.isfinite(calP)) and np.all(np.isfinite(calH))
                    and np.all(self.alpha * rho * calP != 1.0))

    def in_domain(self, v, z):
        # rho_j and tau_j are transforms of positive measures on [0, inf) with
        # masses E[H_j] and at most alpha_j E[P_j^2] E[H_j] (read off their
        # large-z behaviour), so Im v >= 0, Im(z v) >= 0 and |v| <= mass / Im z.
        # The last two reject spurious roots that Im v > 0 alone lets through
        zv = z * v
        bound = np.concatenate([self.hmean, self.alpha * self.p2 * self.hmean]) / z.imag
        return bool(np.all(v.imag >= -_DOMAIN_SLACK * (1.0 + np.abs(v)))
                    and np.all(zv.imag >= -_DOMAIN_SLACK * (1.0 + np.abs(zv)))
                    and np.all(np.abs(v) <= bound * (1.0 + _DOMAIN_SLACK) + _DOMAIN_SLACK))

    def start(self, z):
        rho = -self.hmean / z
        tau = self.alpha * self.p2 * rho
        return np.concatenate([rho, tau]).astype(complex)

    def solve_at(self, z, x0, budget, cfg):
        return fp.iterate(lambda v: self.phi(v, z), x0,
                          residual=lambda v: self.residual(v, z),
                          admissible=lambda v: self.admissible(v, z), cfg=cfg, budget=budget,
                          accept=lambda v: self.in_domain(v, z))

    def state(self, z, v, n) -> CdmaFixedPointState:
        rho, tau = v[:self.J], v[self.J:]
        calP, calH = self.aux(rho, tau, z)
        g = self.g_of(rho, calP, z)
        return CdmaFixedPointState(
            z=z, g=complex(g), rho=tuple(complex(r) for r in rho), tau=tuple(complex(t) for t in tau),
            calP=tuple(complex(p) for p in calP), calH=tuple(complex(h) for h in calH),
            pbar=tuple(float(p) for p in self.pbar), residual=cdma_residual(self.sc, z, g, rho, tau),
            iterations=n)


def cdma_residual(scenario: CdmaScenario, z: complex, g: complex, rho, tau) -> float:
    """Largest absolute defect over the transform, rho and tau equations."""
    system = _CdmaSystem(scenario)
    rho = np.asarray(rho, dtype=complex)
    tau = np.asarray(tau, dtype=complex)
    rho_new, tau_new, calP, _ = system.rhs(rho, tau, z)
    return float(max(abs(g - system.g_of(rho, calP, z)),
                     np.max(np.abs(rho - rho_new)), np.max(np.abs(tau - tau_new))))


def _solve(system: _CdmaSystem, z, cfg, initial=None):
    v, n, _ = fp.continuation_solve(lambda zz, x0, b: system.solve_at(zz, x0, b, cfg),
                                    z, system.start, system.top, cfg, initial)
    if cfg.check_uniqueness:
        try:
            alt, _, _ = system.solve_at(z, np.full(2 * system.J, 1j), None, cfg)
        except NonConvergence:
            alt = None
        fp.check_unique(v, alt, cfg, f"CDMA system at z={z}")
    return v, n


def solve_theorem1(scenario: CdmaScenario, z, cfg: fp.SolverConfig | None = None) -> CdmaFixedPointState:
    """Solve the coupled rho/tau system at one point ``z`` in the upper half-plane."""
    cfg = cfg or fp.SolverConfig()
    z = as_half_plane(z)
    system = _CdmaSystem(scenario)
    v, n = _solve(system, z, cfg)
    return system.state(z, v, n)


def solve_theorem1_grid(scenario: CdmaScenario, z_list, cfg: fp.SolverConfig | None = None, *,
                        warm_start: bool = True, strict: bool = True) -> list:
    """Solve along a path of points with warm starts.

    A failure at point ``k`` raises with ``index=k``. With ``strict=False`` the
    exception is stored in place of that point's state and the sweep goes on.
    """
    cfg = cfg or fp.SolverConfig()
    zs = [as_half_plane(z) for z in z_list]
    if not zs:
        raise ValueError("z_list must be nonempty")
    system = _CdmaSystem(scenario)
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


def _edge_check(state: CdmaFixedPointState, j: int, sigma2: float, epsilon: float):
    rho = state.rho[j]
    # for a Stieltjes-type rho, Im rho <= eps Re(rho) / dist(-sigma^2, support)
    scale = max(1.0, rho.real / sigma2) if sigma2 > 0 else 1.0
    if not abs(rho.imag) < _EDGE_FACTOR * epsilon * scale:
        raise SpectralEdge(f"Im rho_{j} = {rho.imag:.3e} at eps={epsilon:g}: "
                           f"-sigma^2 is in or near the limiting spectrum")


def _warn_power_level(scenario: CdmaScenario, j: int, power_level: float):
    locs = scenario.transmitters[j].power.locations
    if power_level != 0 and not np.any(np.isclose(locs, power_level, rtol=1e-9, atol=0.0)):
        warnings.warn(f"power level {power_level!r} is not an atom of transmitter {j}'s power law",
                      stacklevel=3)


def sinr(scenario: CdmaScenario, power_level: float, j: int, epsilon: float = DEFAULT_EPSILON,
         cfg: fp.SolverConfig | None = None) -> float:
    """Asymptotic MMSE output SINR of a stream with power ``power_level`` of transmitter ``j``.

    Evaluated from a single solve at ``z = -sigma^2 + i*epsilon``. Without
    noise, a coarser solve first checks that 0 is away from the spectrum.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    if not 0 <= j < scenario.J:
        raise IndexError(f"transmitter index {j} out of range")
    _warn_power_level(scenario, j, power_level)
    if scenario.noise_variance == 0:
        probe = solve_theorem1(scenario, complex(0.0, _PROBE_EPSILON), cfg)
        _edge_check(probe, j, 0.0, _PROBE_EPSILON)
    state = solve_theorem1(scenario, complex(-scenario.noise_variance, epsilon), cfg)
    _edge_check(state, j, scenario.noise_variance, epsilon)
    return float(power_level * state.rho[j].real)


def noise_for_snr(scenario: CdmaScenario, snr_db: float) -> float:
    """Noise variance for a per-stream received SNR of ``E[P] E[H] / sigma^2``.

    With several transmitters the numerator is averaged over transmitters; it
    equals 1 for unit-mean powers and channels.
    """
    signal = float(np.mean(scenario.pbar * scenario.channel.means()))
    return signal / 10.0 ** (snr_db / 10.0)


_STATUS = {NonConvergence: "nonconvergence", AmbiguousFixedPoint: "ambiguous", SpectralEdge: "spectral_edge"}


def _db(x: float) -> float:
    return 10.0 * math.log10(x) if x > 0 else -math.inf


def sinr_sweep(scenario: CdmaScenario, snr_db_list, cfg: fp.SolverConfig | None = None, *,
               epsilon: float = DEFAULT_EPSILON, strict: bool = True) -> list[SweepRow]:
    """SINR of every transmitter (at its mean power) over a list of SNRs.

    The noise variance at each SNR follows :func:`noise_for_snr`. Points are
    solved in order with warm starts. A failure raises :class:`NonConvergence`
    carrying the SNR index, or with ``strict=False`` emits rows with status
    ``"nonconvergence"``.
    """
    cfg = cfg or fp.SolverConfig()
    snrs = [float(s) for s in snr_db_list]
    if not snrs:
        raise ValueError("snr list must be nonempty")
    system = None
    rows: list[SweepRow] = []
    previous = None
    for k, snr_db in enumerate(snrs):
        sigma2 = noise_for_snr(scenario, snr_db)
        sc = scenario.with_noise(sigma2)
        system = _CdmaSystem(sc)
        z = complex(-sigma2, epsilon)
        try:
            v, n = _solve(system, z, cfg, previous)
            state = system.state(z, v, n)
            for j in range(sc.J):
                _edge_check(state, j, sigma2, epsilon)
        except (NonConvergence, AmbiguousFixedPoint, SpectralEdge) as exc:
            if strict:
                exc.index = k
                raise
            for j in range(sc.J):
                rows.append(SweepRow(snr_db, sigma2, j, math.nan, math.nan, complex(math.nan, math.nan),
                                     math.nan, getattr(exc, "iterations", None) or 0,
                                     _STATUS[type(exc)]))
            continue
        previous = v
        for j in range(sc.J):
            value = float(state.pbar[j] * state.rho[j].real)
            rows.append(SweepRow(snr_db, sigma2, j, value, _db(value), state.rho[j], state.residual, n))
    return rows
