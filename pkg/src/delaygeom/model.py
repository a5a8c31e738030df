"""Network model: parameters, coverage criteria and per-realization coverage.

All quantities are in linear SI units (m, W, points/m^2). The path loss is an
attenuation ``K r**alpha``, so the received power from a BS at distance ``r``
is ``P h / (K r**alpha)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import DomainError

SPEED_OF_LIGHT = 3e8

# Reference values used as defaults throughout the package.
DEFAULT_ALPHA = 4.0
DEFAULT_FC_HZ = 2.1e9
DEFAULT_N0_DBM_HZ = -174.0
DEFAULT_BANDWIDTH_HZ = 200e6
DEFAULT_POWER_DBM = 43.0
DEFAULT_MT_RADIUS_M = 50.0
DEFAULT_THETA_DB = 12.5
DEFAULT_BS_TO_MT_RATIO = 0.1


# --------------------------------------------------------------------------
# unit conversions
# --------------------------------------------------------------------------

def db_to_linear(x):
    """Convert decibels to a linear power ratio."""
    if np.ndim(x):
        return 10.0 ** (np.asarray(x, dtype=float) / 10.0)
    return 10.0 ** (x / 10.0)


def linear_to_db(x):
    """Convert a linear power ratio to decibels."""
    if np.ndim(x):
        return 10.0 * np.log10(np.asarray(x, dtype=float))
    if x <= 0:
        raise DomainError(f"cannot express non-positive ratio {x!r} in dB")
    return 10.0 * math.log10(x)


def dbm_to_watt(x):
    """Convert dBm to watts (0 dBm = 1 mW)."""
    return db_to_linear(x) * 1e-3


def watt_to_dbm(x):
    """Convert watts to dBm."""
    return linear_to_db(np.asarray(x, dtype=float) / 1e-3 if np.ndim(x) else x / 1e-3)


def noise_power(n0_dbm_hz=DEFAULT_N0_DBM_HZ, bandwidth_hz=DEFAULT_BANDWIDTH_HZ):
    """Thermal noise power ``W = N0 * B`` in watts."""
    if bandwidth_hz <= 0:
        raise DomainError("bandwidth must be positive")
    return dbm_to_watt(n0_dbm_hz + 10.0 * math.log10(bandwidth_hz))


def pathloss_constant(fc_hz=DEFAULT_FC_HZ):
    """Free-space reference constant ``K = (4 pi f_c / c)**2``."""
    if fc_hz <= 0:
        raise DomainError("carrier frequency must be positive")
    return (4.0 * math.pi * fc_hz / SPEED_OF_LIGHT) ** 2


# --------------------------------------------------------------------------
# domain types
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class NetworkParams:
    """Physical and geometric parameters of the network.

    Attributes
    ----------
    lambda_bs, lambda_mt : float
        Densities of base stations and mobile terminals (points/m^2).
    alpha : float
        Path-loss exponent, must exceed 2.
    K : float
        Path-loss constant.
    P : float
        Transmit power (W).
    W : float
        Noise power (W); zero gives an interference-limited network.
    """

    lambda_bs: float
    lambda_mt: float
    alpha: float = DEFAULT_ALPHA
    K: float = field(default_factory=pathloss_constant)
    P: float = field(default_factory=lambda: dbm_to_watt(DEFAULT_POWER_DBM))
    W: float = field(default_factory=noise_power)

    def __post_init__(self):
        if not (self.lambda_bs > 0 and self.lambda_mt > 0):
            raise DomainError("densities must be positive")
        if not self.alpha > 2:
            raise DomainError(f"path-loss exponent must exceed 2, got {self.alpha}")
        if not (self.K > 0 and self.P > 0):
            raise DomainError("K and P must be positive")
        if not self.W >= 0:
            raise DomainError("noise power must be non-negative")

    @classmethod
    def reference(cls, lambda_bs=None, **overrides):
        """Reference deployment: 2.1 GHz, 200 MHz, 43 dBm, MT radius 50 m.

        ``lambda_bs`` defaults to a tenth of the MT density.
        """
        lambda_mt = overrides.pop("lambda_mt", 1.0 / (math.pi * DEFAULT_MT_RADIUS_M ** 2))
        if lambda_bs is None:
            lambda_bs = DEFAULT_BS_TO_MT_RATIO * lambda_mt
        return cls(lambda_bs=lambda_bs, lambda_mt=lambda_mt, **overrides)

    @property
    def load(self):
        """Active probability of a generic BS."""
        return active_probability(self.lambda_bs, self.lambda_mt)

    @property
    def delta(self):
        return 2.0 / self.alpha


@dataclass(frozen=True)
class Sir:
    gamma: float

    def __post_init__(self):
        if not self.gamma > 0:
            raise DomainError("SIR threshold must be positive")

    name = "sir"


@dataclass(frozen=True)
class Sinr:
    gamma: float

    def __post_init__(self):
        if not self.gamma > 0:
            raise DomainError("SINR threshold must be positive")

    name = "sinr"


@dataclass(frozen=True)
class SirAsnr:
    gamma: float
    theta: float = field(default_factory=lambda: db_to_linear(DEFAULT_THETA_DB))

    def __post_init__(self):
        if not (self.gamma > 0 and self.theta > 0):
            raise DomainError("SIR and ASNR thresholds must be positive")

    name = "sir-asnr"


CoverageCriterion = Union[Sir, Sinr, SirAsnr]


@dataclass(frozen=True)
class NetworkRealization:
    """One spatial draw seen from the typical user at the origin.

    ``interferers`` holds the distances of the active interfering BSs in
    ascending order; every one lies strictly beyond the serving BS.
    """

    r0: float
    interferers: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __post_init__(self):
        r = np.array(self.interferers, dtype=float).ravel()
        r.setflags(write=False)
        object.__setattr__(self, "interferers", r)
        if not self.r0 > 0:
            raise DomainError("serving distance must be positive")
        if r.size:
            if r[0] <= self.r0:
                raise DomainError("interferers must lie beyond the serving BS")
            if np.any(np.diff(r) <= 0):
                raise DomainError("interferer distances must be strictly ascending")

    @property
    def n_interferers(self):
        return int(self.interferers.size)


# --------------------------------------------------------------------------
# elementary model quantities
# --------------------------------------------------------------------------

def active_probability(lambda_bs, lambda_mt):
    """Probability that a BS serves at least one MT.

    Uses the gamma-approximation of the Voronoi cell area,
    ``1 - (1 + lambda_mt / (3.5 lambda_bs))**-3.5``.
    """
    if not (lambda_bs > 0 and lambda_mt > 0):
        raise DomainError("densities must be positive")
    ratio = lambda_mt / lambda_bs
    # -expm1(-3.5 log1p(.)) keeps precision when the ratio is tiny
    return -math.expm1(-3.5 * math.log1p(ratio / 3.5))


def nearest_distance_pdf(r0, lambda_bs):
    """Density of the distance from the origin to the nearest BS."""
    if not lambda_bs > 0:
        raise DomainError("density must be positive")
    r = np.asarray(r0, dtype=float)
    if np.any(r < 0):
        raise DomainError("distance must be non-negative")
    out = 2.0 * math.pi * lambda_bs * r * np.exp(-lambda_bs * math.pi * r * r)
    return float(out) if out.ndim == 0 else out


def nearest_distance_cdf(r0, lambda_bs):
    r = np.asarray(r0, dtype=float)
    out = -np.expm1(-lambda_bs * math.pi * r * r)
    return float(out) if out.ndim == 0 else out


def asnr_radius(params: NetworkParams, theta):
    """Largest serving distance meeting the ASNR detection threshold."""
    if params.W == 0:
        return math.inf
    return (params.P / (params.K * params.W * theta)) ** (1.0 / params.alpha)


def gate(r0, criterion: CoverageCriterion, params: NetworkParams):
    """Criterion-dependent factor of the conditional coverage probability.

    Vectorized over ``r0``. SIR gives 1, SINR the noise penalty
    ``exp(-gamma W K r0**alpha / P)``, SIR+ASNR the indicator ``r0 <= r*``.
    """
    r = np.asarray(r0, dtype=float)
    if isinstance(criterion, Sir):
        out = np.ones_like(r)
    elif isinstance(criterion, Sinr):
        out = np.exp(-criterion.gamma * params.W * params.K * r ** params.alpha / params.P)
    elif isinstance(criterion, SirAsnr):
        out = (r <= asnr_radius(params, criterion.theta)).astype(float)
    else:
        raise TypeError(f"unknown coverage criterion {criterion!r}")
    return float(out) if out.ndim == 0 else out


def interference_factor(r0, interferers, gamma, alpha):
    """``prod_i (1 + gamma (r0/r_i)**alpha)**-1``, computed in log space."""
    r = np.asarray(interferers, dtype=float)
    if r.size == 0:
        return 1.0
    return math.exp(-np.sum(np.log1p(gamma * (r0 / r) ** alpha)))


def conditional_coverage(real: NetworkRealization, criterion: CoverageCriterion,
                         params: NetworkParams):
    """Per-slot success probability given the realization, averaged over fading."""
    g = gate(real.r0, criterion, params)
    if g == 0.0:
        return 0.0
    return g * interference_factor(real.r0, real.interferers, criterion.gamma, params.alpha)


def critical_threshold(alpha, load):
    """SIR threshold at and above which the local delay is infinite."""
    if not alpha > 2:
        raise DomainError("path-loss exponent must exceed 2")
    if not 0 < load <= 1:
        raise DomainError("active probability must lie in (0, 1]")
    return (alpha - 2.0) / (2.0 * load)


def criterion_from_name(name, gamma, theta=None):
    """Build a criterion from its CLI name (``sir``, ``sinr``, ``sir-asnr``)."""
    name = name.lower()
    if name == "sir":
        return Sir(gamma)
    if name == "sinr":
        return Sinr(gamma)
    if name in ("sir-asnr", "sir+asnr"):
        return SirAsnr(gamma) if theta is None else SirAsnr(gamma, theta)
    raise DomainError(f"unknown coverage criterion {name!r}")


def effective_criterion(criterion: CoverageCriterion, params: NetworkParams):
    """Collapse noise-dependent criteria to SIR when the network is noiseless."""
    if params.W == 0 and not isinstance(criterion, Sir):
        return Sir(criterion.gamma)
    return criterion
