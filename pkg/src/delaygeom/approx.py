"""Approximate F2/F3 (Euler-sum Laplace inversion, Beta moment matching) and
the Riemann-sum route from F3 to F1."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import comb

from .analytic import RANGE_TOL, DelayQuery, char_fn, f3_gilpelaez, moment
from .errors import DomainError, NumericalError, NumericalInstability, UnsupportedCriterion
from .model import Sinr, Sir, SirAsnr
from .special import regularized_incomplete_beta


@dataclass(frozen=True)
class EulerParams:
    """Constants of the Euler-sum inversion: damping ``A``, ``N`` terms, ``Q`` averaging levels."""

    A: float = 10.0 * math.log(10.0)
    N: int = 21
    Q: int = 15

    def __post_init__(self):
        if not self.A > 0:
            raise DomainError("A must be positive")
        if self.N < 1 or self.Q < 1:
            raise DomainError("N and Q must be at least 1")


DEFAULT_EULER = EulerParams()


def _euler_cdf(y, q: DelayQuery, ep: EulerParams):
    """``1 - P[-log P_cov <= y]`` for ``y > 0`` (array).

    The CDF of ``Y = -log P_cov`` has Laplace transform ``phi(-i s) / s``; any
    mass of ``Y`` at infinity is simply absent from that transform, so the
    complement automatically includes the never-covered users.
    """
    y = np.atleast_1d(np.asarray(y, dtype=float))
    n_max = ep.N + ep.Q
    n = np.arange(n_max + 1)
    # phi at t = (-iA + 2 pi n) / (2y), i.e. moment order (A + 2 pi i n) / (2y)
    t = (-1j * ep.A + 2.0 * math.pi * n[None, :]) / (2.0 * y[:, None])
    phi = np.asarray(char_fn(t, q)).reshape(t.shape)
    terms = np.real(phi / (ep.A + 2j * math.pi * n[None, :]))
    terms = terms * ((-1.0) ** n)[None, :]
    terms[:, 0] *= 0.5
    partial = np.cumsum(terms, axis=1)
    qs = np.arange(ep.Q + 1)
    weights = comb(ep.Q, qs)
    # fixed order: weighted partial sums S_N, ..., S_{N+Q}
    avg = partial[:, ep.N + qs] @ weights
    G = math.exp(ep.A / 2.0) / 2.0 ** (ep.Q - 1) * avg
    return 1.0 - G


def _clamp(raw, what):
    raw = np.asarray(raw, dtype=float)
    bad = (raw < -RANGE_TOL) | (raw > 1.0 + RANGE_TOL) | ~np.isfinite(raw)
    if np.any(bad):
        raise NumericalInstability(f"{what} left [0, 1]", raw=raw[bad][:8])
    return np.clip(raw, 0.0, 1.0)


def f2_euler(T, q: DelayQuery, ep: EulerParams = DEFAULT_EULER):
    """``F2(T)`` by Euler-sum inversion.  Vectorized over ``T >= 1``."""
    T_arr = np.atleast_1d(np.asarray(T, dtype=float))
    if np.any(~(T_arr >= 1)):
        raise DomainError("T must be at least 1")
    out = np.ones(T_arr.shape)
    inner = T_arr > 1
    if inner.any():
        out[inner] = _clamp(_euler_cdf(np.log(T_arr[inner]), q, ep), "Euler-sum F2")
    return float(out[0]) if np.ndim(T) == 0 else out


def f3_euler(x, tau, q: DelayQuery, ep: EulerParams = DEFAULT_EULER):
    """``F3(x, tau)`` by Euler-sum inversion.  Vectorized over ``x`` in ``[0, 1]``."""
    if tau < 1:
        raise DomainError("tau must be a positive integer")
    x_arr = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any((x_arr < 0) | (x_arr > 1)):
        raise DomainError("x must lie in [0, 1]")
    out = np.where(x_arr == 0, 1.0, 0.0)
    inner = (x_arr > 0) & (x_arr < 1)
    if inner.any():
        # y = -log(1 - x^(1/tau)), written to survive x^(1/tau) close to 1
        w = -np.expm1(np.log(x_arr[inner]) / tau)
        out[inner] = _clamp(_euler_cdf(-np.log(w), q, ep), "Euler-sum F3")
    return float(out[0]) if np.ndim(x) == 0 else out


# --------------------------------------------------------------------------
# Beta approximation
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class BetaShape:
    a: float
    b: float
    mu: float
    nu: float

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise DomainError("Beta shape parameters must be positive")
        if not 0 < self.mu < 1:
            raise DomainError("mean must lie in (0, 1)")
        if not 0 < self.nu < self.mu * (1 - self.mu):
            raise DomainError("variance must lie in (0, mu (1 - mu))")

    @classmethod
    def from_moments(cls, mu, nu):
        """Beta distribution with mean ``mu`` and variance ``nu``."""
        if not 0 < mu < 1:
            raise NumericalError("mean coverage outside (0, 1); Beta match undefined", mu=mu)
        if not 0 < nu < mu * (1 - mu):
            raise NumericalError("coverage variance outside (0, mu(1-mu)); Beta match undefined",
                                 mu=mu, nu=nu)
        b = mu * (1.0 - mu) ** 2 / nu - (1.0 - mu)
        a = mu * b / (1.0 - mu)
        return cls(a, b, mu, nu)


def beta_shape(q: DelayQuery):
    """Match a Beta law to the first two moments of the coverage probability.

    Only defined for SIR and SINR; SIR+ASNR has an atom at zero.
    """
    crit = q.effective
    if isinstance(crit, SirAsnr):
        raise UnsupportedCriterion("Beta approximation does not apply to SIR+ASNR")
    if not isinstance(crit, (Sir, Sinr)):
        raise TypeError(f"unknown coverage criterion {crit!r}")
    m1 = float(np.real(moment(1.0, q)))
    m2 = float(np.real(moment(2.0, q)))
    return BetaShape.from_moments(m1, m2 - m1 * m1)


def f2_beta(T, shape: BetaShape):
    """``F2(T) ~ I_{1/T}(a, b)``."""
    T_arr = np.asarray(T, dtype=float)
    if np.any(~(T_arr >= 1)):
        raise DomainError("T must be at least 1")
    return regularized_incomplete_beta(1.0 / T_arr, shape.a, shape.b)


def f3_beta(x, tau, shape: BetaShape):
    """``F3(x, tau) ~ I_{1 - x^(1/tau)}(a, b)``."""
    if tau < 1:
        raise DomainError("tau must be a positive integer")
    x_arr = np.asarray(x, dtype=float)
    if np.any((x_arr < 0) | (x_arr > 1)):
        raise DomainError("x must lie in [0, 1]")
    with np.errstate(divide="ignore"):
        w = np.where(x_arr > 0, -np.expm1(np.log(np.where(x_arr > 0, x_arr, 1.0)) / tau), 1.0)
    return regularized_incomplete_beta(w, shape.a, shape.b)


# --------------------------------------------------------------------------
# Riemann sum for F1
# --------------------------------------------------------------------------

F3_METHODS = ("euler", "gilpelaez", "beta")


def f1_riemann(tau, q: DelayQuery, n=4096, f3_impl="euler", ep: EulerParams = DEFAULT_EULER):
    """``F1(tau) = int_0^1 F3(x, tau) dx`` by the midpoint rule on ``n`` cells.

    Works for any ``tau``, including values far beyond the exact path.
    """
    if tau < 0 or tau != int(tau):
        raise DomainError("tau must be a non-negative integer")
    if n < 1:
        raise DomainError("n must be at least 1")
    if f3_impl not in F3_METHODS:
        raise DomainError(f"f3_impl must be one of {F3_METHODS}")
    if tau == 0:
        return 1.0
    eps = (np.arange(1, n + 1) - 0.5) / n
    if f3_impl == "euler":
        vals = f3_euler(eps, int(tau), q, ep)
    elif f3_impl == "beta":
        vals = f3_beta(eps, int(tau), beta_shape(q))
    else:
        vals = np.array([f3_gilpelaez(e, int(tau), q) for e in eps])
    return float(_pairwise_sum(np.asarray(vals)) / n)


def _pairwise_sum(v):
    """Pairwise reduction in a fixed order."""
    v = np.asarray(v, dtype=float)
    while v.size > 1:
        if v.size % 2:
            v = np.append(v, 0.0)
        v = v[0::2] + v[1::2]
    return float(v[0]) if v.size else 0.0
