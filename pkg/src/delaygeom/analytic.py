"""Exact evaluation of the local delay, F1, packet loss and the characteristic
function of ``Z = log P_cov`` for the three coverage criteria.

An infinite local delay is returned as ``math.inf``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import mpmath
import numpy as np
from scipy.special import comb

from .errors import DomainError, IntegralDiverges, NumericalError, NumericalInstability
from .model import (CoverageCriterion, NetworkParams, Sinr, Sir, SirAsnr, asnr_radius,
                    effective_criterion, gate)
from .special import QuadOptions, quad_semi_infinite, script_F, script_F_mp

F1_TAU_CAP = 60
RANGE_TOL = 1e-6
# bound on the rounding error of the alternating sum before switching to
# multiprecision moments
_F1_DOUBLE_BUDGET = 1e-9


@dataclass(frozen=True)
class DelayQuery:
    """Everything needed to evaluate a delay metric."""

    params: NetworkParams
    criterion: CoverageCriterion
    quad: QuadOptions = field(default_factory=QuadOptions)

    @property
    def effective(self):
        """Criterion actually in force (noise-based ones collapse to SIR when W = 0)."""
        return effective_criterion(self.criterion, self.params)

    def shorthand(self, k):
        p = self.params
        return script_F(k, p.alpha, self.criterion.gamma, p.load)


def _cutoff_mass(q: DelayQuery):
    """``pi lambda_BS r*^2`` for SIR+ASNR."""
    p = q.params
    r_star = asnr_radius(p, q.criterion.theta)
    return math.pi * p.lambda_bs * r_star * r_star


def _noise_beta(q: DelayQuery):
    """Noise coefficient of the SINR integrand in the variable ``u = pi lambda r0^2``."""
    p = q.params
    return (q.criterion.gamma * p.W * p.K / p.P) * (math.pi * p.lambda_bs) ** (-p.alpha / 2.0)


# --------------------------------------------------------------------------
# packet loss and local delay
# --------------------------------------------------------------------------

def packet_loss(q: DelayQuery):
    """Fraction of users that are never served.

    Zero under SIR and SINR; ``exp(-pi lambda_BS r*^2)`` under SIR+ASNR.
    """
    crit = q.effective
    if isinstance(crit, SirAsnr):
        return math.exp(-_cutoff_mass(q))
    return 0.0


def local_delay(q: DelayQuery, method="closed"):
    """Mean number of slots until the first success, averaged over the network.

    Parameters
    ----------
    q : DelayQuery
    method : {"closed", "integral"}
        ``closed`` uses the closed form for SIR and the known divergence of the
        noise-limited criteria.  ``integral`` evaluates the spatial average of
        ``1/P_cov`` over the serving distance by quadrature and returns
        ``inf`` when the divergence detector fires.

    Returns
    -------
    float
        The delay, or ``math.inf``.
    """
    crit = q.effective
    if method == "closed":
        if isinstance(crit, Sir):
            p = q.params
            denom = 1.0 - 2.0 * crit.gamma * p.load / (p.alpha - 2.0)
            return 1.0 / denom if denom > 0 else math.inf
        return math.inf
    if method != "integral":
        raise DomainError(f"unknown local-delay method {method!r}")
    try:
        return local_delay_integral(q)
    except IntegralDiverges:
        return math.inf


def local_delay_integral(q: DelayQuery):
    """``int 2 pi lambda r exp(-pi lambda r^2 F(-1)) / G(r) dr`` over ``[0, inf)``.

    Raises :class:`IntegralDiverges` when the integral is infinite.
    """
    p = q.params
    crit = q.effective
    f_neg = q.shorthand(-1.0)
    lam = p.lambda_bs

    def integrand(r):
        g = gate(r, crit, p)
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            out = 2.0 * math.pi * lam * r * np.exp(-math.pi * lam * r * r * f_neg) / g
        return out

    return quad_semi_infinite(integrand, q.quad, scale=1.0 / math.sqrt(math.pi * lam))


@dataclass(frozen=True)
class PartialDelay:
    """Truncated sum of F1 with a power-law tail estimate.

    ``diverging`` is set when the fitted decay ``F1(tau) ~ tau**slope`` is not
    summable (``slope >= -1``) or the partial sums keep growing.
    """

    partial_sum: float
    tail_estimate: float
    slope: float
    diverging: bool
    cap: int

    @property
    def value(self):
        return math.inf if self.diverging else self.partial_sum + self.tail_estimate


def local_delay_from_f1(q: DelayQuery, cap=50):
    """Local delay as ``sum_{tau=0}^{cap} F1(tau)`` plus a tail estimate."""
    if cap < 1:
        raise DomainError("cap must be at least 1")
    if cap > F1_TAU_CAP:
        raise DomainError(f"exact F1 is limited to tau <= {F1_TAU_CAP}")
    vals = f1_curve(np.arange(cap + 1), q)
    partial = float(np.sum(vals))
    pe = packet_loss(q)
    if pe > 0:
        return PartialDelay(partial, math.inf, 0.0, True, cap)
    # fit log F1 against log tau over the upper half of the range
    taus = np.arange(max(2, cap // 2), cap + 1)
    tail = vals[taus]
    if np.any(tail <= 0):
        return PartialDelay(partial, 0.0, -math.inf, False, cap)
    slope = float(np.polyfit(np.log(taus), np.log(tail), 1)[0])
    if slope >= -1.0:
        return PartialDelay(partial, math.inf, slope, True, cap)
    # int_{cap+1/2}^inf F1(cap) (t/cap)^slope dt
    start = cap + 0.5
    est = vals[cap] * cap ** (-slope) * start ** (slope + 1.0) / (-slope - 1.0)
    return PartialDelay(partial, float(est), slope, False, cap)


# --------------------------------------------------------------------------
# moments and F1
# --------------------------------------------------------------------------

def _sinr_integral(F, k, beta, alpha, opts):
    """``int_0^inf exp(-u F - k beta u**(alpha/2)) du`` for complex ``F`` and ``k``.

    For complex ``k`` the path is rotated onto ``u = rho exp(-i theta)`` with
    ``theta = 2 arg(k) / alpha`` so that the noise term becomes a real decay.
    """
    h = alpha / 2.0
    theta = 2.0 * np.angle(k) / alpha if k != 0 else 0.0
    rot = np.exp(-1j * theta)
    if theta != 0.0 and (F * rot).real > 0:
        a = F * rot
        b = abs(k) * beta
        scale = 1.0 / max(a.real, 1e-3)

        def f(rho):
            return np.exp(-rho * a - b * rho ** h)

        return rot * quad_semi_infinite(f, opts, scale=scale)
    if k.real < 0:
        raise DomainError("noise factor grows without bound for Re(k) < 0")
    scale = 1.0 / max(F.real, 1e-3)

    def g(u):
        return np.exp(-u * F - k * beta * u ** h)

    return quad_semi_infinite(g, opts, scale=scale)


def moment(k, q: DelayQuery):
    """``E[P_cov**k]`` for real or complex ``k`` (scalar)."""
    crit = q.effective
    if k == 0:
        return 1.0
    F = q.shorthand(k)
    if isinstance(crit, Sir):
        return 1.0 / F
    if isinstance(crit, SirAsnr):
        return -np.expm1(-_cutoff_mass(q) * F) / F
    k = complex(k)
    val = _sinr_integral(complex(F), k, _noise_beta(q), q.params.alpha, q.quad)
    return val.real if k.imag == 0 else val


def _moments_double(kmax, q):
    ks = np.arange(kmax + 1, dtype=float)
    crit = q.effective
    F = np.atleast_1d(q.shorthand(ks))
    if isinstance(crit, Sir):
        return 1.0 / F
    if isinstance(crit, SirAsnr):
        out = -np.expm1(-_cutoff_mass(q) * F) / F
        out[0] = 1.0
        return out
    beta = _noise_beta(q)
    opts = QuadOptions(abs_tol=1e-18, rel_tol=2e-13,
                       max_subdivisions=q.quad.max_subdivisions, cancel=q.quad.cancel)
    out = np.empty(ks.size)
    out[0] = 1.0
    for i in range(1, ks.size):
        out[i] = _sinr_integral(complex(F[i]), complex(ks[i]), beta, q.params.alpha, opts).real
    return out


def _moments_mp(kmax, q, dps):
    crit = q.effective
    p = q.params
    out = [mpmath.mpf(1)]
    with mpmath.workdps(dps):
        cmass = mpmath.mpf(_cutoff_mass(q)) if isinstance(crit, SirAsnr) else None
        beta = mpmath.mpf(_noise_beta(q)) if isinstance(crit, Sinr) else None
        for k in range(1, kmax + 1):
            F = script_F_mp(k, p.alpha, crit.gamma, p.load, dps)
            if isinstance(crit, Sir):
                out.append(1 / F)
            elif isinstance(crit, SirAsnr):
                out.append(-mpmath.expm1(-cmass * F) / F)
            else:
                h = mpmath.mpf(p.alpha) / 2
                out.append(mpmath.quad(lambda u: mpmath.exp(-u * F - k * beta * u ** h),
                                       [0, 1 / F, 10 / F, mpmath.inf]))
    return out


def f1_curve(taus, q: DelayQuery):
    """Exact F1 at every ``tau`` in ``taus`` (integers in ``[0, 60]``).

    The binomial alternating sum loses roughly ``0.3 tau`` digits, so when the
    rounding bound of the double-precision sum exceeds ``1e-9`` the moments
    are recomputed with enough extra digits.

    Raises :class:`NumericalInstability` if a raw value leaves
    ``[-1e-6, 1 + 1e-6]``.
    """
    taus = np.atleast_1d(np.asarray(taus))
    if taus.size == 0:
        return np.empty(0)
    if np.any(taus < 0) or np.any(taus != np.floor(taus)):
        raise DomainError("tau must be a non-negative integer")
    tmax = int(taus.max())
    if tmax > F1_TAU_CAP:
        raise DomainError(f"exact F1 is limited to tau <= {F1_TAU_CAP}; use the Riemann path")
    m = _moments_double(tmax, q)
    rel_err = 1e-12 if isinstance(q.effective, Sinr) else 1e-14
    out = np.empty(taus.size)
    mp_moments = None
    for j, tau in enumerate(taus.astype(int)):
        c = comb(tau, np.arange(tau + 1), exact=False)
        signs = (-1.0) ** np.arange(tau + 1)
        bound = float(np.sum(c * np.abs(m[:tau + 1]))) * rel_err
        if bound <= _F1_DOUBLE_BUDGET:
            raw = float(np.sum(signs * c * m[:tau + 1]))
        else:
            if mp_moments is None:
                dps = int(18 + 0.35 * tmax)
                mp_moments = (_moments_mp(tmax, q, dps), dps)
            mom, dps = mp_moments
            with mpmath.workdps(dps):
                raw = float(mpmath.fsum(mpmath.binomial(tau, k) * (-1) ** k * mom[k]
                                        for k in range(tau + 1)))
        if not (-RANGE_TOL <= raw <= 1.0 + RANGE_TOL):
            raise NumericalInstability(
                f"F1({tau}) = {raw!r} lies outside [0, 1]", tau=int(tau), raw=raw, bound=bound)
        out[j] = min(max(raw, 0.0), 1.0)
    return out


def f1(tau, q: DelayQuery):
    """Exact ``F1(tau) = E[(1 - P_cov)^tau]`` for an integer ``0 <= tau <= 60``."""
    return float(f1_curve([tau], q)[0])


# --------------------------------------------------------------------------
# characteristic function and Gil-Pelaez inversion
# --------------------------------------------------------------------------

def char_fn(t, q: DelayQuery):
    """Characteristic function ``E[exp(i t Z)] = E[P_cov**(i t)]`` of ``Z = log P_cov``.

    ``t`` may be complex; ``char_fn(-1j)`` is the mean coverage.  Under
    SIR+ASNR ``Z`` has mass ``P_e`` at minus infinity and the result is the
    transform of the sub-probability part, so ``char_fn(0) = 1 - P_e``.
    Vectorized over ``t`` except for SINR, which is evaluated point by point.
    """
    t_arr = np.asarray(t, dtype=complex)
    k = 1j * t_arr
    crit = q.effective
    if isinstance(crit, Sinr):
        flat = np.array([moment(complex(kk), q) for kk in k.ravel()], dtype=complex)
        out = flat.reshape(k.shape)
    else:
        F = np.asarray(q.shorthand(k))
        if isinstance(crit, Sir):
            out = 1.0 / F
        else:
            out = -np.expm1(-_cutoff_mass(q) * F) / F
    return complex(out) if out.ndim == 0 else out


def _gil_pelaez(z, q: DelayQuery):
    """``P[Z <= z]`` including any mass at minus infinity."""
    pe = packet_loss(q)

    def integrand(t):
        return np.imag(np.exp(-1j * t * z) * char_fn(t, q)) / t

    opts = QuadOptions(abs_tol=max(q.quad.abs_tol, 1e-11), rel_tol=max(q.quad.rel_tol, 1e-10),
                       max_subdivisions=q.quad.max_subdivisions, cancel=q.quad.cancel)
    val = quad_semi_infinite(integrand, opts, omega=abs(z), scale=8.0)
    raw = 0.5 - val / math.pi + 0.5 * pe
    if not (-RANGE_TOL <= raw <= 1.0 + RANGE_TOL):
        raise NumericalError(f"Gil-Pelaez value {raw!r} lies outside [0, 1]", z=z, raw=raw)
    return min(max(raw, 0.0), 1.0)


def f2_gilpelaez(T, q: DelayQuery):
    """``F2(T) = P[1/P_cov >= T]`` by Gil-Pelaez inversion; ``T >= 1``."""
    if not T >= 1:
        raise DomainError("T must be at least 1")
    if T == 1:
        return 1.0
    return _gil_pelaez(-math.log(T), q)


def f3_gilpelaez(x, tau, q: DelayQuery):
    """``F3(x, tau) = P[(1 - P_cov)^tau >= x]`` by Gil-Pelaez inversion."""
    if not 0 <= x <= 1:
        raise DomainError("x must lie in [0, 1]")
    if tau < 1:
        raise DomainError("tau must be a positive integer")
    if x == 0:
        return 1.0
    if x == 1:
        return 0.0
    z = math.log(-math.expm1(math.log(x) / tau))
    return _gil_pelaez(z, q)
