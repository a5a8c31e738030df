"""Special functions and quadrature behind the analytic formulas.

The hypergeometric routines target the narrow family that appears in the
interference functional, ``2F1(-2/alpha, k; 1 - 2/alpha; -gamma)`` with real
``alpha, gamma`` and complex ``k``.  Everything is vectorized over ``k``.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass

import mpmath
import numpy as np
from scipy.special import loggamma

from .errors import DomainError, IntegralDiverges, NumericalError, QuadratureCancelled

EPS = np.finfo(float).eps


@dataclass(frozen=True)
class QuadOptions:
    abs_tol: float = 1e-13
    rel_tol: float = 1e-11
    max_subdivisions: int = 4000
    cancel: threading.Event | None = None

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise DomainError("quadrature tolerances must be positive")
        if self.max_subdivisions < 1:
            raise DomainError("max_subdivisions must be at least 1")


DEFAULT_QUAD = QuadOptions()


# --------------------------------------------------------------------------
# Gauss-Kronrod (10, 21) rule
# --------------------------------------------------------------------------

_XK = np.array([
    0.995657163025808080735527280689003, 0.973906528517171720077964012084452,
    0.930157491355708226001207180059508, 0.865063366688984510732096688423493,
    0.780817726586416897063717578345042, 0.679409568299024406234327365114874,
    0.562757134668604683339000099272694, 0.433395394129247190799265943165784,
    0.294392862701460198131126603103866, 0.148874338981631210884826001129720,
    0.0,
])
_XK = np.concatenate([_XK, -_XK[-2::-1]])
_WK = np.array([
    0.011694638867371874278064396062192, 0.032558162307964727478818972459390,
    0.054755896574351996031381300244580, 0.075039674810919952767043140916190,
    0.093125454583697605535065465083366, 0.109387158802297641899210590325805,
    0.123491976262065851077958109831074, 0.134709217311473325928054001771707,
    0.142775938577060080797094273138717, 0.147739104901338491374841515972068,
    0.149445554002916905664936468389821,
])
_WK = np.concatenate([_WK, _WK[-2::-1]])
_WG_HALF = np.array([
    0.066671344308688137593568809893332, 0.149451349150580593145776339657697,
    0.219086362515982043995534934228163, 0.269266719309996355091226921569469,
    0.295524224714752870173892994651338,
])
# Gauss nodes are the odd-indexed Kronrod nodes.
_WG = np.zeros(21)
_WG[1:10:2] = _WG_HALF
_WG[11:20:2] = _WG_HALF[::-1]


def _gk21(f, lo, hi):
    """Apply the rule to every interval ``[lo[i], hi[i]]`` with one call of ``f``."""
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    x = mid[:, None] + half[:, None] * _XK[None, :]
    fx = np.asarray(f(x.ravel())).reshape(x.shape)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        kron = half * (fx @ _WK)
        gauss = half * (fx @ _WG)
        # QUADPACK error heuristic
        mean = kron / (2.0 * np.where(half == 0, 1.0, half))
        resasc = np.abs(half) * (np.abs(fx - mean[:, None]) @ _WK)
        err = np.abs(kron - gauss)
        scaled = resasc * np.minimum(1.0, (200.0 * err / resasc) ** 1.5)
        err = np.where(resasc > 0, scaled, err)
        resabs = np.abs(half) * (np.abs(fx) @ _WK)
        err = np.maximum(err, 50.0 * EPS * resabs)
    return kron, err


def integrate(f, a, b, opts: QuadOptions = DEFAULT_QUAD, points=(), segments=False):
    """Globally adaptive Gauss-Kronrod quadrature of ``f`` over ``[a, b]``.

    ``f`` must accept a 1-D array of abscissae and return values of the same
    length (real or complex).  ``points`` are extra break points.  With
    ``segments=True`` the integral over each piece between consecutive break
    points is returned as an array instead of the total.

    Returns ``(value, error_estimate)``.
    """
    edges = np.unique(np.concatenate([[a, b], [p for p in points if a < p < b]]))
    lo, hi = edges[:-1].astype(float), edges[1:].astype(float)
    seg = np.arange(lo.size)
    vals, errs = _gk21(f, lo, hi)
    n_split = 0
    while True:
        if opts.cancel is not None and opts.cancel.is_set():
            raise QuadratureCancelled("quadrature cancelled", partial=vals.sum())
        total = vals.sum()
        if not np.isfinite(total):
            break
        tol = max(opts.abs_tol, opts.rel_tol * abs(total))
        err_total = errs.sum()
        if err_total <= tol:
            break
        if n_split >= opts.max_subdivisions:
            raise NumericalError(
                "adaptive quadrature did not converge",
                value=total, error=err_total, tolerance=tol, intervals=lo.size)
        # equidistribute: split every interval above its share of the budget
        pick = errs > tol / lo.size
        if not pick.any():
            pick = errs == errs.max()
        mid = 0.5 * (lo[pick] + hi[pick])
        new_lo = np.concatenate([lo[pick], mid])
        new_hi = np.concatenate([mid, hi[pick]])
        new_seg = np.concatenate([seg[pick], seg[pick]])
        nv, ne = _gk21(f, new_lo, new_hi)
        keep = ~pick
        lo = np.concatenate([lo[keep], new_lo])
        hi = np.concatenate([hi[keep], new_hi])
        seg = np.concatenate([seg[keep], new_seg])
        vals = np.concatenate([vals[keep], nv])
        errs = np.concatenate([errs[keep], ne])
        n_split += int(pick.sum())
    if segments:
        out = np.zeros(edges.size - 1, dtype=vals.dtype)
        np.add.at(out, seg, vals)
        return out, errs.sum()
    return vals.sum(), errs.sum()


def wynn_epsilon(partial_sums):
    """Epsilon-algorithm limit estimate of a sequence of partial sums."""
    s = [complex(v) if np.iscomplexobj(v) else float(v) for v in partial_sums]
    if len(s) < 3:
        return s[-1]
    prev = [0.0] * (len(s) + 1)
    cur = list(s)
    best = s[-1]
    col = 0
    while len(cur) > 1:
        nxt = []
        for i in range(len(cur) - 1):
            d = cur[i + 1] - cur[i]
            if d == 0:
                return cur[i + 1] if col % 2 == 0 else best
            nxt.append(prev[i + 1] + 1.0 / d)
        col += 1
        if col % 2 == 0:
            best = nxt[-1]
        prev, cur = cur, nxt
    return best


def quad_semi_infinite(f, opts: QuadOptions = DEFAULT_QUAD, *, scale=1.0, omega=None,
                       tail_start=None, divergence_bound=1e12, divergence_run=8,
                       max_half_periods=4096, full_output=False):
    """Integrate ``f`` over ``[0, inf)``.

    Without ``omega`` the integrand is assumed to decay (after any initial
    growth) and panels ``[0, s], [s, 2s], [2s, 4s], ...`` are added until two
    consecutive panels are negligible.  A partial integral above
    ``divergence_bound`` that keeps growing for ``divergence_run`` doublings,
    or one that overflows, raises :class:`IntegralDiverges`.

    With ``omega`` the integrand is taken to oscillate like ``sin(omega t)``
    with a slowly decaying envelope.  The tail is summed over half periods and
    the partial sums are accelerated with the epsilon algorithm.

    Returns the integral, or ``(integral, error_estimate)`` with ``full_output``.
    """
    if omega is None:
        val, err = _semi_infinite_decay(f, opts, scale, divergence_bound, divergence_run)
    elif omega == 0:
        raise DomainError("oscillatory integration needs a non-zero frequency")
    else:
        val, err = _semi_infinite_oscillatory(f, opts, abs(omega), scale, tail_start,
                                              max_half_periods)
    return (val, err) if full_output else val


def _semi_infinite_decay(f, opts, scale, bound, run):
    total, err = integrate(f, 0.0, scale, opts)
    if not np.isfinite(total):
        raise IntegralDiverges("integrand overflows", partial=total, upper=scale)
    lo = scale
    quiet = 0
    growth = 0
    for n_panel in range(1, 400):
        hi = 2.0 * lo
        part, e = integrate(f, lo, hi, opts)
        previous = total
        total = total + part
        err += e
        if not np.isfinite(total):
            raise IntegralDiverges("integrand overflows", partial=previous, upper=hi)
        if abs(total) > bound and abs(total) > abs(previous):
            growth += 1
            if growth >= run:
                raise IntegralDiverges("partial integrals grow without bound",
                                       partial=total, upper=hi)
        else:
            growth = 0
        tol = max(opts.abs_tol, opts.rel_tol * abs(total))
        if abs(part) <= tol:
            quiet += 1
            if quiet >= 2 and n_panel >= 3 and not _tail_has_mass(f, hi, tol):
                return total, err
        else:
            quiet = 0
        lo = hi
    raise NumericalError("semi-infinite integral did not settle", partial=total, upper=lo)


def _tail_has_mass(f, start, tol, n_probe=64):
    """Probe ``x |f(x)|`` on a geometric grid beyond ``start``.

    Guards the stopping rule against integrands that dip to zero and grow
    again much further out (e.g. a Gaussian decay eventually beaten by an
    ``exp(c r^4)`` noise factor).
    """
    x = start * 2.0 ** np.arange(1, n_probe + 1)
    with np.errstate(all="ignore"):
        v = x * np.abs(np.asarray(f(x)))
    return bool(np.any(~np.isfinite(v) | (v > tol)))


def _semi_infinite_oscillatory(f, opts, omega, scale, tail_start, max_half):
    h = math.pi / omega
    if tail_start is None:
        tail_start = h * max(4, math.ceil(scale / h))
    head_points = np.arange(h, tail_start, h)
    head, err = integrate(f, 0.0, tail_start, opts, points=head_points)
    sums = [head]
    estimates = []
    batch = 16
    start = tail_start
    while len(sums) - 1 < max_half:
        edges = start + h * np.arange(batch + 1)
        parts, e = integrate(f, edges[0], edges[-1], opts, points=edges[1:-1], segments=True)
        err += e
        sums.extend(sums[-1] + np.cumsum(parts))
        start = edges[-1]
        estimates.append(wynn_epsilon(sums[-48:]))
        if len(estimates) >= 3:
            est = estimates[-1]
            spread = max(abs(est - estimates[-2]), abs(est - estimates[-3]))
            if spread <= max(opts.abs_tol, opts.rel_tol * abs(est)):
                return est, err + spread
    raise NumericalError("oscillatory tail did not converge",
                         partial=sums[-1], estimates=estimates[-3:], upper=start)


# --------------------------------------------------------------------------
# Gauss hypergeometric function
# --------------------------------------------------------------------------

SERIES_CAP = 100_000
_GROWTH_LIMIT = math.log(1e4)


def _series(u, b, c, zp, tol, cap, what):
    """Sum ``sum_n (u)_n (b)_n / ((c)_n n!) zp**n`` for an array ``b``.

    Stops an element after three consecutive terms below ``tol * |sum|``.
    Returns the sums and the largest term magnitude met on the way.
    """
    b = np.asarray(b, dtype=complex)
    total = np.ones_like(b)
    term = np.ones_like(b)
    biggest = np.ones(b.shape)
    quiet = np.zeros(b.shape, dtype=int)
    active = np.arange(b.size)
    bf, tf, sf, gf, qf = b.ravel(), term.ravel(), total.ravel(), biggest.ravel(), quiet.ravel()
    n = 0
    while active.size:
        if n >= cap:
            raise NumericalError(f"{what} series did not converge within {cap} terms",
                                 partial=sf[active][:8], terms=n)
        t = tf[active] * ((u + n) * (bf[active] + n) / ((c + n) * (n + 1.0)) * zp)
        s = sf[active] + t
        tf[active] = t
        sf[active] = s
        at = np.abs(t)
        gf[active] = np.maximum(gf[active], at)
        small = at <= tol * np.abs(s)
        qf[active] = np.where(small, qf[active] + 1, 0)
        active = active[qf[active] < 3]
        n += 1
    return sf.reshape(b.shape), gf.reshape(b.shape)


def _log_peak_term(u, b, c, zp):
    """Rough log-magnitude of the largest term of the Pfaff-transformed series."""
    n = np.concatenate([[0.0], 2.0 ** np.arange(18)])[:, None]
    bb = b.ravel()[None, :]
    with np.errstate(all="ignore"):
        lt = (np.real(loggamma(u + n + 0j) - loggamma(u + 0j))
              + np.real(loggamma(bb + n) - loggamma(bb))
              - np.real(loggamma(c + n + 0j) - loggamma(c + 0j))
              - np.real(loggamma(n + 1.0 + 0j))
              + n * math.log(zp))
    lt = np.where(np.isfinite(lt), lt, 0.0)
    return lt.max(axis=0).reshape(b.shape)


def _connection(a, b, z, tol, cap):
    """``2F1(a, b; a + 1; z)`` for ``z < 0`` through the ``1/z`` connection.

    With ``c = a + 1`` the first connection term collapses to a gamma ratio and
    the second, after a Pfaff step, becomes a series in ``1/(1 - z)`` whose
    terms shrink geometrically for every ``b``:

        Gamma(a+1) Gamma(b-a) / Gamma(b) (-z)**-a
        + a / (a - b) (1 - z)**-b  2F1(1, b; b - a + 1; 1/(1 - z))
    """
    g = -z
    lead = np.exp(loggamma(a + 1.0 + 0j) + loggamma(b - a) - loggamma(b)) * g ** (-a)
    ser = _ratio_series(b, b - a + 1.0, 1.0 / (1.0 + g), tol, cap)
    return lead + a / (a - b) * (1.0 + g) ** (-b) * ser


def _ratio_series(b, d, x, tol, cap):
    """``sum_n (b)_n / (d)_n x**n`` elementwise for arrays ``b`` and ``d``."""
    b = np.asarray(b, dtype=complex).ravel()
    d = np.asarray(d, dtype=complex).ravel()
    total = np.ones_like(b)
    term = np.ones_like(b)
    quiet = np.zeros(b.shape, dtype=int)
    active = np.arange(b.size)
    n = 0
    while active.size:
        if n >= cap:
            raise NumericalError(f"connection series did not converge within {cap} terms",
                                 partial=total[active][:8], terms=n)
        t = term[active] * ((b[active] + n) / (d[active] + n) * x)
        s = total[active] + t
        term[active] = t
        total[active] = s
        small = np.abs(t) <= tol * np.abs(s)
        quiet[active] = np.where(small, quiet[active] + 1, 0)
        active = active[quiet[active] < 3]
        n += 1
    return total


def hyp2f1(a, b, c, z, rel_tol=EPS, max_terms=SERIES_CAP):
    """Gauss hypergeometric ``2F1(a, b; c; z)`` for real ``a, c``, complex ``b``, ``z <= 0``.

    The Pfaff transformation maps ``z`` into ``z/(z-1)`` in ``[0, 1)`` where
    the series converges for every ``z <= 0``.  For ``c = a + 1``
    the ``1/z`` connection formula is used instead whenever the Pfaff series
    would first grow by more than four orders of magnitude (large ``|b|``) or
    would need many more terms.

    Vectorized over ``b``; returns a complex scalar or array.
    """
    a = float(a)
    c = float(c)
    z = float(z)
    if c <= 0 and c == int(c):
        raise DomainError("c must not be a non-positive integer")
    if z > 0:
        raise DomainError("only z <= 0 is supported")
    barr = np.asarray(b, dtype=complex)
    scalar = barr.ndim == 0
    barr = np.atleast_1d(barr)
    if z == 0 or np.all(barr == 0):
        out = np.ones_like(barr)
        return out[0] if scalar else out

    zp = z / (z - 1.0)
    u = c - a
    out = np.empty_like(barr)
    positive = (barr.imag == 0) & (barr.real > 0) & (u > 0) & (c > 0)
    growth = _log_peak_term(u, barr, c, zp)
    pfaff_ok = positive | (growth <= _GROWTH_LIMIT)
    use_conn = np.zeros(barr.shape, dtype=bool)
    if abs(u - 1.0) < 1e-14:
        # rough term counts: the Pfaff terms only start shrinking once n
        # exceeds about |b| zp / (1 - zp); the connection series is geometric
        zeta = 1.0 / (1.0 - z)
        n_pfaff = np.abs(barr) * zp / (1.0 - zp) + 37.0 / -math.log(zp)
        n_conn = 37.0 / -math.log(zeta)
        # the connection needs b and b - a + 1 away from the non-positive
        # integers; there the Pfaff series terminates or is exact anyway
        real_b = barr.imag == 0
        poles = real_b & (((barr.real <= 0) & (barr.real == np.round(barr.real)))
                          | ((barr.real - a + 1 <= 0)
                             & (barr.real - a == np.round(barr.real - a))))
        use_conn = ~poles & (~pfaff_ok | (n_pfaff > 2.0 * n_conn))
    pf = ~use_conn
    if pf.any():
        s, biggest = _series(u, barr[pf], c, zp, rel_tol, max_terms, "Pfaff")
        # judged against max(|sum|, 1): genuine zeros (e.g. terminating series)
        # are fine as long as the absolute error stays small
        loss = biggest / np.maximum(np.abs(s), 1.0)
        if np.any(loss > 1e6):
            raise NumericalError("hypergeometric series lost too many digits to cancellation",
                                 b=barr[pf][loss > 1e6][:8], loss=loss.max())
        out[pf] = (1.0 - z) ** (-barr[pf]) * s
    if use_conn.any():
        out[use_conn] = _connection(a, barr[use_conn], z, rel_tol, max_terms)
    return out[0] if scalar else out


def hyp2f1_direct(a, b, c, z, rel_tol=EPS, max_terms=SERIES_CAP):
    """Plain Gauss series, valid for ``|z| < 1``; kept as an independent check."""
    if not abs(z) < 1:
        raise DomainError("direct series needs |z| < 1")
    barr = np.atleast_1d(np.asarray(b, dtype=complex))
    b_flat = barr.ravel()
    total = np.ones_like(b_flat)
    term = np.ones_like(b_flat)
    for n in range(max_terms):
        term = term * (a + n) * (b_flat + n) / ((c + n) * (n + 1.0)) * z
        total = total + term
        if np.all(np.abs(term) <= rel_tol * np.abs(total)) and n > 3:
            break
    else:
        raise NumericalError("direct series did not converge", partial=total[:8])
    out = total.reshape(barr.shape)
    return out[0] if np.ndim(b) == 0 else out


def script_F(k, alpha, gamma, load):
    """Interference functional ``1 + L (2F1(-2/alpha, k; 1-2/alpha; -gamma) - 1)``.

    ``k`` may be real or complex, scalar or array.  Real ``k`` gives a real
    result, which is at least 1 for ``k >= 0``.
    """
    if not alpha > 2:
        raise DomainError("alpha must exceed 2")
    if not gamma > 0:
        raise DomainError("gamma must be positive")
    if not 0 < load <= 1:
        raise DomainError("active probability must lie in (0, 1]")
    delta = 2.0 / alpha
    h = hyp2f1(-delta, k, 1.0 - delta, -gamma)
    out = 1.0 + load * (h - 1.0)
    if not np.iscomplexobj(k):
        out = out.real
    if np.ndim(out) == 0:
        return complex(out) if np.iscomplexobj(out) else float(out)
    return out


def script_F_mp(k, alpha, gamma, load, dps):
    """``script_F`` for real ``k >= 0`` in ``dps``-digit arithmetic.

    Same Pfaff series as :func:`hyp2f1`; for real non-negative ``k`` every term
    is positive so the only cost of extra digits is a few more terms.
    """
    with mpmath.workdps(dps):
        delta = mpmath.mpf(2) / alpha
        c = 1 - delta
        g = mpmath.mpf(gamma)
        zp = g / (1 + g)
        k = mpmath.mpf(k)
        tol = mpmath.mpf(10) ** (-dps - 2)
        term = mpmath.mpf(1)
        total = mpmath.mpf(1)
        n = 0
        quiet = 0
        while quiet < 3:
            term *= (1 + n) * (k + n) / ((c + n) * (n + 1)) * zp
            total += term
            n += 1
            quiet = quiet + 1 if term <= tol * total else 0
            if n > SERIES_CAP:
                raise NumericalError("multiprecision series did not converge", terms=n)
        h = (1 + g) ** (-k) * total
        return 1 + mpmath.mpf(load) * (h - 1)


# --------------------------------------------------------------------------
# regularized incomplete beta
# --------------------------------------------------------------------------

def _beta_cf(x, a, b, tol=1e-16, max_iter=20000):
    """Continued fraction for the incomplete beta (modified Lentz)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = tiny if abs(d) < tiny else d
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        step = d * c
        h *= step
        if abs(step - 1.0) < tol:
            return h
    raise NumericalError("incomplete beta continued fraction did not converge",
                         x=x, a=a, b=b, partial=h)


def _betainc_scalar(x, a, b):
    if not (a > 0 and b > 0):
        raise DomainError("beta shape parameters must be positive")
    if not 0.0 <= x <= 1.0:
        raise DomainError("x must lie in [0, 1]")
    if x == 0.0 or x == 1.0:
        return float(x)
    log_front = (a * math.log(x) + b * math.log1p(-x)
                 - (math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)))
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_cf(x, a, b) / a
    return 1.0 - front * _beta_cf(1.0 - x, b, a) / b


def regularized_incomplete_beta(x, a, b):
    """``I_x(a, b) = B(x; a, b) / B(a, b)``, vectorized over ``x``."""
    if np.ndim(x) == 0:
        return _betainc_scalar(float(x), float(a), float(b))
    xs = np.asarray(x, dtype=float)
    return np.array([_betainc_scalar(v, float(a), float(b)) for v in xs.ravel()]).reshape(xs.shape)
