"""Monte Carlo oracle: static PPP draws seen from a user at the origin.

Every realization gets its own counter-based generator keyed by
``(master_seed, index, purpose)``, so results do not depend on how the work
is scheduled across threads.
"""

from __future__ import annotations

import csv
import enum
import functools
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import DomainError
from .model import (CoverageCriterion, NetworkParams, NetworkRealization, Sinr, SirAsnr,
                    asnr_radius, conditional_coverage, effective_criterion)

Z95 = 1.959963984540054
MIN_EXPECTED_BS = 500.0

TAG_GEOMETRY = 0
TAG_FADING = 1


class ActivityMode(str, enum.Enum):
    THINNING = "thinning"
    VORONOI = "voronoi"


class FadingMode(str, enum.Enum):
    SEMI_ANALYTIC = "semi-analytic"
    SLOT_LEVEL = "slot-level"


@dataclass(frozen=True)
class SimConfig:
    """Monte Carlo settings.

    ``window_radius=None`` picks the smallest disc holding 500 BSs on average.
    ``n_slots`` is the block of slots simulated per realization in slot-level
    mode; delays are followed up to ``censor_cap`` slots.
    """

    n_realizations: int = 5000
    n_slots: int = 5000
    master_seed: int = 1
    window_radius: float | None = None
    activity_mode: ActivityMode = ActivityMode.THINNING
    fading_mode: FadingMode = FadingMode.SEMI_ANALYTIC
    censor_cap: int = 10_000
    threads: int | None = None

    def __post_init__(self):
        if self.n_realizations < 1 or self.n_slots < 1 or self.censor_cap < 1:
            raise DomainError("realization and slot counts must be at least 1")
        if self.window_radius is not None and not self.window_radius > 0:
            raise DomainError("window radius must be positive")
        if not 0 <= self.master_seed < 2 ** 64:
            raise DomainError("master seed must be a 64-bit unsigned integer")
        object.__setattr__(self, "activity_mode", ActivityMode(self.activity_mode))
        object.__setattr__(self, "fading_mode", FadingMode(self.fading_mode))

    def radius(self, params: NetworkParams):
        if self.window_radius is not None:
            return float(self.window_radius)
        return math.sqrt(MIN_EXPECTED_BS / (math.pi * params.lambda_bs))


@dataclass(frozen=True)
class EstimateWithCI:
    value: float
    half_width_95: float
    n: int
    heavy_tail: bool = False
    censored: int = 0

    def __post_init__(self):
        if not self.half_width_95 >= 0:
            raise DomainError("half width must be non-negative")

    def covers(self, x, slack=0.0):
        return abs(x - self.value) <= self.half_width_95 + slack


@dataclass(frozen=True)
class Censored:
    """No success within ``cap`` slots."""

    cap: int


def generator(master_seed, index, tag, attempt=0):
    """Independent Philox stream for one work item."""
    key = (int(index), int(tag)) if attempt == 0 else (int(index), int(tag), int(attempt))
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(master_seed,
                                                                       spawn_key=key)))


# --------------------------------------------------------------------------
# geometry
# --------------------------------------------------------------------------

def _draw_geometry(params, cfg, index):
    R = cfg.radius(params)
    mean = params.lambda_bs * math.pi * R * R
    attempt = 0
    while True:
        rng = generator(cfg.master_seed, index, TAG_GEOMETRY, attempt)
        n = rng.poisson(mean)
        if n > 0:
            break
        attempt += 1
    r = R * np.sqrt(rng.random(n))
    phi = 2.0 * math.pi * rng.random(n)
    order = np.argsort(r, kind="stable")
    return r[order], phi[order], rng, attempt


def _sample(params, cfg, index):
    r, phi, rng, attempt = _draw_geometry(params, cfg, index)
    r0, others = r[0], r[1:]
    if cfg.activity_mode is ActivityMode.THINNING:
        keep = rng.random(others.size) < params.load
    else:
        R = cfg.radius(params)
        n_mt = rng.poisson(params.lambda_mt * math.pi * R * R)
        rm = R * np.sqrt(rng.random(n_mt))
        pm = 2.0 * math.pi * rng.random(n_mt)
        bs_xy = np.column_stack([r * np.cos(phi), r * np.sin(phi)])
        mt_xy = np.column_stack([rm * np.cos(pm), rm * np.sin(pm)])
        active = np.zeros(r.size, dtype=bool)
        if n_mt:
            _, nearest = cKDTree(bs_xy).query(mt_xy)
            active[nearest] = True
        keep = active[1:]
    return NetworkRealization(float(r0), others[keep]), attempt


def sample_realization(params: NetworkParams, cfg: SimConfig, index: int):
    """Realization number ``index``; deterministic in ``(master_seed, index)``."""
    if not 0 <= index < cfg.n_realizations:
        raise DomainError("realization index out of range")
    return _sample(params, cfg, index)[0]


def pcov_oracle(real: NetworkRealization, criterion: CoverageCriterion,
                params: NetworkParams):
    """Coverage probability of one realization, averaged over fading."""
    return conditional_coverage(real, criterion, params)


# --------------------------------------------------------------------------
# slot-level fading
# --------------------------------------------------------------------------

def _slot_successes(real, criterion, params, rng, n):
    """Success indicators for ``n`` consecutive slots with fresh Rayleigh fading."""
    crit = effective_criterion(criterion, params)
    if isinstance(crit, SirAsnr) and real.r0 > asnr_radius(params, crit.theta):
        # the ASNR test involves no fading: this user can never succeed
        return np.zeros(n, dtype=bool)
    alpha = params.alpha
    h0 = rng.exponential(size=n)
    # everything scaled by the serving path gain P / (K r0^alpha)
    if real.interferers.size:
        rel = (real.r0 / real.interferers) ** alpha
        h = rng.exponential(size=(n, real.interferers.size))
        interference = h @ rel
    else:
        interference = np.zeros(n)
    if isinstance(crit, Sinr):
        noise = params.W * params.K * real.r0 ** alpha / params.P
        return h0 >= crit.gamma * (interference + noise)
    return h0 >= crit.gamma * interference


def simulate_delay_slots(real: NetworkRealization, criterion: CoverageCriterion,
                         params: NetworkParams, rng: np.random.Generator, cap: int):
    """Index (1-based) of the first successful slot, or :class:`Censored`.

    Each slot redraws the fading of the serving and every interfering link
    and tests the instantaneous SIR/SINR (and ASNR) condition directly.
    """
    if cap < 1:
        raise DomainError("cap must be at least 1")
    crit = effective_criterion(criterion, params)
    if isinstance(crit, SirAsnr) and real.r0 > asnr_radius(params, crit.theta):
        return Censored(cap)
    done = 0
    chunk = 16
    while done < cap:
        m = min(chunk, cap - done)
        hit = np.flatnonzero(_slot_successes(real, criterion, params, rng, m))
        if hit.size:
            return done + int(hit[0]) + 1
        done += m
        chunk = min(chunk * 2, 4096)
    return Censored(cap)


# --------------------------------------------------------------------------
# batch simulation
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SimSamples:
    """Per-realization outputs.

    ``delay`` holds the first-success slot (``censor_cap + 1`` when censored)
    and ``p_hat`` the success frequency over ``n_slots`` slots; both only in
    slot-level mode.
    """

    r0: np.ndarray
    n_interferers: np.ndarray
    pcov: np.ndarray
    resampled: int
    config: SimConfig
    p_hat: np.ndarray | None = None
    delay: np.ndarray | None = None

    @property
    def censored(self):
        return None if self.delay is None else self.delay > self.config.censor_cap

    @property
    def p(self):
        """Per-realization success probability used by the estimators."""
        return self.pcov if self.p_hat is None else self.p_hat


def _thread_count(cfg):
    n = cfg.threads if cfg.threads is not None else 1
    env = os.environ.get("DELAYGEOM_THREADS")
    if env:
        try:
            n = min(n, int(env)) if cfg.threads is not None else int(env)
        except ValueError:
            pass
    return max(1, n)


def _work_item(params, criterion, cfg, index):
    real, attempt = _sample(params, cfg, index)
    p = pcov_oracle(real, criterion, params)
    out = [real.r0, real.n_interferers, p, attempt]
    if cfg.fading_mode is FadingMode.SLOT_LEVEL:
        rng = generator(cfg.master_seed, index, TAG_FADING)
        ok = _slot_successes(real, criterion, params, rng, cfg.n_slots)
        hits = np.flatnonzero(ok)
        if hits.size:
            delay = int(hits[0]) + 1
        elif cfg.censor_cap > cfg.n_slots:
            more = simulate_delay_slots(real, criterion, params, rng,
                                        cfg.censor_cap - cfg.n_slots)
            delay = (cfg.censor_cap + 1 if isinstance(more, Censored)
                     else cfg.n_slots + more)
        else:
            delay = cfg.censor_cap + 1
        out += [ok.mean(), min(delay, cfg.censor_cap + 1)]
    return out


@functools.lru_cache(maxsize=16)
def simulate(params: NetworkParams, criterion: CoverageCriterion, cfg: SimConfig):
    """Run all realizations and return a :class:`SimSamples` (cached)."""
    idx = range(cfg.n_realizations)
    threads = _thread_count(cfg)
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            rows = list(pool.map(lambda i: _work_item(params, criterion, cfg, i), idx))
    else:
        rows = [_work_item(params, criterion, cfg, i) for i in idx]

    def col(j, dtype):
        a = np.array([row[j] for row in rows], dtype=dtype)
        a.setflags(write=False)
        return a

    slot = cfg.fading_mode is FadingMode.SLOT_LEVEL
    return SimSamples(
        r0=col(0, float), n_interferers=col(1, int), pcov=col(2, float),
        resampled=int(sum(row[3] for row in rows)), config=cfg,
        p_hat=col(4, float) if slot else None, delay=col(5, int) if slot else None)


# --------------------------------------------------------------------------
# estimators
# --------------------------------------------------------------------------

def _mean_ci(x, **extra):
    x = np.asarray(x, dtype=float)
    n = x.size
    m = float(np.mean(x))
    sd = float(np.std(x, ddof=1)) if n > 1 else 0.0
    return EstimateWithCI(m, Z95 * sd / math.sqrt(n), n, **extra)


def estimate_f1(tau, params, criterion, cfg=SimConfig()):
    """Mean of ``(1 - p)^tau`` (semi-analytic) or of ``1{delay > tau}`` (slot level)."""
    if tau < 0:
        raise DomainError("tau must be non-negative")
    s = simulate(params, criterion, cfg)
    if s.delay is None:
        return _mean_ci((1.0 - s.pcov) ** tau)
    return _mean_ci(s.delay > tau, censored=int(s.censored.sum()))


def estimate_f2(T, params, criterion, cfg=SimConfig()):
    """Fraction of realizations with ``1/p >= T``."""
    if not T >= 1:
        raise DomainError("T must be at least 1")
    p = simulate(params, criterion, cfg).p
    if T == 1:
        return _mean_ci(np.ones(p.size))
    return _mean_ci(p * T <= 1.0)


def estimate_f3(x, tau, params, criterion, cfg=SimConfig()):
    """Fraction of realizations with ``(1 - p)^tau >= x``."""
    if tau < 1:
        raise DomainError("tau must be a positive integer")
    p = simulate(params, criterion, cfg).p
    return _mean_ci((1.0 - p) ** tau >= x)


def estimate_ploss(params, criterion, cfg=SimConfig()):
    """Fraction of realizations that can never be served (``p = 0``)."""
    s = simulate(params, criterion, cfg)
    return _mean_ci(s.pcov == 0.0)


def estimate_moments(params, criterion, cfg=SimConfig()):
    """Sample mean and variance of ``p`` with normal-theory 95% intervals.

    The variance interval uses the delta-method standard error
    ``sqrt((m4 - s^4) / n)`` with ``m4`` the fourth central moment.
    """
    p = simulate(params, criterion, cfg).p
    n = p.size
    mean = _mean_ci(p)
    dev = p - mean.value
    var = float(np.sum(dev ** 2) / (n - 1))
    m4 = float(np.mean(dev ** 4))
    hw = Z95 * math.sqrt(max(m4 - var * var, 0.0) / n)
    return mean, EstimateWithCI(var, hw, n)


def hill_tail_index(x, k=None):
    """Hill estimate of the tail index of a positive sample."""
    x = np.sort(np.asarray(x, dtype=float))[::-1]
    if k is None:
        k = max(10, int(math.sqrt(x.size)) * 2)
    k = min(k, x.size - 1)
    logs = np.log(x[:k]) - math.log(x[k])
    h = float(np.mean(logs))
    return math.inf if h == 0 else 1.0 / h


def estimate_local_delay(params, criterion, cfg=SimConfig()):
    """Sample mean of the per-realization mean delay.

    Semi-analytic mode averages ``1/p``; slot-level mode averages the observed
    first-success slots, leaving censored draws out.  ``heavy_tail`` is set
    when some realization is never served or the Hill tail index of the
    sample is at most one, i.e. the running mean has no limit to settle on.
    """
    s = simulate(params, criterion, cfg)
    if s.delay is None:
        p = s.pcov
        if np.any(p == 0):
            return EstimateWithCI(math.inf, math.inf, p.size, heavy_tail=True,
                                  censored=int(np.sum(p == 0)))
        x = 1.0 / p
        censored = 0
    else:
        cens = s.censored
        x = s.delay[~cens].astype(float)
        censored = int(cens.sum())
    heavy = censored > 0 or hill_tail_index(x) <= 1.0
    est = _mean_ci(x, heavy_tail=heavy, censored=censored)
    return est


def running_mean(x):
    x = np.asarray(x, dtype=float)
    return np.cumsum(x) / np.arange(1, x.size + 1)


def write_realizations_csv(path, samples: SimSamples):
    """One line per realization: index, r0, n_interferers, pcov."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "r0", "n_interferers", "pcov"])
        for i, (r0, n, p) in enumerate(zip(samples.r0, samples.n_interferers, samples.pcov)):
            w.writerow([i, repr(float(r0)), int(n), repr(float(p))])
