import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from delaygeom.analytic import DelayQuery, f1, f2_gilpelaez, f3_gilpelaez, packet_loss
from delaygeom.approx import (BetaShape, EulerParams, beta_shape, f1_riemann, f2_beta, f2_euler,
                              f3_beta, f3_euler)
from delaygeom.errors import DomainError, NumericalError, UnsupportedCriterion
from delaygeom.model import NetworkParams, Sinr, Sir, SirAsnr


def test_euler_params_defaults_and_validation():
    ep = EulerParams()
    assert ep.A == pytest.approx(23.03, abs=5e-3)
    assert (ep.N, ep.Q) == (21, 15)
    for bad in [dict(A=0.0), dict(N=0), dict(Q=0)]:
        with pytest.raises(DomainError):
            EulerParams(**bad)


def test_euler_endpoints(reference_params):
    q = DelayQuery(reference_params, Sir(1.0))
    assert f2_euler(1.0, q) == 1.0
    assert f3_euler(0.0, 5, q) == 1.0
    assert f3_euler(1.0, 5, q) == 0.0
    with pytest.raises(DomainError):
        f2_euler(0.9, q)


@pytest.mark.parametrize("T", [1.5, 2.0, 5.0, 10.0])
def test_f2_euler_vs_gilpelaez(full_load_params, T):
    q = DelayQuery(full_load_params, Sir(1.0))
    assert abs(f2_euler(T, q) - f2_gilpelaez(T, q)) < 1e-4


@pytest.mark.parametrize("x", [0.1, 0.5, 0.9])
def test_f3_euler_vs_gilpelaez(full_load_params, x):
    q = DelayQuery(full_load_params, Sir(1.0))
    assert abs(f3_euler(x, 5, q) - f3_gilpelaez(x, 5, q)) < 1e-4


def test_euler_vs_gilpelaez_asnr(reference_params):
    # the Euler route needs no extra offset for the never-served mass
    q = DelayQuery(reference_params, SirAsnr(1.0))
    for T in [1.5, 4.0]:
        assert abs(f2_euler(T, q) - f2_gilpelaez(T, q)) < 1e-4


def test_euler_discretization_scale():
    # for a Beta(2, 3) coverage law E[P^s] has a closed form; the inversion
    # error at the defaults should sit far below the 1e-4 target
    from scipy.special import beta as B, betainc

    from scipy.special import loggamma

    class Fake:
        pass

    import delaygeom.approx as ap
    a, b = 2.0, 3.0

    def cf(t, q):
        # E[P^(i t)] for P ~ Beta(a, b)
        s = 1j * np.asarray(t)
        return np.exp(loggamma(a + s) + loggamma(a + b) - loggamma(a) - loggamma(a + b + s))

    orig = ap.char_fn
    ap.char_fn = cf
    try:
        for T in [1.2, 2.0, 7.0]:
            assert abs(f2_euler(T, Fake()) - betainc(a, b, 1 / T)) < 1e-8
    finally:
        ap.char_fn = orig
    assert B(a, b) > 0


def test_f3_euler_monotone_grid(reference_params):
    q = DelayQuery(reference_params, Sir(1.0))
    v = f3_euler(np.linspace(0.01, 0.99, 99), 5, q)
    assert np.all(np.diff(v) <= 1e-9)
    assert np.all((v >= 0) & (v <= 1))


def test_f2_euler_vectorized_matches_scalar(reference_params):
    q = DelayQuery(reference_params, Sir(1.0))
    Ts = np.array([1.0, 1.3, 3.0, 40.0])
    vec = f2_euler(Ts, q)
    assert vec == pytest.approx([f2_euler(float(T), q) for T in Ts], abs=1e-13)


def test_euler_sinr_vs_gilpelaez(reference_params):
    q = DelayQuery(reference_params, Sinr(1.0))
    assert abs(f2_euler(3.0, q) - f2_gilpelaez(3.0, q)) < 1e-4


# --------------------------------------------------------------------------
# Beta
# --------------------------------------------------------------------------

def test_beta_shape_sir_mean(full_load_params):
    shape = beta_shape(DelayQuery(full_load_params, Sir(1.0)))
    assert shape.mu == pytest.approx(0.56010, abs=1e-5)
    assert shape.mu == pytest.approx(1 / (1 + math.pi / 4), rel=1e-13)


def test_beta_shape_round_trip(reference_params):
    for crit in [Sir(1.0), Sinr(3.0)]:
        s = beta_shape(DelayQuery(reference_params, crit))
        mean = s.a / (s.a + s.b)
        var = s.a * s.b / ((s.a + s.b) ** 2 * (s.a + s.b + 1))
        assert abs(mean - s.mu) < 1e-12
        assert abs(var - s.nu) < 1e-12


@given(st.floats(0.01, 0.99), st.floats(0.01, 0.99))
def test_beta_from_moments_round_trip(mu, frac):
    nu = frac * mu * (1 - mu)
    s = BetaShape.from_moments(mu, nu)
    assert s.a / (s.a + s.b) == pytest.approx(mu, rel=1e-12)
    assert s.a * s.b / ((s.a + s.b) ** 2 * (s.a + s.b + 1)) == pytest.approx(nu, rel=1e-10)


def test_beta_shape_rejects_asnr(reference_params):
    with pytest.raises(UnsupportedCriterion):
        beta_shape(DelayQuery(reference_params, SirAsnr(1.0)))


def test_beta_shape_degenerate_small_gamma(full_load_params):
    with pytest.raises(NumericalError):
        beta_shape(DelayQuery(full_load_params, Sir(1e-14)))


def test_beta_curves_endpoints(reference_params):
    s = beta_shape(DelayQuery(reference_params, Sinr(1.0)))
    assert f2_beta(1.0, s) == 1.0
    assert f3_beta(1.0, 5, s) == 0.0
    assert f3_beta(0.0, 5, s) == 1.0


def test_beta_close_to_exact_for_sir(full_load_params):
    q = DelayQuery(full_load_params, Sir(1.0))
    s = beta_shape(q)
    for T in [1.5, 3.0, 10.0]:
        assert abs(f2_beta(T, s) - f2_euler(T, q)) < 0.03


# --------------------------------------------------------------------------
# Riemann bridge
# --------------------------------------------------------------------------

def test_riemann_tau_zero(reference_params):
    for n in [1, 7, 100]:
        assert f1_riemann(0, DelayQuery(reference_params, Sir(1.0)), n=n) == 1.0


def test_riemann_vs_exact(unit_params):
    q = DelayQuery(unit_params, Sir(1.0))
    assert abs(f1_riemann(10, q, n=10_000) - f1(10, q)) < 1e-4


def test_riemann_asnr_large_tau(reference_params):
    q = DelayQuery(reference_params, SirAsnr(1.0))
    assert f1_riemann(10_000, q, n=10_000) >= packet_loss(q) - 1e-3


def test_riemann_converges(unit_params):
    q = DelayQuery(unit_params, Sir(1.0))
    exact = f1(5, q)
    errs = [abs(f1_riemann(5, q, n=n) - exact) for n in [64, 256, 1024]]
    assert errs[0] > errs[1] > errs[2]


def test_riemann_with_beta_and_gilpelaez(full_load_params):
    q = DelayQuery(full_load_params, Sir(1.0))
    exact = f1(3, q)
    assert abs(f1_riemann(3, q, n=64, f3_impl="gilpelaez") - exact) < 1e-3
    assert abs(f1_riemann(3, q, n=512, f3_impl="beta") - exact) < 0.03


def test_riemann_domain(unit_params):
    q = DelayQuery(unit_params, Sir(1.0))
    with pytest.raises(DomainError):
        f1_riemann(3, q, n=0)
    with pytest.raises(DomainError):
        f1_riemann(3, q, f3_impl="talbot")


def test_riemann_default_partition_is_bitwise_stable(unit_params):
    q = DelayQuery(unit_params, Sir(1.0))
    assert f1_riemann(7, q) == f1_riemann(7, q)
