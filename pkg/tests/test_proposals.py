"""Proposal kernels against dense single-purpose references."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from drgmc.operators import LowRankSpectrum, apply_sqrtK_hat
from drgmc.proposals import (
    DIVERGENCE_THRESHOLD,
    StepParams,
    dili_connection_operators,
    dili_operators,
    dili_propose,
    dr_mhmc_propose,
    dr_mmala_propose,
    hmc_leapfrog,
    inf_hmc_propose,
    inf_mala_propose,
    pcn_propose,
    reduced_ngrad,
    whitened_ngrad,
)

from _dense_reference import (
    dense_K,
    dense_ghat,
    dense_leapfrog_path,
    dense_sqrtK,
    rho_params,
)


def random_spectrum(n, r, seed=0, scale=8.0):
    rng = np.random.default_rng(seed)
    V = np.linalg.qr(rng.standard_normal((n, r)))[0]
    lam = np.sort(rng.uniform(0.0, scale, r))[::-1]
    return LowRankSpectrum(lam, V)


def quadratic_target(n, seed=0):
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((n, n))
    H = M @ M.T / n
    b = rng.standard_normal(n)
    return (lambda v: 0.5 * v @ H @ v - b @ v), (lambda v: H @ v - b)


class TestStepParams:
    @settings(max_examples=200, deadline=None)
    @given(st.floats(1e-6, 3.999))
    def test_identities(self, h):
        p = StepParams(h=h)
        assert p.rho0 == pytest.approx((1 - h / 4) / (1 + h / 4), abs=1e-14)
        assert p.rho0 ** 2 + p.rho2 ** 2 == pytest.approx(1.0, abs=1e-12)
        assert p.rho2 * math.sqrt(h) / 2 == pytest.approx(p.rho1, abs=1e-12)
        assert p.eps == pytest.approx(math.sqrt(h))

    def test_validation(self):
        with pytest.raises(ValueError):
            StepParams(h=0.0)
        with pytest.raises(ValueError):
            StepParams(h=1.0, gamma_r=2)
        with pytest.raises(ValueError):
            StepParams(h=1.0, n_leapfrog=0)
        with pytest.raises(ValueError):
            StepParams(h=1.0, eps=-0.1)

    def test_explicit_eps_kept(self):
        assert StepParams(h=1.0, eps=0.3).eps == 0.3


class TestSimpleProposals:
    def test_pcn_is_autoregressive(self):
        params = StepParams(h=0.7)
        v = np.arange(5.0)
        out = pcn_propose(v, params, np.random.default_rng(0))
        assert np.allclose(out.v_prime, params.rho0 * v + params.rho2 * out.noise)

    def test_inf_mala_moments(self):
        params = StepParams(h=0.4)
        n = 6
        phi, grad = quadratic_target(n, seed=2)
        v = np.random.default_rng(1).standard_normal(n)
        out = inf_mala_propose(v, grad(v), params, np.random.default_rng(3))
        expect = (params.rho0 * v
                  + params.rho2 * (out.noise - math.sqrt(params.h) / 2 * grad(v)))
        assert np.allclose(out.v_prime, expect, atol=1e-14)


class TestNaturalGradient:
    @pytest.mark.parametrize("gamma_r,gamma_perp", [(0, 0), (1, 0), (0, 1), (1, 1)])
    def test_matches_dense(self, gamma_r, gamma_perp):
        n, r = 9, 4
        spec = random_spectrum(n, r, seed=5)
        rng = np.random.default_rng(6)
        v, grad = rng.standard_normal(n), rng.standard_normal(n)
        ghat = whitened_ngrad(v, grad, spec, gamma_r, gamma_perp)
        ref = dense_ghat(v, grad, spec.basis, spec.eigenvalues, gamma_r, gamma_perp)
        assert np.allclose(ghat, ref, atol=1e-12)

    def test_full_flags_collapse_to_gap_form(self):
        # gamma_r = gamma_perp = 1: ghat = (I - Khat) v - Khat grad
        n, r = 11, 5
        spec = random_spectrum(n, r, seed=7)
        rng = np.random.default_rng(8)
        v, grad = rng.standard_normal(n), rng.standard_normal(n)
        K = dense_K(spec.basis, spec.eigenvalues, n)
        ref = (np.eye(n) - K) @ v - K @ grad
        assert np.allclose(whitened_ngrad(v, grad, spec, 1, 1), ref, atol=1e-11)

    def test_reduced_part_only(self):
        n, r = 7, 3
        spec = random_spectrum(n, r, seed=9)
        rng = np.random.default_rng(10)
        v, grad = rng.standard_normal(n), rng.standard_normal(n)
        gr = reduced_ngrad(v, grad, spec, 1)
        assert np.allclose(gr, spec.eigenvalues * (spec.basis.T @ v) - spec.basis.T @ grad)


class TestDrMmala:
    @pytest.mark.parametrize("gamma_perp", [0, 1])
    def test_matches_dense(self, gamma_perp):
        n, r = 10, 4
        spec = random_spectrum(n, r, seed=11)
        params = StepParams(h=0.9, gamma_r=1, gamma_perp=gamma_perp)
        rng = np.random.default_rng(12)
        v, grad = rng.standard_normal(n), rng.standard_normal(n)
        xi = rng.standard_normal(n)
        out = dr_mmala_propose(v, grad, spec, params, rng, xi=xi)
        rho0, rho1, rho2 = rho_params(params.h)
        ref = (rho0 * v
               + rho1 * dense_ghat(v, grad, spec.basis, spec.eigenvalues, 1, gamma_perp)
               + rho2 * dense_sqrtK(spec.basis, spec.eigenvalues, n) @ xi)
        assert np.allclose(out.v_prime, ref, atol=1e-11)

    def test_empty_spectrum_no_flags_is_pcn(self):
        n = 8
        spec = LowRankSpectrum.empty(n)
        params = StepParams(h=0.5, gamma_r=0, gamma_perp=0)
        rng = np.random.default_rng(0)
        v = rng.standard_normal(n)
        xi = rng.standard_normal(n)
        out = dr_mmala_propose(v, None, spec, params, rng, xi=xi)
        assert np.allclose(out.v_prime, params.rho0 * v + params.rho2 * xi)


class TestDiliOperators:
    def test_hand_values(self):
        spec = LowRankSpectrum(np.array([1.0]), np.eye(3)[:, :1])
        ops = dili_operators(spec, h_r=1.0, h_perp=2.0, gamma_r=0)
        assert ops.D_Ar[0] == pytest.approx(0.6, abs=1e-14)
        assert ops.D_Br[0] == pytest.approx(0.8, abs=1e-14)
        assert ops.a_perp == pytest.approx(0.0, abs=1e-14)
        assert ops.b_perp == pytest.approx(1.0, abs=1e-14)

    @settings(max_examples=60, deadline=None)
    @given(st.floats(1e-4, 50.0), st.floats(1e-4, 50.0),
           st.integers(0, 1), st.integers(0, 2 ** 31 - 1))
    def test_identities(self, h_r, h_perp, gamma_r, seed):
        spec = random_spectrum(6, 3, seed=seed)
        ops = dili_operators(spec, h_r, h_perp, gamma_r)
        # the complement pair always sits on the unit circle
        assert ops.a_perp ** 2 + ops.b_perp ** 2 == pytest.approx(1.0, abs=1e-12)
        if gamma_r == 0:
            assert np.allclose(ops.D_Ar ** 2 + ops.D_Br ** 2, 1.0, atol=1e-12)
        else:
            hD = h_r * spec.D
            assert np.allclose(ops.D_Ar ** 2 + ops.D_Br ** 2, 1.0 + hD ** 2, atol=1e-10)

    def test_connection_substitution(self):
        spec = random_spectrum(7, 3, seed=3)
        params = StepParams(h=1.1, gamma_r=1)
        ops = dili_connection_operators(spec, params)
        D = spec.D
        assert np.allclose(ops.D_Ar, 1.0 - params.rho1 * D)
        assert np.allclose(ops.D_Br, params.rho2 * np.sqrt(D))
        assert np.allclose(ops.D_Gr, params.rho1 * D)
        assert ops.a_perp == params.rho0 and ops.b_perp == params.rho2

    def test_rejects_bad_steps(self):
        spec = random_spectrum(4, 2)
        with pytest.raises(ValueError):
            dili_operators(spec, h_r=0.0, h_perp=1.0, gamma_r=0)


class TestDiliPropose:
    def test_connection_equals_dr_proposal(self):
        n, r = 12, 5
        spec = random_spectrum(n, r, seed=21)
        params = StepParams(h=0.8, gamma_r=1, gamma_perp=0)
        rng = np.random.default_rng(22)
        for _ in range(20):
            v, grad = rng.standard_normal(n), rng.standard_normal(n)
            xi = rng.standard_normal(n)
            ops = dili_connection_operators(spec, params)
            out_d = dili_propose(v, grad, spec, None, None, 1, rng,
                                 operators=ops, xi=xi)
            out_m = dr_mmala_propose(v, grad, spec, params, rng, xi=xi)
            assert np.allclose(out_d.v_prime, out_m.v_prime, atol=1e-10)

    def test_empty_spectrum_with_gradient_flag(self):
        # regression: an unadapted (empty) subspace must not touch the gradient
        n = 6
        spec = LowRankSpectrum.empty(n)
        rng = np.random.default_rng(1)
        v = rng.standard_normal(n)
        out = dili_propose(v, None, spec, 0.5, 0.5, 1, rng)
        ops = dili_operators(spec, 0.5, 0.5, 1)
        assert np.allclose(out.v_prime, ops.a_perp * v + ops.b_perp * out.noise)


class TestLeapfrog:
    def test_matches_dense_reference(self):
        n = 5
        phi, grad = quadratic_target(n, seed=1)
        drift = lambda v: -grad(v)
        rng = np.random.default_rng(2)
        v, vt = rng.standard_normal(n), rng.standard_normal(n)
        eps = 0.21
        vs, vts = dense_leapfrog_path(v, vt, drift, eps, 1)
        v1, vt1 = hmc_leapfrog(v, vt, drift, eps)
        assert np.allclose(v1, vs[-1], atol=1e-12)
        assert np.allclose(vt1, vts[-1], atol=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2 ** 31 - 1), st.floats(0.01, 0.8), st.integers(1, 10))
    def test_reversibility(self, seed, eps, steps):
        n = 4
        phi, grad = quadratic_target(n, seed=seed % 100)
        drift = lambda v: -grad(v)
        rng = np.random.default_rng(seed)
        v0, vt0 = rng.standard_normal(n), rng.standard_normal(n)
        v, vt = v0, vt0
        for _ in range(steps):
            v, vt = hmc_leapfrog(v, vt, drift, eps)
        v, vt = v, -vt
        for _ in range(steps):
            v, vt = hmc_leapfrog(v, vt, drift, eps)
        assert np.allclose(v, v0, atol=1e-9)
        assert np.allclose(-vt, vt0, atol=1e-9)

    def test_non_finite_raises(self):
        with pytest.raises(FloatingPointError):
            hmc_leapfrog(np.array([1.0]), np.array([1.0]),
                         lambda v: np.array([np.inf]), 0.5)


class TestDrMhmc:
    def test_trajectory_matches_dense_path(self):
        n, r = 8, 3
        spec = random_spectrum(n, r, seed=31)
        phi, grad = quadratic_target(n, seed=32)
        params = StepParams(h=0.3, gamma_r=1, gamma_perp=1, n_leapfrog=4)
        rng = np.random.default_rng(33)
        v0 = rng.standard_normal(n)
        out = dr_mhmc_propose(v0, spec, params, grad, rng)
        vt0 = out.trajectory.vts[0]
        drift = lambda v: dense_ghat(v, grad(v), spec.basis, spec.eigenvalues, 1, 1)
        vs, vts = dense_leapfrog_path(v0, vt0, drift, params.eps, 4)
        assert len(out.trajectory.vs) == 5
        for a, b in zip(out.trajectory.vs, vs):
            assert np.allclose(a, b, atol=1e-10)
        for a, b in zip(out.trajectory.vts, vts):
            assert np.allclose(a, b, atol=1e-10)
        assert np.allclose(out.v_prime, vs[-1], atol=1e-10)

    def test_momentum_drawn_through_sqrt_mass(self):
        n, r = 7, 3
        spec = random_spectrum(n, r, seed=41)
        params = StepParams(h=0.2, n_leapfrog=1)
        rng = np.random.default_rng(42)
        v0 = rng.standard_normal(n)
        xi = rng.standard_normal(n)
        out = dr_mhmc_propose(v0, spec, params, lambda v: np.zeros(n),
                              np.random.default_rng(0), xi=xi)
        assert np.allclose(out.trajectory.vts[0], apply_sqrtK_hat(xi, spec))

    def test_divergence_flag(self):
        n = 3
        spec = LowRankSpectrum.empty(n)
        params = StepParams(h=0.5, gamma_r=0, gamma_perp=1, n_leapfrog=6, eps=1.0)
        # explosive anti-restoring force
        grad_fn = lambda v: -1e4 * v * np.abs(v)
        out = dr_mhmc_propose(np.ones(n), spec, params, grad_fn,
                              np.random.default_rng(5))
        assert out.diverged
        assert len(out.trajectory.vs) <= params.n_leapfrog + 1

    def test_inf_hmc_is_identity_mass_full_gradient(self):
        n = 6
        phi, grad = quadratic_target(n, seed=51)
        params = StepParams(h=0.25, n_leapfrog=3)
        rng = np.random.default_rng(52)
        v0 = rng.standard_normal(n)
        xi = np.random.default_rng(53).standard_normal(n)
        out = inf_hmc_propose(v0, params, grad, rng, xi=xi)
        vs, vts = dense_leapfrog_path(v0, xi, lambda v: -grad(v), params.eps, 3)
        assert np.allclose(out.v_prime, vs[-1], atol=1e-11)
