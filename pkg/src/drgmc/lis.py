"""Likelihood-informed subspace estimation and its online adaptation.

A global basis is accumulated from local low-rank spectra of the whitened
Gauss-Newton Hessian collected along the chain. Each update merges the
running estimate (weight m) with the newest local spectrum (weight 1) on
their joint span, re-diagonalizes, and truncates at the global threshold.
Convergence is monitored through the Forstner distance between consecutive
operators I + V Lambda V^T; adaptation stops once the distance stalls or
the update budget is exhausted.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .operators import (LowRankSpectrum, _orthonormalize, forstner_distance,
                        randomized_eig)


def local_spectrum(apply_H, n, rank=None, threshold=None, p=5, q=2,
                   rng=None, probe=None, max_rank=30):
    """Low-rank spectrum of one whitened Gauss-Newton Hessian action.

    Either a fixed rank (position-specific kernels) or an eigenvalue
    threshold (global LIS accumulation) decides the truncation. In
    threshold mode the factorization is computed at ``max_rank`` and cut
    where eigenvalues drop below the threshold.
    """
    if (rank is None) == (threshold is None):
        raise ValueError("exactly one of rank and threshold is required")
    r = min(rank if rank is not None else min(max_rank, n), n)
    if probe is not None:
        k = min(r + p, n)
        if probe.shape[1] < k:
            raise ValueError("probe block too narrow for requested rank")
        probe = probe[:, :k]
    spec = randomized_eig(apply_H, n, r, p=p, q=q, rng=rng, probe=probe)
    if threshold is not None:
        spec = spec.truncate(threshold=threshold)
    return spec


@dataclass(frozen=True)
class LISState:
    """Running global subspace estimate with its adaptation bookkeeping."""

    spectrum: LowRankSpectrum
    m: int = 0
    d_f: float = float("inf")
    rho_g: float = 0.01
    delta_lis: float = 1e-5
    m_max: int = 100
    n_lag: int = 200
    frozen: bool = False
    history: tuple = field(default_factory=tuple)

    @property
    def r(self):
        return self.spectrum.r

    @classmethod
    def initial(cls, n, rho_g=0.01, delta_lis=1e-5, m_max=100, n_lag=200):
        return cls(spectrum=LowRankSpectrum.empty(n), rho_g=rho_g,
                   delta_lis=delta_lis, m_max=m_max, n_lag=n_lag)


def _merge_spectra(running, m, local):
    """Weighted re-diagonalization of (m * running + local)/(m + 1) on the
    joint span of both bases."""
    blocks = [b for b in (running.basis, local.basis) if b.shape[1]]
    if not blocks:
        return np.zeros(0), np.zeros((running.n, 0))
    joint = _orthonormalize(np.hstack(blocks))
    r_a = joint.T @ running.basis
    r_b = joint.T @ local.basis
    mid = (r_a * (m * running.eigenvalues)) @ r_a.T + (r_b * local.eigenvalues) @ r_b.T
    mid = (mid + mid.T) / (2.0 * (m + 1))
    lam, w = np.linalg.eigh(mid)
    lam, w = lam[::-1], w[:, ::-1]
    if lam.size and lam[-1] < -1e-10:
        raise np.linalg.LinAlgError("merged curvature operator lost positivity")
    return np.clip(lam, 0.0, None), joint @ w


def update_lis(state, local_spec):
    """One accumulation step; returns the new state with d_F refreshed."""
    if state.frozen:
        raise ValueError("LIS state is frozen")
    if state.m >= state.m_max:
        raise ValueError("LIS update budget exhausted")
    if state.m == 0:
        merged = local_spec.truncate(threshold=state.rho_g)
    else:
        lam, basis = _merge_spectra(state.spectrum, state.m, local_spec)
        merged = LowRankSpectrum(lam, basis).truncate(threshold=state.rho_g)
    d_f = forstner_distance(state.spectrum, merged)
    m = state.m + 1
    hist = state.history + ((m, merged.r, d_f),)
    return replace(state, spectrum=merged, m=m, d_f=d_f, history=hist)


def adaptation_due(n, state):
    """Whether iteration n (0-based) should trigger an update."""
    return (not state.frozen and (n + 1) % state.n_lag == 0
            and state.m < state.m_max and state.d_f >= state.delta_lis)


def adaptation_step(n, state, local_spec_fn):
    """Apply the scheduled update at iteration n, freezing once the
    subspace has converged or the budget is spent."""
    if state.frozen:
        return state
    if adaptation_due(n, state):
        state = update_lis(state, local_spec_fn())
    if state.m >= state.m_max or state.d_f < state.delta_lis:
        state = replace(state, frozen=True)
    return state


def freeze(state):
    return replace(state, frozen=True)
