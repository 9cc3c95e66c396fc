"""Proposal kernels in whitened coordinates.

All kernels operate on v = C^{-1/2} u, where the prior is a standard
Gaussian. The autoregressive parameters derive from a step size h:

    rho0 = rho = (1 - h/4)/(1 + h/4),  rho1 = 1 - rho,  rho2 = sqrt(1 - rho^2)

so that rho0^2 + rho2^2 = 1 and rho2 * sqrt(h)/2 = rho1. Low-rank curvature
enters through a LowRankSpectrum of the whitened Gauss-Newton Hessian; the
reduced natural gradient is

    g_r(v) = Lambda_r V_r^T v - gamma_r V_r^T grad Phi(v)
    ghat(v) = V_r D_r g_r(v)  [- (I - V_r V_r^T) grad Phi(v) when gamma_perp = 1]

with D_r = (I + Lambda_r)^{-1}. Hamiltonian kernels use the splitting whose
drift-free flow is an exact rotation of (v, vtilde) by the angle eps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .operators import LowRankSpectrum, apply_sqrtK_hat

DIVERGENCE_THRESHOLD = 1e6  # |v| beyond this flags a diverged trajectory


@dataclass(frozen=True)
class StepParams:
    h: float
    gamma_r: int = 1
    gamma_perp: int = 0
    n_leapfrog: int = 1
    eps: float | None = None

    def __post_init__(self):
        if self.h <= 0:
            raise ValueError("step size h must be positive")
        if self.gamma_r not in (0, 1) or self.gamma_perp not in (0, 1):
            raise ValueError("gamma flags must be 0 or 1")
        if self.n_leapfrog < 1:
            raise ValueError("leapfrog count must be >= 1")
        if self.eps is None:
            object.__setattr__(self, "eps", math.sqrt(self.h))
        elif self.eps <= 0:
            raise ValueError("leapfrog step eps must be positive")

    @property
    def rho0(self):
        return (1.0 - self.h / 4.0) / (1.0 + self.h / 4.0)

    @property
    def rho(self):
        return self.rho0

    @property
    def rho1(self):
        return 1.0 - self.rho0

    @property
    def rho2(self):
        return math.sqrt(1.0 - self.rho0 ** 2)


@dataclass
class Trajectory:
    """Leapfrog path: states, boundary momenta and reduced gradients.

    Everything the energy-difference formula needs is recorded per step
    boundary: the reduced gradient g_r(v_i), the spectrum in force at v_i,
    and (when gamma_perp = 1) the complement drift -(I - VV^T) grad Phi(v_i).
    """

    vs: list = field(default_factory=list)
    vts: list = field(default_factory=list)
    specs: list = field(default_factory=list)
    grs: list = field(default_factory=list)
    comp_gs: list | None = None
    eps: float = 0.0
    diverged: bool = False


@dataclass
class ProposalOutput:
    v_prime: np.ndarray
    noise: np.ndarray | None = None
    ghat: np.ndarray | None = None
    trajectory: Trajectory | None = None
    diverged: bool = False


def pcn_propose(v, params, rng):
    xi = rng.standard_normal(len(v))
    return ProposalOutput(v_prime=params.rho0 * v + params.rho2 * xi, noise=xi)


def inf_mala_propose(v, grad, params, rng):
    xi = rng.standard_normal(len(v))
    vt = xi - (math.sqrt(params.h) / 2.0) * grad
    return ProposalOutput(v_prime=params.rho0 * v + params.rho2 * vt, noise=xi)


def reduced_ngrad(v, grad, spec, gamma_r):
    """g_r(v) = Lambda_r V_r^T v - gamma_r V_r^T grad."""
    gr = spec.eigenvalues * spec.project(v)
    if gamma_r and grad is not None:
        gr = gr - spec.project(grad)
    return gr


def whitened_ngrad(v, grad, spec, gamma_r=1, gamma_perp=0):
    gr = reduced_ngrad(v, grad, spec, gamma_r)
    ghat = spec.lift(spec.D * gr)
    if gamma_perp:
        ghat = ghat - (grad - spec.lift(spec.project(grad)))
    return ghat


def dr_mmala_propose(v, grad, spec, params, rng, xi=None):
    """v' = rho0 v + rho1 ghat(v) + rho2 Khat^{1/2} xi."""
    if xi is None:
        xi = rng.standard_normal(len(v))
    ghat = whitened_ngrad(v, grad, spec, params.gamma_r, params.gamma_perp)
    v_prime = params.rho0 * v + params.rho1 * ghat + params.rho2 * apply_sqrtK_hat(xi, spec)
    return ProposalOutput(v_prime=v_prime, noise=xi, ghat=ghat)


@dataclass(frozen=True)
class DiliOperators:
    D_Ar: np.ndarray
    D_Br: np.ndarray
    D_Gr: np.ndarray
    a_perp: float
    b_perp: float


def dili_operators(spec, h_r, h_perp, gamma_r):
    """Operator diagonals of the likelihood-informed proposal.

    D_Ar = (I - h D) + (2I + h D)^{-1} h^2 D^2 (1 - gamma_r)
    D_Br = sqrt((2I + h D)^{-2} 8 h D (1 - gamma_r) + 2 h D gamma_r)
    D_Gr = h D gamma_r,  a_perp = (2 - h_perp)/(2 + h_perp),
    b_perp = sqrt(8 h_perp)/(2 + h_perp).
    """
    if h_r <= 0 or h_perp <= 0:
        raise ValueError("DILI step sizes must be positive")
    D = spec.D
    hD = h_r * D
    D_Ar = (1.0 - hD) + hD ** 2 * (1.0 - gamma_r) / (2.0 + hD)
    D_Br = np.sqrt(8.0 * hD * (1.0 - gamma_r) / (2.0 + hD) ** 2 + 2.0 * hD * gamma_r)
    D_Gr = hD * float(gamma_r)
    a_perp = (2.0 - h_perp) / (2.0 + h_perp)
    b_perp = math.sqrt(8.0 * h_perp) / (2.0 + h_perp)
    return DiliOperators(D_Ar, D_Br, np.asarray(D_Gr), a_perp, b_perp)


def dili_connection_operators(spec, params):
    """Parameter substitution under which DILI reproduces the DR proposal:

    D_Ar = I - rho1 D, D_Br = rho2 sqrt(D), D_Gr = rho1 D gamma_r,
    a_perp = rho0, b_perp = rho2.
    """
    D = spec.D
    return DiliOperators(1.0 - params.rho1 * D,
                         params.rho2 * np.sqrt(D),
                         params.rho1 * D * float(params.gamma_r),
                         params.rho0, params.rho2)


def dili_propose(v, grad, spec, h_r, h_perp, gamma_r, rng, operators=None, xi=None):
    """v' = A v - G grad + B xi, split between the LIS and its complement."""
    ops = operators if operators is not None else dili_operators(spec, h_r, h_perp, gamma_r)
    if xi is None:
        xi = rng.standard_normal(len(v))
    cv = spec.project(v)
    cxi = spec.project(xi)
    v_prime = (ops.a_perp * (v - spec.lift(cv)) + spec.lift(ops.D_Ar * cv)
               + ops.b_perp * (xi - spec.lift(cxi)) + spec.lift(ops.D_Br * cxi))
    if gamma_r and spec.r and grad is not None:
        v_prime = v_prime - spec.lift(ops.D_Gr * spec.project(grad))
    return ProposalOutput(v_prime=v_prime, noise=xi)


def hmc_leapfrog(v, vt, g_callback, eps):
    """Half kick, exact rotation by eps, half kick."""
    vt = vt + (eps / 2.0) * g_callback(v)
    c, s = math.cos(eps), math.sin(eps)
    v, vt = c * v + s * vt, -s * v + c * vt
    vt = vt + (eps / 2.0) * g_callback(v)
    if not (np.all(np.isfinite(v)) and np.all(np.isfinite(vt))):
        raise FloatingPointError("non-finite state in leapfrog step")
    return v, vt


def dr_mhmc_propose(v, spec, params, grad_fn, rng, spec_fn=None, xi=None, vt0=None):
    """Multi-step Hamiltonian proposal with low-rank curvature.

    Momentum is drawn from Khat(v_0) via its square root. The drift at each
    state uses the spectrum in force there: fixed global spectrum when
    spec_fn is None, refreshed at every leapfrog state otherwise (the
    momentum draw always uses the initial state's spectrum). Records the
    whole path so the energy difference can be assembled afterwards.
    """
    eps = params.eps
    n_steps = params.n_leapfrog
    need_grad = bool(params.gamma_r or params.gamma_perp)

    if vt0 is None:
        if xi is None:
            xi = rng.standard_normal(len(v))
        vt = apply_sqrtK_hat(xi, spec)
    else:
        vt = np.asarray(vt0, dtype=float)
    traj = Trajectory(eps=eps, comp_gs=[] if params.gamma_perp else None)

    def drift_parts(state_v, state_spec):
        grad = grad_fn(state_v) if need_grad else None
        gr = reduced_ngrad(state_v, grad, state_spec, params.gamma_r)
        ghat = state_spec.lift(state_spec.D * gr)
        comp = None
        if params.gamma_perp:
            comp = -(grad - state_spec.lift(state_spec.project(grad)))
            ghat = ghat + comp
        return gr, ghat, comp

    cur_spec = spec
    gr, ghat, comp = drift_parts(v, cur_spec)
    traj.vs.append(v)
    traj.vts.append(vt)
    traj.specs.append(cur_spec)
    traj.grs.append(gr)
    if traj.comp_gs is not None:
        traj.comp_gs.append(comp)

    c, s = math.cos(eps), math.sin(eps)
    for _ in range(n_steps):
        vt_half = vt + (eps / 2.0) * ghat
        v, vt_rot = c * v + s * vt_half, -s * v + c * vt_half
        if not np.all(np.isfinite(v)) or np.linalg.norm(v) > DIVERGENCE_THRESHOLD:
            traj.diverged = True
            break
        if spec_fn is not None:
            cur_spec = spec_fn(v)
        gr, ghat, comp = drift_parts(v, cur_spec)
        vt = vt_rot + (eps / 2.0) * ghat
        traj.vs.append(v)
        traj.vts.append(vt)
        traj.specs.append(cur_spec)
        traj.grs.append(gr)
        if traj.comp_gs is not None:
            traj.comp_gs.append(comp)

    return ProposalOutput(v_prime=traj.vs[-1], noise=xi, trajectory=traj,
                          diverged=traj.diverged)


def inf_hmc_propose(v, params, grad_fn, rng, xi=None):
    """Hamiltonian proposal with identity mass: empty spectrum, full gradient."""
    spec = LowRankSpectrum.empty(len(v))
    p = StepParams(h=params.h, gamma_r=0, gamma_perp=1,
                   n_leapfrog=params.n_leapfrog, eps=params.eps)
    return dr_mhmc_propose(v, spec, p, grad_fn, rng, spec_fn=None, xi=xi)
