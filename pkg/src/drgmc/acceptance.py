"""Metropolis-Hastings log ratios for the whitened kernels.

The low-rank structure collapses every determinant and quadratic form onto
the r-dimensional subspace, so no n x n solve appears here. For a proposal
v' = rho0 v + rho1 ghat(v) + rho2 Khat(v)^{1/2} xi define the innovation
w* = (v' - rho0 v)/rho2. The proposal density relative to the prior-reversible
reference kernel is

    log lambda(w*; v) = -1/2 |(sqrt(h)/2) D^{1/2} g_r(v) - D^{-1/2} V^T w*|^2
                        + 1/2 |V^T w*|^2 - 1/2 log det D_r

plus, when gamma_perp = 1 adds the complement drift -(I - VV^T) grad Phi,

    -(h/8) |g_perp|^2 - (sqrt(h)/2) <g_perp, w*_perp>,  g_perp = (I - VV^T) grad Phi.

The acceptance ratio is then [Phi(v) - Phi(v')] + log lambda(w*_rev; v')
- log lambda(w*_fwd; v).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .proposals import reduced_ngrad


@dataclass(frozen=True)
class AcceptDecision:
    log_ratio: float
    accept: bool
    uniform_draw: float


def decide(log_ratio, rng):
    u = 1.0 - rng.random()  # in (0, 1], so log is finite
    lr = float(log_ratio)
    if math.isnan(lr):
        lr = float("-inf")
    accept = math.log(u) < min(0.0, lr)
    return AcceptDecision(lr, bool(accept), float(u))


def pcn_log_ratio(phi_old, phi_new):
    return float(phi_old - phi_new)


def _perp_log_lambda(grad, w_star, spec, h):
    gp = grad - spec.lift(spec.project(grad))
    wp = w_star - spec.lift(spec.project(w_star))
    return -(h / 8.0) * float(gp @ gp) - (math.sqrt(h) / 2.0) * float(gp @ wp)


def log_lambda(v, grad, spec, w_star, params):
    """log lambda(w*; v) of the position-v proposal density."""
    cw = spec.project(w_star)
    gr = reduced_ngrad(v, grad, spec, params.gamma_r)
    sqrt_d = np.sqrt(spec.D)
    resid = (math.sqrt(params.h) / 2.0) * sqrt_d * gr - cw / sqrt_d
    val = -0.5 * float(resid @ resid) + 0.5 * float(cw @ cw) - 0.5 * float(np.sum(np.log(spec.D)))
    if params.gamma_perp:
        val += _perp_log_lambda(grad, w_star, spec, params.h)
    return val


def inf_mala_log_ratio(v, v_prime, grad_v, grad_vp, phi_v, phi_vp, params):
    """Langevin ratio: log kappa(v', v) - log kappa(v, v') with

    log kappa(v, v') = -Phi(v) - (h/8)|grad Phi(v)|^2
                       - (sqrt(h)/2) <grad Phi(v), w*(v, v')>.
    """
    rho0, rho2, h = params.rho0, params.rho2, params.h
    w_fwd = (v_prime - rho0 * v) / rho2
    w_rev = (v - rho0 * v_prime) / rho2
    sh = math.sqrt(h) / 2.0
    fwd = -phi_v - (h / 8.0) * float(grad_v @ grad_v) - sh * float(grad_v @ w_fwd)
    rev = -phi_vp - (h / 8.0) * float(grad_vp @ grad_vp) - sh * float(grad_vp @ w_rev)
    return float(rev - fwd)


def dr_mmala_log_ratio(v, v_prime, spec_v, spec_vp, grad_v, grad_vp,
                       phi_v, phi_vp, params):
    rho0, rho2 = params.rho0, params.rho2
    w_fwd = (v_prime - rho0 * v) / rho2
    w_rev = (v - rho0 * v_prime) / rho2
    fwd = -phi_v + log_lambda(v, grad_v, spec_v, w_fwd, params)
    rev = -phi_vp + log_lambda(v_prime, grad_vp, spec_vp, w_rev, params)
    return float(rev - fwd)


def dili_log_ratio(v, v_prime, spec_v, grad_v, grad_vp, phi_v, phi_vp,
                   params, spec_vp=None):
    """Ratio for the operator-form proposal: the DR ratio minus its
    determinant correction, which cancels entirely when the spectrum is a
    fixed global one (spec_vp omitted)."""
    svp = spec_v if spec_vp is None else spec_vp
    base = dr_mmala_log_ratio(v, v_prime, spec_v, svp, grad_v, grad_vp,
                              phi_v, phi_vp, params)
    corr = 0.5 * float(np.sum(np.log(spec_v.D))) - 0.5 * float(np.sum(np.log(svp.D)))
    return float(base - corr)


def dili_exact_log_ratio(v, v_prime, spec, grad_v, grad_vp, phi_v, phi_vp, ops):
    """Density ratio of the operator-form proposal with arbitrary diagonal
    operators (A, B, G) on the subspace and a prior-reversible complement
    (a_perp^2 + b_perp^2 = 1). Agrees with dili_log_ratio whenever the
    operators come from the autoregressive substitution."""
    if abs(ops.a_perp ** 2 + ops.b_perp ** 2 - 1.0) > 1e-10:
        raise ValueError("complement parameters are not prior-reversible")
    z, zp = spec.project(v), spec.project(v_prime)
    if spec.r == 0:
        return pcn_log_ratio(phi_v, phi_vp)
    uses_grad = bool(np.any(np.asarray(ops.D_Gr) != 0.0))
    if uses_grad and (grad_v is None or grad_vp is None):
        raise ValueError("gradient-weighted operators need both gradients")
    cg = ops.D_Gr * spec.project(grad_v) if uses_grad else 0.0
    cgp = ops.D_Gr * spec.project(grad_vp) if uses_grad else 0.0
    fwd = (zp - (ops.D_Ar * z - cg)) / ops.D_Br
    rev = (z - (ops.D_Ar * zp - cgp)) / ops.D_Br
    return (float(phi_v - phi_vp) + 0.5 * float(z @ z) - 0.5 * float(zp @ zp)
            - 0.5 * float(rev @ rev) + 0.5 * float(fwd @ fwd))


def dr_mhmc_delta_E(trajectory, phi_0, phi_I):
    """Energy difference across a recorded leapfrog path.

    Delta E = Phi(v_I) - Phi(v_0)
              + 1/2 |Lambda^{1/2}(v_I) V^T(v_I) vt_I|^2 - 1/2 |...(v_0) vt_0|^2
              + 1/2 log det D(v_I) - 1/2 log det D(v_0)
              - (eps^2/8) (|D(v_I) g_r(v_I)|^2 - |D(v_0) g_r(v_0)|^2)
              + (eps/2) sum_i [<D g_r, V^T vt>_i + <D g_r, V^T vt>_{i+1}]

    with matching complement terms when the trajectory carried a complement
    drift. Returns +inf for diverged trajectories so they are always rejected.
    """
    if trajectory.diverged:
        return float("inf")
    specs, vts, grs = trajectory.specs, trajectory.vts, trajectory.grs
    eps = trajectory.eps
    s0, sI = specs[0], specs[-1]
    c0, cI = s0.project(vts[0]), sI.project(vts[-1])
    quad = 0.5 * float(cI @ (sI.eigenvalues * cI)) - 0.5 * float(c0 @ (s0.eigenvalues * c0))
    logdet = 0.5 * float(np.sum(np.log(sI.D))) - 0.5 * float(np.sum(np.log(s0.D)))
    dg0, dgI = s0.D * grs[0], sI.D * grs[-1]
    kin = -(eps ** 2 / 8.0) * (float(dgI @ dgI) - float(dg0 @ dg0))
    cross = 0.0
    dots = [float((specs[i].D * grs[i]) @ specs[i].project(vts[i]))
            for i in range(len(vts))]
    for i in range(len(vts) - 1):
        cross += dots[i] + dots[i + 1]
    cross *= eps / 2.0
    total = float(phi_I - phi_0) + quad + logdet + kin + cross
    if trajectory.comp_gs is not None:
        gs = trajectory.comp_gs
        vps = [vts[i] - specs[i].lift(specs[i].project(vts[i])) for i in range(len(vts))]
        total += -(eps ** 2 / 8.0) * (float(gs[-1] @ gs[-1]) - float(gs[0] @ gs[0]))
        pdots = [float(gs[i] @ vps[i]) for i in range(len(vts))]
        pcross = 0.0
        for i in range(len(vts) - 1):
            pcross += pdots[i] + pdots[i + 1]
        total += (eps / 2.0) * pcross
    return total
