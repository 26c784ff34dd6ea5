"""Rate-WMMSE machinery: equalizers, weights, and sample-average aggregates.

For each SAA realisation the optimal scalar equalizer and MSE weight of every
stream have closed forms; substituting them into the augmented weighted MSE
``xi = u * mse - log2(u)`` gives ``1 - rate``, which is what makes the
max-min problem block-convex.  This module computes those per-sample values
and reduces them into the sample-average aggregates consumed by the convex
precoder subproblem: weighted channel second moments, weighted channel/
equalizer cross vectors, and the scalar weight terms.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .rates import PrecoderSet, received_powers, stream_amplitudes
from .scenario import Scenario

log = logging.getLogger(__name__)

#: Floor applied to MSEs before inversion, and cap on the resulting weights.
MSE_FLOOR = 1e-12
WEIGHT_CAP = 1e12


@dataclass
class WmmseState:
    """Per-sample equalizers, weights, and minimum MSEs, shape ``(S, K)``."""

    rs: bool
    g_c: np.ndarray | None
    g_p: np.ndarray
    u_c: np.ndarray | None
    u_p: np.ndarray
    mmse_c: np.ndarray | None
    mmse_p: np.ndarray


@dataclass
class SafAggregates:
    """Sample-average terms of the quadratic WMSE expansion.

    ``quad_*[j]`` has shape ``(K, B_j, B_j)`` and is the weight-scaled second
    moment of user ``k``'s effective channel towards gateway ``j`` (Hermitian
    PSD by construction).  ``lin_*[k]`` is the weighted channel/equalizer
    cross vector towards the user's own gateway.  ``noise_t_*`` is the joint
    sample average of (effective noise x weighted equalizer energy), kept as
    one aggregate so the quadratic expansion reproduces the averaged WMSE
    exactly.
    """

    rs: bool
    quad_c: list | None
    quad_p: list
    lin_c: list | None
    lin_p: list
    t_c: np.ndarray | None
    t_p: np.ndarray
    u_c: np.ndarray | None
    u_p: np.ndarray
    v_c: np.ndarray | None
    v_p: np.ndarray
    noise_t_c: np.ndarray | None
    noise_t_p: np.ndarray


def optimal_weights(mmse: np.ndarray) -> np.ndarray:
    """Weights ``1/mse`` (clamped to [1, 1e12]) minimising the augmented WMSE."""
    mmse = np.asarray(mmse, dtype=float)
    if np.any(mmse <= 0.0):
        raise ValueError("nonpositive MMSE; weights undefined (nonpositive-mmse)")
    floored = np.maximum(mmse, MSE_FLOOR)
    if np.any(floored != mmse):
        log.info("MSE floor engaged for %d entries", int(np.sum(floored != mmse)))
    w = 1.0 / floored
    if np.any(w > WEIGHT_CAP):
        log.info("weight cap engaged for %d entries", int(np.sum(w > WEIGHT_CAP)))
    return np.clip(w, 1.0, WEIGHT_CAP)


def compute_state(
    eff_rows: list,
    eff_noise_pow: np.ndarray,
    precoders: PrecoderSet,
    scenario: Scenario,
) -> WmmseState:
    """Closed-form MMSE equalizers and optimal weights for every sample/user.

    The common-stream equalizer divides the conjugate received amplitude by
    the total received power; the private one uses the post-SIC power.  The
    resulting MMSEs are ``post_sic/total`` and ``interference/post_sic``.
    """
    total, t_private, own_c_pow, own_p_pow = received_powers(
        eff_rows, eff_noise_pow, precoders, scenario
    )
    amp_c, amp_p = stream_amplitudes(eff_rows, precoders, scenario)
    users = np.arange(scenario.n_users)
    own_group = np.asarray(scenario.user_group)
    own_amp_p = amp_p[..., users, own_group]

    g_p = np.conj(own_amp_p) / t_private
    mmse_p = (t_private - own_p_pow) / t_private
    u_p = optimal_weights(mmse_p)

    g_c = u_c = mmse_c = None
    if precoders.rs:
        own_gw = np.asarray([scenario.gateway_of_user(k) for k in users])
        own_amp_c = amp_c[..., users, own_gw]
        g_c = np.conj(own_amp_c) / total
        mmse_c = t_private / total
        u_c = optimal_weights(mmse_c)
    return WmmseState(rs=precoders.rs, g_c=g_c, g_p=g_p, u_c=u_c, u_p=u_p, mmse_c=mmse_c, mmse_p=mmse_p)


def mmse_equalizers(eff_rows, eff_noise_pow, precoders, scenario, user: int):
    """Optimal scalar equalizers ``(g_common | None, g_private)`` for one user."""
    state = compute_state(eff_rows, eff_noise_pow, precoders, scenario)
    g_c = None if state.g_c is None else state.g_c[..., user]
    return g_c, state.g_p[..., user]


def mmse_values(eff_rows, eff_noise_pow, precoders, scenario, user: int):
    """Minimum MSEs ``(mmse_common | None, mmse_private)`` for one user.

    These satisfy ``sinr = 1/mmse - 1`` and ``rate = -log2(mmse)``.
    """
    state = compute_state(eff_rows, eff_noise_pow, precoders, scenario)
    e_c = None if state.mmse_c is None else state.mmse_c[..., user]
    return e_c, state.mmse_p[..., user]


def augmented_wmse(weight, equalizer, total_power, own_amp):
    """``u * (|g|^2 T - 2 Re(g * own_amp) + 1) - log2(u)`` elementwise."""
    mse = np.abs(equalizer) ** 2 * total_power - 2.0 * np.real(equalizer * own_amp) + 1.0
    return weight * mse - np.log2(weight)


def _gather_own(amp, owners, n_users):
    users = np.arange(n_users)
    return amp[..., users, np.asarray(owners)]


def wmse_per_sample(
    state: WmmseState,
    eff_rows: list,
    eff_noise_pow: np.ndarray,
    precoders: PrecoderSet,
    scenario: Scenario,
):
    """Augmented WMSEs ``(xi_c | None, xi_p)`` per sample at given precoders.

    The state's equalizers and weights stay fixed; only the precoders vary.
    This is the direct (non-expanded) evaluation used to validate the
    quadratic aggregate form.
    """
    total, t_private, _, _ = received_powers(eff_rows, eff_noise_pow, precoders, scenario)
    amp_c, amp_p = stream_amplitudes(eff_rows, precoders, scenario)
    own_amp_p = _gather_own(amp_p, scenario.user_group, scenario.n_users)
    xi_p = augmented_wmse(state.u_p, state.g_p, t_private, own_amp_p)
    xi_c = None
    if precoders.rs:
        own_gw = [scenario.gateway_of_user(k) for k in range(scenario.n_users)]
        own_amp_c = _gather_own(amp_c, own_gw, scenario.n_users)
        xi_c = augmented_wmse(state.u_c, state.g_c, total, own_amp_c)
    return xi_c, xi_p


def build_saf_terms(
    state: WmmseState,
    eff_rows: list,
    eff_noise_pow: np.ndarray,
    scenario: Scenario,
) -> SafAggregates:
    """Average the per-sample expansion terms over the realisation set.

    Per sample: ``t = u |g|^2``, channel second moment ``t * hbar hbar^H`` per
    gateway, cross vector ``u * hbar * conj(g)`` towards the own gateway, and
    ``log2(u)``.  The effective-noise term is averaged jointly with ``t``.
    """
    S = eff_noise_pow.shape[0]
    K = scenario.n_users
    own_gw = np.asarray([scenario.gateway_of_user(k) for k in range(K)])

    def reduce_stream(u, g):
        t = u * np.abs(g) ** 2  # (S, K)
        quad = [
            np.einsum("sk,skp,skq->kpq", t, np.conj(rows), rows) / S for rows in eff_rows
        ]
        coeff = u * np.conj(g)
        lin = []
        for k in range(K):
            rows = eff_rows[own_gw[k]]
            lin.append(np.einsum("s,sp->p", coeff[:, k], np.conj(rows[:, k, :])) / S)
        return (
            quad,
            lin,
            np.mean(t, axis=0),
            np.mean(u, axis=0),
            np.mean(np.log2(u), axis=0),
            np.mean(t * eff_noise_pow, axis=0),
        )

    quad_p, lin_p, t_p, u_p, v_p, nt_p = reduce_stream(state.u_p, state.g_p)
    if state.rs:
        quad_c, lin_c, t_c, u_c, v_c, nt_c = reduce_stream(state.u_c, state.g_c)
    else:
        quad_c = lin_c = t_c = u_c = v_c = nt_c = None
    return SafAggregates(
        rs=state.rs,
        quad_c=quad_c,
        quad_p=quad_p,
        lin_c=lin_c,
        lin_p=lin_p,
        t_c=t_c,
        t_p=t_p,
        u_c=u_c,
        u_p=u_p,
        v_c=v_c,
        v_p=v_p,
        noise_t_c=nt_c,
        noise_t_p=nt_p,
    )


def wmse_from_aggregates(saf: SafAggregates, precoders: PrecoderSet, scenario: Scenario):
    """Averaged WMSEs ``(xi_c | None, xi_p)`` from the quadratic expansion.

    ``xi_p[i]`` sums the other gateways' common quadratics (own common was
    cancelled by SIC), every private quadratic, the joint noise term, the
    linear own-stream term, and the weight terms; ``xi_c[k]`` includes every
    common quadratic.  Must agree with the direct per-sample average.
    """
    K = scenario.n_users
    lam = scenario.gateway_of_group
    own_gw = [scenario.gateway_of_user(k) for k in range(K)]

    def quad_form(p, mat):
        return float(np.real(np.vdot(p, mat @ p)))

    xi_p = np.empty(K)
    for i in range(K):
        val = saf.noise_t_p[i] + saf.u_p[i] - saf.v_p[i]
        if saf.rs:
            for j in range(scenario.n_gateways):
                if j != own_gw[i]:
                    val += quad_form(precoders.common[j], saf.quad_p[j][i])
        for m in range(scenario.n_groups):
            val += quad_form(precoders.private[m], saf.quad_p[lam[m]][i])
        val -= 2.0 * float(np.real(np.vdot(saf.lin_p[i], precoders.private[scenario.user_group[i]])))
        xi_p[i] = val

    xi_c = None
    if saf.rs:
        xi_c = np.empty(K)
        for k in range(K):
            val = saf.noise_t_c[k] + saf.u_c[k] - saf.v_c[k]
            for j in range(scenario.n_gateways):
                val += quad_form(precoders.common[j], saf.quad_c[j][k])
            for m in range(scenario.n_groups):
                val += quad_form(precoders.private[m], saf.quad_c[lam[m]][k])
            val -= 2.0 * float(np.real(np.vdot(saf.lin_c[k], precoders.common[own_gw[k]])))
            xi_c[k] = val
    return xi_c, xi_p
