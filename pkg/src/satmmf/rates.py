"""Direct-definition SINRs, rates, group rates, and per-feed power usage.

This layer evaluates the signal model exactly as defined: effective channels
through the satellite, effective noise including the forwarded satellite
noise, per-stream SINRs with ideal SIC of the own common stream, log2 rates,
and min-aggregation over groups and clusters.  It is deliberately independent
of the WMMSE optimisation path so the two can cross-check each other.

Shapes: per-gateway effective channel rows are ``(..., K, B_j)`` where the
row ``[..., k, :]`` is the conjugated effective channel of user ``k`` towards
gateway ``j`` (the thing multiplied onto a precoder).  Leading axes broadcast,
which lets the same code evaluate one channel or a whole realisation set.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scenario import Scenario, feed_local_index


@dataclass
class PrecoderSet:
    """Precoders for one scheme.

    ``common[l]`` is gateway ``l``'s common-stream precoder (absent entirely
    for linear precoding without rate splitting); ``private[m]`` is group
    ``m``'s precoder.  In the two-stage scheme these vectors are the second
    stage, and ``first_w`` / ``obp_r`` hold the per-gateway first-stage
    precoder and on-board receive filter.
    """

    rs: bool
    common: list | None
    private: list
    first_w: list | None = None
    obp_r: list | None = None

    def __post_init__(self):
        if not self.rs and self.common is not None:
            raise ValueError("a NoRS precoder set must not carry common precoders")
        if self.rs and self.common is None:
            raise ValueError("an RS precoder set requires one common precoder per gateway")

    @property
    def two_stage(self) -> bool:
        return self.first_w is not None

    def streams(self) -> list:
        out = list(self.common) if self.rs else []
        return out + list(self.private)

    def scaled(self, factor: float) -> "PrecoderSet":
        return PrecoderSet(
            rs=self.rs,
            common=None if self.common is None else [factor * p for p in self.common],
            private=[factor * p for p in self.private],
            first_w=self.first_w,
            obp_r=self.obp_r,
        )


@dataclass
class RateReport:
    """Per-user, per-cluster, and per-group rates for one channel state."""

    rate_common: np.ndarray | None  # (K,) achievable common-stream rate per user
    rate_private: np.ndarray  # (K,)
    cluster_common: np.ndarray | None  # (L,) min over served users
    group_private: np.ndarray  # (M,) min over group members
    group_total: np.ndarray  # (M,) portions + private (RS) or private (NoRS)
    portions: np.ndarray | None  # (M,) common-rate portions, when supplied
    eff_noise: np.ndarray  # (K,)
    sinr_common: np.ndarray | None
    sinr_private: np.ndarray
    power_usage: np.ndarray | None = None  # (N,) filled by the caller's audit


def effective_channel_rows(h, f, obp_r=None, first_w=None) -> list:
    """Conjugated effective channels ``(..., K, B_j)`` per gateway ``j``.

    Row ``k`` of gateway ``j`` is ``sum_l h[l][..., :, k]^H R_l f[l][j] W_j``;
    the on-board filter and first-stage precoder default to identity.  Channel
    arrays may carry a leading sample axis shared by ``h`` and ``f``.
    """
    n_gw = len(h)
    rows = []
    for j in range(n_gw):
        acc = None
        for l in range(n_gw):
            mat = f[l][j]
            if obp_r is not None:
                mat = np.matmul(obp_r[l], mat)
            if first_w is not None:
                mat = np.matmul(mat, first_w[j])
            term = np.einsum("...bk,...bc->...kc", np.conj(h[l]), mat)
            acc = term if acc is None else acc + term
        rows.append(acc)
    return rows


def effective_noise(h, sigma_n2: float, obp_r=None) -> np.ndarray:
    """Per-user effective noise power ``(..., K)``.

    Terminal noise plus the satellite noise forwarded through the on-board
    filters: ``sigma_n2 * sum_l ||h[l][:,k]^H R_l||^2 + sigma_n2``.
    """
    acc = None
    for l, h_l in enumerate(h):
        if obp_r is None:
            term = np.sum(np.abs(h_l) ** 2, axis=-2)
        else:
            rows = np.einsum("...bk,...bc->...kc", np.conj(h_l), obp_r[l])
            term = np.sum(np.abs(rows) ** 2, axis=-1)
        acc = term if acc is None else acc + term
    return sigma_n2 * acc + sigma_n2


def stream_amplitudes(eff_rows: list, precoders: PrecoderSet, scenario: Scenario):
    """Received complex amplitudes of every stream at every user.

    Returns ``(amp_common, amp_private)`` with shapes ``(..., K)`` stacked on a
    last stream axis: ``amp_common[..., k, j]`` is gateway ``j``'s common
    stream at user ``k``; ``amp_private[..., k, m]`` is group ``m``'s stream.
    """
    lam = scenario.gateway_of_group
    amp_p = np.stack(
        [np.einsum("...kb,b->...k", eff_rows[lam[m]], precoders.private[m]) for m in range(scenario.n_groups)],
        axis=-1,
    )
    amp_c = None
    if precoders.rs:
        amp_c = np.stack(
            [np.einsum("...kb,b->...k", eff_rows[j], precoders.common[j]) for j in range(scenario.n_gateways)],
            axis=-1,
        )
    return amp_c, amp_p


def received_powers(eff_rows, eff_noise_pow, precoders, scenario):
    """Total received power, post-SIC power, and own-stream powers per user.

    Returns ``(t_common, t_private, own_c_pow, own_p_pow)`` each ``(..., K)``.
    For NoRS ``t_common`` is the same as ``t_private`` (no common streams
    exist, nothing is cancelled).
    """
    amp_c, amp_p = stream_amplitudes(eff_rows, precoders, scenario)
    users = np.arange(scenario.n_users)
    own_gw = np.asarray([scenario.gateway_of_user(k) for k in users])
    own_group = np.asarray(scenario.user_group)

    total = np.sum(np.abs(amp_p) ** 2, axis=-1) + eff_noise_pow
    own_p_pow = np.abs(amp_p[..., users, own_group]) ** 2
    if precoders.rs:
        total = total + np.sum(np.abs(amp_c) ** 2, axis=-1)
        own_c_pow = np.abs(amp_c[..., users, own_gw]) ** 2
        t_private = total - own_c_pow
    else:
        own_c_pow = None
        t_private = total
    return total, t_private, own_c_pow, own_p_pow


def sinr_and_rates(
    eff_rows: list,
    eff_noise_pow: np.ndarray,
    precoders: PrecoderSet,
    scenario: Scenario,
    portions: np.ndarray | None = None,
) -> RateReport:
    """Per-stream SINRs and rates plus group/cluster aggregation.

    The own common stream is removed by ideal SIC before private decoding, so
    it never appears in the private-stream denominator.  All other streams are
    treated as noise.  Rates are ``log2(1 + sinr)`` in bit/s/Hz.
    """
    t_common, t_private, own_c_pow, own_p_pow = received_powers(
        eff_rows, eff_noise_pow, precoders, scenario
    )
    sinr_p = own_p_pow / (t_private - own_p_pow)
    rate_p = np.log2(1.0 + sinr_p)

    group_private = np.asarray(
        [np.min(rate_p[..., list(scenario.users_of_group[m])], axis=-1) for m in range(scenario.n_groups)]
    )
    group_private = np.moveaxis(group_private, 0, -1)

    if precoders.rs:
        sinr_c = own_c_pow / t_private  # denominator = everything else + noise
        rate_c = np.log2(1.0 + sinr_c)
        cluster_common = np.asarray(
            [np.min(rate_c[..., list(scenario.users_of_gateway(l))], axis=-1) for l in range(scenario.n_gateways)]
        )
        cluster_common = np.moveaxis(cluster_common, 0, -1)
        if portions is not None:
            group_total = portions + group_private
        else:
            group_total = group_private.copy()
    else:
        sinr_c = rate_c = cluster_common = None
        group_total = group_private

    return RateReport(
        rate_common=rate_c,
        rate_private=rate_p,
        cluster_common=cluster_common,
        group_private=group_private,
        group_total=group_total,
        portions=portions,
        eff_noise=eff_noise_pow,
        sinr_common=sinr_c,
        sinr_private=sinr_p,
    )


def saa_average_rates(
    eff_rows: list, eff_noise_pow: np.ndarray, precoders: PrecoderSet, scenario: Scenario
):
    """Sample-averaged per-user rates over a realisation set.

    ``eff_rows[j]`` must carry the sample axis first, ``(S, K, B_j)``; the
    result is the arithmetic mean of the per-realisation rates.
    Returns ``(avg_rate_common | None, avg_rate_private)``.
    """
    report = sinr_and_rates(eff_rows, eff_noise_pow, precoders, scenario)
    avg_c = None if report.rate_common is None else np.mean(report.rate_common, axis=0)
    return avg_c, np.mean(report.rate_private, axis=0)


def antenna_power_usage(
    precoders: PrecoderSet,
    feeder_mats: list,
    noise_diag: np.ndarray,
    scenario: Scenario,
) -> np.ndarray:
    """Per-feed transmit power usage ``(N,)``.

    ``feeder_mats[l][j]`` maps gateway ``j``'s stream vectors onto cluster
    ``l``'s feeds (the feeder estimate in one-stage operation, the effective
    feeder chain including the on-board filter in two-stage operation).
    ``noise_diag[n]`` is the forwarded-noise term occupying feed ``n``.
    """
    usage = np.array(noise_diag, dtype=float)
    for l in range(scenario.n_gateways):
        feeds = scenario.clusters[l]
        if precoders.rs:
            for j in range(scenario.n_gateways):
                sig = feeder_mats[l][j] @ precoders.common[j]
                usage[list(feeds)] += np.abs(sig) ** 2
        for m in range(scenario.n_groups):
            j = scenario.gateway_of_group[m]
            sig = feeder_mats[l][j] @ precoders.private[m]
            usage[list(feeds)] += np.abs(sig) ** 2
    return usage


def power_model(scenario: Scenario, f_hat: list, first_stage=None):
    """Constraint data for the per-feed power limit: ``(feeder_mats, noise_diag)``.

    One-stage: the feeder estimate itself with a flat ``sigma_n2`` noise term.
    Two-stage: the optimised effective feeder estimate, and the forwarded
    noise ``sigma_n2 * diag(R_l R_l^H)`` on each cluster's feeds.
    """
    if first_stage is None:
        noise = np.full(scenario.n_feeds, scenario.sigma_n2)
        return f_hat, noise
    noise = np.empty(scenario.n_feeds)
    for l in range(scenario.n_gateways):
        r = first_stage.obp_r[l]
        diag = np.real(np.einsum("ij,ij->i", r, np.conj(r)))
        for n in scenario.clusters[l]:
            noise[n] = scenario.sigma_n2 * diag[feed_local_index(scenario, n, l)]
    return first_stage.f_eff, noise


def allocate_portions(
    group_private: np.ndarray, cluster_budget: np.ndarray, scenario: Scenario
):
    """Max-min split of each cluster's common rate across its groups.

    Given per-group private rates and per-cluster common-rate budgets, find
    the portions ``C_m >= 0`` with ``sum_{m in cluster} C_m <= budget`` that
    maximise ``min_m (C_m + r_m)``.  Solved in closed form per cluster by
    filling the weakest groups first; returns ``(value, portions)``.
    """
    t_per_cluster = np.empty(scenario.n_gateways)
    for l in range(scenario.n_gateways):
        rates = np.sort(group_private[list(scenario.groups_of_gateway(l))])
        remaining = max(float(cluster_budget[l]), 0.0)
        # raise the weakest groups together until the budget is exhausted
        level, active = rates[0], 1
        while active < len(rates):
            gap = (rates[active] - level) * active
            if gap > remaining:
                break
            remaining -= gap
            level = rates[active]
            active += 1
        t_per_cluster[l] = level + remaining / active
    value = float(np.min(t_per_cluster))
    portions = np.maximum(0.0, value - group_private)
    return value, portions


def realized_mmf(report: RateReport, scenario: Scenario) -> tuple[float, np.ndarray | None]:
    """Headline max-min group rate on a single (true) channel state.

    For RS, the realised cluster common rates are re-split across groups with
    :func:`allocate_portions` (portions are a scheduling choice, so they are
    re-optimised against what the channel actually supports); for NoRS the
    value is simply the worst group's private rate.
    """
    if report.cluster_common is None:
        return float(np.min(report.group_private)), None
    value, portions = allocate_portions(report.group_private, report.cluster_common, scenario)
    return value, portions
