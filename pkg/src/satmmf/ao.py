"""Alternating optimisation driver for the max-min fairness precoder design.

Each iteration updates the per-sample equalizers and weights in closed form,
reduces them into sample-average aggregates, and solves the convex precoder
subproblem; the loop stops when the subproblem optimum changes by at most the
tolerance on two consecutive iterations.  Every iterate is audited against
the independent per-feed power evaluation, and the returned result carries
both the optimiser's sample-average objective and the rates realised on the
true channel.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelDraw
from .obp import FirstStageResult
from .rates import (
    PrecoderSet,
    antenna_power_usage,
    effective_channel_rows,
    effective_noise,
    power_model,
    realized_mmf,
    saa_average_rates,
    sinr_and_rates,
)
from .scenario import Scenario
from .subproblem import build_program, solve
from .wmmse import build_saf_terms, compute_state

log = logging.getLogger(__name__)


class AoError(RuntimeError):
    """Subproblem failure, annotated with the iteration it happened in."""


@dataclass
class AoResult:
    """Iteration trace plus the final solution and its evaluations."""

    objectives: list  # monotone objective sequence W[n]
    raw_objectives: list  # solver outputs before the monotone safeguard
    converged: bool
    n_iter: int
    n_safeguard: int
    precoders: PrecoderSet
    portions: np.ndarray | None  # sample-average common-rate portions
    group_rate_bounds: np.ndarray  # auxiliary per-group rate variables
    saa_objective: float
    realized_mmf: float
    realized_portions: np.ndarray | None
    realized_group_rates: np.ndarray
    avg_rate_common: np.ndarray | None
    avg_rate_private: np.ndarray
    max_power_violation: float
    solver_iterations: int
    power_usage: np.ndarray = field(default=None)
    realized_report: object = field(default=None)  # full RateReport on the true channel


def optimizer_views(draw: ChannelDraw, scenario: Scenario, first_stage: FirstStageResult | None):
    """Per-sample effective rows and noise seen by the optimiser.

    One-stage: realisation channels straight through the feeder realisations.
    Two-stage: user-link realisations through the fixed effective feeder
    estimate (no feeder realisations), with the on-board filters in the noise.
    """
    if first_stage is None:
        rows = effective_channel_rows(draw.h_real, draw.f_real)
        noise = effective_noise(draw.h_real, scenario.sigma_n2)
    else:
        rows = effective_channel_rows(draw.h_real, first_stage.f_eff)
        noise = effective_noise(draw.h_real, scenario.sigma_n2, obp_r=first_stage.obp_r)
    return rows, noise


def true_views(draw: ChannelDraw, scenario: Scenario, first_stage: FirstStageResult | None):
    """Effective rows and noise on the true channels, for realised rates."""
    if first_stage is None:
        rows = effective_channel_rows(draw.h_true, draw.f_true)
        noise = effective_noise(draw.h_true, scenario.sigma_n2)
    else:
        rows = effective_channel_rows(
            draw.h_true, draw.f_true, obp_r=first_stage.obp_r, first_w=first_stage.first_w
        )
        noise = effective_noise(draw.h_true, scenario.sigma_n2, obp_r=first_stage.obp_r)
    return rows, noise


def estimate_views(draw: ChannelDraw, scenario: Scenario, first_stage: FirstStageResult | None):
    """Effective rows on the channel estimates, used for initialisation."""
    if first_stage is None:
        return effective_channel_rows(draw.h_hat, draw.f_hat)
    return effective_channel_rows(draw.h_hat, first_stage.f_eff)


def initialize_precoders(
    draw: ChannelDraw,
    scenario: Scenario,
    rs: bool,
    first_stage: FirstStageResult | None = None,
) -> PrecoderSet:
    """Dominant-singular-vector directions with an equal per-stream power split.

    Each stream points along the leading left singular vector of the matrix
    of its intended users' estimated effective channels (the whole cluster for
    a common stream, the group for a private one).  Total power is shared
    equally across streams, then everything is scaled by the largest factor
    that keeps every feed within its limit.
    """
    est_rows = estimate_views(draw, scenario, first_stage)

    def direction(gateway: int, users) -> np.ndarray:
        cols = est_rows[gateway][list(users), :].conj().T  # (B, n_users)
        u, _, _ = np.linalg.svd(cols, full_matrices=False)
        return u[:, 0]

    n_streams = scenario.n_groups + (scenario.n_gateways if rs else 0)
    share = np.sqrt(scenario.p_total / n_streams)
    common = None
    if rs:
        common = [share * direction(l, scenario.users_of_gateway(l)) for l in range(scenario.n_gateways)]
    private = [
        share * direction(scenario.gateway_of_group[m], scenario.users_of_group[m])
        for m in range(scenario.n_groups)
    ]
    ps = PrecoderSet(
        rs=rs,
        common=common,
        private=private,
        first_w=None if first_stage is None else first_stage.first_w,
        obp_r=None if first_stage is None else first_stage.obp_r,
    )

    feeder_mats, noise_diag = power_model(scenario, draw.f_hat, first_stage)
    headroom = scenario.p_feed - noise_diag
    if np.any(headroom <= 0.0):
        raise AoError("per-feed budget does not cover the forwarded noise")
    quad = antenna_power_usage(ps, feeder_mats, noise_diag, scenario) - noise_diag
    with np.errstate(divide="ignore"):
        scale = float(np.min(np.sqrt(np.where(quad > 0.0, headroom / quad, np.inf))))
    if not np.isfinite(scale):
        scale = 1.0  # all-zero effective signal; nothing to scale
    return ps.scaled(scale)


def run_ao(
    draw: ChannelDraw,
    scenario: Scenario,
    rs: bool,
    first_stage: FirstStageResult | None = None,
    tol: float = 1e-4,
    max_iter: int = 300,
    solver_options: dict | None = None,
) -> AoResult:
    """Run the alternating optimisation to convergence.

    The objective sequence is kept monotone: if a subproblem solve comes back
    below the incumbent (possible only through solver round-off, the exact
    update cannot decrease it), the incumbent precoders are kept and the dip
    is counted in ``n_safeguard`` while the raw value is still recorded.
    """
    rows, noise = optimizer_views(draw, scenario, first_stage)
    feeder_mats, noise_diag = power_model(scenario, draw.f_hat, first_stage)
    ps = initialize_precoders(draw, scenario, rs, first_stage)

    objectives: list[float] = []
    raw_objectives: list[float] = []
    portions = None
    group_bounds = np.zeros(scenario.n_groups)
    n_safeguard = 0
    solver_iters = 0
    max_violation = -np.inf
    converged = False
    prev_small = False

    for it in range(max_iter):
        state = compute_state(rows, noise, ps, scenario)
        saf = build_saf_terms(state, rows, noise, scenario)
        program = build_program(saf, feeder_mats, noise_diag, scenario)
        sol = solve(program, scenario, options=solver_options)
        solver_iters += sol.iterations
        if sol.status == "infeasible":
            raise AoError(f"subproblem reported infeasible at iteration {it + 1}")
        if sol.status != "optimal" and (
            sol.residuals.get("relative_gap") is None
            or sol.residuals["relative_gap"] > 1e-6
            or sol.residuals["primal_infeasibility"] > 1e-6
        ):
            raise AoError(
                f"subproblem solve unreliable at iteration {it + 1}: {sol.residuals}"
            )
        raw_objectives.append(sol.objective)

        if objectives and sol.objective < objectives[-1]:
            n_safeguard += 1
            log.debug("iteration %d: solver dipped by %.2e; keeping incumbent",
                      it + 1, objectives[-1] - sol.objective)
            objectives.append(objectives[-1])
        else:
            ps = PrecoderSet(
                rs=rs,
                common=sol.common,
                private=sol.private,
                first_w=ps.first_w,
                obp_r=ps.obp_r,
            )
            portions = sol.portions
            group_bounds = sol.group_rates
            objectives.append(sol.objective)

        usage = antenna_power_usage(ps, feeder_mats, noise_diag, scenario)
        max_violation = max(max_violation, float(np.max(usage - scenario.p_feed)))

        if len(objectives) >= 2:
            small = abs(objectives[-1] - objectives[-2]) <= tol
            if small and prev_small:
                converged = True
                break
            prev_small = small

    rows_true, noise_true = true_views(draw, scenario, first_stage)
    report = sinr_and_rates(rows_true, noise_true, ps, scenario)
    mmf, realized_portions = realized_mmf(report, scenario)
    realized_groups = report.group_private if realized_portions is None else (
        report.group_private + realized_portions
    )
    avg_c, avg_p = saa_average_rates(rows, noise, ps, scenario)
    usage = antenna_power_usage(ps, feeder_mats, noise_diag, scenario)
    report.power_usage = usage

    return AoResult(
        objectives=objectives,
        raw_objectives=raw_objectives,
        converged=converged,
        n_iter=len(objectives),
        n_safeguard=n_safeguard,
        precoders=ps,
        portions=portions,
        group_rate_bounds=group_bounds,
        saa_objective=objectives[-1],
        realized_mmf=mmf,
        realized_portions=realized_portions,
        realized_group_rates=realized_groups,
        avg_rate_common=avg_c,
        avg_rate_private=avg_p,
        max_power_violation=max_violation,
        solver_iterations=solver_iters,
        power_usage=usage,
        realized_report=report,
    )
