"""Built-in invariant suite behind the ``validate`` CLI verb.

Fast, seeded self-checks of the structural invariants that the library is
built on: scenario partitioning, channel statistics, rate identities, the
complex-to-real lifting, the rate/WMSE relationship, first-stage descent, and
the conic solver on analytically solvable programs.  Each check returns a
(name, passed, detail) triple; the CLI prints one line per check.
"""

from __future__ import annotations

import numpy as np

from . import channel, obp, rates, scenario as sc, subproblem, wmmse


def _random_scenario(rng: np.random.Generator) -> sc.Scenario:
    return sc.build_scenario(
        {
            "feeds": 4,
            "gateways": 2,
            "users_per_group": int(rng.integers(1, 3)),
            "per_feed_power_w": 40.0,
            "saa_samples": 4,
            "seed": int(rng.integers(0, 2**31)),
        }
    )


def check_partition(rng) -> tuple[bool, str]:
    for _ in range(20):
        n = int(rng.integers(2, 8))
        feeds = [int(f) for f in rng.permutation(n)]
        cut = int(rng.integers(1, n))
        sc.build_scenario({"feeds": n, "gateways": 2, "clusters": [feeds[:cut], feeds[cut:]]})
        overlapping = [feeds[:cut] + [feeds[cut]], feeds[cut:]]
        try:
            sc.build_scenario({"feeds": n, "gateways": 2, "clusters": overlapping})
            return False, "overlapping clusters accepted"
        except sc.ScenarioError:
            pass
    return True, "20 random partitions"


def check_beam_gain(rng) -> tuple[bool, str]:
    g0 = channel.beam_gain(0.0, 2.0, 0.01)
    g3 = channel.beam_gain(0.01, 1.0, 0.01)
    ok = float(g0) == 2.0 and abs(float(g3) - 0.501) <= 0.01
    return ok, f"boresight={float(g0)}, 3dB ratio={float(g3):.4f}"


def check_channel_stats(rng) -> tuple[bool, str]:
    scen = sc.build_scenario({"saa_samples": 400, "seed": int(rng.integers(0, 2**31))})
    draw = channel.make_channel_draw(scen, scen.stream("channel", 0))
    user = channel.assemble_user_channel(scen, scen.stream("fading-check", 1))
    fading_ok = np.all(np.abs(user.fading) <= 1.0) and np.all(np.abs(user.fading) > 0.0)
    errs = np.concatenate([(hr - hh[None]).ravel() for hr, hh in zip(draw.h_real, draw.h_hat)])
    rel = abs(np.mean(np.abs(errs) ** 2) - draw.sigma_e2) / draw.sigma_e2
    ok = bool(fading_ok) and rel < 0.2 and all(np.all(np.isfinite(h)) for h in draw.h_true)
    return ok, f"error-variance rel dev {rel:.3f}"


def check_rs_vs_nors(rng) -> tuple[bool, str]:
    scen = _random_scenario(rng)
    draw = channel.make_channel_draw(scen, scen.stream("channel", 0), samples=1)
    rows = rates.effective_channel_rows(draw.h_true, draw.f_true)
    noise = rates.effective_noise(draw.h_true, scen.sigma_n2)
    private = [channel.complex_normal(rng, (len(scen.clusters[scen.gateway_of_group[m]]),), 1.0)
               for m in range(scen.n_groups)]
    zeros = [np.zeros(len(c), dtype=complex) for c in scen.clusters]
    rs = rates.sinr_and_rates(rows, noise, rates.PrecoderSet(rs=True, common=zeros, private=private), scen)
    nors = rates.sinr_and_rates(rows, noise, rates.PrecoderSet(rs=False, common=None, private=private), scen)
    ok = np.array_equal(rs.rate_private, nors.rate_private)
    return ok, "zero-common RS reproduces NoRS rates bit-for-bit"


def check_lifting(rng) -> tuple[bool, str]:
    worst = 0.0
    for _ in range(20):
        b = int(rng.integers(1, 5))
        p = channel.complex_normal(rng, (b,), 1.0)
        a = channel.complex_normal(rng, (b, b), 1.0)
        q = a @ a.conj().T
        direct = float(np.real(np.vdot(p, q @ p)))
        lifted = subproblem.lift_vector(p) @ subproblem.hermitian_embed(q) @ subproblem.lift_vector(p)
        worst = max(worst, abs(direct - lifted) / max(abs(direct), 1e-30))
    return worst < 1e-12, f"max rel dev {worst:.2e}"


def check_rate_wmmse(rng) -> tuple[bool, str]:
    scen = _random_scenario(rng)
    draw = channel.make_channel_draw(scen, scen.stream("channel", 3))
    rows = rates.effective_channel_rows(draw.h_real, draw.f_real)
    noise = rates.effective_noise(draw.h_real, scen.sigma_n2)
    common = [channel.complex_normal(rng, (len(c),), 2.0) for c in scen.clusters]
    private = [channel.complex_normal(rng, (len(scen.clusters[scen.gateway_of_group[m]]),), 2.0)
               for m in range(scen.n_groups)]
    ps = rates.PrecoderSet(rs=True, common=common, private=private)
    state = wmmse.compute_state(rows, noise, ps, scen)
    xi_c, xi_p = wmmse.wmse_per_sample(state, rows, noise, ps, scen)
    report = rates.sinr_and_rates(rows, noise, ps, scen)
    err = max(
        np.max(np.abs(xi_c - (1.0 - report.rate_common))),
        np.max(np.abs(xi_p - (1.0 - report.rate_private))),
    )
    return err < 1e-9, f"max |xi - (1 - rate)| = {err:.2e}"


def check_first_stage(rng) -> tuple[bool, str]:
    scen = sc.build_scenario({"feeds": 4, "gateways": 2, "saa_samples": 2,
                              "seed": int(rng.integers(0, 2**31))})
    draw = channel.make_channel_draw(scen, scen.stream("channel", 0))
    w = [channel.complex_normal(rng, (2, 2), 1.0) for _ in range(2)]
    r = [channel.complex_normal(rng, (2, 2), 1.0) for _ in range(2)]
    s_e2 = scen.sigma_e2
    _, before = obp.sum_mse(w, r, draw.f_hat, scen.sigma_n2, s_e2)
    r2 = obp.update_R(w, draw.f_hat, scen.sigma_n2, s_e2)
    _, mid = obp.sum_mse(w, r2, draw.f_hat, scen.sigma_n2, s_e2)
    w2 = obp.update_W(r2, draw.f_hat, s_e2)
    _, after = obp.sum_mse(w2, r2, draw.f_hat, scen.sigma_n2, s_e2)
    ok = mid <= before + 1e-9 and after <= mid + 1e-9
    return ok, f"MSE {before:.4f} -> {mid:.4f} -> {after:.4f}"


def check_solver(rng) -> tuple[bool, str]:
    # maximise t subject to ||p - a||^2 <= 1 - t: optimum is p = a, t = 1
    a = channel.complex_normal(rng, (3,), 1.0)
    layout = subproblem.VariableLayout(
        rs=False, common=None, private=[slice(0, 6)], portions=None,
        group_rates=slice(6, 7), mmf=6, n=7,
    )
    prog = subproblem.ConicProgram(layout=layout)
    factor = np.zeros((6, 7))
    factor[:, 0:6] = np.eye(6)
    prog.quadratic.append(
        subproblem.QuadConstraint(
            factor=factor,
            a=np.concatenate([-2.0 * subproblem.lift_vector(a), [1.0]]),
            b=float(np.vdot(a, a).real - 1.0),
            tag="test",
        )
    )
    scen = sc.build_scenario({"feeds": 1, "gateways": 1, "users_per_group": 1})
    sol = subproblem.solve(prog, scen)
    ok = sol.status == "optimal" and abs(sol.objective - 1.0) < 1e-8
    return ok, f"objective {sol.objective:.12f}"


CHECKS = [
    ("scenario-partition", check_partition),
    ("beam-gain-identities", check_beam_gain),
    ("channel-statistics", check_channel_stats),
    ("rs-zero-common-equals-nors", check_rs_vs_nors),
    ("complex-real-lifting", check_lifting),
    ("rate-wmmse-identity", check_rate_wmmse),
    ("first-stage-descent", check_first_stage),
    ("conic-solver-analytic", check_solver),
]


def run_invariant_suite(seed: int = 0) -> list:
    """Run every check; returns a list of (name, passed, detail)."""
    out = []
    for name, fn in CHECKS:
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(len(out),)))
        try:
            ok, detail = fn(rng)
        except Exception as exc:  # a crashed check is a failed check
            ok, detail = False, f"raised {type(exc).__name__}: {exc}"
        out.append((name, ok, detail))
    return out
