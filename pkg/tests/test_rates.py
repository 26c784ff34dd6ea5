import numpy as np
import pytest

from satmmf.channel import complex_normal, make_channel_draw
from satmmf.rates import (
    PrecoderSet,
    allocate_portions,
    antenna_power_usage,
    effective_channel_rows,
    effective_noise,
    power_model,
    realized_mmf,
    saa_average_rates,
    sinr_and_rates,
)
from satmmf.scenario import build_scenario

from oracles import (
    brute_force_rates,
    covariance_power_usage,
    effective_channel_loop,
    waterfill_bisection,
)


def random_precoders(scen, rng, rs=True, scale=1.0):
    common = None
    if rs:
        common = [scale * complex_normal(rng, (len(c),), 1.0) for c in scen.clusters]
    private = [
        scale * complex_normal(rng, (len(scen.clusters[scen.gateway_of_group[m]]),), 1.0)
        for m in range(scen.n_groups)
    ]
    return PrecoderSet(rs=rs, common=common, private=private)


@pytest.fixture()
def small_draw():
    scen = build_scenario({"feeds": 4, "gateways": 2, "users_per_group": 2,
                           "saa_samples": 3, "seed": 17})
    draw = make_channel_draw(scen, scen.stream("channel", 0))
    return scen, draw


def test_effective_channel_identity_chain():
    scen = build_scenario({"feeds": 2, "gateways": 1, "users_per_group": 1, "seed": 5})
    rng = np.random.default_rng(0)
    h = [complex_normal(rng, (2, 2), 1.0)]
    eye = [[np.eye(2, dtype=complex)]]
    rows = effective_channel_rows(h, eye)
    assert np.allclose(rows[0], h[0].conj().T)


def test_effective_channel_block_identity_feeder(small_draw):
    scen, _ = small_draw
    rng = np.random.default_rng(1)
    h = [complex_normal(rng, (len(c), scen.n_users), 1.0) for c in scen.clusters]
    f = [[np.eye(len(scen.clusters[i]), dtype=complex) if i == l
          else np.zeros((len(scen.clusters[i]), len(scen.clusters[l])), dtype=complex)
          for l in range(scen.n_gateways)] for i in range(scen.n_gateways)]
    rows = effective_channel_rows(h, f)
    for j in range(scen.n_gateways):
        assert np.allclose(rows[j], h[j].conj().T)


def test_effective_channel_matches_loop_oracle(small_draw):
    scen, draw = small_draw
    rng = np.random.default_rng(2)
    obp_r = [complex_normal(rng, (len(c), len(c)), 1.0) for c in scen.clusters]
    first_w = [complex_normal(rng, (len(c), len(c)), 1.0) for c in scen.clusters]
    rows = effective_channel_rows(draw.h_true, draw.f_true, obp_r=obp_r, first_w=first_w)
    expected = effective_channel_loop(draw.h_true, draw.f_true, obp_r=obp_r, first_w=first_w)
    for j in range(scen.n_gateways):
        assert np.allclose(rows[j], expected[j], rtol=1e-12)


def test_effective_noise_forms():
    scen = build_scenario({"feeds": 3, "gateways": 1, "users_per_group": 1, "seed": 5})
    h = [np.ones((3, 3), dtype=complex)]  # ||h_k||^2 = 3 per user
    noise = effective_noise(h, 1.0)
    assert np.allclose(noise, 4.0)
    zero_r = [np.zeros((3, 3), dtype=complex)]
    assert np.allclose(effective_noise(h, 1.0, obp_r=zero_r), 1.0)
    rng = np.random.default_rng(3)
    r = [complex_normal(rng, (3, 3), 1.0)]
    got = effective_noise(h, 2.0, obp_r=r)
    for k in range(3):
        row = h[0][:, k].conj() @ r[0]
        assert got[k] == pytest.approx(2.0 * float(np.sum(np.abs(row) ** 2)) + 2.0, rel=1e-12)


def test_single_link_shannon():
    scen = build_scenario({"feeds": 1, "gateways": 1, "users_per_group": 1})
    rows = [np.ones((1, 1), dtype=complex)]
    p = 16.0
    ps = PrecoderSet(rs=False, common=None, private=[np.array([np.sqrt(p)], dtype=complex)])
    report = sinr_and_rates(rows, np.array([1.0]), ps, scen)
    assert report.sinr_private[0] == pytest.approx(p, rel=1e-12)
    assert report.rate_private[0] == pytest.approx(np.log2(1 + p), rel=1e-12)


def test_rs_with_zero_common_equals_nors(small_draw):
    scen, draw = small_draw
    rng = np.random.default_rng(4)
    nors = random_precoders(scen, rng, rs=False)
    rs = PrecoderSet(
        rs=True,
        common=[np.zeros(len(c), dtype=complex) for c in scen.clusters],
        private=nors.private,
    )
    rows = effective_channel_rows(draw.h_true, draw.f_true)
    noise = effective_noise(draw.h_true, scen.sigma_n2)
    rep_rs = sinr_and_rates(rows, noise, rs, scen)
    rep_nors = sinr_and_rates(rows, noise, nors, scen)
    assert np.array_equal(rep_rs.rate_private, rep_nors.rate_private)
    assert np.array_equal(rep_rs.group_private, rep_nors.group_private)


def test_sinr_matches_brute_force(small_draw):
    scen, draw = small_draw
    rng = np.random.default_rng(6)
    for rs in (True, False):
        ps = random_precoders(scen, rng, rs=rs, scale=2.0)
        rows = effective_channel_rows(draw.h_true, draw.f_true)
        noise = effective_noise(draw.h_true, scen.sigma_n2)
        report = sinr_and_rates(rows, noise, ps, scen)
        sinr_c, sinr_p = brute_force_rates(rows, noise, ps, scen)
        assert np.allclose(report.sinr_private, sinr_p, rtol=1e-10)
        if rs:
            assert np.allclose(report.sinr_common, sinr_c, rtol=1e-10)


def test_min_aggregation(small_draw):
    scen, draw = small_draw
    rng = np.random.default_rng(7)
    ps = random_precoders(scen, rng, rs=True)
    rows = effective_channel_rows(draw.h_true, draw.f_true)
    noise = effective_noise(draw.h_true, scen.sigma_n2)
    report = sinr_and_rates(rows, noise, ps, scen)
    for m in range(scen.n_groups):
        members = list(scen.users_of_group[m])
        assert report.group_private[m] == pytest.approx(np.min(report.rate_private[members]))
        assert np.all(report.group_private[m] <= report.rate_private[members] + 1e-15)
    for l in range(scen.n_gateways):
        served = list(scen.users_of_gateway(l))
        assert report.cluster_common[l] == pytest.approx(np.min(report.rate_common[served]))


def test_saa_average_trivial_cases(small_draw):
    scen, draw = small_draw
    rng = np.random.default_rng(8)
    ps = random_precoders(scen, rng, rs=True)
    rows1 = effective_channel_rows([h[:1] for h in draw.h_real],
                                   [[f[:1] for f in row] for row in draw.f_real])
    noise1 = effective_noise([h[:1] for h in draw.h_real], scen.sigma_n2)
    avg_c1, avg_p1 = saa_average_rates(rows1, noise1, ps, scen)
    single = sinr_and_rates([r[0] for r in rows1], noise1[0], ps, scen)
    assert np.allclose(avg_p1, single.rate_private)
    assert np.allclose(avg_c1, single.rate_common)
    # duplicating the sample set leaves the average unchanged
    rows2 = [np.concatenate([r, r], axis=0) for r in rows1]
    noise2 = np.concatenate([noise1, noise1], axis=0)
    avg_c2, avg_p2 = saa_average_rates(rows2, noise2, ps, scen)
    assert np.allclose(avg_p2, avg_p1)
    assert np.allclose(avg_c2, avg_c1)


def test_power_usage_noise_floor_and_selection():
    scen = build_scenario({"feeds": 2, "gateways": 1, "users_per_group": 1, "seed": 5})
    feeder = [[np.eye(2, dtype=complex)]]
    noise_diag = np.full(2, scen.sigma_n2)
    zero = PrecoderSet(rs=False, common=None,
                       private=[np.zeros(2, dtype=complex), np.zeros(2, dtype=complex)])
    assert np.allclose(antenna_power_usage(zero, feeder, noise_diag, scen), scen.sigma_n2)
    one = PrecoderSet(rs=False, common=None,
                      private=[np.array([2.0, 0.0], dtype=complex), np.zeros(2, dtype=complex)])
    assert np.allclose(antenna_power_usage(one, feeder, noise_diag, scen), [5.0, 1.0])


def test_power_usage_matches_covariance_oracle(small_draw):
    scen, draw = small_draw
    rng = np.random.default_rng(9)
    for rs in (True, False):
        ps = random_precoders(scen, rng, rs=rs)
        feeder, noise_diag = power_model(scen, draw.f_hat)
        got = antenna_power_usage(ps, feeder, noise_diag, scen)
        expected = covariance_power_usage(ps, feeder, noise_diag, scen)
        assert np.allclose(got, expected, rtol=1e-10)
        assert np.all(got >= 0.0)


def test_power_usage_additive_over_streams(small_draw):
    scen, draw = small_draw
    rng = np.random.default_rng(10)
    ps = random_precoders(scen, rng, rs=True)
    feeder, noise_diag = power_model(scen, draw.f_hat)
    total = antenna_power_usage(ps, feeder, noise_diag, scen)
    acc = np.array(noise_diag)
    zero_c = [np.zeros_like(c) for c in ps.common]
    zero_p = [np.zeros_like(p) for p in ps.private]
    for j in range(scen.n_gateways):
        only = PrecoderSet(rs=True, common=[c if i == j else z for i, (c, z) in enumerate(zip(ps.common, zero_c))], private=zero_p)
        acc = acc + antenna_power_usage(only, feeder, noise_diag, scen) - noise_diag
    for m in range(scen.n_groups):
        only = PrecoderSet(rs=True, common=zero_c,
                           private=[p if i == m else z for i, (p, z) in enumerate(zip(ps.private, zero_p))])
        acc = acc + antenna_power_usage(only, feeder, noise_diag, scen) - noise_diag
    assert np.allclose(acc, total, rtol=1e-10)


def test_allocate_portions_against_bisection():
    rng = np.random.default_rng(11)
    scen = build_scenario({"feeds": 6, "gateways": 2, "users_per_group": 1, "seed": 1})
    for _ in range(50):
        rates = rng.uniform(0.0, 3.0, scen.n_groups)
        budgets = rng.uniform(0.0, 2.0, scen.n_gateways)
        value, portions = allocate_portions(rates, budgets, scen)
        expected = waterfill_bisection(rates, budgets, scen)
        assert value == pytest.approx(expected, abs=1e-9)
        assert np.all(portions >= 0.0)
        for l in range(scen.n_gateways):
            spent = sum(portions[m] for m in scen.groups_of_gateway(l))
            assert spent <= budgets[l] + 1e-9
        assert np.min(rates + portions) == pytest.approx(value, abs=1e-9)


def test_realized_mmf_nors_is_worst_group(small_draw):
    scen, draw = small_draw
    rng = np.random.default_rng(12)
    ps = random_precoders(scen, rng, rs=False)
    rows = effective_channel_rows(draw.h_true, draw.f_true)
    noise = effective_noise(draw.h_true, scen.sigma_n2)
    report = sinr_and_rates(rows, noise, ps, scen)
    value, portions = realized_mmf(report, scen)
    assert portions is None
    assert value == pytest.approx(float(np.min(report.group_private)))
