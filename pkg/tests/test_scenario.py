import json

import numpy as np
import pytest

from satmmf.scenario import (
    Scenario,
    ScenarioError,
    build_scenario,
    feed_local_index,
    load_scenario,
    save_scenario,
)


def test_default_topology_matches_reference_setup():
    scen = build_scenario()
    assert scen.n_feeds == 9
    assert scen.n_gateways == 3
    assert scen.cluster_sizes == (3, 3, 3)
    assert scen.n_groups == 9
    assert scen.n_users == 18
    assert scen.p_total == pytest.approx(720.0)
    assert scen.gateway_of_group == (0, 0, 0, 1, 1, 1, 2, 2, 2)


def test_minimal_topology():
    scen = build_scenario({"feeds": 1, "gateways": 1, "users_per_group": 1})
    assert scen.n_users == 1
    assert scen.clusters == ((0,),)
    assert scen.gateway_of_user(0) == 0


def test_overlapping_clusters_rejected():
    with pytest.raises(ScenarioError, match="invalid-partition"):
        build_scenario({"feeds": 4, "gateways": 2, "clusters": [[0, 1, 2], [2, 3]]})


def test_missing_feed_rejected():
    with pytest.raises(ScenarioError, match="invalid-partition"):
        build_scenario({"feeds": 4, "gateways": 2, "clusters": [[0, 1], [2]]})


def test_nonpositive_power_rejected():
    with pytest.raises(ScenarioError, match="non-positive-power"):
        build_scenario({"per_feed_power_w": 0.0})
    with pytest.raises(ScenarioError, match="non-positive-power"):
        build_scenario({"per_feed_power_w": [80.0] * 8 + [-1.0]})


def test_alpha_range_enforced():
    build_scenario({"csit_alpha": 0.0})
    build_scenario({"csit_alpha": 1.0})
    with pytest.raises(ScenarioError):
        build_scenario({"csit_alpha": 1.2})


def test_bad_group_sizes_rejected():
    with pytest.raises(ScenarioError, match="invalid-mapping"):
        build_scenario({"group_sizes": [1, 2]})
    with pytest.raises(ScenarioError, match="invalid-mapping"):
        build_scenario({"group_sizes": [0] + [2] * 8})


def test_unknown_key_rejected():
    with pytest.raises(ScenarioError, match="unknown configuration key"):
        build_scenario({"feedz": 9})


def test_random_partitions_property():
    rng = np.random.default_rng(7)
    for _ in range(50):
        n = int(rng.integers(2, 10))
        feeds = [int(x) for x in rng.permutation(n)]
        cut = int(rng.integers(1, n))
        scen = build_scenario({"feeds": n, "gateways": 2, "clusters": [feeds[:cut], feeds[cut:]]})
        assert sorted(f for c in scen.clusters for f in c) == list(range(n))
        # corrupting the partition must be rejected
        with pytest.raises(ScenarioError):
            build_scenario({"feeds": n, "gateways": 2,
                            "clusters": [feeds[:cut] + [feeds[cut]], feeds[cut:]]})
        with pytest.raises(ScenarioError):
            build_scenario({"feeds": n + 1, "gateways": 2,
                            "clusters": [feeds[:cut], feeds[cut:]]})


def test_feed_local_index():
    scen = build_scenario()
    assert feed_local_index(scen, 4, 1) == 1
    assert feed_local_index(scen, 0, 0) == 0
    with pytest.raises(ScenarioError, match="not-in-cluster"):
        feed_local_index(scen, 7, 0)


def test_construction_deterministic():
    a = build_scenario({"seed": 42})
    b = build_scenario({"seed": 42})
    assert a.to_json() == b.to_json()
    c = build_scenario({"seed": 43})
    assert a.to_json() != c.to_json()


def test_config_round_trip(tmp_path):
    scen = build_scenario({"seed": 9, "users_per_group": 3, "feeder_interference": 0.3})
    path = tmp_path / "scenario.json"
    save_scenario(scen, str(path))
    again = load_scenario(str(path))
    assert again.to_json() == scen.to_json()
    # the file is plain JSON with every physical field exposed
    raw = json.loads(path.read_text())
    for key in ("carrier_freq_hz", "satellite_height_m", "bandwidth_hz", "theta_3db_deg",
                "max_beam_gain_dbi", "rx_gain_dbi", "noise_temp_k", "rain_mu", "rain_sigma"):
        assert key in raw


def test_scenario_immutable():
    scen = build_scenario()
    with pytest.raises(Exception):
        scen.p_feed[0] = 5.0
    with pytest.raises(Exception):
        scen.alpha = 0.5


def test_streams_keyed_not_sequential():
    scen = build_scenario({"seed": 5})
    a = scen.stream("channel", 3).standard_normal(4)
    b = scen.stream("channel", 3).standard_normal(4)
    c = scen.stream("channel", 4).standard_normal(4)
    d = scen.stream("other", 3).standard_normal(4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert not np.array_equal(a, d)


def test_sigma_e2_scaling():
    scen = build_scenario({"csit_alpha": 0.6, "per_feed_power_w": 80.0})
    assert scen.sigma_e2 == pytest.approx(720.0 ** -0.6)
    perfect = build_scenario({"perfect_csit": True})
    assert perfect.sigma_e2 == 0.0


def test_users_within_footprint():
    scen = build_scenario({"seed": 11})
    for k in range(scen.n_users):
        center = scen.beam_centers[scen.user_group[k]]
        assert np.linalg.norm(scen.user_positions[k] - center) <= scen.theta_3db_rad + 1e-12
