"""Scenario configuration for the multigateway multibeam downlink simulator.

A :class:`Scenario` bundles the satellite topology (feed clusters, multicast
groups, user-to-group assignment), the Ka-band link-budget constants, the
per-feed power budget, and the CSIT / feeder-interference settings.  It is
immutable after construction and owns the master seed from which every random
stream in the pipeline is derived, so that trials are reproducible and
order-independent under parallel execution.

Conventions
-----------
* All indices (feeds, gateways, groups, users) are 0-based.
* There is one beam per feed and one multicast group per beam, so group ``m``
  is radiated by feed ``m`` and served by the gateway whose cluster contains
  feed ``m``.
* Angles are stored in radians; gains in linear scale unless the name says dB.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

SPEED_OF_LIGHT = 299792458.0
BOLTZMANN = 1.380649e-23


class ScenarioError(ValueError):
    """Raised when a configuration violates a structural invariant."""


#: Default configuration: 9 feeds split over 3 gateways, 2 users per group,
#: 80 W per feed, Ka-band GEO link budget.
DEFAULTS: dict = {
    "feeds": 9,
    "gateways": 3,
    "clusters": None,  # explicit feed ids per gateway, e.g. [[0,1,2],[3,4,5],...]
    "cluster_sizes": None,  # None -> feeds split as evenly as possible
    "users_per_group": 2,
    "group_sizes": None,  # explicit per-group sizes override users_per_group
    "per_feed_power_w": 80.0,  # scalar or list of length `feeds`
    "noise_power": 1.0,  # normalised receiver noise power
    "csit_alpha": 0.6,
    "perfect_csit": False,
    "feeder_interference": 0.8,
    "saa_samples": 50,
    "carrier_freq_hz": 20.0e9,
    "satellite_height_m": 35786.0e3,
    "bandwidth_hz": 500.0e6,
    "theta_3db_deg": 0.4,
    "max_beam_gain_dbi": 52.0,
    "rx_gain_dbi": 41.7,
    "noise_temp_k": 517.0,
    "rain_mu": -3.125,
    "rain_sigma": 1.591,
    "beam_centers": None,  # [[x, y], ...] in radians, length = feeds
    "user_positions": None,  # [[x, y], ...] in radians, length = total users
    "seed": 1,
}


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Scenario:
    """Immutable system description.  Build via :func:`build_scenario`."""

    n_feeds: int
    n_gateways: int
    clusters: tuple[tuple[int, ...], ...]  # feeds per gateway, a partition
    group_sizes: tuple[int, ...]  # users per group, length n_groups
    user_group: tuple[int, ...]  # group id per user, length n_users
    p_feed: np.ndarray  # per-feed power limit (W), length n_feeds
    sigma_n2: float
    alpha: float
    perfect_csit: bool
    delta: float
    samples: int
    carrier_freq_hz: float
    satellite_height_m: float
    bandwidth_hz: float
    theta_3db_rad: float
    g_max_dbi: float
    g_rx_dbi: float
    t_sys_k: float
    rain_mu: float
    rain_sigma: float
    beam_centers: np.ndarray  # (n_groups, 2) radians
    user_positions: np.ndarray  # (n_users, 2) radians
    seed: int
    gateway_of_group: tuple[int, ...] = field(init=False)
    users_of_group: tuple[tuple[int, ...], ...] = field(init=False)

    def __post_init__(self):
        _freeze(self.p_feed)
        _freeze(self.beam_centers)
        _freeze(self.user_positions)
        gw = [-1] * self.n_groups
        for l, feeds in enumerate(self.clusters):
            for n in feeds:
                gw[n] = l
        members: list[list[int]] = [[] for _ in range(self.n_groups)]
        for k, m in enumerate(self.user_group):
            members[m].append(k)
        object.__setattr__(self, "gateway_of_group", tuple(gw))
        object.__setattr__(self, "users_of_group", tuple(tuple(g) for g in members))

    # -- derived sizes -------------------------------------------------
    @property
    def n_groups(self) -> int:
        return self.n_feeds  # one beam per feed, one group per beam

    @property
    def n_users(self) -> int:
        return len(self.user_group)

    @property
    def cluster_sizes(self) -> tuple[int, ...]:
        return tuple(len(c) for c in self.clusters)

    @property
    def p_total(self) -> float:
        return float(np.sum(self.p_feed))

    @property
    def wavelength_m(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_freq_hz

    @property
    def g_max_lin(self) -> float:
        return 10.0 ** (self.g_max_dbi / 10.0)

    @property
    def g_rx_lin(self) -> float:
        return 10.0 ** (self.g_rx_dbi / 10.0)

    @property
    def sigma_e2(self) -> float:
        """CSIT error variance per channel entry; scales as P_total**(-alpha)."""
        if self.perfect_csit:
            return 0.0
        return float(self.p_total ** (-self.alpha))

    def groups_of_gateway(self, l: int) -> tuple[int, ...]:
        """Groups served by gateway ``l`` (group ids coincide with feed ids)."""
        return self.clusters[l]

    def users_of_gateway(self, l: int) -> tuple[int, ...]:
        return tuple(k for m in self.clusters[l] for k in self.users_of_group[m])

    def gateway_of_user(self, k: int) -> int:
        return self.gateway_of_group[self.user_group[k]]

    # -- random streams ------------------------------------------------
    def stream(self, purpose: str, trial: int | None = None) -> np.random.Generator:
        """Independent generator derived from (seed, purpose, trial).

        Streams are keyed, not sequential, so parallel trials see the same
        draws regardless of execution order.
        """
        key = zlib.crc32(purpose.encode("ascii"))
        spawn = (key,) if trial is None else (key, int(trial))
        return np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=spawn))

    # -- serialisation ---------------------------------------------------
    def to_config(self) -> dict:
        """Full round-trippable configuration, including generated layout."""
        return {
            "feeds": self.n_feeds,
            "gateways": self.n_gateways,
            "clusters": [list(c) for c in self.clusters],
            "group_sizes": list(self.group_sizes),
            "per_feed_power_w": [float(p) for p in self.p_feed],
            "noise_power": self.sigma_n2,
            "csit_alpha": self.alpha,
            "perfect_csit": self.perfect_csit,
            "feeder_interference": self.delta,
            "saa_samples": self.samples,
            "carrier_freq_hz": self.carrier_freq_hz,
            "satellite_height_m": self.satellite_height_m,
            "bandwidth_hz": self.bandwidth_hz,
            "theta_3db_deg": float(np.degrees(self.theta_3db_rad)),
            "max_beam_gain_dbi": self.g_max_dbi,
            "rx_gain_dbi": self.g_rx_dbi,
            "noise_temp_k": self.t_sys_k,
            "rain_mu": self.rain_mu,
            "rain_sigma": self.rain_sigma,
            "beam_centers": self.beam_centers.tolist(),
            "user_positions": self.user_positions.tolist(),
            "seed": self.seed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_config(), indent=2, sort_keys=True)


def feed_local_index(scenario: Scenario, feed: int, gateway: int) -> int:
    """Position of global feed id ``feed`` inside cluster ``gateway`` (0-based)."""
    try:
        return scenario.clusters[gateway].index(feed)
    except ValueError:
        raise ScenarioError(
            f"feed {feed} is not in cluster {gateway} (not-in-cluster)"
        ) from None


def default_beam_centers(cluster_sizes: Sequence[int], theta_3db_rad: float) -> np.ndarray:
    """Hexagonal-style beam layout: one row of adjacent beams per cluster.

    Adjacent beam centres are 2*theta_3db apart; odd rows are offset by half a
    pitch so neighbouring rows interleave.  Coordinates live in a flat angular
    plane as seen from the satellite, which is adequate at GEO scale.
    """
    pitch = 2.0 * theta_3db_rad
    centers = []
    for row, size in enumerate(cluster_sizes):
        y = row * pitch * np.sqrt(3.0) / 2.0
        x0 = -(size - 1) / 2.0 * pitch + (row % 2) * pitch / 2.0
        for i in range(size):
            centers.append((x0 + i * pitch, y))
    return np.asarray(centers, dtype=float)


def draw_user_positions(
    beam_centers: np.ndarray,
    group_sizes: Sequence[int],
    theta_3db_rad: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Place each group's users uniformly inside its beam's 3 dB footprint."""
    pos = []
    for m, size in enumerate(group_sizes):
        r = theta_3db_rad * np.sqrt(rng.uniform(0.0, 1.0, size))
        phi = rng.uniform(0.0, 2.0 * np.pi, size)
        pos.extend(zip(beam_centers[m, 0] + r * np.cos(phi), beam_centers[m, 1] + r * np.sin(phi)))
    return np.asarray(pos, dtype=float)


def _check_partition(n_feeds: int, clusters: Sequence[Sequence[int]]) -> None:
    seen: set[int] = set()
    for feeds in clusters:
        fs = set(feeds)
        if len(fs) != len(feeds) or fs & seen:
            raise ScenarioError("clusters overlap (invalid-partition)")
        if not fs:
            raise ScenarioError("empty cluster (invalid-partition)")
        seen |= fs
    if seen != set(range(n_feeds)):
        raise ScenarioError("clusters do not cover all feeds (invalid-partition)")


def build_scenario(config: dict | None = None, **overrides) -> Scenario:
    """Validate a configuration and return an immutable :class:`Scenario`.

    Unspecified fields fall back to :data:`DEFAULTS`.  Beam centres default to
    :func:`default_beam_centers`; user positions are drawn from the scenario
    seed when not supplied, so identical configs yield identical scenarios.
    """
    cfg = dict(DEFAULTS)
    for src in (config or {}), overrides:
        for key, val in src.items():
            if key not in DEFAULTS:
                raise ScenarioError(f"unknown configuration key {key!r}")
            cfg[key] = val

    n_feeds = int(cfg["feeds"])
    n_gws = int(cfg["gateways"])
    if n_feeds < 1 or n_gws < 1:
        raise ScenarioError("need at least one feed and one gateway")

    if cfg["clusters"] is not None:
        clusters = [tuple(int(n) for n in feeds) for feeds in cfg["clusters"]]
        if len(clusters) != n_gws:
            raise ScenarioError("clusters length must equal gateways (invalid-partition)")
    else:
        sizes = cfg["cluster_sizes"]
        if sizes is None:
            base, extra = divmod(n_feeds, n_gws)
            sizes = [base + (1 if l < extra else 0) for l in range(n_gws)]
        if len(sizes) != n_gws:
            raise ScenarioError("cluster_sizes length must equal gateways (invalid-partition)")
        if any(s < 1 for s in sizes) or sum(sizes) != n_feeds:
            raise ScenarioError("cluster sizes must be positive and sum to feeds (invalid-partition)")
        clusters, start = [], 0
        for s in sizes:
            clusters.append(tuple(range(start, start + int(s))))
            start += int(s)
    _check_partition(n_feeds, clusters)

    if cfg["group_sizes"] is not None:
        group_sizes = tuple(int(g) for g in cfg["group_sizes"])
        if len(group_sizes) != n_feeds:
            raise ScenarioError("group_sizes length must equal the number of beams (invalid-mapping)")
    else:
        group_sizes = tuple([int(cfg["users_per_group"])] * n_feeds)
    if any(g < 1 for g in group_sizes):
        raise ScenarioError("every group needs at least one user (invalid-mapping)")
    user_group = tuple(m for m, g in enumerate(group_sizes) for _ in range(g))

    p = cfg["per_feed_power_w"]
    p_feed = np.full(n_feeds, float(p)) if np.isscalar(p) else np.asarray(p, dtype=float)
    if p_feed.shape != (n_feeds,):
        raise ScenarioError("per_feed_power_w must be scalar or one value per feed")
    if np.any(p_feed <= 0.0):
        raise ScenarioError("power limits must be strictly positive (non-positive-power)")

    alpha = float(cfg["csit_alpha"])
    if not 0.0 <= alpha <= 1.0:
        raise ScenarioError("csit_alpha must lie in [0, 1]")
    delta = float(cfg["feeder_interference"])
    if delta < 0.0:
        raise ScenarioError("feeder_interference must be nonnegative")
    theta = float(np.radians(cfg["theta_3db_deg"]))
    if theta <= 0.0:
        raise ScenarioError("theta_3db must be positive")
    samples = int(cfg["saa_samples"])
    if samples < 1:
        raise ScenarioError("saa_samples must be at least 1")
    sigma_n2 = float(cfg["noise_power"])
    if sigma_n2 <= 0.0:
        raise ScenarioError("noise power must be strictly positive (non-positive-power)")

    seed = int(cfg["seed"])
    if cfg["beam_centers"] is not None:
        centers = np.asarray(cfg["beam_centers"], dtype=float)
        if centers.shape != (n_feeds, 2):
            raise ScenarioError("beam_centers must be one (x, y) pair per beam")
    else:
        centers = default_beam_centers([len(c) for c in clusters], theta)

    if cfg["user_positions"] is not None:
        positions = np.asarray(cfg["user_positions"], dtype=float)
        if positions.shape != (len(user_group), 2):
            raise ScenarioError("user_positions must be one (x, y) pair per user")
    else:
        layout_rng = np.random.default_rng(
            np.random.SeedSequence(seed, spawn_key=(zlib.crc32(b"layout"),))
        )
        positions = draw_user_positions(centers, group_sizes, theta, layout_rng)

    return Scenario(
        n_feeds=n_feeds,
        n_gateways=n_gws,
        clusters=tuple(clusters),
        group_sizes=group_sizes,
        user_group=user_group,
        p_feed=p_feed,
        sigma_n2=sigma_n2,
        alpha=alpha,
        perfect_csit=bool(cfg["perfect_csit"]),
        delta=delta,
        samples=samples,
        carrier_freq_hz=float(cfg["carrier_freq_hz"]),
        satellite_height_m=float(cfg["satellite_height_m"]),
        bandwidth_hz=float(cfg["bandwidth_hz"]),
        theta_3db_rad=theta,
        g_max_dbi=float(cfg["max_beam_gain_dbi"]),
        g_rx_dbi=float(cfg["rx_gain_dbi"]),
        t_sys_k=float(cfg["noise_temp_k"]),
        rain_mu=float(cfg["rain_mu"]),
        rain_sigma=float(cfg["rain_sigma"]),
        beam_centers=centers,
        user_positions=positions,
        seed=seed,
    )


def load_scenario(path: str) -> Scenario:
    """Build a scenario from a JSON configuration file."""
    with open(path, "r", encoding="utf-8") as fh:
        return build_scenario(json.load(fh))


def save_scenario(scenario: Scenario, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(scenario.to_json())
        fh.write("\n")
