"""User-link and feeder-link channel generation with CSIT error modelling.

The user-link channel from feed cluster ``l`` to user ``k`` is the Hadamard
product of a real gain vector (free-space loss, receive antenna gain, Bessel
beam pattern, noise normalisation) and a complex rain-fading scalar shared by
all feeds of that user.  The feeder link uses the block model
``F[i][l] = q_l * E[i][l]`` with ``E[l][l] = I`` and ``E[i][l]`` an all-ones
block scaled by the interference level ``delta`` for ``i != l``.

Imperfect CSIT is modelled by subtracting an i.i.d. circularly-symmetric
complex Gaussian error (variance ``sigma_e2 = P_total**-alpha`` per entry)
from the true channels to form the transmitter-side estimates, and by
building a set of ``S`` conditional realisations around each estimate for
sample-average approximation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import jv

from .scenario import BOLTZMANN, Scenario

#: Argument of the Bessel beam pattern at the 3 dB contour.
U_3DB = 2.07123


def beam_gain(theta, g_max_lin: float, theta_3db_rad: float):
    """Linear beam gain at off-axis angle ``theta`` (radians).

    Uses the tapered-aperture pattern ``g_max * (J1(u)/(2u) + 36 J3(u)/u^3)^2``
    with ``u = 2.07123 sin(theta)/sin(theta_3db)``.  The bracket tends to 1 as
    ``u -> 0``, so boresight returns exactly ``g_max``; tiny arguments take the
    analytic limit instead of dividing by ~0.
    """
    theta = np.asarray(theta, dtype=float)
    u = U_3DB * np.sin(theta) / np.sin(theta_3db_rad)
    small = np.abs(u) < 1e-6  # limit value is exact to O(u^2) ~ 1e-12 relative
    u_safe = np.where(small, 1.0, u)
    bracket = jv(1, u_safe) / (2.0 * u_safe) + 36.0 * jv(3, u_safe) / u_safe**3
    bracket = np.where(small, 1.0, bracket)
    return g_max_lin * bracket**2


def user_link_gain(scenario: Scenario, user: int, gateway: int) -> np.ndarray:
    """Real gain vector (one entry per feed of ``gateway``) for one user.

    Combines the receive gain, beam gain towards the user, free-space loss at
    the satellite slant distance, and the noise normalisation that makes the
    downstream receiver noise power equal to ``sigma_n2 = 1``.
    """
    feeds = np.asarray(scenario.clusters[gateway])
    offsets = scenario.beam_centers[feeds] - scenario.user_positions[user]
    theta = np.linalg.norm(offsets, axis=1)
    g_beam = beam_gain(theta, scenario.g_max_lin, scenario.theta_3db_rad)
    d = scenario.satellite_height_m
    denom = 4.0 * np.pi * (d / scenario.wavelength_m) * np.sqrt(
        BOLTZMANN * scenario.t_sys_k * scenario.bandwidth_hz
    )
    return np.sqrt(scenario.g_rx_lin * g_beam) / denom


def rain_fading(rng: np.random.Generator, mu: float, sigma: float, size=None):
    """Complex rain-fading coefficient(s) ``chi**-0.5 * exp(-1j*phi)``.

    The attenuation in dB is lognormal, ``ln(chi_dB) ~ N(mu, sigma^2)``, so the
    magnitude is always in (0, 1]; the phase is uniform on [0, 2*pi).
    """
    chi_db = np.exp(rng.normal(mu, sigma, size))
    chi = 10.0 ** (chi_db / 20.0)
    phase = rng.uniform(0.0, 2.0 * np.pi, size)
    return chi**-0.5 * np.exp(-1j * phase)


@dataclass(frozen=True)
class UserLinkChannel:
    """True user-link channel split into its gain and fading factors."""

    gains: list  # per gateway: (B_l, K) real
    fading: np.ndarray  # (K,) complex, shared by all feeds of a user
    h: list  # per gateway: (B_l, K) complex, h = gains * fading


@dataclass(frozen=True)
class FeederLinkChannel:
    """True feeder-link channel blocks and the per-gateway fading scalars."""

    q_gw: np.ndarray  # (L,) complex
    blocks: list  # blocks[i][l]: (B_i, B_l) complex


@dataclass(frozen=True)
class ChannelDraw:
    """One trial's channels: truth, transmitter-side estimates, realisations.

    ``h_real[l]`` has shape (S, B_l, K) and ``f_real[i][l]`` (S, B_i, B_l);
    realisation ``s`` equals the estimate plus a fresh error draw.  Under
    perfect CSIT the estimates equal the truth and every realisation equals
    the estimate.
    """

    h_true: list
    f_true: list
    h_hat: list
    f_hat: list
    h_real: list
    f_real: list
    sigma_e2: float
    samples: int


def complex_normal(rng: np.random.Generator, shape, var: float) -> np.ndarray:
    """Circularly-symmetric complex Gaussian with per-entry variance ``var``."""
    scale = np.sqrt(var / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def assemble_user_channel(scenario: Scenario, rng: np.random.Generator) -> UserLinkChannel:
    """Draw the true user-link channel for every (cluster, user) pair."""
    K = scenario.n_users
    gains = []
    for l in range(scenario.n_gateways):
        g = np.empty((len(scenario.clusters[l]), K))
        for k in range(K):
            g[:, k] = user_link_gain(scenario, k, l)
        gains.append(g)
    fading = rain_fading(rng, scenario.rain_mu, scenario.rain_sigma, K)
    h = [g * fading[np.newaxis, :] for g in gains]
    return UserLinkChannel(gains=gains, fading=fading, h=h)


def feeder_channel(scenario: Scenario, rng: np.random.Generator) -> FeederLinkChannel:
    """Draw the true feeder-link blocks ``F[i][l] = q_l * E[i][l]``.

    ``q_l`` depends on the transmitting gateway only and follows the same
    rain-fading law as the user link.
    """
    sizes = scenario.cluster_sizes
    q_gw = rain_fading(rng, scenario.rain_mu, scenario.rain_sigma, scenario.n_gateways)
    blocks = []
    for i in range(scenario.n_gateways):
        row = []
        for l in range(scenario.n_gateways):
            if i == l:
                e = np.eye(sizes[i], dtype=complex)
            else:
                e = scenario.delta * np.ones((sizes[i], sizes[l]), dtype=complex)
            row.append(q_gw[l] * e)
        blocks.append(row)
    return FeederLinkChannel(q_gw=q_gw, blocks=blocks)


def make_channel_draw(
    scenario: Scenario, rng: np.random.Generator, samples: int | None = None
) -> ChannelDraw:
    """Draw truth, estimates, and SAA realisation sets for one trial.

    Estimates are formed as truth minus an error draw; each of the ``samples``
    realisations adds an independent error draw back onto the estimate.  With
    ``perfect_csit`` all error variances are zero and the realisation set
    collapses onto the truth.
    """
    S = scenario.samples if samples is None else int(samples)
    if S < 1:
        raise ValueError("need at least one SAA sample")
    L = scenario.n_gateways
    user = assemble_user_channel(scenario, rng)
    feeder = feeder_channel(scenario, rng)
    var = scenario.sigma_e2

    h_hat = [h - complex_normal(rng, h.shape, var) for h in user.h]
    f_hat = [
        [feeder.blocks[i][l] - complex_normal(rng, feeder.blocks[i][l].shape, var) for l in range(L)]
        for i in range(L)
    ]
    h_real = [hh[np.newaxis] + complex_normal(rng, (S,) + hh.shape, var) for hh in h_hat]
    f_real = [
        [
            f_hat[i][l][np.newaxis] + complex_normal(rng, (S,) + f_hat[i][l].shape, var)
            for l in range(L)
        ]
        for i in range(L)
    ]
    return ChannelDraw(
        h_true=user.h,
        f_true=feeder.blocks,
        h_hat=h_hat,
        f_hat=f_hat,
        h_real=h_real,
        f_real=f_real,
        sigma_e2=var,
        samples=S,
    )
