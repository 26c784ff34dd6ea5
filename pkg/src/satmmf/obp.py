"""First-stage transceiver design for on-board processing.

The feeder link is treated as a MIMO interference channel: gateway ``l``
transmits its stream vector through a square first-stage precoder ``W_l`` and
the satellite's receiver ``l`` applies an on-board filter ``R_l``.  Both sets
of matrices are designed by alternating exact block minimisations of the
conditional sum MSE given the feeder estimates, with a robustness term that
accounts for the CSIT error variance.  The converged pair defines the
effective feeder estimate ``R_i F_hat[i][l] W_l`` consumed by the second
stage.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .channel import complex_normal
from .scenario import Scenario

log = logging.getLogger(__name__)

SINGULAR_JITTER = 1e-12


@dataclass
class FirstStageResult:
    first_w: list  # per gateway, (B_l, B_l)
    obp_r: list  # per receiver, (B_l, B_l)
    f_eff: list  # f_eff[i][l] = R_i @ F_hat[i][l] @ W_l
    mse_trace: list
    converged: bool
    n_iter: int


def _w_energy(first_w: list) -> float:
    return float(sum(np.sum(np.abs(w) ** 2) for w in first_w))


def _r_energy(obp_r: list) -> float:
    return float(sum(np.sum(np.abs(r) ** 2) for r in obp_r))


def sum_mse(first_w: list, obp_r: list, f_hat: list, sigma_n2: float, sigma_e2: float):
    """Conditional MSE per receiver and its total.

    For unit-covariance streams and i.i.d. feeder estimation errors the
    expectation has the closed form: received-signal energy through the
    filter, minus twice the desired cross term, plus the stream energy, the
    filtered satellite noise, and the error term ``sigma_e2 * ||R_l||_F^2 *
    sum_i ||W_i||_F^2``.
    """
    L = len(f_hat)
    w_energy = _w_energy(first_w)
    per_l = np.empty(L)
    for l in range(L):
        r = obp_r[l]
        phi = np.zeros((r.shape[0], r.shape[0]), dtype=complex)
        for i in range(L):
            fw = f_hat[l][i] @ first_w[i]
            phi += fw @ fw.conj().T
        r_energy = np.sum(np.abs(r) ** 2)
        val = (
            np.real(np.trace(r @ phi @ r.conj().T))
            - 2.0 * np.real(np.trace(r @ f_hat[l][l] @ first_w[l]))
            + r.shape[0]
            + sigma_n2 * r_energy
            + sigma_e2 * r_energy * w_energy
        )
        per_l[l] = val
    return per_l, float(np.sum(per_l))


def update_R(first_w: list, f_hat: list, sigma_n2: float, sigma_e2: float) -> list:
    """Exact per-receiver minimiser of the sum MSE for fixed precoders.

    Wiener filter against the received covariance; the robustness term adds
    ``sigma_e2`` times the total first-stage signal energy to the diagonal,
    which is what the error term of the conditional MSE differentiates to.
    """
    L = len(f_hat)
    w_energy = _w_energy(first_w)
    out = []
    for l in range(L):
        b = f_hat[l][l].shape[0]
        phi = np.zeros((b, b), dtype=complex)
        for i in range(L):
            fw = f_hat[l][i] @ first_w[i]
            phi += fw @ fw.conj().T
        m = phi + (sigma_n2 + sigma_e2 * w_energy) * np.eye(b)
        out.append(np.linalg.solve(m, f_hat[l][l] @ first_w[l]).conj().T)
    return out


def update_W(obp_r: list, f_hat: list, sigma_e2: float) -> list:
    """Exact per-gateway minimiser of the sum MSE for fixed filters.

    With ``sigma_e2 = 0`` the normal matrix can be singular (e.g. rank
    deficient filters); a tiny diagonal jitter keeps the solve defined and is
    logged when applied.
    """
    L = len(f_hat)
    r_energy = _r_energy(obp_r)
    out = []
    for l in range(L):
        b = f_hat[l][l].shape[1]
        a = np.zeros((b, b), dtype=complex)
        for i in range(L):
            rf = obp_r[i] @ f_hat[i][l]
            a += rf.conj().T @ rf
        a += sigma_e2 * r_energy * np.eye(b)
        eigs = np.linalg.eigvalsh(a)
        if eigs[0] <= 1e-14 * max(eigs[-1], 1.0):
            log.info("first-stage normal matrix near-singular; adding jitter")
            a = a + SINGULAR_JITTER * np.eye(b)
        out.append(np.linalg.solve(a, f_hat[l][l].conj().T @ obp_r[l].conj().T))
    return out


def effective_feeder(obp_r: list, f_hat: list, first_w: list) -> list:
    """Effective feeder blocks ``R_i @ F_hat[i][l] @ W_l`` for all (i, l)."""
    L = len(f_hat)
    return [[obp_r[i] @ f_hat[i][l] @ first_w[l] for l in range(L)] for i in range(L)]


def run_first_stage(
    f_hat: list,
    scenario: Scenario,
    rng: np.random.Generator,
    tol: float = 1e-4,
    max_iter: int = 500,
) -> FirstStageResult:
    """Alternate filter and precoder updates until the sum MSE settles.

    Precoders start as i.i.d. unit-variance complex Gaussian matrices.  Each
    half-step is an exact block minimiser, so the trace is non-increasing;
    iteration stops once the total changes by at most ``tol``.
    """
    sizes = scenario.cluster_sizes
    first_w = [complex_normal(rng, (b, b), 1.0) for b in sizes]
    obp_r = [np.zeros((b, b), dtype=complex) for b in sizes]
    sigma_n2, sigma_e2 = scenario.sigma_n2, scenario.sigma_e2

    trace = []
    prev = None
    converged = False
    for _ in range(max_iter):
        obp_r = update_R(first_w, f_hat, sigma_n2, sigma_e2)
        first_w = update_W(obp_r, f_hat, sigma_e2)
        _, total = sum_mse(first_w, obp_r, f_hat, sigma_n2, sigma_e2)
        trace.append(total)
        if prev is not None and abs(total - prev) <= tol:
            converged = True
            break
        prev = total
    return FirstStageResult(
        first_w=first_w,
        obp_r=obp_r,
        f_eff=effective_feeder(obp_r, f_hat, first_w),
        mse_trace=trace,
        converged=converged,
        n_iter=len(trace),
    )
