"""Convex precoder-update subproblem as a real second-order-cone program.

The precoder step of the alternating optimisation maximises the worst
augmented group rate subject to per-user WMSE constraints (convex quadratics
built from the sample-average aggregates) and per-feed power constraints.
Complex precoders are lifted to stacked ``[Re; Im]`` real coordinates; every
PSD quadratic is reduced to a second-order cone through a symmetric factor,
and the whole program is handed to a primal-dual interior-point backend
(cvxopt's conelp).  The build -> solve -> residuals interface is narrow so the
backend can be swapped.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from cvxopt import matrix as cvx_matrix
from cvxopt import solvers as cvx_solvers

log = logging.getLogger(__name__)

from .rates import PrecoderSet
from .scenario import Scenario, feed_local_index
from .wmmse import SafAggregates

#: Constraint tags used for structural inspection and dumps.
TAG_MMF = "mmf-link"
TAG_PRIVATE = "private-wmse"
TAG_COMMON = "common-wmse"
TAG_PORTION = "nonneg-portion"
TAG_POWER = "power"

DEFAULT_SOLVER_OPTIONS = {
    "show_progress": False,
    "abstol": 1e-10,
    "reltol": 1e-10,
    "feastol": 1e-9,
    "maxiters": 200,
}


class NonPsdError(ValueError):
    """A quadratic-constraint matrix had a significantly negative eigenvalue."""


# ---------------------------------------------------------------------------
# complex <-> stacked-real lifting
# ---------------------------------------------------------------------------

def lift_vector(p: np.ndarray) -> np.ndarray:
    """Complex vector -> stacked ``[Re; Im]`` reals."""
    return np.concatenate([np.real(p), np.imag(p)])


def unlift_vector(x: np.ndarray) -> np.ndarray:
    half = x.size // 2
    return x[:half] + 1j * x[half:]


def real_rows(c: np.ndarray) -> np.ndarray:
    """Real rows computing ``[Re(C p); Im(C p)]`` from a lifted vector.

    For ``C`` of shape (r, B) the result is (2r, 2B); the squared norm of the
    output equals ``||C p||^2``.
    """
    c = np.atleast_2d(c)
    re, im = np.real(c), np.imag(c)
    return np.block([[re, -im], [im, re]])


def hermitian_embed(q: np.ndarray) -> np.ndarray:
    """Standard 2x2-block real embedding with ``x^T Q~ x = p^H Q p``."""
    re, im = np.real(q), np.imag(q)
    return np.block([[re, -im], [im, re]])


def psd_factor(q: np.ndarray, neg_tol: float = 1e-8) -> np.ndarray:
    """Factor ``A`` with ``Q = A^H A`` for Hermitian PSD ``Q`` (rank-revealing).

    Raises :class:`NonPsdError` if an eigenvalue is below ``-neg_tol`` (an
    upstream bug: the aggregates are sums of PSD terms).  Eigenvalues within
    jitter of zero are truncated.
    """
    w, v = np.linalg.eigh((q + q.conj().T) / 2.0)
    if w.size and w[0] < -neg_tol:
        raise NonPsdError(f"quadratic matrix has eigenvalue {w[0]:.3e} (non-psd)")
    cutoff = max(1e-10, 1e-14 * max(w[-1], 0.0)) if w.size else 0.0
    keep = w > cutoff
    if not np.any(keep):
        return np.zeros((0, q.shape[0]), dtype=complex)
    return (np.sqrt(w[keep])[:, None]) * v[:, keep].conj().T


# ---------------------------------------------------------------------------
# program containers
# ---------------------------------------------------------------------------

@dataclass
class VariableLayout:
    """Column layout of the real decision vector."""

    rs: bool
    common: list | None  # slice per gateway (lifted precoder coords)
    private: list  # slice per group
    portions: slice | None  # common-rate portions (RS only)
    group_rates: slice  # auxiliary per-group rate lower bounds
    mmf: int  # auxiliary worst-group rate (the objective)
    n: int


@dataclass
class LinearConstraint:
    a: np.ndarray  # a @ x <= b
    b: float
    tag: str


@dataclass
class EqualityConstraint:
    a: np.ndarray  # a @ x == b
    b: float
    tag: str


@dataclass
class QuadConstraint:
    """``||factor @ x||^2 + a @ x + b <= 0`` with a PSD-factored quadratic."""

    factor: np.ndarray  # (r, n) real
    a: np.ndarray
    b: float
    tag: str


@dataclass
class ConicProgram:
    """Maximise ``x[mmf]`` over tagged linear and factored-quadratic rows."""

    layout: VariableLayout
    linear: list = field(default_factory=list)
    quadratic: list = field(default_factory=list)
    equalities: list = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.layout.n

    def count(self, tag: str) -> int:
        return sum(1 for c in self.linear if c.tag == tag) + sum(
            1 for c in self.quadratic if c.tag == tag
        )

    def dump(self) -> str:
        """Human-readable text form of the program for external verification."""
        lines = [f"variables: {self.n} (mmf index {self.layout.mmf})"]
        for c in self.linear:
            nz = ", ".join(f"x[{i}]*{c.a[i]:+.6g}" for i in np.nonzero(c.a)[0])
            lines.append(f"lin[{c.tag}]: {nz} <= {c.b:.6g}")
        for q in self.quadratic:
            nz = ", ".join(f"x[{i}]*{q.a[i]:+.6g}" for i in np.nonzero(q.a)[0])
            lines.append(
                f"soc[{q.tag}]: ||F x||^2 + {nz or '0'} + {q.b:.6g} <= 0, "
                f"factor {q.factor.shape[0]}x{q.factor.shape[1]}"
            )
        return "\n".join(lines)


@dataclass
class ConicSolution:
    status: str  # optimal | max-iter | infeasible
    objective: float
    x: np.ndarray | None
    common: list | None
    private: list | None
    portions: np.ndarray | None
    group_rates: np.ndarray | None
    residuals: dict
    iterations: int


# ---------------------------------------------------------------------------
# build
# ---------------------------------------------------------------------------

def make_layout(scenario: Scenario, rs: bool) -> VariableLayout:
    pos = 0
    common = None
    if rs:
        common = []
        for size in scenario.cluster_sizes:
            common.append(slice(pos, pos + 2 * size))
            pos += 2 * size
    private = []
    for m in range(scenario.n_groups):
        size = scenario.cluster_sizes[scenario.gateway_of_group[m]]
        private.append(slice(pos, pos + 2 * size))
        pos += 2 * size
    portions = None
    if rs:
        portions = slice(pos, pos + scenario.n_groups)
        pos += scenario.n_groups
    group_rates = slice(pos, pos + scenario.n_groups)
    pos += scenario.n_groups
    mmf = pos
    pos += 1
    return VariableLayout(
        rs=rs, common=common, private=private, portions=portions,
        group_rates=group_rates, mmf=mmf, n=pos,
    )


def _place(block: np.ndarray, col: slice, n: int) -> np.ndarray:
    out = np.zeros((block.shape[0], n))
    out[:, col] = block
    return out


def _add_wmse_constraint(program, factors, lin_terms, const, tag):
    """Append one WMSE row; degenerate (all-zero) quadratics become affine."""
    n = program.n
    a = np.zeros(n)
    for vec, col in lin_terms:
        a[col] += vec
    rows = [r for r in factors if r.shape[0]]
    if rows:
        program.quadratic.append(
            QuadConstraint(factor=np.vstack(rows), a=a, b=const, tag=tag)
        )
    else:
        program.linear.append(LinearConstraint(a=a, b=-const, tag=tag))


def build_program(
    saf: SafAggregates,
    feeder_mats: list,
    noise_diag: np.ndarray,
    scenario: Scenario,
) -> ConicProgram:
    """Assemble the precoder-update program from the SAF aggregates.

    Constraint families: the max-min link rows, per-user private WMSE rows
    (the own gateway's common quadratic is absent: that stream was removed by
    SIC), per-user common WMSE rows bounding the sum of the cluster's
    portions, nonnegative portions, and the per-feed power rows built from
    ``feeder_mats``/``noise_diag`` (see :func:`satmmf.rates.power_model`).
    """
    rs = saf.rs
    layout = make_layout(scenario, rs)
    program = ConicProgram(layout=layout)
    n = layout.n
    L, M, K = scenario.n_gateways, scenario.n_groups, scenario.n_users
    lam = scenario.gateway_of_group

    for m in range(M):
        a = np.zeros(n)
        a[layout.mmf] = 1.0
        a[layout.group_rates.start + m] = -1.0
        if rs:
            a[layout.portions.start + m] = -1.0
        program.linear.append(LinearConstraint(a=a, b=0.0, tag=TAG_MMF))
        if rs:
            a = np.zeros(n)
            a[layout.portions.start + m] = -1.0
            program.linear.append(LinearConstraint(a=a, b=0.0, tag=TAG_PORTION))

    for i in range(K):
        gw_i = scenario.gateway_of_user(i)
        factors = []
        if rs:
            for j in range(L):
                if j != gw_i:
                    factors.append(
                        _place(real_rows(psd_factor(saf.quad_p[j][i])), layout.common[j], n)
                    )
        for m in range(M):
            factors.append(
                _place(real_rows(psd_factor(saf.quad_p[lam[m]][i])), layout.private[m], n)
            )
        lin_terms = [(-2.0 * lift_vector(saf.lin_p[i]), layout.private[scenario.user_group[i]])]
        a_rate = np.zeros(M)
        a_rate[scenario.user_group[i]] = 1.0
        lin_terms.append((a_rate, layout.group_rates))
        const = float(saf.noise_t_p[i] + saf.u_p[i] - saf.v_p[i] - 1.0)
        _add_wmse_constraint(program, factors, lin_terms, const, TAG_PRIVATE)

    if rs:
        for k in range(K):
            gw_k = scenario.gateway_of_user(k)
            factors = []
            for j in range(L):
                factors.append(
                    _place(real_rows(psd_factor(saf.quad_c[j][k])), layout.common[j], n)
                )
            for m in range(M):
                factors.append(
                    _place(real_rows(psd_factor(saf.quad_c[lam[m]][k])), layout.private[m], n)
                )
            lin_terms = [(-2.0 * lift_vector(saf.lin_c[k]), layout.common[gw_k])]
            a_portion = np.zeros(M)
            for m in scenario.groups_of_gateway(gw_k):
                a_portion[m] = 1.0
            lin_terms.append((a_portion, layout.portions))
            const = float(saf.noise_t_c[k] + saf.u_c[k] - saf.v_c[k] - 1.0)
            _add_wmse_constraint(program, factors, lin_terms, const, TAG_COMMON)

    for l in range(L):
        for fd in scenario.clusters[l]:
            idx = feed_local_index(scenario, fd, l)
            factors = []
            if rs:
                for j in range(L):
                    factors.append(
                        _place(real_rows(feeder_mats[l][j][idx : idx + 1, :]), layout.common[j], n)
                    )
            for m in range(M):
                factors.append(
                    _place(real_rows(feeder_mats[l][lam[m]][idx : idx + 1, :]), layout.private[m], n)
                )
            const = float(noise_diag[fd] - scenario.p_feed[fd])
            _add_wmse_constraint(program, factors, [], const, TAG_POWER)

    _pin_unobservable_directions(program, feeder_mats, scenario)
    return program


def _pin_unobservable_directions(program, feeder_mats, scenario):
    """Zero the precoder components invisible to every feed and user.

    The first stage can legitimately drive its precoders rank-deficient (a
    stream dimension is sacrificed to null feeder interference); precoder
    components in the resulting null space of the stacked effective feeder
    neither radiate nor consume power in the optimiser's model, leaving a
    flat degenerate face.  The minimum-norm optimum pins them to zero, which
    keeps the interior-point iterates bounded.
    """
    layout = program.layout
    for j in range(scenario.n_gateways):
        stacked = np.vstack([feeder_mats[l][j] for l in range(scenario.n_gateways)])
        _, svals, vh = np.linalg.svd(stacked, full_matrices=True)
        tol = max(1e-10 * (svals[0] if svals.size else 0.0), 1e-14)
        null_idx = [i for i in range(stacked.shape[1]) if i >= svals.size or svals[i] <= tol]
        null_rows = vh[null_idx, :]
        if not null_rows.size:
            continue
        blocks = []
        if layout.rs:
            blocks.append(layout.common[j])
        blocks.extend(layout.private[m] for m in scenario.groups_of_gateway(j))
        for col in blocks:
            rows = _place(real_rows(null_rows), col, layout.n)
            for a in rows:
                program.equalities.append(EqualityConstraint(a=a, b=0.0, tag="null-pin"))


# ---------------------------------------------------------------------------
# solve
# ---------------------------------------------------------------------------

def _to_cone_form(program: ConicProgram):
    """Stack rows into conelp's (c, G, h, dims): linear block then SOC blocks.

    A quadratic ``||F x||^2 <= t(x)`` with affine ``t = -a@x - b`` becomes the
    cone row group ``(1 + t, 2 F x, 1 - t)``.
    """
    n = program.n
    c = np.zeros(n)
    c[program.layout.mmf] = -1.0  # maximise the worst-group rate

    g_rows, h_vals = [], []
    for lc in program.linear:
        g_rows.append(lc.a[np.newaxis, :])
        h_vals.append(np.array([lc.b]))
    n_lin = sum(r.shape[0] for r in g_rows)

    q_dims = []
    for qc in program.quadratic:
        g_rows.append(qc.a[np.newaxis, :])
        h_vals.append(np.array([1.0 - qc.b]))
        g_rows.append(-2.0 * qc.factor)
        h_vals.append(np.zeros(qc.factor.shape[0]))
        g_rows.append(-qc.a[np.newaxis, :])
        h_vals.append(np.array([1.0 + qc.b]))
        q_dims.append(qc.factor.shape[0] + 2)

    big_g = np.vstack(g_rows)
    big_h = np.concatenate(h_vals)
    dims = {"l": n_lin, "q": q_dims, "s": []}

    eq_a = eq_b = None
    if program.equalities:
        eq_a = np.vstack([ec.a[np.newaxis, :] for ec in program.equalities])
        eq_b = np.asarray([ec.b for ec in program.equalities])
    return c, big_g, big_h, dims, eq_a, eq_b


def solve(program: ConicProgram, scenario: Scenario, options: dict | None = None) -> ConicSolution:
    """Solve with the interior-point backend and unpack the variables.

    The backend is asked for a very tight duality gap first; if its scaling
    update breaks down at that precision (a known failure mode near the
    central path's end) the solve is retried with tolerances relaxed one
    decade at a time.  The zero-precoder point (with sufficiently negative
    auxiliaries) is strictly feasible whenever every feed's budget exceeds
    its forwarded-noise term, so an infeasible status indicates broken inputs
    and is surfaced as such rather than patched over.
    """
    opts = dict(DEFAULT_SOLVER_OPTIONS)
    if options:
        opts.update(options)
    c, big_g, big_h, dims, eq_a, eq_b = _to_cone_form(program)
    extra = {}
    if eq_a is not None:
        extra = {"A": cvx_matrix(eq_a), "b": cvx_matrix(eq_b)}
    sol = None
    for relax in range(4):
        attempt = dict(opts)
        attempt["abstol"] = opts["abstol"] * 10.0**relax
        attempt["reltol"] = opts["reltol"] * 10.0**relax
        attempt["feastol"] = max(opts["feastol"], attempt["reltol"])
        try:
            sol = cvx_solvers.conelp(
                cvx_matrix(c), cvx_matrix(big_g), cvx_matrix(big_h), dims=dims,
                options=attempt, **extra,
            )
        except (ValueError, ArithmeticError) as exc:
            log.debug("conelp failed at abstol %g (%s); relaxing", attempt["abstol"], exc)
            continue
        if sol["status"] != "unknown":
            break
    if sol is None:
        raise RuntimeError("conic backend failed at every tolerance level")
    residuals = {
        "gap": sol.get("gap"),
        "relative_gap": sol.get("relative gap"),
        "primal_infeasibility": sol.get("primal infeasibility"),
        "dual_infeasibility": sol.get("dual infeasibility"),
    }
    status = sol["status"]
    if status in ("primal infeasible", "dual infeasible"):
        return ConicSolution(
            status="infeasible", objective=np.nan, x=None, common=None, private=None,
            portions=None, group_rates=None, residuals=residuals,
            iterations=sol.get("iterations", 0),
        )
    x = np.asarray(sol["x"]).ravel()
    layout = program.layout
    common = None
    if layout.rs:
        common = [unlift_vector(x[s]) for s in layout.common]
    private = [unlift_vector(x[s]) for s in layout.private]
    portions = x[layout.portions].copy() if layout.rs else None
    return ConicSolution(
        status="optimal" if status == "optimal" else "max-iter",
        objective=float(x[layout.mmf]),
        x=x,
        common=common,
        private=private,
        portions=portions,
        group_rates=x[layout.group_rates].copy(),
        residuals=residuals,
        iterations=sol.get("iterations", 0),
    )
