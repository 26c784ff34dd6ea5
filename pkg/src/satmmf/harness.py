"""Monte-Carlo experiment driver: trials, sweeps, and CSV output.

A trial draws one channel, optionally runs the first-stage on-board design,
runs the alternating optimisation for a scheme, and evaluates the realised
max-min group rate on the true channel.  Sweeps repeat trials across a grid
of one system parameter with common random numbers: the same trial index maps
to the same channel stream for every scheme and sweep value, so comparisons
are paired.
"""

from __future__ import annotations

import csv
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .ao import AoResult, run_ao
from .channel import make_channel_draw
from .obp import run_first_stage
from .scenario import Scenario, build_scenario

#: Default desk-scale experiment size; the reference study used 100 trials
#: and 1000 SAA samples, which remain one flag away.
DEFAULT_TRIALS = 10
DEFAULT_SAMPLES = 50

CSV_COLUMNS = [
    "sweep_var",
    "sweep_value",
    "scheme",
    "obp",
    "trials",
    "S",
    "mmf_mean",
    "mmf_stderr",
    "saa_obj_mean",
    "iters_mean",
    "wall_ms_mean",
    "violations",
]

SWEEP_VARS = ("power", "delta", "alpha", "users_per_group", "group_sizes")


@dataclass(frozen=True)
class Scheme:
    rs: bool
    obp: bool

    @property
    def name(self) -> str:
        return "RS" if self.rs else "NoRS"

    @property
    def label(self) -> str:
        return self.name + ("+OBP" if self.obp else "")


ALL_SCHEMES = (
    Scheme(rs=True, obp=False),
    Scheme(rs=False, obp=False),
    Scheme(rs=True, obp=True),
    Scheme(rs=False, obp=True),
)


def parse_scheme(label: str) -> Scheme:
    base, _, tail = label.partition("+")
    rs = {"rs": True, "nors": False}.get(base.strip().lower())
    if rs is None or (tail and tail.strip().lower() != "obp"):
        raise ValueError(f"unknown scheme {label!r} (use RS, NoRS, RS+OBP, NoRS+OBP)")
    return Scheme(rs=rs, obp=bool(tail))


@dataclass
class TrialResult:
    """One trial's headline numbers.

    ``saa_objective`` is the optimiser's certified average MMF rate (the
    quantity the reference study averages into its ergodic curves);
    ``realized_mmf`` re-evaluates the final precoders on the true channel.
    """

    trial: int
    realized_mmf: float
    saa_objective: float
    iterations: int
    wall_ms: float
    max_power_violation: float
    converged: bool
    first_stage_iters: int
    first_stage_mse: float
    objectives: list = field(default_factory=list)
    raw_objectives: list = field(default_factory=list)
    n_safeguard: int = 0


@dataclass
class ExperimentSpec:
    """A sweep of one parameter over a set of schemes."""

    scenario_config: dict
    schemes: tuple
    sweep_var: str
    sweep_values: tuple
    trials: int = DEFAULT_TRIALS
    samples: int = DEFAULT_SAMPLES
    seed: int = 2026

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("need at least one trial")
        if self.sweep_var not in SWEEP_VARS:
            raise ValueError(f"unknown sweep variable {self.sweep_var!r}")
        vals = list(self.sweep_values)
        if not vals or not all(np.all(np.isfinite(v)) for v in vals):
            raise ValueError("sweep values must be finite and nonempty")
        if self.sweep_var != "group_sizes" and sorted(vals) != vals:
            raise ValueError("sweep values must be sorted ascending")

    @classmethod
    def from_file(cls, path: str) -> "ExperimentSpec":
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        return cls(
            scenario_config=raw.get("scenario", {}),
            schemes=tuple(parse_scheme(s) for s in raw["schemes"]),
            sweep_var=raw["sweep_var"],
            sweep_values=tuple(raw["sweep_values"]),
            trials=int(raw.get("trials", DEFAULT_TRIALS)),
            samples=int(raw.get("samples", DEFAULT_SAMPLES)),
            seed=int(raw.get("seed", 2026)),
        )


@dataclass
class SweepRow:
    sweep_var: str
    sweep_value: object
    scheme: str
    obp: int
    trials: int
    samples: int
    mmf_mean: float
    mmf_stderr: float
    saa_obj_mean: float
    iters_mean: float
    wall_ms_mean: float
    violations: int

    def as_csv(self) -> list:
        return [
            self.sweep_var,
            self.sweep_value,
            self.scheme,
            self.obp,
            self.trials,
            self.samples,
            f"{self.mmf_mean:.9g}",
            f"{self.mmf_stderr:.9g}",
            f"{self.saa_obj_mean:.9g}",
            f"{self.iters_mean:.6g}",
            f"{self.wall_ms_mean:.6g}",
            self.violations,
        ]


def apply_sweep_value(config: dict, sweep_var: str, value) -> dict:
    """Scenario config for one sweep point.  ``power`` is per-feed Watts."""
    cfg = dict(config)
    if sweep_var == "power":
        cfg["per_feed_power_w"] = float(value)
    elif sweep_var == "delta":
        cfg["feeder_interference"] = float(value)
    elif sweep_var == "alpha":
        cfg["csit_alpha"] = float(value)
    elif sweep_var == "users_per_group":
        cfg["users_per_group"] = int(value)
        cfg.pop("group_sizes", None)
    elif sweep_var == "group_sizes":
        cfg["group_sizes"] = [int(g) for g in value]
    else:
        raise ValueError(f"unknown sweep variable {sweep_var!r}")
    return cfg


def run_trial(
    scenario: Scenario,
    trial: int,
    scheme: Scheme,
    samples: int | None = None,
    return_result: bool = False,
):
    """One seeded end-to-end pipeline run for one scheme.

    The channel stream is keyed by the trial index only, so all schemes (and
    sweep points sharing the scenario seed) see matched randomness; the
    first-stage initialisation has its own per-trial stream.  Under perfect
    CSIT a single SAA sample is used since all realisations coincide.
    """
    eff_samples = 1 if scenario.perfect_csit else (samples or scenario.samples)
    start = time.perf_counter()
    draw = make_channel_draw(scenario, scenario.stream("channel", trial), samples=eff_samples)
    first_stage = None
    if scheme.obp:
        first_stage = run_first_stage(draw.f_hat, scenario, scenario.stream("obp-init", trial))
    ao = run_ao(draw, scenario, rs=scheme.rs, first_stage=first_stage)
    wall_ms = 1000.0 * (time.perf_counter() - start)
    result = TrialResult(
        trial=trial,
        realized_mmf=ao.realized_mmf,
        saa_objective=ao.saa_objective,
        iterations=ao.n_iter,
        wall_ms=wall_ms,
        max_power_violation=ao.max_power_violation,
        converged=ao.converged,
        first_stage_iters=0 if first_stage is None else first_stage.n_iter,
        first_stage_mse=np.nan if first_stage is None else first_stage.mse_trace[-1],
        objectives=list(ao.objectives),
        raw_objectives=list(ao.raw_objectives),
        n_safeguard=ao.n_safeguard,
    )
    if return_result:
        return result, ao, first_stage
    return result


def _trial_task(args):
    config, trial, scheme, samples = args
    scenario = build_scenario(config)
    return run_trial(scenario, trial, scheme, samples=samples)


def summarize(results: list, row_meta: dict) -> SweepRow:
    mmf = np.array([r.realized_mmf for r in results])
    stderr = float(np.std(mmf, ddof=1) / np.sqrt(len(mmf))) if len(mmf) > 1 else 0.0
    return SweepRow(
        mmf_mean=float(np.mean(mmf)),
        mmf_stderr=stderr,
        saa_obj_mean=float(np.mean([r.saa_objective for r in results])),
        iters_mean=float(np.mean([r.iterations for r in results])),
        wall_ms_mean=float(np.mean([r.wall_ms for r in results])),
        violations=int(sum(r.max_power_violation > 1e-6 for r in results)),
        trials=len(results),
        **row_meta,
    )


def run_sweep(
    spec: ExperimentSpec,
    out: str | None = None,
    jobs: int = 1,
    progress=None,
) -> list:
    """Run every (sweep value, scheme) cell and return the summary rows.

    Rows are appended to ``out`` as soon as each cell finishes, so an
    interrupted run leaves a valid partial CSV behind.  Results are identical
    for any ``jobs`` because every trial derives its own random streams.
    """
    rows: list[SweepRow] = []
    writer = None
    fh = None
    if out is not None:
        fh = open(out, "w", encoding="utf-8", newline="")
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        fh.flush()
    try:
        for value in spec.sweep_values:
            cfg = apply_sweep_value(spec.scenario_config, spec.sweep_var, value)
            cfg["seed"] = spec.seed
            cfg["saa_samples"] = spec.samples
            scenario = build_scenario(cfg)
            for scheme in spec.schemes:
                if progress:
                    progress(f"{spec.sweep_var}={value} {scheme.label}")
                if jobs > 1:
                    tasks = [(cfg, t, scheme, spec.samples) for t in range(spec.trials)]
                    with ProcessPoolExecutor(max_workers=jobs) as pool:
                        results = list(pool.map(_trial_task, tasks))
                else:
                    results = [
                        run_trial(scenario, t, scheme, samples=spec.samples)
                        for t in range(spec.trials)
                    ]
                value_repr = (
                    "[" + " ".join(str(g) for g in value) + "]"
                    if spec.sweep_var == "group_sizes"
                    else value
                )
                row = summarize(
                    results,
                    {
                        "sweep_var": spec.sweep_var,
                        "sweep_value": value_repr,
                        "scheme": scheme.name,
                        "obp": int(scheme.obp),
                        "samples": spec.samples,
                    },
                )
                rows.append(row)
                if writer is not None:
                    writer.writerow(row.as_csv())
                    fh.flush()
    finally:
        if fh is not None:
            fh.close()
    return rows


# ---------------------------------------------------------------------------
# preset experiments mirroring the reference study's sweep set
# ---------------------------------------------------------------------------

def preset_experiment(
    name: str,
    trials: int = DEFAULT_TRIALS,
    samples: int = DEFAULT_SAMPLES,
    seed: int = 2026,
    schemes: tuple = ALL_SCHEMES,
    perfect_csit: bool = False,
) -> ExperimentSpec:
    """Preset sweeps: fig3 power, fig4 delta, fig5 alpha, fig6 group size."""
    base = {"perfect_csit": perfect_csit}
    presets = {
        "fig3": ("power", (40.0, 60.0, 80.0), {}),
        "fig4": ("delta", (0.0, 0.4, 0.8), {"per_feed_power_w": 80.0}),
        "fig5": ("alpha", (0.0, 0.3, 0.6, 0.9), {"per_feed_power_w": 80.0}),
        "fig6": ("users_per_group", (1, 2, 3), {"per_feed_power_w": 80.0}),
    }
    if name not in presets:
        raise ValueError(f"unknown preset {name!r} (choose from {sorted(presets)})")
    sweep_var, values, extra = presets[name]
    cfg = dict(base)
    cfg.update(extra)
    return ExperimentSpec(
        scenario_config=cfg,
        schemes=tuple(schemes),
        sweep_var=sweep_var,
        sweep_values=values,
        trials=trials,
        samples=samples,
        seed=seed,
    )
