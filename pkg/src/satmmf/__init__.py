"""Max-min-fair precoder design for multigateway multibeam satellite downlinks.

Simulates a Ka-band GEO system where feed clusters are driven by separate
gateways over an interfering feeder link, and designs rate-splitting or
linear multicast precoders that maximise the worst group rate under per-feed
power limits, with or without on-board processing, under perfect or imperfect
CSIT.
"""

__version__ = "0.1.0"

from .ao import AoResult, initialize_precoders, run_ao
from .channel import (
    ChannelDraw,
    FeederLinkChannel,
    UserLinkChannel,
    assemble_user_channel,
    beam_gain,
    feeder_channel,
    make_channel_draw,
    rain_fading,
    user_link_gain,
)
from .harness import ExperimentSpec, Scheme, preset_experiment, run_sweep, run_trial
from .obp import FirstStageResult, run_first_stage, sum_mse, update_R, update_W
from .rates import (
    PrecoderSet,
    RateReport,
    antenna_power_usage,
    effective_channel_rows,
    effective_noise,
    realized_mmf,
    saa_average_rates,
    sinr_and_rates,
)
from .scenario import Scenario, ScenarioError, build_scenario, feed_local_index, load_scenario
from .subproblem import ConicProgram, ConicSolution, build_program, solve
from .wmmse import (
    SafAggregates,
    WmmseState,
    build_saf_terms,
    compute_state,
    mmse_equalizers,
    mmse_values,
    optimal_weights,
)

__all__ = [name for name in dir() if not name.startswith("_")]
