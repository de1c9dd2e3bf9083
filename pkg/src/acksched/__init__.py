"""ACK/NAK-driven power, rate and user scheduling for OFDM downlinks."""

__version__ = "0.1.0"

from .channel import (ChannelRealization, SystemConfig, ack_outcome, capacity_exact,
                      capacity_highsnr, channel_trajectory, draw_channel, evolve_doppler,
                      rate_threshold)
from .errors import InvalidArgument, InvalidState, ResourceLimit
from .phi import PhiTable, build_phi, cdf, inv_cdf, sample_product
from .policy import (BeliefState, Decision, SlotTrace, power_alloc, rate_alloc, run_time_slot,
                     select_user, theta_update, update_belief)
from .baselines import perfect_csit_slot, round_robin_slot
from .kernels import BatchTrace, run_proposed_batch
from .oracle import (OracleConfig, OracleNode, closed_form_policy, dp_optimal,
                     enumerate_policy_value, replay_online)
from .sim import AggregateMetrics, ExperimentSpec, run_experiment, sweep
