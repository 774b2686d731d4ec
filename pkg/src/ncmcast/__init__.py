"""Scheduling network-coded packets over multicast erasure channels.

Sub-queue bookkeeping, schedule enumeration, the stability LP, the LyS /
LyS-beta / LPS / ARQ schedulers and a slotted simulator.
"""

from .channel import ChannelModel, eps_at, sample_outcome
from .engine import Metrics, SimConfig, estimate_lambda_max, is_stable, run, sweep
from .lp import (LinearProgram, build_stability_lp, capacity_threshold, simplex_solve,
                 solve_stability)
from .model import (Packet, QueueSystem, ReceptionOutcome, index_set_of, relocate,
                    total_backlog)
from .rates import brute_force_rates, expected_rates, transition_distribution
from .schedulers import (SchedulerConfig, decide_arq, decide_lps, decide_lys,
                         decide_lys_beta, dv_full, dv_reduced)
from .schedules import Schedule, enumerate_schedules, incidence_matrix

__version__ = "0.1.0"
