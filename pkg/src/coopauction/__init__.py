"""Distributed power auction for multi-user cooperative relay networks,
with a centralized convex oracle for verification."""

from .channel import (ChannelRealization, PropagationParams, Topology,
                      paper_toy_topology, path_gain, random_topology,
                      sample_realization)
from .rates import (Budgets, RateGradient, direct_power_matrix, payoff,
                    rate_approx, rate_exact, rate_gradient, surplus,
                    weighted_sum_rate)
from .auction import (AuctionState, RunRecord, Schedule, StepConfig,
                      init_state, lyapunov_value, run_auction)
from .oracle import (OracleSolution, check_bid_consistency, grid_search,
                     kkt_residual, solve_p1)

__version__ = "0.1.0"
