"""Three-layer sensor / UAV base-station / cloud network toolkit.

Channel models, sensor-field dynamics, a per-slot drift-plus-penalty
resource scheduler with brute-force audit oracles, and a deep-Q path
planner on a self-contained numpy CNN.
"""

from .channel import (AgChannelParams, OffloadChannelParams, avg_path_loss,
                      los_probability, mean_offload_gain, offload_capacity,
                      optimal_altitude, sample_offload_gain)
from .edge import (EdgeParams, UavState, apply_move, edge_power,
                   edge_throughput, make_uav, queue_update)
from .field import (FieldConfig, SensorField, SensorState, coverage_assignment,
                    generate_arrivals, update_freshness, uplink_transfer)
from .planner import (ActionStats, ObservationGrid, PlannerConfig,
                      PlannerTrainer, ReplayMemory, ReplaySample, action_set,
                      build_observation, compute_target, compute_update_rate,
                      epsilon_schedule, path_reward, select_action)
from .scheduler import (BandwidthAllocation, SchedulerConfig, SchedulerDecision,
                        allocate_bandwidth, lyapunov_drift_bound,
                        optimal_frequency, optimal_power, p2b_objective,
                        schedule_slot)
from .sim import (MetricsRecord, SimConfig, World, run_experiment,
                  run_system_slot, train_planner)

__all__ = [name for name in dir() if not name.startswith("_")]
