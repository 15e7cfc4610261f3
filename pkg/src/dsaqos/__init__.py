"""LD-exponent-optimal sensing/transmitting policies for hardware-constrained DSA."""

from .arrivals import (
    MarkovArrivalProcess,
    log_mgf_arrivals,
    mean_arrival_rate,
    scale_arrivals,
    stationary_distribution,
)
from .ld import QosResult, evaluate_policy, find_theta_star, qos_gap
from .optimizers import (
    Algorithm,
    OptimizationReport,
    algorithm_a,
    algorithm_b,
    dp_min_mgf,
    dp_theta,
    dp_throughput,
    exhaustive_search,
)
from .policy import (
    PolicyMatrix,
    ServiceSpectrum,
    SystemParams,
    enumerate_leaves,
    is_staircase,
    log_mgf_service_neg,
    mean_service_rate,
    staircase_from_thresholds,
    thresholds_from_staircase,
)
from .queue_sim import SimConfig, SimResult, simulate, validate_ld

__version__ = "0.1.0"
