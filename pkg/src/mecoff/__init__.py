"""Energy-minimal partial offloading for OFDMA mobile-edge computing.

Jointly optimizes per-user offload ratios, edge CPU shares and subcarrier
assignments under per-user deadlines, via alternating closed-form ratio steps
and a dual-decomposition inner solver, plus reference baselines and an
exhaustive oracle for small instances.
"""

from .allocation import (
    DualState,
    PsResult,
    bisect_edge_cpu,
    kkt_gradient,
    lagrangian,
    lagrangian_decomposed,
    make_default_duals,
    per_subcarrier_cost,
    round_robin_assignment,
    solve_allocation,
    solve_rate_floor,
    update_duals,
)
from .baselines import (
    OracleGrids,
    OracleResult,
    grid_rounding_gap,
    solve_fixed_ratio,
    solve_local_only,
    solve_oracle,
)
from .errors import (
    BadSpec,
    DeadlineUnreachable,
    DivisionByZeroOffload,
    EmptyRate,
    InfeasibleInstance,
    InfeasibleUser,
    NoFeasiblePrimal,
    ShapeMismatch,
    SolverError,
    TooLarge,
)
from .model import (
    Allocation,
    AllocationMetrics,
    ChannelState,
    SolveReport,
    SystemConfig,
    TaskArrays,
    UserTask,
    Violation,
    build_report,
    check_feasibility,
    evaluate_allocation,
    local_energy,
    local_latency,
    offload_energy,
    offload_latency,
    rates_for_assignment,
    total_latency,
    uplink_rate,
)
from .ratio import RatioBounds, energy_gradient, ratio_bounds, solve_ratio
from .scenario import Instance, ScenarioSpec, dbm_to_watts, generate, load_scenario
from .solver import SolveSchedule, solve

__version__ = "0.1.0"

__all__ = [
    "Allocation", "AllocationMetrics", "BadSpec", "ChannelState",
    "DeadlineUnreachable", "DivisionByZeroOffload", "DualState", "EmptyRate",
    "InfeasibleInstance", "InfeasibleUser", "Instance", "NoFeasiblePrimal",
    "OracleGrids", "OracleResult", "PsResult", "RatioBounds", "ScenarioSpec",
    "ShapeMismatch", "SolveReport", "SolveSchedule", "SolverError",
    "SystemConfig", "TaskArrays", "TooLarge", "UserTask", "Violation",
    "bisect_edge_cpu", "build_report", "check_feasibility", "dbm_to_watts",
    "energy_gradient", "evaluate_allocation", "generate", "grid_rounding_gap",
    "kkt_gradient", "lagrangian", "lagrangian_decomposed", "load_scenario",
    "local_energy", "local_latency", "make_default_duals", "offload_energy",
    "offload_latency", "per_subcarrier_cost", "rates_for_assignment",
    "ratio_bounds", "round_robin_assignment", "solve", "solve_allocation",
    "solve_fixed_ratio", "solve_local_only", "solve_oracle", "solve_rate_floor",
    "solve_ratio", "total_latency", "update_duals", "uplink_rate",
]
