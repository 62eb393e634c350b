"""System model: tasks, channels, allocations, and the latency/energy laws.

All quantities are SI (bits, cycles, seconds, watts, joules, Hz). Unit
conversions such as dBm happen at scenario-parsing time, never here.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import DivisionByZeroOffload, ShapeMismatch

# Feasibility tolerances.
LATENCY_TOL = 1e-12      # seconds of slack absorbed on deadline checks
INDICATOR_TOL = 1e-9     # absolute slack on per-subcarrier indicator sums
CAPACITY_TOL = 1e-2      # cycles/s of slack on the edge CPU budget (float-sum noise << this)
RATE_FLOOR_REL_TOL = 1e-9


@dataclass(frozen=True)
class UserTask:
    """One user's computation task and radio/compute parameters."""

    input_bits: float          # task input size
    cycles_per_bit: float      # CPU cycles needed per input bit
    deadline: float            # completion deadline, seconds
    local_cpu: float           # local CPU speed, cycles/s
    max_tx_power: float        # total transmit power budget, watts
    kappa_local: float         # effective switched capacitance of the local CPU

    def __post_init__(self):
        for name in ("input_bits", "cycles_per_bit", "deadline", "local_cpu",
                     "max_tx_power", "kappa_local"):
            if getattr(self, name) <= 0:
                raise ValueError(f"UserTask.{name} must be positive")

    @property
    def total_cycles(self) -> float:
        return self.input_bits * self.cycles_per_bit


@dataclass(frozen=True)
class ChannelState:
    """Uplink channel gains per (user, subcarrier) plus noise and bandwidth."""

    gains: np.ndarray          # (K, N) linear power gains
    noise_power: float         # watts per subcarrier
    bandwidth: float           # Hz per subcarrier

    def __post_init__(self):
        gains = np.asarray(self.gains, dtype=float)
        object.__setattr__(self, "gains", gains)
        if gains.ndim != 2:
            raise ShapeMismatch("gains must be a (K, N) matrix")
        if np.any(gains < 0):
            raise ValueError("channel gains must be nonnegative")
        if self.noise_power <= 0 or self.bandwidth <= 0:
            raise ValueError("noise power and bandwidth must be positive")

    @property
    def normalized_gains(self) -> np.ndarray:
        """Gain over noise, the only combination the rate law uses."""
        return self.gains / self.noise_power


@dataclass(frozen=True)
class SystemConfig:
    """Shared system constants."""

    edge_capacity: float       # total edge CPU budget F, cycles/s
    kappa_edge: float          # effective switched capacitance of the edge CPU
    slot_length: float         # scheduling slot / default deadline T, seconds
    num_subcarriers: int
    num_users: int

    def __post_init__(self):
        if self.edge_capacity <= 0 or self.kappa_edge <= 0 or self.slot_length <= 0:
            raise ValueError("edge_capacity, kappa_edge and slot_length must be positive")
        if self.num_subcarriers < 0 or self.num_users < 0:
            raise ValueError("num_subcarriers and num_users must be nonnegative")


@dataclass(frozen=True)
class Allocation:
    """A full decision point: offload split, edge CPU shares, subcarriers, rate floor.

    ``rate_floor`` is the auxiliary per-user rate used by the dual solver in
    place of the achieved rate; a standalone allocation simply carries the
    achieved rate there.
    """

    offload_ratio: np.ndarray  # (K,) in [0, 1]
    edge_cpu: np.ndarray       # (K,) cycles/s, sum <= edge_capacity
    assignment: np.ndarray     # (K, N) 0/1, column sums <= 1
    rate_floor: np.ndarray     # (K,) bits/s

    def __post_init__(self):
        object.__setattr__(self, "offload_ratio", np.asarray(self.offload_ratio, dtype=float))
        object.__setattr__(self, "edge_cpu", np.asarray(self.edge_cpu, dtype=float))
        object.__setattr__(self, "assignment", np.asarray(self.assignment, dtype=np.int8))
        object.__setattr__(self, "rate_floor", np.asarray(self.rate_floor, dtype=float))

    @property
    def num_users(self) -> int:
        return self.assignment.shape[0]

    def subcarrier_counts(self) -> np.ndarray:
        return self.assignment.sum(axis=1)

    def tx_power(self, max_tx_power: np.ndarray) -> np.ndarray:
        """Per-(user, subcarrier) transmit power: equal split over held subcarriers."""
        counts = self.subcarrier_counts()
        per = np.divide(max_tx_power, counts, out=np.zeros_like(np.asarray(max_tx_power, float)),
                        where=counts > 0)
        return per[:, None] * self.assignment

    def copy(self) -> "Allocation":
        return Allocation(self.offload_ratio.copy(), self.edge_cpu.copy(),
                          self.assignment.copy(), self.rate_floor.copy())


@dataclass(frozen=True)
class Violation:
    user: Optional[int]        # None for system-wide constraints
    constraint: str
    slack: float               # negative = violated by that much


@dataclass(frozen=True)
class UserBreakdown:
    e_local: float
    e_uplink: float
    e_edge: float
    t_local: float
    t_offload: float


@dataclass(frozen=True)
class SolveReport:
    total_energy: float
    per_user: tuple            # tuple[UserBreakdown]
    feasible: bool
    violations: tuple          # tuple[Violation]
    trace: tuple
    allocation: Optional[Allocation] = None
    outer_iterations: int = 0

    @property
    def mean_offload_ratio(self) -> float:
        if self.allocation is None or self.allocation.offload_ratio.size == 0:
            return 0.0
        return float(np.mean(self.allocation.offload_ratio))


# ---------------------------------------------------------------------------
# scalar laws

def local_latency(task: UserTask, ratio: float) -> float:
    """Time to process the locally kept share of the task."""
    return task.cycles_per_bit * (1.0 - ratio) * task.input_bits / task.local_cpu


def uplink_rate(task: UserTask, channel: ChannelState, user: int, x_row: np.ndarray) -> float:
    """Achievable uplink rate with the power budget split equally over held subcarriers."""
    x_row = np.asarray(x_row)
    if x_row.shape != (channel.gains.shape[1],):
        raise ShapeMismatch("x_row length must equal the subcarrier count")
    held = x_row > 0
    n_k = int(held.sum())
    if n_k == 0:
        return 0.0
    p = task.max_tx_power / n_k
    snr = p * channel.normalized_gains[user, held]
    return float(channel.bandwidth * np.sum(np.log2(1.0 + snr)))


def offload_latency(task: UserTask, ratio: float, rate: float, edge_cpu: float) -> float:
    """Uplink time plus edge compute time for the offloaded share."""
    if ratio == 0.0:
        return 0.0
    if rate <= 0.0 or edge_cpu <= 0.0:
        raise DivisionByZeroOffload(
            f"ratio={ratio:.6g} with rate={rate:.6g}, edge_cpu={edge_cpu:.6g}"
        )
    offloaded = ratio * task.input_bits
    return offloaded / rate + offloaded * task.cycles_per_bit / edge_cpu


def total_latency(t_local: float, t_offload: float) -> float:
    """Local and offload paths run in parallel; completion is the slower one."""
    return max(t_local, t_offload)


def local_energy(task: UserTask, ratio: float) -> float:
    """Dynamic CPU energy of the locally processed share."""
    return (task.kappa_local * task.cycles_per_bit * (1.0 - ratio)
            * task.input_bits * task.local_cpu ** 2)


def offload_energy(task: UserTask, ratio: float, rate: float, edge_cpu: float,
                   kappa_edge: float) -> float:
    """Transmit energy plus edge CPU energy for the offloaded share.

    The transmit power summed over held subcarriers equals the full budget
    whenever at least one subcarrier is held, so the budget appears directly.
    """
    if ratio == 0.0:
        return 0.0
    if rate <= 0.0:
        raise DivisionByZeroOffload(f"ratio={ratio:.6g} with rate={rate:.6g}")
    offloaded = ratio * task.input_bits
    e_tx = task.max_tx_power * offloaded / rate
    e_edge = kappa_edge * task.cycles_per_bit * ratio * task.input_bits * edge_cpu ** 2
    return e_tx + e_edge


# ---------------------------------------------------------------------------
# vectorized evaluation

@dataclass(frozen=True)
class TaskArrays:
    """Column view of a task list for array math."""

    input_bits: np.ndarray
    cycles_per_bit: np.ndarray
    deadline: np.ndarray
    local_cpu: np.ndarray
    max_tx_power: np.ndarray
    kappa_local: np.ndarray

    @classmethod
    def from_tasks(cls, tasks) -> "TaskArrays":
        return cls(
            input_bits=np.array([t.input_bits for t in tasks], dtype=float),
            cycles_per_bit=np.array([t.cycles_per_bit for t in tasks], dtype=float),
            deadline=np.array([t.deadline for t in tasks], dtype=float),
            local_cpu=np.array([t.local_cpu for t in tasks], dtype=float),
            max_tx_power=np.array([t.max_tx_power for t in tasks], dtype=float),
            kappa_local=np.array([t.kappa_local for t in tasks], dtype=float),
        )


@dataclass(frozen=True)
class AllocationMetrics:
    rate: np.ndarray
    t_local: np.ndarray
    t_offload: np.ndarray
    t_total: np.ndarray
    e_local: np.ndarray
    e_uplink: np.ndarray
    e_edge: np.ndarray

    @property
    def e_total(self) -> np.ndarray:
        return self.e_local + self.e_uplink + self.e_edge

    @property
    def total_energy(self) -> float:
        return float(np.sum(self.e_total))


def rates_for_assignment(ta: TaskArrays, channel: ChannelState,
                         assignment: np.ndarray) -> np.ndarray:
    """Vector of achievable rates, power split equally over each user's subcarriers."""
    counts = assignment.sum(axis=1)
    per = np.divide(ta.max_tx_power, counts, out=np.zeros(len(counts)), where=counts > 0)
    snr = per[:, None] * channel.normalized_gains * (assignment > 0)
    return channel.bandwidth * np.log1p(snr).sum(axis=1) / np.log(2.0)


def evaluate_allocation(tasks, channel: ChannelState, alloc: Allocation,
                        config: SystemConfig) -> AllocationMetrics:
    """Latencies and energies of every user under one allocation.

    Users offloading with no rate or no edge CPU get infinite offload latency
    (and infinite uplink energy when the rate is zero) rather than an error, so
    infeasible iterates can still be compared and reported.
    """
    ta = tasks if isinstance(tasks, TaskArrays) else TaskArrays.from_tasks(tasks)
    _check_shapes(ta, channel, alloc, config)
    lam = alloc.offload_ratio
    rate = rates_for_assignment(ta, channel, alloc.assignment)
    kept = (1.0 - lam) * ta.input_bits
    offloaded = lam * ta.input_bits

    t_local = ta.cycles_per_bit * kept / ta.local_cpu
    e_local = ta.kappa_local * ta.cycles_per_bit * kept * ta.local_cpu ** 2

    offl = lam > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        t_up = np.where(offl & (rate > 0), offloaded / np.where(rate > 0, rate, 1.0), np.inf)
        t_exe = np.where(offl & (alloc.edge_cpu > 0),
                         offloaded * ta.cycles_per_bit / np.where(alloc.edge_cpu > 0,
                                                                  alloc.edge_cpu, 1.0),
                         np.inf)
    t_offload = np.where(offl, t_up + t_exe, 0.0)
    e_uplink = np.where(offl, ta.max_tx_power * t_up, 0.0)
    e_edge = np.where(offl,
                      config.kappa_edge * ta.cycles_per_bit * offloaded * alloc.edge_cpu ** 2,
                      0.0)
    t_total = np.maximum(t_local, t_offload)
    return AllocationMetrics(rate=rate, t_local=t_local, t_offload=t_offload,
                             t_total=t_total, e_local=e_local, e_uplink=e_uplink,
                             e_edge=e_edge)


def _check_shapes(ta: TaskArrays, channel: ChannelState, alloc: Allocation,
                  config: SystemConfig) -> None:
    k, n = config.num_users, config.num_subcarriers
    if len(ta.input_bits) != k:
        raise ShapeMismatch(f"expected {k} tasks, got {len(ta.input_bits)}")
    if channel.gains.shape != (k, n):
        raise ShapeMismatch(f"gains shape {channel.gains.shape} != ({k}, {n})")
    if alloc.assignment.shape != (k, n):
        raise ShapeMismatch(f"assignment shape {alloc.assignment.shape} != ({k}, {n})")
    for name in ("offload_ratio", "edge_cpu", "rate_floor"):
        if getattr(alloc, name).shape != (k,):
            raise ShapeMismatch(f"{name} must have shape ({k},)")


def check_feasibility(tasks, channel: ChannelState, alloc: Allocation,
                      config: SystemConfig):
    """Evaluate every constraint; returns (feasible, violations with signed slack)."""
    ta = tasks if isinstance(tasks, TaskArrays) else TaskArrays.from_tasks(tasks)
    metrics = evaluate_allocation(ta, channel, alloc, config)
    violations = []
    lam = alloc.offload_ratio

    for k in range(config.num_users):
        if lam[k] < -LATENCY_TOL or lam[k] > 1.0 + LATENCY_TOL:
            slack = float(lam[k]) if lam[k] < 0 else float(1.0 - lam[k])
            violations.append(Violation(k, "ratio_range", slack))
        slack = float(ta.deadline[k] - metrics.t_total[k])
        if slack < -LATENCY_TOL:
            violations.append(Violation(k, "deadline", slack))
        if alloc.edge_cpu[k] < -CAPACITY_TOL:
            violations.append(Violation(k, "edge_cpu_nonnegative", float(alloc.edge_cpu[k])))
        phi = alloc.rate_floor[k]
        rate_tol = RATE_FLOOR_REL_TOL * max(metrics.rate[k], 1.0)
        if phi < -rate_tol:
            violations.append(Violation(k, "rate_floor_range", float(phi)))
        elif phi > metrics.rate[k] + rate_tol:
            violations.append(Violation(k, "rate_floor_range", float(metrics.rate[k] - phi)))

    cap_slack = float(config.edge_capacity - alloc.edge_cpu.sum())
    if cap_slack < -CAPACITY_TOL:
        violations.append(Violation(None, "edge_capacity", cap_slack))

    col = alloc.assignment.sum(axis=0)
    for n in np.nonzero(col > 1 + INDICATOR_TOL)[0]:
        violations.append(Violation(None, "subcarrier_exclusive", float(1 - col[n])))
    bad = (alloc.assignment != 0) & (alloc.assignment != 1)
    if bad.any():
        violations.append(Violation(None, "assignment_binary", -float(bad.sum())))

    return len(violations) == 0, violations


def build_report(tasks, channel: ChannelState, alloc: Allocation, config: SystemConfig,
                 trace=(), outer_iterations: int = 0) -> SolveReport:
    """Assemble the standard result payload for one allocation."""
    ta = tasks if isinstance(tasks, TaskArrays) else TaskArrays.from_tasks(tasks)
    metrics = evaluate_allocation(ta, channel, alloc, config)
    feasible, violations = check_feasibility(ta, channel, alloc, config)
    per_user = tuple(
        UserBreakdown(
            e_local=float(metrics.e_local[k]),
            e_uplink=float(metrics.e_uplink[k]),
            e_edge=float(metrics.e_edge[k]),
            t_local=float(metrics.t_local[k]),
            t_offload=float(metrics.t_offload[k]),
        )
        for k in range(config.num_users)
    )
    return SolveReport(
        total_energy=metrics.total_energy,
        per_user=per_user,
        feasible=feasible,
        violations=tuple(violations),
        trace=tuple(trace),
        allocation=alloc,
        outer_iterations=outer_iterations,
    )
