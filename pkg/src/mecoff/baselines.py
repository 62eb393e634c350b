"""Reference schemes and an exhaustive oracle for small instances.

The local-only and fixed-ratio schemes mirror the standard comparison
baselines; the oracle enumerates every subcarrier assignment and grids the
continuous variables, giving a ground-truth lower envelope (up to grid
resolution) on instances small enough to enumerate.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .allocation import round_robin_assignment
from .errors import InfeasibleUser, NoFeasiblePrimal, TooLarge
from .model import (
    CAPACITY_TOL,
    Allocation,
    ChannelState,
    SolveReport,
    SystemConfig,
    TaskArrays,
    build_report,
    check_feasibility,
    evaluate_allocation,
    rates_for_assignment,
)
from .ratio import ratio_bounds

ORACLE_MAX_USERS = 3
ORACLE_MAX_SUBCARRIERS = 4


def solve_local_only(tasks, channel: ChannelState, config: SystemConfig) -> SolveReport:
    """Everything computed on-device: no offloading, no edge resources.

    Deadline misses are reported as violations, not raised; the scheme has no
    knob to fix them with.
    """
    k = config.num_users
    alloc = Allocation(
        offload_ratio=np.zeros(k),
        edge_cpu=np.zeros(k),
        assignment=np.zeros((k, config.num_subcarriers), dtype=np.int8),
        rate_floor=np.zeros(k),
    )
    return build_report(tasks, channel, alloc, config)


def _deadline_tight_cpu(bits, cycles, rate, ratio, slot):
    """CPU share making the offload path exactly meet the deadline; inf if none."""
    if ratio <= 0:
        return 0.0
    if rate <= 0:
        return np.inf
    margin = slot - ratio * bits / rate
    if margin <= 0:
        return np.inf
    return ratio * bits * cycles / margin


def solve_fixed_ratio(tasks, channel: ChannelState, config: SystemConfig,
                      target: float = 0.5) -> SolveReport:
    """Same target offload ratio for everyone, clamped to what deadlines allow.

    Subcarriers go round-robin. Edge CPU is priced at the target ratio: the
    capacity that would make every user deadline-tight at the target (or the
    full budget, whichever is smaller) is split in proportion to offloaded
    cycles, and each user's ratio is then clamped into its feasible interval
    at the granted share.
    """
    tasks = list(tasks)
    ta = TaskArrays.from_tasks(tasks)
    k = config.num_users
    x = round_robin_assignment(k, config.num_subcarriers)
    rates = rates_for_assignment(ta, channel, x)

    weights = target * ta.cycles_per_bit * ta.input_bits
    need = 0.0
    for i in range(k):
        tight = _deadline_tight_cpu(ta.input_bits[i], ta.cycles_per_bit[i],
                                    rates[i], target, ta.deadline[i])
        if np.isfinite(tight):
            need += tight
    total = float(np.sum(weights))
    if total > 0:
        f = min(need, config.edge_capacity) * weights / total
    else:
        f = np.zeros(k)

    lam = np.zeros(k)
    for i in range(k):
        bounds = ratio_bounds(tasks[i], float(rates[i]), float(f[i]),
                              tasks[i].deadline)
        if not bounds.feasible:
            raise InfeasibleUser(i, bounds.lower, bounds.upper)
        lam[i] = min(max(target, bounds.lower), bounds.upper)

    alloc = Allocation(offload_ratio=lam, edge_cpu=f, assignment=x,
                       rate_floor=rates)
    return build_report(ta, channel, alloc, config)


# ---------------------------------------------------------------------------
# exhaustive oracle

@dataclass(frozen=True)
class OracleGrids:
    ratio_step: float = 0.02
    cpu_step: Optional[float] = None   # None: edge_capacity / 50

    def ratio_grid(self) -> np.ndarray:
        if not 0 < self.ratio_step <= 0.02:
            raise ValueError("ratio_step must be in (0, 0.02]")
        points = int(round(1.0 / self.ratio_step))
        return np.linspace(0.0, 1.0, points + 1)

    def cpu_grid(self, edge_capacity: float) -> np.ndarray:
        step = self.cpu_step if self.cpu_step is not None else edge_capacity / 50
        if not 0 < step <= edge_capacity / 50:
            raise ValueError("cpu_step must be in (0, edge_capacity/50]")
        points = int(round(edge_capacity / step))
        return np.linspace(0.0, edge_capacity, points + 1)


@dataclass(frozen=True)
class OracleResult:
    best_energy: float
    best_allocation: Allocation
    grid_resolution: tuple       # (ratio step, cpu step)
    instances_enumerated: int
    feasible_count: int          # assignments admitting a feasible point


def _user_candidates(ta: TaskArrays, i: int, rate: float, lam_grid, f_grid,
                     kappa_edge: float):
    """Feasible (ratio, minimal grid CPU, energy) triples for one user.

    Energy rises with the CPU share, so only the smallest feasible grid share
    matters per ratio.
    """
    bits = ta.input_bits[i]
    cycles = ta.cycles_per_bit[i]
    slot = ta.deadline[i]
    cap = f_grid[-1]
    out = []
    for lam in lam_grid:
        t_local = cycles * (1.0 - lam) * bits / ta.local_cpu[i]
        if t_local > slot:
            continue
        e_local = ta.kappa_local[i] * cycles * (1.0 - lam) * bits * ta.local_cpu[i] ** 2
        if lam <= 0:
            out.append((0.0, 0.0, e_local))
            continue
        tight = _deadline_tight_cpu(bits, cycles, rate, lam, slot)
        if not np.isfinite(tight) or tight > cap:
            continue
        idx = int(np.searchsorted(f_grid, tight, side="left"))
        if idx >= len(f_grid):
            continue
        f = float(f_grid[idx])
        if lam * bits / rate + lam * bits * cycles / f > slot * (1 + 1e-12):
            idx += 1
            if idx >= len(f_grid):
                continue
            f = float(f_grid[idx])
        e_off = ta.max_tx_power[i] * lam * bits / rate \
            + kappa_edge * cycles * lam * bits * f * f
        out.append((float(lam), f, e_local + e_off))
    return out


def solve_oracle(tasks, channel: ChannelState, config: SystemConfig,
                 grids: OracleGrids = None) -> OracleResult:
    """Global grid minimum over assignments, ratios and CPU shares.

    Every subcarrier goes to one user or stays unassigned; ratios and CPU
    shares range over uniform grids (per-ratio CPU reduced to the smallest
    feasible grid point, which is optimal since energy rises with the share).
    Ties prefer the lexicographically smallest assignment.
    """
    if grids is None:
        grids = OracleGrids()
    tasks = list(tasks)
    ta = TaskArrays.from_tasks(tasks)
    k, n = config.num_users, config.num_subcarriers
    if k > ORACLE_MAX_USERS or n > ORACLE_MAX_SUBCARRIERS:
        raise TooLarge(
            f"oracle limited to {ORACLE_MAX_USERS} users x "
            f"{ORACLE_MAX_SUBCARRIERS} subcarriers, got {k} x {n}")
    lam_grid = grids.ratio_grid()
    f_grid = grids.cpu_grid(config.edge_capacity)
    cap = config.edge_capacity

    best_energy = np.inf
    best = None
    feasible_count = 0
    enumerated = 0
    for owners in itertools.product(range(k + 1), repeat=n):
        enumerated += 1
        x = np.zeros((k, n), dtype=np.int8)
        for sub, owner in enumerate(owners):
            if owner > 0:
                x[owner - 1, sub] = 1
        rates = rates_for_assignment(ta, channel, x)
        cands = [_user_candidates(ta, i, float(rates[i]), lam_grid, f_grid,
                                  config.kappa_edge)
                 for i in range(k)]
        if any(len(c) == 0 for c in cands):
            continue

        pick = [min(c, key=lambda t: t[2]) for c in cands]
        if sum(p[1] for p in pick) > cap + CAPACITY_TOL:
            combo = _best_capacity_limited(cands, cap)
            if combo is None:
                continue
            pick = combo
        feasible_count += 1
        energy = sum(p[2] for p in pick)
        if energy < best_energy:
            best_energy = energy
            best = Allocation(
                offload_ratio=np.array([p[0] for p in pick]),
                edge_cpu=np.array([p[1] for p in pick]),
                assignment=x,
                rate_floor=rates.copy(),
            )
    if best is None:
        raise NoFeasiblePrimal(
            "oracle found no feasible point on the grid",
            context={"assignments": enumerated,
                     "ratio_points": len(lam_grid), "cpu_points": len(f_grid)},
        )
    return OracleResult(
        best_energy=float(best_energy),
        best_allocation=best,
        grid_resolution=(float(lam_grid[1] - lam_grid[0]),
                         float(f_grid[1] - f_grid[0])),
        instances_enumerated=enumerated,
        feasible_count=feasible_count,
    )


def _best_capacity_limited(cands, cap):
    """Cheapest per-user candidate combination with shares summing under cap."""
    best_energy = np.inf
    best = None
    for combo in itertools.product(*cands):
        if sum(c[1] for c in combo) > cap + CAPACITY_TOL:
            continue
        energy = sum(c[2] for c in combo)
        if energy < best_energy:
            best_energy = energy
            best = list(combo)
    return best


def grid_rounding_gap(tasks, channel: ChannelState, config: SystemConfig,
                      allocation: Allocation, grids: OracleGrids = None) -> float:
    """Bound on how far a continuous allocation can undercut the oracle grid.

    Snaps each ratio to its two neighboring grid points and each CPU share up
    to the next grid points, and returns the energy increase of the best
    feasible snapped variant. Infinite when no snapped variant is feasible.
    """
    if grids is None:
        grids = OracleGrids()
    ta = TaskArrays.from_tasks(list(tasks))
    lam_grid = grids.ratio_grid()
    f_grid = grids.cpu_grid(config.edge_capacity)
    base = evaluate_allocation(ta, channel, allocation, config).total_energy

    per_user_lam = []
    per_user_f = []
    for i in range(config.num_users):
        lam = allocation.offload_ratio[i]
        j = int(np.searchsorted(lam_grid, lam, side="left"))
        lows = {float(lam_grid[max(j - 1, 0)]), float(lam_grid[min(j, len(lam_grid) - 1)])}
        per_user_lam.append(sorted(lows))
        f = allocation.edge_cpu[i]
        j = int(np.searchsorted(f_grid, f, side="left"))
        ups = {float(f_grid[min(j, len(f_grid) - 1)]),
               float(f_grid[min(j + 1, len(f_grid) - 1)])}
        per_user_f.append(sorted(ups))

    best = np.inf
    for lam_combo in itertools.product(*per_user_lam) if per_user_lam else [()]:
        for f_combo in itertools.product(*per_user_f) if per_user_f else [()]:
            cand = Allocation(
                offload_ratio=np.array(lam_combo, dtype=float),
                edge_cpu=np.array(f_combo, dtype=float),
                assignment=allocation.assignment,
                rate_floor=allocation.rate_floor,
            )
            feasible, _ = check_feasibility(ta, channel, cand, config)
            if feasible:
                energy = evaluate_allocation(ta, channel, cand, config).total_energy
                best = min(best, energy)
    return max(best - base, 0.0)
