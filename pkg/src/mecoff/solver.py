"""Outer loop: alternate the closed-form ratio step with the dual inner solve.

The two blocks pass state through the allocation: the ratio step reads each
user's achieved rate and CPU share from the best feasible allocation found so
far, and the dual solve runs at the new ratios, warm-started from the same
allocation. Multipliers persist across outer iterations; resetting them would
throw away the coordination the inner solve already paid for.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .allocation import (
    DualState,
    make_default_duals,
    round_robin_assignment,
    solve_allocation,
)
from .errors import InfeasibleInstance, InfeasibleUser
from .model import (
    Allocation,
    ChannelState,
    SolveReport,
    SystemConfig,
    TaskArrays,
    UserTask,
    build_report,
    check_feasibility,
    evaluate_allocation,
    rates_for_assignment,
)
from .ratio import solve_ratio


@dataclass(frozen=True)
class SolveSchedule:
    """Iteration budgets, tolerances and multiplier overrides.

    Multiplier fields left as None are auto-scaled to the instance; see
    make_default_duals.
    """

    outer_max: int = 600
    dual_max: int = 600
    sweep_max: int = 200
    precision: float = 1e-5
    bisect_epsilon: float = 1e-5
    dual_sign: str = "ascent"
    alpha0: Optional[float] = None
    beta0: Optional[float] = None
    gamma0: float = 0.0
    step_alpha: Optional[float] = None
    step_beta: Optional[float] = None
    step_gamma: Optional[float] = None


@dataclass(frozen=True)
class OuterTraceEntry:
    iteration: int
    best_energy: float
    inner_energy: float
    dual_iterations: int
    granted_users: tuple


def _minimal_feasible_cpu(task: UserTask, rate: float, lower: float,
                          slot: float) -> Optional[float]:
    """Smallest CPU share whose offload bound reaches the mandatory ratio.

    None when even unlimited CPU cannot: the uplink alone is too slow for the
    share that must leave the device.
    """
    if lower <= 0:
        return 0.0
    margin = slot * rate - lower * task.input_bits
    if margin <= 0 or rate <= 0:
        return None
    return lower * rate * task.input_bits * task.cycles_per_bit / margin


def _ratio_step(ta: TaskArrays, tasks, rates, edge_cpu, offload_ratio,
                config: SystemConfig):
    """Closed-form ratio update, granting idle CPU to users the bounds exclude.

    Users are visited in index order; when the feasible ratio interval is
    empty at a user's current share, the user is granted the smallest share
    that opens the interval, drawn from capacity not committed to offloading
    users. Exhausting that reserve makes the instance infeasible.
    """
    k_users = config.num_users
    new_lam = np.zeros(k_users)
    new_f = np.asarray(edge_cpu, dtype=float).copy()
    committed = float(np.sum(new_f[np.asarray(offload_ratio) > 0]))
    granted = []
    for k in range(k_users):
        task = tasks[k]
        try:
            new_lam[k] = solve_ratio(task, float(rates[k]), float(new_f[k]),
                                     config.kappa_edge, task.deadline, user=k)
            continue
        except InfeasibleUser as exc:
            own = float(new_f[k]) if offload_ratio[k] > 0 else 0.0
            available = max(config.edge_capacity - committed + own, 0.0)
            need = _minimal_feasible_cpu(task, float(rates[k]), exc.lower,
                                         task.deadline)
            if need is None or need > available:
                raise InfeasibleInstance(k, exc.lower, exc.upper) from exc
            trial = min(need * (1.0 + 1e-6), available)
            try:
                new_lam[k] = solve_ratio(task, float(rates[k]), trial,
                                         config.kappa_edge, task.deadline, user=k)
            except InfeasibleUser as exc2:
                raise InfeasibleInstance(k, exc2.lower, exc2.upper) from exc2
            new_f[k] = trial
            committed += trial - own
            granted.append(k)
    return new_lam, new_f, tuple(granted)


def solve(tasks, channel: ChannelState, config: SystemConfig,
          schedule: SolveSchedule = None) -> SolveReport:
    """Joint ratio / CPU / subcarrier optimization for one instance.

    Starts everyone local with striped subcarriers and an even CPU split,
    then alternates the ratio step and the dual inner solve until the best
    feasible energy stops improving. The returned allocation is the best
    feasible iterate seen anywhere in the run.
    """
    if schedule is None:
        schedule = SolveSchedule()
    tasks = list(tasks)
    ta = TaskArrays.from_tasks(tasks)
    k_users = config.num_users

    x = round_robin_assignment(k_users, config.num_subcarriers)
    f = np.full(k_users, config.edge_capacity / max(k_users, 1))
    lam = np.zeros(k_users)
    rates = rates_for_assignment(ta, channel, x)
    phi = rates.copy()

    duals = make_default_duals(
        ta, channel, config,
        alpha0=schedule.alpha0, beta0=schedule.beta0, gamma0=schedule.gamma0,
        step_alpha=schedule.step_alpha, step_beta=schedule.step_beta,
        step_gamma=schedule.step_gamma)

    best_alloc = None
    best_energy = np.inf

    def consider(cand: Allocation):
        nonlocal best_alloc, best_energy
        feasible, _ = check_feasibility(ta, channel, cand, config)
        if feasible:
            energy = evaluate_allocation(ta, channel, cand, config).total_energy
            if energy < best_energy:
                best_alloc = cand
                best_energy = energy

    consider(Allocation(lam.copy(), f.copy(), x.copy(), phi.copy()))

    trace = []
    outer = 0
    prev_best = np.inf
    for outer in range(1, schedule.outer_max + 1):
        lam, f, granted = _ratio_step(ta, tasks, rates, f, lam, config)
        entering = Allocation(lam.copy(), f.copy(), x.copy(),
                              np.minimum(phi, rates))
        consider(entering)

        ps = solve_allocation(
            ta, channel, config, lam, duals, init_alloc=entering,
            sweep_max=schedule.sweep_max, dual_max=schedule.dual_max,
            precision=schedule.precision, bisect_epsilon=schedule.bisect_epsilon,
            dual_sign=schedule.dual_sign)
        duals = ps.duals
        consider(ps.allocation)

        # next ratio step reads rates and shares from the best feasible point
        x = ps.allocation.assignment
        f = ps.allocation.edge_cpu
        lam = ps.allocation.offload_ratio
        phi = ps.allocation.rate_floor
        rates = rates_for_assignment(ta, channel, x)

        trace.append(OuterTraceEntry(iteration=outer, best_energy=best_energy,
                                     inner_energy=ps.best_energy,
                                     dual_iterations=ps.dual_iterations,
                                     granted_users=granted))
        if np.isfinite(prev_best) and abs(best_energy - prev_best) \
                <= schedule.precision * max(abs(prev_best), 1e-30):
            break
        prev_best = best_energy

    return build_report(ta, channel, best_alloc, config, trace=tuple(trace),
                        outer_iterations=outer)
