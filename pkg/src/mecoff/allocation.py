"""Dual-decomposition inner solver for edge CPU shares, subcarriers and rate floors.

With the offload ratios held fixed, the remaining problem couples users only
through the edge CPU budget and subcarrier exclusivity. Relaxing the offload
deadline (alpha), the rate floor (beta) and the CPU budget (gamma) makes the
inner minimization separable: the CPU share of each user solves a scalar
convex problem (bisection on the stationarity condition), each subcarrier is
awarded to the user with the lowest marginal cost, and the auxiliary rate
floor has a closed form clipped to its feasible interval. The multipliers
then move along the constraint residuals.

Projected subgradient ascent (``dual_sign="ascent"``) is the default; the
flipped-sign update some derivations print is available as
``dual_sign="paper"``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import DeadlineUnreachable, EmptyRate, NoFeasiblePrimal
from .model import (
    Allocation,
    ChannelState,
    SystemConfig,
    TaskArrays,
    check_feasibility,
    evaluate_allocation,
    rates_for_assignment,
)

# Offload-latency residuals are clipped to this many seconds before the
# multiplier step; an iterate with a zero CPU share has an infinite residual
# and would otherwise destroy the multiplier state in one update.
RESIDUAL_CLIP = 1e3

BISECT_MAX_ITER = 60


@dataclass(frozen=True)
class DualState:
    """Multipliers and their per-constraint step sizes."""

    alpha: np.ndarray          # (K,) offload-deadline multipliers
    beta: np.ndarray           # (K,) rate-floor multipliers
    gamma: float               # edge CPU budget multiplier
    step_alpha: np.ndarray     # (K,)
    step_beta: np.ndarray      # (K,)
    step_gamma: float
    iteration: int = 0

    def __post_init__(self):
        object.__setattr__(self, "alpha", np.asarray(self.alpha, dtype=float))
        object.__setattr__(self, "beta", np.asarray(self.beta, dtype=float))
        object.__setattr__(self, "step_alpha", np.asarray(self.step_alpha, dtype=float))
        object.__setattr__(self, "step_beta", np.asarray(self.step_beta, dtype=float))


@dataclass(frozen=True)
class DualTraceEntry:
    iteration: int
    lagrangian: float
    true_energy: float
    feasible: bool
    dual_delta: float


@dataclass(frozen=True)
class PsResult:
    """Outcome of one fixed-ratio dual solve."""

    allocation: Optional[Allocation]   # best feasible iterate, None if none found
    best_energy: float
    duals: DualState
    trace: tuple
    last_allocation: Allocation
    fallback_events: tuple             # (dual_iteration, user, kind)
    dual_iterations: int


def round_robin_assignment(num_users: int, num_subcarriers: int) -> np.ndarray:
    """Deterministic striped assignment used as the cold-start point."""
    x = np.zeros((num_users, num_subcarriers), dtype=np.int8)
    if num_users > 0:
        cols = np.arange(num_subcarriers)
        x[cols % num_users, cols] = 1
    return x


# ---------------------------------------------------------------------------
# edge CPU shares

def kkt_gradient(f, offload_ratio, input_bits, cycles_per_bit, alpha, gamma,
                 kappa_edge):
    """Derivative of the per-user Lagrangian term in the CPU share.

    The term is kappa*w*f^2 + alpha*w/f + gamma*f with w the offloaded cycle
    count, so the derivative is strictly increasing on f > 0.
    """
    w = offload_ratio * input_bits * cycles_per_bit
    return 2.0 * kappa_edge * w * f - alpha * w / np.square(f) + gamma


def bisect_edge_cpu(offload_ratio, alpha, gamma, ta: TaskArrays,
                    config: SystemConfig, resolution: float = 1e-5) -> np.ndarray:
    """Per-user CPU shares minimizing the relaxed objective over [0, F].

    The stationarity condition is strictly increasing, so bisection brackets
    the root; the upper bracket endpoint is returned so rounding lands on the
    faster (deadline-safe) side. Users keeping everything local, and users
    whose deadline multiplier has collapsed to zero, take no CPU.
    """
    lam = np.asarray(offload_ratio, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    cap = config.edge_capacity
    w = lam * ta.input_bits * ta.cycles_per_bit
    f = np.zeros(len(lam))
    active = (w > 0) & (alpha > 0)
    if not active.any():
        return f

    wa = w[active]
    aa = alpha[active]
    kappa = config.kappa_edge
    grad_cap = 2.0 * kappa * wa * cap - aa * wa / cap ** 2 + gamma
    lo = np.zeros(len(wa))
    hi = np.full(len(wa), cap)
    run = grad_cap > 0  # otherwise the minimum sits at the budget itself
    for _ in range(BISECT_MAX_ITER):
        if not run.any() or float(np.max(hi[run] - lo[run])) <= resolution:
            break
        mid = 0.5 * (lo + hi)
        g = 2.0 * kappa * wa * mid - aa * wa / np.square(mid) + gamma
        go_left = run & (g >= 0)
        go_right = run & (g < 0)
        hi[go_left] = mid[go_left]
        lo[go_right] = mid[go_right]
    out = np.where(run, hi, cap)
    f[active] = out
    return f


# ---------------------------------------------------------------------------
# subcarriers

def per_subcarrier_cost(ta: TaskArrays, channel: ChannelState, offload_ratio,
                        rate_floor, tx_power_per_subcarrier, beta) -> np.ndarray:
    """(K, N) marginal cost of awarding each subcarrier to each user.

    Holding a subcarrier buys rate (worth beta per bit/s) and costs transmit
    energy at the user's current per-subcarrier power and rate floor.
    """
    lam = np.asarray(offload_ratio, dtype=float)
    phi = np.asarray(rate_floor, dtype=float)
    p = np.asarray(tx_power_per_subcarrier, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        energy_part = np.where(lam > 0,
                               np.where(phi > 0, p * lam * ta.input_bits
                                        / np.where(phi > 0, phi, 1.0), np.inf),
                               0.0)
    rate_part = channel.bandwidth * np.asarray(beta)[:, None] * np.log1p(
        p[:, None] * channel.normalized_gains) / np.log(2.0)
    return energy_part[:, None] - rate_part


def assign_subcarriers(ta: TaskArrays, channel: ChannelState, offload_ratio,
                       rate_floor, prev_counts, beta,
                       config: SystemConfig) -> np.ndarray:
    """Award every subcarrier to its cheapest offloading user.

    Powers come from the previous iterate's subcarrier counts (an even split
    of the budget); a newly offloading user with no subcarriers yet is priced
    at an even N/K share. Ties go to the lowest user index. Users with ratio
    zero are excluded; with no offloading users nothing is assigned.
    """
    lam = np.asarray(offload_ratio, dtype=float)
    k, n = config.num_users, config.num_subcarriers
    x = np.zeros((k, n), dtype=np.int8)
    eligible = lam > 0
    if not eligible.any() or n == 0:
        return x
    counts = np.asarray(prev_counts, dtype=float)
    fallback = max(n // max(k, 1), 1)
    counts = np.where(counts >= 1, counts, fallback)
    p = ta.max_tx_power / counts
    cost = per_subcarrier_cost(ta, channel, lam, rate_floor, p, beta)
    cost[~eligible, :] = np.inf
    winner = np.argmin(cost, axis=0)
    x[winner, np.arange(n)] = 1
    return x


# ---------------------------------------------------------------------------
# rate floors

def solve_rate_floor(input_bits: float, cycles_per_bit: float, deadline: float,
                     offload_ratio: float, edge_cpu: float, rate: float,
                     tx_power_sum: float, alpha: float, beta: float,
                     user: int = 0) -> float:
    """Optimal auxiliary rate floor for one user at fixed CPU share and rate.

    The relaxed objective in the floor is (p + alpha)*lam*R/phi + beta*phi,
    minimized over the interval between the deadline-tight rate and the
    achieved rate. Outside corner cases the unconstrained stationary point is
    clipped to that interval.
    """
    lam = offload_ratio
    if lam <= 0:
        return rate
    if rate <= 0:
        raise EmptyRate(user)
    offloaded_bits = lam * input_bits
    denom = deadline * edge_cpu - offloaded_bits * cycles_per_bit
    if denom <= 0:
        raise DeadlineUnreachable(user, edge_cpu, offloaded_bits * cycles_per_bit,
                                  deadline)
    floor_tight = offloaded_bits * edge_cpu / denom
    if beta <= 0:
        return rate
    stationary = np.sqrt((tx_power_sum + alpha) * offloaded_bits / beta)
    if stationary < floor_tight:
        return float(floor_tight)
    if stationary <= rate:
        return float(stationary)
    return float(rate)


# ---------------------------------------------------------------------------
# Lagrangian

def omega_term(f, offload_ratio, input_bits, cycles_per_bit, alpha, gamma,
               kappa_edge) -> np.ndarray:
    """Per-user CPU-share part of the relaxed objective."""
    f = np.asarray(f, dtype=float)
    w = np.asarray(offload_ratio) * np.asarray(input_bits) * np.asarray(cycles_per_bit)
    quad = kappa_edge * w * np.square(f) + gamma * f
    with np.errstate(divide="ignore", invalid="ignore"):
        barrier = np.where(w * np.asarray(alpha) > 0,
                           np.where(f > 0, np.asarray(alpha) * w / np.where(f > 0, f, 1.0),
                                    np.inf),
                           0.0)
    return quad + barrier


def _latency_terms(ta: TaskArrays, lam, f, phi):
    offl = lam > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        t_up = np.where(offl,
                        np.where(phi > 0, lam * ta.input_bits / np.where(phi > 0, phi, 1.0),
                                 np.inf),
                        0.0)
        t_exe = np.where(offl,
                         np.where(f > 0,
                                  lam * ta.input_bits * ta.cycles_per_bit / np.where(f > 0, f, 1.0),
                                  np.inf),
                         0.0)
    return t_up, t_exe


def lagrangian(ta: TaskArrays, channel: ChannelState, config: SystemConfig,
               offload_ratio, f, assignment, rate_floor, duals: DualState) -> float:
    """Relaxed objective in its direct (constraint-residual) form."""
    lam = np.asarray(offload_ratio, dtype=float)
    f = np.asarray(f, dtype=float)
    phi = np.asarray(rate_floor, dtype=float)
    rates = rates_for_assignment(ta, channel, assignment)
    counts = assignment.sum(axis=1)
    p_sum = np.where(counts > 0, ta.max_tx_power, 0.0)

    kept = (1.0 - lam) * ta.input_bits
    e_local = ta.kappa_local * ta.cycles_per_bit * kept * ta.local_cpu ** 2
    t_up, t_exe = _latency_terms(ta, lam, f, phi)
    with np.errstate(invalid="ignore"):
        e_tx = np.where(p_sum > 0, p_sum * t_up, 0.0)
        e_edge = config.kappa_edge * ta.cycles_per_bit * lam * ta.input_bits * np.square(f)
        energy = float(np.sum(e_local + e_tx + e_edge))
        deadline_term = float(np.sum(np.where(duals.alpha > 0,
                                              duals.alpha * (t_up + t_exe - ta.deadline),
                                              0.0)))
    floor_term = float(np.sum(duals.beta * (phi - rates)))
    budget_term = duals.gamma * (float(np.sum(f)) - config.edge_capacity)
    return energy + deadline_term + floor_term + budget_term


def lagrangian_decomposed(ta: TaskArrays, channel: ChannelState, config: SystemConfig,
                          offload_ratio, f, assignment, rate_floor,
                          duals: DualState) -> float:
    """Same value regrouped into per-subcarrier costs plus per-user terms."""
    lam = np.asarray(offload_ratio, dtype=float)
    f = np.asarray(f, dtype=float)
    phi = np.asarray(rate_floor, dtype=float)
    counts = assignment.sum(axis=1)
    p = np.divide(ta.max_tx_power, counts, out=np.zeros(len(counts)), where=counts > 0)
    cost = per_subcarrier_cost(ta, channel, lam, phi, p, duals.beta)
    per_n = float(np.sum(np.where(assignment > 0, cost, 0.0)))
    kept = (1.0 - lam) * ta.input_bits
    e_local = ta.kappa_local * ta.cycles_per_bit * kept * ta.local_cpu ** 2
    t_up, _ = _latency_terms(ta, lam, f, phi)
    omega = omega_term(f, lam, ta.input_bits, ta.cycles_per_bit, duals.alpha,
                       duals.gamma, config.kappa_edge)
    per_user = float(np.sum(e_local + duals.alpha * t_up + duals.beta * phi + omega
                            - duals.alpha * ta.deadline))
    return per_n + per_user - duals.gamma * config.edge_capacity


# ---------------------------------------------------------------------------
# multiplier updates

def update_duals(duals: DualState, res_alpha, res_beta, res_gamma: float,
                 sign: str = "ascent") -> DualState:
    """Projected subgradient step along the constraint residuals.

    "ascent" moves each multiplier up its residual; "paper" applies the
    flipped sign some derivations print. Offload-latency residuals are
    clipped so a degenerate iterate cannot blow up the state.
    """
    if sign not in ("ascent", "paper"):
        raise ValueError(f"unknown dual update sign convention: {sign!r}")
    s = 1.0 if sign == "ascent" else -1.0
    ra = np.nan_to_num(np.asarray(res_alpha, dtype=float), nan=0.0,
                       posinf=RESIDUAL_CLIP, neginf=-RESIDUAL_CLIP)
    ra = np.clip(ra, -RESIDUAL_CLIP, RESIDUAL_CLIP)
    alpha = np.maximum(duals.alpha + s * duals.step_alpha * ra, 0.0)
    beta = np.maximum(duals.beta + s * duals.step_beta * np.asarray(res_beta, dtype=float), 0.0)
    gamma = max(duals.gamma + s * duals.step_gamma * float(res_gamma), 0.0)
    return replace(duals, alpha=alpha, beta=beta, gamma=gamma,
                   iteration=duals.iteration + 1)


def dual_delta(old: DualState, new: DualState) -> float:
    """Largest relative change across all multipliers."""
    deltas = []
    for a, b in ((old.alpha, new.alpha), (old.beta, new.beta),
                 (np.atleast_1d(old.gamma), np.atleast_1d(new.gamma))):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-300)
        deltas.append(float(np.max(np.abs(b - a) / denom)))
    return max(deltas)


def make_default_duals(ta: TaskArrays, channel: ChannelState, config: SystemConfig,
                       alpha0=None, beta0=None, gamma0: float = 0.0,
                       step_alpha=None, step_beta=None,
                       step_gamma=None) -> DualState:
    """Multiplier warm start and step sizes scaled to the instance.

    Both are sized from the CPU share that would just meet the deadline at
    full offload under striped subcarriers: multipliers start at their
    stationarity values for that share (alpha = 2*kappa*f^3, beta at the
    shadow price of rate), and steps are damped fractions of the move that
    would shift the multiplier by its own magnitude per unit of typical
    residual, so the subcarrier competition walks through split assignments
    instead of leaping between winner-take-all states.
    """
    cap = config.edge_capacity
    kappa = config.kappa_edge
    x0 = round_robin_assignment(config.num_users, config.num_subcarriers)
    r0 = rates_for_assignment(ta, channel, x0)

    work = ta.input_bits * ta.cycles_per_bit
    slack = ta.deadline - ta.input_bits / np.maximum(r0, 1e-300)
    f_ref = np.where((slack > 0) & (r0 > 0), work / np.maximum(slack, 1e-300), cap)
    f_ref = np.minimum(f_ref, cap)

    if alpha0 is None:
        alpha_init = 2.0 * kappa * f_ref ** 3
    else:
        alpha_init = np.full(config.num_users, float(alpha0))
    if beta0 is None:
        # shadow price of rate at full offload: subcarriers are then
        # awarded by their actual marginal energy value
        beta_init = np.where(r0 > 0,
                             (ta.max_tx_power + alpha_init) * ta.input_bits
                             / np.maximum(r0, 1e-300) ** 2,
                             1e-6)
    else:
        beta_init = np.full(config.num_users, float(beta0))

    if step_alpha is None:
        sa = 0.1 * 2.0 * kappa * f_ref ** 4 / work
    else:
        sa = np.full(config.num_users, float(step_alpha))
    if step_beta is None:
        sb = 0.05 * (2.0 * kappa * f_ref ** 3 + ta.max_tx_power) * ta.input_bits \
            / np.maximum(r0, 1.0) ** 3
    else:
        sb = np.full(config.num_users, float(step_beta))
    if step_gamma is None:
        sg = kappa / float(np.sum(1.0 / work)) if config.num_users else kappa
    else:
        sg = float(step_gamma)

    return DualState(alpha=alpha_init, beta=beta_init, gamma=float(gamma0),
                     step_alpha=sa, step_beta=sb, step_gamma=sg, iteration=0)


# ---------------------------------------------------------------------------
# fixed-ratio solve

def solve_allocation(tasks, channel: ChannelState, config: SystemConfig,
                     offload_ratio, duals: DualState, init_alloc: Allocation = None,
                     sweep_max: int = 200, dual_max: int = 600,
                     precision: float = 1e-5, bisect_epsilon: float = 1e-5,
                     dual_sign: str = "ascent") -> PsResult:
    """Minimize energy over CPU shares, subcarriers and rate floors at fixed ratios.

    Alternates block sweeps (CPU shares, then subcarriers, then rate floors)
    until the relaxed objective settles, then steps the multipliers; repeats
    until the multipliers settle. Every iterate is scored by its true energy
    and feasibility, and the best feasible one is returned, so a wandering
    dual trajectory cannot discard a good allocation it passed through.

    Per-user corner cases inside a sweep fall back instead of aborting: a user
    whose deadline is unreachable at the current CPU share keeps the achieved
    rate as its floor, and a user with no rate keeps the floor that would just
    meet the deadline; both leave the iterate infeasible and are recorded.
    """
    ta = tasks if isinstance(tasks, TaskArrays) else TaskArrays.from_tasks(tasks)
    lam = np.asarray(offload_ratio, dtype=float)
    cap = config.edge_capacity

    if init_alloc is None:
        x = round_robin_assignment(config.num_users, config.num_subcarriers)
        f = np.full(config.num_users, cap / max(config.num_users, 1))
        phi = rates_for_assignment(ta, channel, x)
    else:
        x = init_alloc.assignment.copy()
        f = init_alloc.edge_cpu.copy()
        phi = init_alloc.rate_floor.copy()
    rates = rates_for_assignment(ta, channel, x)
    deadline_floor = lam * ta.input_bits / ta.deadline
    phi = np.where((lam > 0) & (phi <= 0), np.where(rates > 0, rates, deadline_floor), phi)

    best_alloc = None
    best_energy = np.inf
    last_violations = ()

    def consider(cand: Allocation):
        nonlocal best_alloc, best_energy, last_violations
        metrics = evaluate_allocation(ta, channel, cand, config)
        feasible, violations = check_feasibility(ta, channel, cand, config)
        last_violations = violations
        energy = metrics.total_energy
        if feasible and energy < best_energy:
            best_alloc = cand
            best_energy = energy
        return energy, feasible

    consider(Allocation(lam.copy(), f.copy(), x.copy(), phi.copy()))

    fallback_events = []
    trace = []
    d = duals
    cand = None
    for it in range(dual_max):
        l_prev = None
        seen_assignments = set()
        for _ in range(sweep_max):
            f = bisect_edge_cpu(lam, d.alpha, d.gamma, ta, config,
                                resolution=bisect_epsilon)
            x = assign_subcarriers(ta, channel, lam, phi, x.sum(axis=1), d.beta, config)
            rates = rates_for_assignment(ta, channel, x)
            counts = x.sum(axis=1)
            p_sum = np.where(counts > 0, ta.max_tx_power, 0.0)
            phi_new = np.empty(config.num_users)
            for k in range(config.num_users):
                if lam[k] <= 0:
                    phi_new[k] = rates[k]
                    continue
                try:
                    phi_new[k] = solve_rate_floor(
                        ta.input_bits[k], ta.cycles_per_bit[k], ta.deadline[k],
                        lam[k], f[k], rates[k], p_sum[k], d.alpha[k], d.beta[k],
                        user=k)
                except DeadlineUnreachable:
                    phi_new[k] = rates[k]
                    fallback_events.append((it, k, "deadline_unreachable"))
                except EmptyRate:
                    phi_new[k] = deadline_floor[k]
                    fallback_events.append((it, k, "empty_rate"))
            phi = phi_new
            cand = Allocation(lam.copy(), f.copy(), x.copy(), phi.copy())
            energy, feasible = consider(cand)
            l_now = lagrangian(ta, channel, config, lam, f, x, phi, d)
            if l_prev is not None:
                both_bad = not np.isfinite(l_now) and not np.isfinite(l_prev)
                if both_bad:
                    break
                if np.isfinite(l_now) and np.isfinite(l_prev) \
                        and abs(l_now - l_prev) <= precision * max(abs(l_prev), 1.0):
                    break
            key = x.tobytes()
            if key in seen_assignments:
                # assignment revisited at fixed multipliers: the sweep map is
                # cycling, further sweeps replay the same states
                break
            seen_assignments.add(key)
            l_prev = l_now

        with np.errstate(divide="ignore", invalid="ignore"):
            t_up, t_exe = _latency_terms(ta, lam, f, phi)
        res_alpha = t_up + t_exe - ta.deadline
        res_beta = phi - rates
        res_gamma = float(np.sum(f)) - cap
        d_new = update_duals(d, res_alpha, res_beta, res_gamma, sign=dual_sign)
        delta = dual_delta(d, d_new)
        trace.append(DualTraceEntry(iteration=it, lagrangian=l_now, true_energy=energy,
                                    feasible=feasible, dual_delta=delta))
        d = d_new
        if delta < precision:
            break

    if best_alloc is None:
        users = sorted({u for _, u, _ in fallback_events})
        raise NoFeasiblePrimal(
            "no feasible allocation found at the given offload ratios",
            context={
                "fallback_users": users,
                "fallback_events": tuple(fallback_events),
                "last_violations": tuple(last_violations),
            },
        )
    return PsResult(
        allocation=best_alloc,
        best_energy=best_energy,
        duals=d,
        trace=tuple(trace),
        last_allocation=cand if cand is not None else best_alloc,
        fallback_events=tuple(fallback_events),
        dual_iterations=len(trace),
    )
