"""Closed-form offload-ratio step.

With rate, edge CPU share and subcarriers held fixed, each user's energy is
affine in the offload ratio, so the minimum sits at whichever end of the
feasible interval the constant gradient points away from.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleUser
from .model import UserTask


@dataclass(frozen=True)
class RatioBounds:
    lower: float
    upper: float

    @property
    def feasible(self) -> bool:
        return self.lower <= self.upper


def ratio_bounds(task: UserTask, rate: float, edge_cpu: float, slot: float) -> RatioBounds:
    """Feasible ratio interval under the deadline.

    Lower bound: the local path must finish by the deadline, which caps how
    much work may stay local. Upper bound: the offload path (uplink plus edge
    execution) must finish by the deadline. A user with no rate or no edge CPU
    can only keep ratio zero on the upper side.
    """
    r_bits = task.input_bits
    c = task.cycles_per_bit
    lower = max(1.0 - slot * task.local_cpu / (c * r_bits), 0.0)
    if rate <= 0.0 or edge_cpu <= 0.0:
        upper = 0.0
    else:
        upper = min(slot * rate * edge_cpu / (r_bits * edge_cpu + rate * r_bits * c), 1.0)
    return RatioBounds(lower=lower, upper=upper)


def energy_gradient(task: UserTask, rate: float, edge_cpu: float, kappa_edge: float) -> float:
    """d(total energy)/d(ratio); constant because the energy is affine in the ratio."""
    r_bits = task.input_bits
    c = task.cycles_per_bit
    local_part = -task.kappa_local * c * r_bits * task.local_cpu ** 2
    tx_part = task.max_tx_power * r_bits / rate if rate > 0 else np.inf
    edge_part = kappa_edge * c * r_bits * edge_cpu ** 2
    return local_part + tx_part + edge_part


def solve_ratio(task: UserTask, rate: float, edge_cpu: float, kappa_edge: float,
                slot: float, user: int = 0) -> float:
    """Energy-optimal offload ratio at fixed rate and edge CPU share.

    Raises InfeasibleUser when no ratio meets the deadline, carrying the
    crossing bounds so the caller can decide what capacity would help.
    """
    bounds = ratio_bounds(task, rate, edge_cpu, slot)
    if not bounds.feasible:
        raise InfeasibleUser(user, bounds.lower, bounds.upper)
    if rate <= 0.0 or edge_cpu <= 0.0:
        # only ratio 0 is offload-feasible; bounds already collapsed onto it
        return bounds.upper
    grad = energy_gradient(task, rate, edge_cpu, kappa_edge)
    return bounds.lower if grad >= 0.0 else bounds.upper
