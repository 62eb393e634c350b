"""Randomized instance generation and scenario-file parsing.

Users are dropped uniformly over a disk around the server, channels are
Rayleigh-faded inverse-square path loss, and task parameters are drawn
uniformly from their configured ranges. Everything is deterministic given the
seed: draws happen in a fixed order (distances, fading, input bits, cycle
counts, local CPU speeds).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import yaml

from .errors import BadSpec
from .model import ChannelState, SystemConfig, UserTask


def dbm_to_watts(value: float) -> float:
    return 10.0 ** ((value - 30.0) / 10.0)


DEFAULT_MAX_TX_POWER = dbm_to_watts(27.8)


@dataclass(frozen=True)
class ScenarioSpec:
    """Parameters of one randomized instance family."""

    num_users: int
    num_subcarriers: int
    radius: float = 30.0                      # meters
    slot_length: float = 2e-3                 # seconds, also every user's deadline
    edge_capacity: float = 1e10               # cycles/s
    local_cpu_range: tuple = (0.6e9, 0.7e9)   # cycles/s
    input_bits_range: tuple = (1000.0, 1500.0)
    cycles_per_bit_range: tuple = (1000.0, 1200.0)
    max_tx_power: float = DEFAULT_MAX_TX_POWER  # watts
    noise_power: float = 1e-13                # watts per subcarrier
    bandwidth: float = 12.5e3                 # Hz per subcarrier
    kappa_local: float = 1e-24
    kappa_edge: float = 1e-26
    fading: str = "power"                     # "power" (unit-mean Exp) or "amplitude"
    min_distance: float = 1.0                 # meters, keeps d^-2 bounded
    rng_seed: int = 0

    def validate(self) -> None:
        if self.num_users < 0 or self.num_subcarriers < 0:
            raise BadSpec("num_users and num_subcarriers must be nonnegative")
        if self.radius <= 0:
            raise BadSpec("radius must be positive")
        if not 0 < self.min_distance < self.radius:
            raise BadSpec("min_distance must lie strictly between 0 and radius")
        for name in ("slot_length", "edge_capacity", "max_tx_power", "noise_power",
                     "bandwidth", "kappa_local", "kappa_edge"):
            if getattr(self, name) <= 0:
                raise BadSpec(f"{name} must be positive")
        for name in ("local_cpu_range", "input_bits_range", "cycles_per_bit_range"):
            rng = getattr(self, name)
            if len(rng) != 2 or rng[0] > rng[1] or rng[0] <= 0:
                raise BadSpec(f"{name} must be a nonempty positive (low, high) range")
        if self.fading not in ("power", "amplitude"):
            raise BadSpec("fading must be 'power' or 'amplitude'")


@dataclass(frozen=True)
class Instance:
    tasks: tuple
    channel: ChannelState
    config: SystemConfig
    distances: np.ndarray


def generate(spec: ScenarioSpec) -> Instance:
    """Draw one instance. Identical seeds give identical instances."""
    spec.validate()
    rng = np.random.default_rng(spec.rng_seed)
    k, n = spec.num_users, spec.num_subcarriers

    # uniform over the annulus area between min_distance and radius
    u = rng.random(k)
    d = np.sqrt(u * (spec.radius ** 2 - spec.min_distance ** 2)
                + spec.min_distance ** 2)

    if spec.fading == "power":
        beta = rng.exponential(1.0, size=(k, n))
    else:
        beta = rng.rayleigh(scale=math.sqrt(2.0 / math.pi), size=(k, n))
    gains = beta / np.square(d)[:, None] if k else np.zeros((0, n))

    bits = rng.uniform(*spec.input_bits_range, size=k)
    cycles = rng.uniform(*spec.cycles_per_bit_range, size=k)
    local_cpu = rng.uniform(*spec.local_cpu_range, size=k)

    tasks = tuple(
        UserTask(
            input_bits=float(bits[i]),
            cycles_per_bit=float(cycles[i]),
            deadline=spec.slot_length,
            local_cpu=float(local_cpu[i]),
            max_tx_power=spec.max_tx_power,
            kappa_local=spec.kappa_local,
        )
        for i in range(k)
    )
    channel = ChannelState(gains=gains, noise_power=spec.noise_power,
                           bandwidth=spec.bandwidth)
    config = SystemConfig(edge_capacity=spec.edge_capacity,
                          kappa_edge=spec.kappa_edge,
                          slot_length=spec.slot_length,
                          num_subcarriers=n, num_users=k)
    return Instance(tasks=tasks, channel=channel, config=config, distances=d)


# ---------------------------------------------------------------------------
# scenario files

_RANGE_FIELDS = {"local_cpu_range", "input_bits_range", "cycles_per_bit_range"}
_INT_FIELDS = {"num_users", "num_subcarriers", "rng_seed"}
_FLOAT_FIELDS = {
    "radius", "slot_length", "edge_capacity", "noise_power", "bandwidth",
    "kappa_local", "kappa_edge", "min_distance",
}


def _parse_power(value) -> float:
    """Watts, or a string with an explicit dBm suffix."""
    if isinstance(value, str):
        text = value.strip()
        if text.lower().endswith("dbm"):
            try:
                return dbm_to_watts(float(text[:-3].strip()))
            except ValueError as exc:
                raise BadSpec(f"unparseable power value {value!r}") from exc
        try:
            return float(text)
        except ValueError as exc:
            raise BadSpec(f"unparseable power value {value!r}") from exc
    if isinstance(value, (int, float)):
        return float(value)
    raise BadSpec(f"unparseable power value {value!r}")


def spec_from_mapping(data: dict) -> ScenarioSpec:
    if not isinstance(data, dict):
        raise BadSpec("scenario file must contain a key/value mapping")
    known = set(ScenarioSpec.__dataclass_fields__)
    unknown = set(data) - known
    if unknown:
        raise BadSpec(f"unknown scenario fields: {sorted(unknown)}")
    if "num_users" not in data or "num_subcarriers" not in data:
        raise BadSpec("scenario must set num_users and num_subcarriers")
    kwargs = {}
    for key, value in data.items():
        if key == "max_tx_power":
            kwargs[key] = _parse_power(value)
        elif key in _RANGE_FIELDS:
            if not isinstance(value, (list, tuple)) or len(value) != 2:
                raise BadSpec(f"{key} must be a two-element [low, high] list")
            kwargs[key] = (float(value[0]), float(value[1]))
        elif key in _INT_FIELDS:
            kwargs[key] = int(value)
        elif key in _FLOAT_FIELDS:
            kwargs[key] = float(value)
        else:
            kwargs[key] = value
    spec = ScenarioSpec(**kwargs)
    spec.validate()
    return spec


def load_scenario(path) -> ScenarioSpec:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise BadSpec(f"unparseable scenario file {path}: {exc}") from exc
    return spec_from_mapping(data if data is not None else {})
