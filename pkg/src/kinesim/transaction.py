"""One wake-sense-transmit transaction: phase energies, LoRa airtime and
transmit energy, and the ultrasonic fill-level sensor."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DomainError

BANDWIDTHS = (125_000, 250_000, 500_000)
VARIANTS = ("bin_sf10", "door_sf6", "cabinet_sf6", "cabinet_dual")
ENERGY_SIDES = ("capacitor", "rail")


@dataclass(frozen=True)
class LoRaConfig:
    spreading_factor: int = 10
    bandwidth: int = 125_000
    coding_rate: int = 4  # 1..4 for 4/5..4/8
    preamble_symbols: int = 8
    payload_bytes: int = 8
    explicit_header: bool = True
    crc_on: bool = True
    low_data_rate_optimize: bool = False
    tx_power_dbm: float = 20.0

    def __post_init__(self):
        if not 6 <= self.spreading_factor <= 12:
            raise ConfigError(f"spreading factor must be 6..12, got {self.spreading_factor}")
        if self.bandwidth not in BANDWIDTHS:
            raise ConfigError(f"bandwidth must be one of {BANDWIDTHS}, got {self.bandwidth}")
        if not 1 <= self.coding_rate <= 4:
            raise ConfigError(f"coding_rate must be 1..4 (4/5..4/8), got {self.coding_rate}")
        if self.preamble_symbols < 0 or self.payload_bytes < 0:
            raise ConfigError("preamble and payload lengths must be >= 0")
        if self.spreading_factor == 6 and self.explicit_header:
            raise ConfigError("SF6 supports implicit header mode only")

    @property
    def symbol_time(self) -> float:
        return (1 << self.spreading_factor) / self.bandwidth


# 125 kHz, CR 4/8, 20 dBm, 8-symbol preamble, CRC
BIN_RADIO = LoRaConfig(spreading_factor=10, payload_bytes=8, explicit_header=True)
EVENT_RADIO = LoRaConfig(spreading_factor=6, payload_bytes=4, explicit_header=False)


def payload_symbols(cfg: LoRaConfig) -> int:
    sf = cfg.spreading_factor
    de = int(cfg.low_data_rate_optimize)
    ih = int(not cfg.explicit_header)
    bits = 8 * cfg.payload_bytes - 4 * sf + 28 + 16 * int(cfg.crc_on) - 20 * ih
    blocks = math.ceil(bits / (4 * (sf - 2 * de)))
    return 8 + max(blocks * (cfg.coding_rate + 4), 0)


def time_on_air(cfg: LoRaConfig) -> float:
    """Packet airtime in seconds (SX127x formula)."""
    if cfg.spreading_factor == 6 and cfg.explicit_header:
        raise ConfigError("SF6 supports implicit header mode only")
    return (cfg.preamble_symbols + 4.25 + payload_symbols(cfg)) * cfg.symbol_time


@dataclass(frozen=True)
class RadioEnergyModel:
    effective_tx_power: float  # W drawn while transmitting

    def __post_init__(self):
        if not self.effective_tx_power > 0:
            raise DomainError("effective_tx_power must be > 0")


def calibrate_radio(target_tx_energy: float, cfg: LoRaConfig) -> RadioEnergyModel:
    if not target_tx_energy > 0:
        raise DomainError("target_tx_energy must be > 0")
    return RadioEnergyModel(target_tx_energy / time_on_air(cfg))


def tx_energy(cfg: LoRaConfig, radio: RadioEnergyModel) -> float:
    return radio.effective_tx_power * time_on_air(cfg)


@dataclass(frozen=True)
class WorkloadSpec:
    phases: tuple[tuple[str, float], ...] = ()
    radio: LoRaConfig = field(default_factory=LoRaConfig)
    variant: str = "bin_sf10"
    energy_side: str = "capacitor"  # where phase/TX energies are referred

    def __post_init__(self):
        object.__setattr__(self, "phases", tuple((str(n), float(e)) for n, e in self.phases))
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.energy_side not in ENERGY_SIDES:
            raise ConfigError(f"energy_side must be one of {ENERGY_SIDES}")
        if any(e < 0 for _, e in self.phases):
            raise ConfigError("phase energies must be >= 0")
        if self.variant == "bin_sf10" and not any("sens" in n.lower() for n, _ in self.phases):
            raise ConfigError("bin workload must include a sensing phase")

    @property
    def packets_per_access(self) -> int:
        return 2 if self.variant == "cabinet_dual" else 1


BIN_WORKLOAD = WorkloadSpec((("boot", 0.45e-3), ("sense", 3.0e-3)), BIN_RADIO, "bin_sf10")
DOOR_WORKLOAD = WorkloadSpec((("boot", 0.45e-3),), EVENT_RADIO, "door_sf6")


def transaction_energy(spec: WorkloadSpec, radio: RadioEnergyModel) -> float:
    """Energy for one packet's transaction. Dual capture spends this per packet."""
    return math.fsum(e for _, e in spec.phases) + tx_energy(spec.radio, radio)


# --- ultrasonic fill level ----------------------------------------------------

class FillCategory(enum.IntEnum):
    EMPTY = 0
    QUARTER = 1
    HALF = 2
    THREE_QUARTER = 3
    FULL = 4


@dataclass(frozen=True)
class SensorModel:
    usable_depth: float = 500.0  # mm
    abs_error_mean: float = 19.08  # mm
    abs_error_sd: float = 15.9  # mm

    def __post_init__(self):
        if self.usable_depth <= 0:
            raise DomainError("usable_depth must be > 0")
        if self.abs_error_mean < 0 or self.abs_error_sd < 0:
            raise DomainError("error moments must be >= 0")


def fill_bucket(fill_depth: float, usable_depth: float) -> FillCategory:
    """Bucket of a fill depth; edges sit exactly at ``k * usable_depth / 5``."""
    width = usable_depth / 5
    fill = min(max(fill_depth, 0.0), usable_depth)
    k = int(math.floor(fill / width))
    # floor(x / w) can land one off the product k * w
    if (k + 1) * width <= fill:
        k += 1
    elif k * width > fill:
        k -= 1
    return FillCategory(min(4, k))


def fill_category(reading: float, sensor: SensorModel) -> FillCategory:
    """Category from measured headroom (distance sensor to waste surface)."""
    if reading < 0:
        raise DomainError("reading must be >= 0")
    headroom = min(reading, sensor.usable_depth)
    return fill_bucket(sensor.usable_depth - headroom, sensor.usable_depth)


def sense_with_error(true_headroom: float, sensor: SensorModel, rng: np.random.Generator) -> float:
    """Headroom reading with a signed gamma error matching the MAE and sd."""
    mean, sd = sensor.abs_error_mean, sensor.abs_error_sd
    if mean == 0:
        return min(max(true_headroom, 0.0), sensor.usable_depth)
    sign = 1.0 if rng.random() < 0.5 else -1.0
    magnitude = mean if sd == 0 else float(rng.gamma((mean / sd) ** 2, sd * sd / mean))
    return min(max(true_headroom + sign * magnitude, 0.0), sensor.usable_depth)


def category_accuracy(sensor: SensorModel, n: int, rng: np.random.Generator) -> float:
    """Fraction of readings landing in the true bucket, true headroom uniform."""
    hits = 0
    for _ in range(n):
        truth = float(rng.uniform(0.0, sensor.usable_depth))
        reading = sense_with_error(truth, sensor, rng)
        hits += fill_category(reading, sensor) == fill_category(truth, sensor)
    return hits / n
