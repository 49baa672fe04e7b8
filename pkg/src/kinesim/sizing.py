"""Inverse design: from a transaction energy and hinge-speed envelope to gear
ratio, buffer capacitance and wake threshold."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .drivetrain import BRIDGE_DROP, GeneratorModel, fit_generator
from .errors import ConfigError, DomainError, InfeasibleError
from .motion import ActuationDistribution, sample_actuation
from .powerpath import CapacitorState, required_charged_voltage
from .rng import derive_rng

E12 = (1.0, 1.2, 1.5, 1.8, 2.2, 2.7, 3.3, 3.9, 4.7, 5.6, 6.8, 8.2)
THRESHOLD_STEP = 0.05
SEARCH_SPAN = 1e6  # candidate capacitances cover [min_capacitance, min_capacitance * 1e6]
ANCHOR_GENERATOR = fit_generator([(1100.0, 0.051, 470.0)], r_internal=10.0)


@dataclass(frozen=True)
class SizingSpec:
    transaction_energy: float = 61e-3
    harvest_window: float = 1.2
    hinge_rpm_min: float = 17.85
    hinge_rpm_max: float = 27.8
    hinge_rpm_reference: float = 25.82
    generator: GeneratorModel = field(default_factory=lambda: ANCHOR_GENERATOR)
    load_reference: float = 470.0
    cap_rating: float = 25.0
    converter_cutoff: float = 3.0
    headroom_fraction: float = 0.5
    rectifier_drop: float = BRIDGE_DROP
    min_capacitance: float = 1e-6

    def __post_init__(self):
        if not self.harvest_window > 0:
            raise ConfigError("harvest_window must be > 0")
        if not 0 < self.hinge_rpm_min <= self.hinge_rpm_reference <= self.hinge_rpm_max:
            raise ConfigError("need 0 < hinge_rpm_min <= hinge_rpm_reference <= hinge_rpm_max")
        if not 0 < self.headroom_fraction <= 1:
            raise ConfigError("headroom_fraction must lie in (0, 1]")
        if self.transaction_energy < 0:
            raise ConfigError("transaction_energy must be >= 0")
        if self.load_reference <= 0 or self.cap_rating <= 0 or self.converter_cutoff <= 0:
            raise ConfigError("load_reference, cap_rating and converter_cutoff must be > 0")
        if self.min_capacitance <= 0:
            raise ConfigError("min_capacitance must be > 0")


@dataclass(frozen=True)
class SizingResult:
    required_power: float
    target_generator_rpm: float
    gear_ratio: float
    capacitance: float
    wake_threshold: float
    rpm_band_at_generator: tuple[float, float]
    margin_fraction: float | None = None

    def to_dict(self) -> dict:
        return {
            "required_power_W": self.required_power,
            "target_generator_rpm": self.target_generator_rpm,
            "gear_ratio": self.gear_ratio,
            "capacitance_F": self.capacitance,
            "wake_threshold_V": self.wake_threshold,
            "rpm_band_at_generator": list(self.rpm_band_at_generator),
            "margin_fraction": self.margin_fraction,
        }


def required_average_power(energy: float, window: float) -> float:
    if window <= 0:
        raise DomainError("window must be > 0")
    return energy / window


def target_generator_speed(gen: GeneratorModel, load: float, power: float) -> float:
    """Shaft speed at which the generator delivers ``power`` into ``load``."""
    if power < 0:
        raise DomainError("power must be >= 0")
    return (load + gen.r_internal) * math.sqrt(power / load) / gen.ke


def _target_rpm(spec: SizingSpec) -> float:
    power = required_average_power(spec.transaction_energy, spec.harvest_window)
    rpm = target_generator_speed(spec.generator, spec.load_reference, power)
    # the EMF must at least clear the rectifier and the converter cutoff
    floor = (spec.converter_cutoff + spec.rectifier_drop) / spec.generator.ke
    return max(rpm, floor)


def required_gear_ratio(spec: SizingSpec) -> float:
    return _target_rpm(spec) / spec.hinge_rpm_reference


def e12_values(lo: float, hi: float):
    decade = math.floor(math.log10(lo)) - 1
    while True:
        for mant in E12:
            value = float(f"{mant}e{decade}")
            if value > hi * (1 + 1e-12):
                return
            if value >= lo * (1 - 1e-12):
                yield value
        decade += 1


def round_up(value: float, step: float = THRESHOLD_STEP) -> float:
    return round(math.ceil(value / step - 1e-9) * step, 10)


def select_capacitance(
    energy: float,
    cutoff: float,
    rating: float,
    headroom: float,
    min_capacitance: float = 1e-6,
) -> tuple[float, float]:
    """Smallest E12 capacitance whose rounded wake threshold fits the headroom.

    Returns (capacitance, wake_threshold).
    """
    if energy < 0:
        raise DomainError("energy must be >= 0")
    limit = headroom * rating
    for c in e12_values(min_capacitance, min_capacitance * SEARCH_SPAN):
        threshold = round_up(required_charged_voltage(c, energy, cutoff))
        if threshold <= limit + 1e-12:
            return c, threshold
    raise InfeasibleError(
        f"no E12 capacitance in [{min_capacitance:g}, {min_capacitance * SEARCH_SPAN:g}] F "
        f"holds {energy:g} J above {cutoff} V within {limit:g} V"
    )


def nominal_margin(
    sim_cfg,
    distribution: ActuationDistribution,
    samples: int = 400,
    seed: int = 0,
    start_voltage: float | None = None,
) -> float:
    """Fraction of full actuations whose closure voltage reaches the wake threshold.

    ``sim_cfg`` is a DeploymentConfig describing the hardware. Each sample
    starts from ``start_voltage`` (default: converter cutoff, the residual
    left by a completed transaction).
    """
    from .sim import peak_trigger_voltage

    dist = distribution if distribution.partial_probability == 0 else _no_partials(distribution)
    v0 = sim_cfg.powerpath.converter_cutoff if start_voltage is None else start_voltage
    hits = 0
    for i in range(samples):
        event = sample_actuation(dist, derive_rng(seed, "margin", i))
        v, _, _ = peak_trigger_voltage(event, sim_cfg, CapacitorState(v0))
        hits += v >= sim_cfg.powerpath.wake_threshold
    return hits / samples


def _no_partials(dist: ActuationDistribution) -> ActuationDistribution:
    from dataclasses import replace

    return replace(dist, partial_probability=0.0)


def sized_hardware(result: SizingResult, template):
    """Apply a sizing result to a DeploymentConfig template."""
    pp = template.powerpath.with_(
        capacitance=result.capacitance,
        wake_threshold=result.wake_threshold,
    )
    return template.with_(powerpath=pp, ratio_override=result.gear_ratio)


def size_system(
    spec: SizingSpec,
    distribution: ActuationDistribution | None = None,
    template=None,
    samples: int = 400,
    seed: int = 0,
) -> SizingResult:
    """Power target, generator speed, gear ratio, then capacitance and threshold.

    When a distribution and a DeploymentConfig ``template`` are given, the
    margin is estimated by simulating sampled full actuations on the sized
    hardware.
    """
    power = required_average_power(spec.transaction_energy, spec.harvest_window)
    rpm = _target_rpm(spec)
    ratio = rpm / spec.hinge_rpm_reference
    c, threshold = select_capacitance(
        spec.transaction_energy, spec.converter_cutoff, spec.cap_rating, spec.headroom_fraction, spec.min_capacitance
    )
    if threshold <= spec.converter_cutoff:
        # the gate needs a threshold strictly above the cutoff
        threshold = round(spec.converter_cutoff + THRESHOLD_STEP, 10)
    band = (spec.hinge_rpm_min * ratio, spec.hinge_rpm_max * ratio)
    result = SizingResult(power, rpm, ratio, c, threshold, band)
    if distribution is not None and template is not None:
        hw = sized_hardware(result, template.with_(powerpath=template.powerpath.with_(cap_rating=spec.cap_rating)))
        margin = nominal_margin(hw, distribution, samples, seed)
        result = SizingResult(power, rpm, ratio, c, threshold, band, margin)
    return result
