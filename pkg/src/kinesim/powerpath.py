"""Capacitor energy buffer, converter cutoff, leakage and the power-gate
state machine that keeps the electronics off until the buffer is charged."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np

from .drivetrain import BRIDGE_DROP, GeneratorModel
from .errors import DomainError

DEFAULT_DT = 1e-3


@dataclass(frozen=True)
class PowerPathConfig:
    capacitance: float = 1000e-6
    cap_rating: float = 25.0
    rectifier_drop: float = BRIDGE_DROP
    converter_cutoff: float = 3.0
    wake_threshold: float = 11.5
    converter_efficiency: float = 0.85
    leakage_tau: float = 600.0
    coupling_efficiency: float = 0.85
    multiplier: float = 1.0  # rectifier voltage-multiplier stages, 1 = plain bridge

    def __post_init__(self):
        if self.capacitance <= 0:
            raise DomainError("capacitance must be > 0")
        if not 0 < self.converter_cutoff < self.wake_threshold <= self.cap_rating:
            raise DomainError(
                "need 0 < converter_cutoff < wake_threshold <= cap_rating, got "
                f"{self.converter_cutoff}, {self.wake_threshold}, {self.cap_rating}"
            )
        for name in ("converter_efficiency", "coupling_efficiency"):
            value = getattr(self, name)
            if not 0 < value <= 1:
                raise DomainError(f"{name} must lie in (0, 1], got {value}")
        if self.leakage_tau <= 0 or self.rectifier_drop < 0 or self.multiplier < 1:
            raise DomainError("need leakage_tau > 0, rectifier_drop >= 0, multiplier >= 1")

    def with_(self, **changes) -> "PowerPathConfig":
        return replace(self, **changes)


@dataclass(frozen=True)
class CapacitorState:
    voltage: float
    time: float = 0.0

    def __post_init__(self):
        if self.voltage < 0:
            raise DomainError(f"capacitor voltage must be >= 0, got {self.voltage}")


class GateState(enum.Enum):
    HARVESTING = "Harvesting"
    TRIGGERED = "Triggered"
    ACTIVE = "Active"
    POST_TRANSACTION = "PostTransaction"


def usable_energy(c: float, v_charged: float, v_cutoff: float) -> float:
    """Energy (J) extractable between ``v_charged`` and the converter cutoff."""
    if v_cutoff < 0 or v_charged < v_cutoff:
        raise DomainError(f"need v_charged >= v_cutoff >= 0, got {v_charged}, {v_cutoff}")
    return 0.5 * c * (v_charged**2 - v_cutoff**2)


def required_charged_voltage(c: float, e_usable: float, v_cutoff: float) -> float:
    if e_usable < 0:
        raise DomainError("e_usable must be >= 0")
    return math.sqrt(2.0 * e_usable / c + v_cutoff**2)


def apply_leakage(state: CapacitorState, elapsed: float, cfg: PowerPathConfig) -> CapacitorState:
    if elapsed < 0:
        raise DomainError("elapsed must be >= 0")
    return CapacitorState(state.voltage * math.exp(-elapsed / cfg.leakage_tau), state.time + elapsed)


@dataclass
class ChargeTrajectory:
    times: np.ndarray | None
    voltages: np.ndarray | None
    end: CapacitorState
    peak_voltage: float
    harvested: float  # integral of coupling_efficiency * emf * current, J


def integrate_charging(
    profile,
    ratio: float,
    gen: GeneratorModel,
    cfg: PowerPathConfig,
    start: CapacitorState,
    dt: float = DEFAULT_DT,
    record: bool = True,
) -> ChargeTrajectory:
    """Explicit-Euler charge of the buffer over one motion phase.

    dV/dt = coupling_efficiency * I / C - V / leakage_tau, with I the
    rectified generator current at shaft speed ``ratio * hinge_rpm(t)``.
    ``profile`` needs ``duration`` and a vectorised ``rpm(t)``.
    """
    if dt <= 0:
        raise DomainError("dt must be > 0")
    T = profile.duration
    n = max(1, math.ceil(T / dt - 1e-9))
    t = np.arange(n) * dt
    h = np.full(n, dt)
    h[-1] = T - (n - 1) * dt
    emf = (cfg.multiplier * gen.ke * ratio) * np.asarray(profile.rpm(t), dtype=float)

    g = 1.0 / (cfg.multiplier**2 * gen.r_internal)
    k_chg = cfg.coupling_efficiency / cfg.capacitance
    inv_tau = 1.0 / cfg.leakage_tau
    drop = cfg.rectifier_drop
    rating = cfg.cap_rating
    eta = cfg.coupling_efficiency

    v = start.voltage
    peak = v
    harvested = 0.0
    out = [v] if record else None
    for e, step in zip((emf - drop).tolist(), h.tolist()):
        i = (e - v) * g
        if i > 0.0:
            harvested += eta * (e + drop) * i * step
            v += (k_chg * i - v * inv_tau) * step
            # a stiff step (RC below dt) must not overshoot the source
            if v > e:
                v = e
        else:
            v -= v * inv_tau * step
        if v > rating:
            v = rating
        elif v < 0.0:
            v = 0.0
        if v > peak:
            peak = v
        if record:
            out.append(v)
    end = CapacitorState(v, start.time + T)
    times = voltages = None
    if record:
        times = start.time + np.concatenate(([0.0], np.cumsum(h)))
        voltages = np.asarray(out)
    return ChargeTrajectory(times, voltages, end, peak, harvested)


def gate_step(
    state: GateState,
    trigger_fired: bool,
    v: float,
    cfg: PowerPathConfig,
    transaction_complete: bool = False,
) -> GateState:
    """Advance the power gate by one decision point."""
    if state is GateState.HARVESTING:
        return GateState.TRIGGERED if trigger_fired else GateState.HARVESTING
    if state is GateState.TRIGGERED:
        return GateState.ACTIVE if v >= cfg.wake_threshold else GateState.HARVESTING
    if state is GateState.ACTIVE:
        if transaction_complete or v < cfg.converter_cutoff:
            return GateState.POST_TRANSACTION
        return GateState.ACTIVE
    return GateState.HARVESTING


def discharge_transaction(
    start: CapacitorState, energy: float, cfg: PowerPathConfig, efficiency: float | None = None
) -> CapacitorState | None:
    """Draw ``energy`` through the converter.

    Returns the post-transaction state, or None when the buffer would fall
    below the converter cutoff first (the caller's state is left untouched).
    ``efficiency`` defaults to the converter efficiency; pass 1.0 for
    energies already referred to the capacitor.
    """
    if energy < 0:
        raise DomainError("energy must be >= 0")
    if energy == 0:
        return start
    eff = cfg.converter_efficiency if efficiency is None else efficiency
    radicand = start.voltage**2 - 2.0 * energy / (eff * cfg.capacitance)
    if radicand < 0:
        return None
    v_after = math.sqrt(radicand)
    # relative slack absorbs rounding on exact-budget transactions
    if v_after < cfg.converter_cutoff * (1 - 1e-9):
        return None
    return CapacitorState(max(v_after, cfg.converter_cutoff), start.time)
