"""Spur-gear speed amplification and the permanent-magnet DC generator model."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DomainError, InsufficientDataError

MIN_TEETH = 8
SCHOTTKY_DROP = 0.3
BRIDGE_DROP = 2 * SCHOTTKY_DROP


@dataclass(frozen=True)
class GearTrain:
    """Stages listed hinge side first as (input_teeth, output_teeth)."""

    stages: tuple[tuple[int, int], ...]

    def __post_init__(self):
        stages = tuple((int(i), int(o)) for i, o in self.stages)
        object.__setattr__(self, "stages", stages)
        if not stages:
            raise DomainError("gear train needs at least one stage")
        if any(min(pair) < MIN_TEETH for pair in stages):
            raise DomainError(f"tooth counts must be >= {MIN_TEETH}")

    def __add__(self, other: "GearTrain") -> "GearTrain":
        return GearTrain(self.stages + other.stages)

    @classmethod
    def parse(cls, text: str) -> "GearTrain":
        """Parse ``"65:13,38:13,38:13"``."""
        stages = []
        for chunk in text.split(","):
            a, _, b = chunk.strip().partition(":")
            stages.append((int(a), int(b)))
        return cls(tuple(stages))

    def format(self) -> str:
        return ",".join(f"{i}:{o}" for i, o in self.stages)


# generator-side-first listing from the harvester: 13T -> 38T/13T -> 38T/13T -> 65T
BIN_TRAIN = GearTrain(((65, 13), (38, 13), (38, 13)))


@dataclass(frozen=True)
class GeneratorModel:
    ke: float  # V per RPM
    r_internal: float  # ohm
    rated_voltage: float = 24.0
    name: str = ""

    def __post_init__(self):
        if self.ke <= 0 or self.r_internal <= 0:
            raise DomainError("generator needs ke > 0 and r_internal > 0")

    def emf(self, rpm):
        return self.ke * rpm


def train_ratio_exact(train: GearTrain) -> Fraction:
    ratio = Fraction(1)
    for teeth_in, teeth_out in train.stages:
        ratio *= Fraction(teeth_in, teeth_out)
    return ratio


def train_ratio(train: GearTrain) -> float:
    """Speed multiplication from hinge to generator shaft."""
    return float(train_ratio_exact(train))


def generator_rpm(hinge_rpm, ratio: float):
    if np.any(np.asarray(hinge_rpm) < 0):
        raise DomainError("hinge_rpm must be >= 0")
    return hinge_rpm * ratio


def power_into_load(gen: GeneratorModel, rpm, load: float):
    """Power (W) dissipated in a resistive ``load`` at shaft speed ``rpm``."""
    if load <= 0:
        raise DomainError("load must be > 0")
    v = gen.ke * np.asarray(rpm, dtype=float)
    p = v * v * load / (load + gen.r_internal) ** 2
    return float(p) if p.ndim == 0 else p


def fit_generator(
    anchors: Sequence[tuple[float, float, float]], r_internal: float = 10.0, rated_voltage: float = 24.0
) -> GeneratorModel:
    """Least-squares back-EMF constant from (rpm, power, load) anchors.

    Power is linear in ke**2, so the fit is closed form in that variable.
    """
    if not anchors:
        raise InsufficientDataError("need at least one (rpm, power, load) anchor")
    # P_i = ke^2 * g_i with g_i = rpm^2 * load / (load + r)^2
    g = np.array([rpm**2 * load / (load + r_internal) ** 2 for rpm, _, load in anchors])
    p = np.array([power for _, power, _ in anchors])
    ke_sq = float(g @ p / (g @ g))
    return GeneratorModel(ke=math.sqrt(ke_sq), r_internal=r_internal, rated_voltage=rated_voltage)


def charging_current(
    gen: GeneratorModel, rpm, v_cap, rectifier_drop: float = BRIDGE_DROP, multiplier: float = 1.0
):
    """Rectified charging current (A) into a capacitor held at ``v_cap``.

    ``multiplier`` models an m-stage voltage multiplier after the bridge as an
    ideal m:1 step-up: the source seen by the capacitor has EMF m*ke*rpm and
    resistance m**2 * r_internal. ``multiplier=1`` is the plain bridge.
    """
    if np.any(np.asarray(v_cap) < 0):
        raise DomainError("v_cap must be >= 0")
    emf = multiplier * gen.ke * np.asarray(rpm, dtype=float)
    i = np.maximum(0.0, (emf - rectifier_drop - v_cap) / (multiplier**2 * gen.r_internal))
    return float(i) if np.ndim(i) == 0 else i


# --- catalog ------------------------------------------------------------------

CATALOG_HEADER = ("name", "rated_voltage", "ke_mV_per_rpm", "r_internal_ohm")


def read_catalog(path: str | Path) -> dict[str, GeneratorModel]:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = [row for row in fh if row.strip() and not row.lstrip().startswith("#")]
    reader = csv.DictReader(rows)
    if tuple(reader.fieldnames or ()) != CATALOG_HEADER:
        raise ValueError(f"catalog header must be {','.join(CATALOG_HEADER)}")
    out = {}
    for row in reader:
        out[row["name"]] = GeneratorModel(
            ke=float(row["ke_mV_per_rpm"]) / 1000.0,
            r_internal=float(row["r_internal_ohm"]),
            rated_voltage=float(row["rated_voltage"]),
            name=row["name"],
        )
    return out
