"""Run configuration: INI-style files with one block per subsystem.

Every key has a type and default in ``SCHEMA``. Files and ``--override``
assignments only set keys listed there; unknown keys are rejected. Bare
override names resolve when unique (``wake_threshold``), otherwise use
``section.key``.
"""

from __future__ import annotations

import configparser
import dataclasses
from importlib import resources
from pathlib import Path
from typing import Any

from .drivetrain import GearTrain, GeneratorModel, read_catalog
from .errors import ConfigError, KinesimError
from .motion import SHAPES, ActuationDistribution
from .powerpath import PowerPathConfig
from .sim import DeploymentConfig
from .sizing import SizingSpec
from .transaction import LoRaConfig, RadioEnergyModel, SensorModel, WorkloadSpec, calibrate_radio

PRESETS = ("paper-bin.cfg", "paper-door.cfg", "paper-cabinet.cfg")


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    value = str(text).strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_float(text):
    if text is None or str(text).strip().lower() in ("", "none", "auto"):
        return None
    return float(text)


def _opt_str(text):
    if text is None or str(text).strip().lower() in ("", "none"):
        return None
    return str(text).strip()


# (parser, default); float and int keys are sweepable
SCHEMA: dict[str, dict[str, tuple[Any, Any]]] = {
    "motion": {
        "angle_mean": (float, 72.5),
        "angle_cv": (float, 0.25),
        "open_duration_mean": (float, 0.70),
        "open_duration_cv": (float, 0.25),
        "close_duration_mean": (float, 0.45),
        "close_duration_cv": (float, 0.25),
        "partial_probability": (float, 0.005),
        "partial_angle_min": (float, 5.0),
        "partial_angle_max": (float, 30.0),
        "inter_arrival_mean": (float, 1500.0),
        "profile_shape": (str, "half_sine"),
        "open_threshold": (float, 5.0),
    },
    "drivetrain": {
        "stages": (str, "65:13,38:13,38:13"),
        "ratio": (_opt_float, None),
        "ke_mV_per_rpm": (float, 4.545),
        "r_internal": (float, 10.0),
        "rated_voltage": (float, 24.0),
        "catalog": (_opt_str, None),
        "generator": (_opt_str, None),
    },
    "powerpath": {
        "capacitance": (float, 1000e-6),
        "cap_rating": (float, 25.0),
        "rectifier_drop": (float, 0.6),
        "multiplier": (float, 1.0),
        "converter_cutoff": (float, 3.0),
        "wake_threshold": (float, 11.5),
        "converter_efficiency": (float, 0.85),
        "leakage_tau": (float, 600.0),
        "coupling_efficiency": (float, 0.85),
        "dt": (float, 1e-3),
    },
    "workload": {
        "variant": (str, "bin_sf10"),
        "phases": (str, "boot:0.45,sense:3.0"),
        "energy_side": (str, "capacitor"),
        "tx_energy_mJ": (_opt_float, 57.5),
        "tx_power_W": (_opt_float, None),
    },
    "radio": {
        "sf": (int, 10),
        "bw": (int, 125000),
        "cr": (int, 8),
        "preamble": (int, 8),
        "payload_bytes": (int, 8),
        "explicit_header": (_bool, True),
        "crc": (_bool, True),
        "ldro": (_bool, False),
        "tx_power_dbm": (float, 20.0),
    },
    "sim": {
        "events": (int, 1000),
        "seed": (int, 0),
        "channel_loss_probability": (float, 0.0),
        "debounce_window": (float, 2.0),
        "initial_voltage": (float, 0.0),
        "locations": (_opt_str, None),
        "label": (str, "all"),
        "trace": (_opt_str, None),
    },
    "sizing": {
        "transaction_energy": (_opt_float, None),
        "harvest_window": (float, 1.2),
        "hinge_rpm_min": (float, 17.85),
        "hinge_rpm_max": (float, 27.8),
        "hinge_rpm_reference": (float, 25.82),
        "load_reference": (float, 470.0),
        "cap_rating": (float, 25.0),
        "converter_cutoff": (float, 3.0),
        "headroom_fraction": (float, 0.5),
        "min_capacitance": (float, 1e-6),
        "margin_samples": (int, 200),
    },
    "sensor": {
        "usable_depth": (float, 500.0),
        "abs_error_mean": (float, 19.08),
        "abs_error_sd": (float, 15.9),
    },
    "output": {
        "dir": (str, "kinesim-out"),
        "prefix": (str, "report"),
    },
}

NUMERIC_TYPES = (float, int, _opt_float)


def all_keys() -> list[str]:
    return [f"{sec}.{key}" for sec, keys in SCHEMA.items() for key in keys]


def numeric_keys() -> list[str]:
    return [f"{sec}.{key}" for sec, keys in SCHEMA.items() for key, (typ, _) in keys.items() if typ in NUMERIC_TYPES]


def resolve_key(name: str) -> tuple[str, str]:
    if "." in name:
        sec, key = name.split(".", 1)
        if sec in SCHEMA and key in SCHEMA[sec]:
            return sec, key
        raise ConfigError(f"unknown config key {name!r}")
    hits = [(sec, name) for sec, keys in SCHEMA.items() if name in keys]
    if not hits:
        raise ConfigError(f"unknown config key {name!r}")
    if len(hits) > 1:
        options = ", ".join(f"{s}.{k}" for s, k in hits)
        raise ConfigError(f"ambiguous key {name!r}; use one of {options}")
    return hits[0]


def keys_help() -> str:
    lines = ["config keys (usable with --override KEY=VALUE and sweep --param):"]
    for sec, keys in SCHEMA.items():
        lines.append(f"  [{sec}]")
        for key, (_, default) in keys.items():
            lines.append(f"    {sec}.{key} (default: {default})")
    return "\n".join(lines)


def preset_path(name: str) -> Path:
    return Path(str(resources.files("kinesim") / "presets" / name))


def locate(path: str) -> Path:
    """A config path, falling back to a bundled preset of the same name."""
    p = Path(path)
    if p.exists():
        return p
    if p.name in PRESETS or f"{p.name}.cfg" in PRESETS:
        name = p.name if p.name in PRESETS else f"{p.name}.cfg"
        return preset_path(name)
    raise OSError(f"config file not found: {path}")


def _parse_locations(text: str) -> tuple[tuple[str, int], ...]:
    out = []
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        label, _, count = chunk.rpartition(":")
        out.append((label.strip(), int(count)))
    return tuple(out)


def _parse_phases(text: str) -> tuple[tuple[str, float], ...]:
    phases = []
    for chunk in text.split(","):
        chunk = chunk.strip()
        if chunk:
            name, _, mj = chunk.partition(":")
            phases.append((name.strip(), float(mj) * 1e-3))
    return tuple(phases)


@dataclasses.dataclass
class RunConfig:
    values: dict[str, dict[str, Any]]
    sections: frozenset[str] = frozenset()
    base_dir: Path = Path(".")
    source: str = "<defaults>"
    explicit: set[str] = dataclasses.field(default_factory=set)

    @classmethod
    def defaults(cls) -> "RunConfig":
        return cls({sec: {k: d for k, (_, d) in keys.items()} for sec, keys in SCHEMA.items()})

    @classmethod
    def load(cls, path: str | Path, overrides: list[str] | tuple[str, ...] = ()) -> "RunConfig":
        p = locate(str(path))
        parser = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
        parser.optionxform = str
        try:
            with open(p, encoding="utf-8") as fh:
                parser.read_file(fh)
        except configparser.Error as exc:
            raise ConfigError(f"{p}: {exc}") from None
        cfg = cls.defaults()
        cfg.base_dir = p.parent
        cfg.source = str(p)
        for sec in parser.sections():
            if sec not in SCHEMA:
                raise ConfigError(f"{p}: unknown block [{sec}]")
            for key, raw in parser.items(sec):
                cfg.set(f"{sec}.{key}", raw)
        cfg.sections = frozenset(parser.sections())
        for item in overrides:
            name, sep, raw = item.partition("=")
            if not sep:
                raise ConfigError(f"override must be KEY=VALUE, got {item!r}")
            cfg.set(name.strip(), raw.strip())
        cfg.validate()
        return cfg

    def set(self, name: str, raw) -> None:
        sec, key = resolve_key(name)
        parser = SCHEMA[sec][key][0]
        try:
            self.values[sec][key] = parser(raw) if raw is not None else None
        except (TypeError, ValueError):
            raise ConfigError(f"bad value for {sec}.{key}: {raw!r}") from None
        self.explicit.add(f"{sec}.{key}")

    def get(self, name: str):
        sec, key = resolve_key(name)
        return self.values[sec][key]

    def copy_with(self, **assignments) -> "RunConfig":
        other = RunConfig(
            {s: dict(v) for s, v in self.values.items()}, self.sections, self.base_dir, self.source, set(self.explicit)
        )
        for name, value in assignments.items():
            other.set(name, value)
        return other

    def path(self, value: str) -> Path:
        p = Path(value)
        return p if p.is_absolute() else self.base_dir / p

    # --- domain objects -----------------------------------------------------

    def validate(self) -> None:
        for name in ("motion.profile_shape",):
            if self.get(name) not in SHAPES:
                raise ConfigError(f"{name} must be one of {SHAPES}")
        for name in ("drivetrain.catalog", "sim.trace"):
            value = self.get(name)
            if value is not None and not self.path(value).exists():
                raise ConfigError(f"{name} refers to a missing file: {value}")
        try:
            self.deployment_config()
            if "sizing" in self.sections:
                self.sizing_spec()
            self.sensor()
        except ConfigError:
            raise
        except (KinesimError, ValueError) as exc:
            raise ConfigError(str(exc)) from None

    def distribution(self) -> ActuationDistribution:
        m = self.values["motion"]
        return ActuationDistribution(
            angle_mean=m["angle_mean"],
            angle_cv=m["angle_cv"],
            open_duration_mean=m["open_duration_mean"],
            open_duration_cv=m["open_duration_cv"],
            close_duration_mean=m["close_duration_mean"],
            close_duration_cv=m["close_duration_cv"],
            partial_probability=m["partial_probability"],
            partial_angle_range=(m["partial_angle_min"], m["partial_angle_max"]),
            inter_arrival_mean=m["inter_arrival_mean"],
        )

    def generator(self) -> GeneratorModel:
        d = self.values["drivetrain"]
        if d["generator"]:
            if not d["catalog"]:
                raise ConfigError("drivetrain.generator needs drivetrain.catalog")
            catalog = read_catalog(self.path(d["catalog"]))
            if d["generator"] not in catalog:
                raise ConfigError(f"generator {d['generator']!r} not in catalog; have {sorted(catalog)}")
            return catalog[d["generator"]]
        return GeneratorModel(d["ke_mV_per_rpm"] / 1000.0, d["r_internal"], d["rated_voltage"])

    def lora(self) -> LoRaConfig:
        r = self.values["radio"]
        cr = r["cr"]
        if 5 <= cr <= 8:
            cr -= 4
        return LoRaConfig(
            spreading_factor=r["sf"],
            bandwidth=r["bw"],
            coding_rate=cr,
            preamble_symbols=r["preamble"],
            payload_bytes=r["payload_bytes"],
            explicit_header=r["explicit_header"],
            crc_on=r["crc"],
            low_data_rate_optimize=r["ldro"],
            tx_power_dbm=r["tx_power_dbm"],
        )

    def workload(self) -> WorkloadSpec:
        w = self.values["workload"]
        return WorkloadSpec(_parse_phases(w["phases"]), self.lora(), w["variant"], w["energy_side"])

    def radio_model(self) -> RadioEnergyModel:
        w = self.values["workload"]
        if w["tx_power_W"] is not None:
            return RadioEnergyModel(w["tx_power_W"])
        if w["tx_energy_mJ"] is None:
            raise ConfigError("workload needs tx_energy_mJ or tx_power_W")
        return calibrate_radio(w["tx_energy_mJ"] * 1e-3, self.lora())

    def powerpath(self) -> PowerPathConfig:
        p = self.values["powerpath"]
        return PowerPathConfig(**{k: v for k, v in p.items() if k != "dt"})

    def deployment_config(self) -> DeploymentConfig:
        s = self.values["sim"]
        d = self.values["drivetrain"]
        trace = str(self.path(s["trace"])) if s["trace"] else None
        locations = _parse_locations(s["locations"]) if s["locations"] else ((s["label"], s["events"]),)
        return DeploymentConfig(
            workload=self.workload(),
            radio=self.radio_model(),
            powerpath=self.powerpath(),
            generator=self.generator(),
            train=GearTrain.parse(d["stages"]),
            ratio_override=d["ratio"],
            distribution=self.distribution(),
            event_count=s["events"],
            trace=trace,
            locations=locations,
            channel_loss_probability=s["channel_loss_probability"],
            debounce_window=s["debounce_window"],
            profile_shape=self.values["motion"]["profile_shape"],
            dt=self.values["powerpath"]["dt"],
            initial_voltage=s["initial_voltage"],
            open_threshold=self.values["motion"]["open_threshold"],
            seed=s["seed"],
        )

    def sizing_spec(self) -> SizingSpec:
        z = self.values["sizing"]
        energy = z["transaction_energy"]
        if energy is None:
            from .transaction import transaction_energy

            energy = transaction_energy(self.workload(), self.radio_model())
        return SizingSpec(
            transaction_energy=energy,
            harvest_window=z["harvest_window"],
            hinge_rpm_min=z["hinge_rpm_min"],
            hinge_rpm_max=z["hinge_rpm_max"],
            hinge_rpm_reference=z["hinge_rpm_reference"],
            generator=self.generator(),
            load_reference=z["load_reference"],
            cap_rating=z["cap_rating"],
            converter_cutoff=z["converter_cutoff"],
            headroom_fraction=z["headroom_fraction"],
            rectifier_drop=self.values["powerpath"]["rectifier_drop"],
            min_capacitance=z["min_capacitance"],
        )

    def sensor(self) -> SensorModel:
        return SensorModel(**self.values["sensor"])

    def to_dict(self) -> dict:
        return {sec: dict(vals) for sec, vals in self.values.items()}
