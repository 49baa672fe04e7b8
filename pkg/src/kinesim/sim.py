"""Per-event and deployment-scale simulation of a motion-powered node.

Each access charges the buffer over its opening and closing strokes, fires
the trigger at closure (and at full open for dual capture), and attempts a
transaction when the gate admits it. Outcomes use four classes: one packet,
two packets (rapid re-opening), no charge, and channel loss.
"""

from __future__ import annotations

import dataclasses
import enum
import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .drivetrain import BIN_TRAIN, GearTrain, GeneratorModel, train_ratio
from .errors import ConfigError, InsufficientDataError
from .motion import (
    OPEN_THRESHOLD_DEG,
    ActuationDistribution,
    ActuationEvent,
    TraceRecord,
    angular_velocity_profile,
    sample_actuation,
    segment_actuations,
)
from .powerpath import (
    DEFAULT_DT,
    CapacitorState,
    GateState,
    PowerPathConfig,
    apply_leakage,
    discharge_transaction,
    gate_step,
    integrate_charging,
)
from .rng import derive_rng
from .transaction import BIN_WORKLOAD, RadioEnergyModel, WorkloadSpec, calibrate_radio, transaction_energy

CALIBRATION_NOTE = (
    "calibration-consistency check: outcome rates reproduce the calibration "
    "targets and are not an independent prediction"
)


class EventOutcome(str, enum.Enum):
    SINGLE_PACKET = "single_packet"
    DOUBLE_PACKET = "double_packet"
    NO_CHARGE = "no_charge"
    CHANNEL_LOSS = "channel_loss"


OUTCOMES = tuple(o.value for o in EventOutcome)


@dataclass(frozen=True)
class DeploymentConfig:
    workload: WorkloadSpec = BIN_WORKLOAD
    radio: RadioEnergyModel = field(default_factory=lambda: calibrate_radio(57.5e-3, BIN_WORKLOAD.radio))
    powerpath: PowerPathConfig = field(default_factory=PowerPathConfig)
    generator: GeneratorModel = field(default_factory=lambda: GeneratorModel(4.545e-3, 10.0))
    train: GearTrain = BIN_TRAIN
    ratio_override: float | None = None
    distribution: ActuationDistribution | None = field(default_factory=ActuationDistribution)
    event_count: int = 1000
    trace: str | None = None
    locations: tuple[tuple[str, int], ...] = ()
    channel_loss_probability: float = 0.0
    debounce_window: float = 2.0
    profile_shape: str = "half_sine"
    dt: float = DEFAULT_DT
    initial_voltage: float = 0.0
    open_threshold: float = OPEN_THRESHOLD_DEG
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.channel_loss_probability <= 1.0:
            raise ConfigError("channel_loss_probability must lie in [0, 1]")
        if self.event_count < 1:
            raise ConfigError("event_count must be >= 1")
        if self.distribution is None and self.trace is None:
            raise ConfigError("deployment needs a distribution or a trace source")
        if self.ratio_override is not None and self.ratio_override <= 0:
            raise ConfigError("gear ratio must be > 0")
        if self.debounce_window < 0:
            raise ConfigError("debounce_window must be >= 0")
        if not 0 <= self.initial_voltage <= self.powerpath.cap_rating:
            raise ConfigError("initial_voltage must lie in [0, cap_rating]")

    @property
    def gear_ratio(self) -> float:
        return self.ratio_override if self.ratio_override is not None else train_ratio(self.train)

    @property
    def packet_energy(self) -> float:
        return transaction_energy(self.workload, self.radio)

    def with_(self, **changes) -> "DeploymentConfig":
        return dataclasses.replace(self, **changes)

    def fingerprint(self) -> str:
        payload = json.dumps(_plain(dataclasses.asdict(self)), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, float):
        return repr(obj)
    return obj


@dataclass(frozen=True)
class EventRecord:
    index: int
    label: str
    event: ActuationEvent
    reopened: bool
    peak_voltage: float  # highest buffer voltage seen at a trigger
    packets_sent: int
    packets_delivered: int
    outcome: EventOutcome

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "label": self.label,
            "opening_angle": round(self.event.opening_angle, 6),
            "opening_duration": round(self.event.opening_duration, 6),
            "closing_duration": round(self.event.closing_duration, 6),
            "partial": self.event.partial,
            "reopened": self.reopened,
            "peak_voltage": round(self.peak_voltage, 6),
            "packets_sent": self.packets_sent,
            "packets_delivered": self.packets_delivered,
            "outcome": self.outcome.value,
        }


@dataclass
class DeploymentReport:
    records: list[EventRecord]
    config_fingerprint: str
    seed: int
    labels: tuple[str, ...] = ()

    @property
    def event_count(self) -> int:
        return len(self.records)

    @property
    def outcome_counts(self) -> dict[str, int]:
        counts = dict.fromkeys(OUTCOMES, 0)
        for r in self.records:
            counts[r.outcome.value] += 1
        return counts

    @property
    def delivered_events(self) -> int:
        return sum(1 for r in self.records if r.packets_delivered > 0)

    @property
    def success_rate(self) -> float:
        return self.delivered_events / self.event_count if self.records else 0.0

    def to_json(self, per_event: bool = False) -> str:
        doc = {
            "config_fingerprint": self.config_fingerprint,
            "seed": self.seed,
            "totals": {
                "actuations": self.event_count,
                "delivered_events": self.delivered_events,
                "packets_delivered": sum(r.packets_delivered for r in self.records),
            },
            "outcome_counts": self.outcome_counts,
            "success_rate": round(self.success_rate, 6),
            "note": CALIBRATION_NOTE,
        }
        if per_event:
            doc["per_event"] = [r.to_dict() for r in self.records]
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"


# --- single access ------------------------------------------------------------

def peak_trigger_voltage(
    event: ActuationEvent, cfg: DeploymentConfig, start: CapacitorState
) -> tuple[float, CapacitorState, float]:
    """Charge over both strokes without transacting.

    Returns (voltage at closure, end state, harvested input energy).
    """
    state = start
    harvested = 0.0
    for phase in ("opening", "closing"):
        profile = angular_velocity_profile(event, phase, cfg.profile_shape)
        traj = integrate_charging(profile, cfg.gear_ratio, cfg.generator, cfg.powerpath, state, cfg.dt, record=False)
        state = traj.end
        harvested += traj.harvested
    return state.voltage, state, harvested


def _attempt(state: CapacitorState, cfg: DeploymentConfig, rng) -> tuple[CapacitorState, int, int]:
    """Trigger the gate once; returns (state, sent, delivered)."""
    pp = cfg.powerpath
    gate = gate_step(GateState.HARVESTING, True, state.voltage, pp)
    gate = gate_step(gate, True, state.voltage, pp)
    if gate is not GateState.ACTIVE:
        return state, 0, 0
    efficiency = 1.0 if cfg.workload.energy_side == "capacitor" else pp.converter_efficiency
    after = discharge_transaction(state, cfg.packet_energy, pp, efficiency)
    if after is None:
        # brown-out: the converter runs the buffer down to its cutoff
        return CapacitorState(min(state.voltage, pp.converter_cutoff), state.time), 0, 0
    gate = gate_step(gate, False, after.voltage, pp, transaction_complete=True)
    assert gate is GateState.POST_TRANSACTION
    delivered = int(rng.random() >= cfg.channel_loss_probability)
    return after, 1, delivered


def _stroke(state: CapacitorState, event: ActuationEvent, cfg: DeploymentConfig, rng):
    """One open/close motion with its trigger point(s)."""
    sent = delivered = 0
    trigger_v = 0.0
    for phase in ("opening", "closing"):
        profile = angular_velocity_profile(event, phase, cfg.profile_shape)
        traj = integrate_charging(profile, cfg.gear_ratio, cfg.generator, cfg.powerpath, state, cfg.dt, record=False)
        state = traj.end
        if phase == "closing" or cfg.workload.packets_per_access == 2:
            trigger_v = max(trigger_v, state.voltage)
            state, s, d = _attempt(state, cfg, rng)
            sent += s
            delivered += d
    return state, trigger_v, sent, delivered


def classify(sent: int, delivered: int) -> EventOutcome:
    if sent == 0:
        return EventOutcome.NO_CHARGE
    if delivered == 0:
        return EventOutcome.CHANNEL_LOSS
    if delivered >= 2:
        return EventOutcome.DOUBLE_PACKET
    return EventOutcome.SINGLE_PACKET


def _run_access(
    cap: CapacitorState,
    event: ActuationEvent,
    cfg: DeploymentConfig,
    rng,
    reopen: ActuationEvent | None = None,
    index: int = 0,
    label: str = "",
) -> tuple[EventRecord, CapacitorState]:
    state, trigger_v, sent, delivered = _stroke(cap, event, cfg, rng)
    state = apply_leakage(state, event.gap_to_next, cfg.powerpath)
    if reopen is not None:
        state, v2, s, d = _stroke(state, reopen, cfg, rng)
        trigger_v = max(trigger_v, v2)
        sent += s
        delivered += d
        state = apply_leakage(state, reopen.gap_to_next, cfg.powerpath)
    record = EventRecord(index, label, event, reopen is not None, trigger_v, sent, delivered, classify(sent, delivered))
    return record, state


def simulate_event(
    cap: CapacitorState,
    event: ActuationEvent,
    cfg: DeploymentConfig,
    rng: np.random.Generator,
    reopen: ActuationEvent | None = None,
) -> tuple[EventOutcome, CapacitorState]:
    """Run one access from buffer state ``cap``.

    ``reopen`` is a rapid re-opening that starts ``event.gap_to_next`` after
    closure, inside the debounce window; its trigger may send a second packet
    from the residual charge. The returned state includes leakage over the
    idle gap that follows the access.
    """
    record, state = _run_access(cap, event, cfg, rng, reopen)
    return record.outcome, state


# --- deployments -----------------------------------------------------------------

def group_accesses(events: Sequence[ActuationEvent], window: float):
    """Fold each event that follows within ``window`` into the previous access."""
    out = []
    i = 0
    while i < len(events):
        ev = events[i]
        if i + 1 < len(events) and ev.gap_to_next < window:
            out.append((ev, events[i + 1]))
            i += 2
        else:
            out.append((ev, None))
            i += 1
    return out


def apportion(total: int, weights: Sequence[int]) -> list[int]:
    """Largest-remainder split of ``total`` proportional to ``weights``."""
    wsum = sum(weights)
    raw = [total * w / wsum for w in weights]
    counts = [int(math.floor(x)) for x in raw]
    order = sorted(range(len(raw)), key=lambda k: (counts[k] - raw[k], k))
    for k in order[: total - sum(counts)]:
        counts[k] += 1
    return counts


def _location_plan(cfg: DeploymentConfig) -> list[tuple[str, int]]:
    if not cfg.locations:
        return [("all", cfg.event_count)]
    labels = [lbl for lbl, _ in cfg.locations]
    counts = apportion(cfg.event_count, [n for _, n in cfg.locations])
    return list(zip(labels, counts))


def _simulate_location(cfg: DeploymentConfig, loc: int, label: str, count: int) -> list[EventRecord]:
    dist = cfg.distribution
    state = CapacitorState(cfg.initial_voltage)
    records = []
    for i in range(count):
        motion_rng = derive_rng(cfg.seed, "motion", loc, i)
        event = sample_actuation(dist, motion_rng)
        reopen = sample_actuation(dist, motion_rng) if event.gap_to_next < cfg.debounce_window else None
        channel_rng = derive_rng(cfg.seed, "channel", loc, i)
        record, state = _run_access(state, event, cfg, channel_rng, reopen, len(records), label)
        records.append(record)
    return records


def simulate_deployment(cfg: DeploymentConfig) -> DeploymentReport:
    """Fold accesses per location timeline, each starting from ``initial_voltage``."""
    if cfg.trace is not None:
        from .motion import read_trace

        return replay_trace(read_trace(cfg.trace), cfg)
    if cfg.distribution is None:
        raise ConfigError("deployment without a trace needs an actuation distribution")
    records: list[EventRecord] = []
    plan = _location_plan(cfg)
    for loc, (label, count) in enumerate(plan):
        for r in _simulate_location(cfg, loc, label, count):
            records.append(dataclasses.replace(r, index=len(records)))
    return DeploymentReport(records, cfg.fingerprint(), cfg.seed, tuple(lbl for lbl, _ in plan))


def simulate_events(events: Sequence[ActuationEvent], cfg: DeploymentConfig, label: str = "trace") -> DeploymentReport:
    """Simulate a fixed event sequence on one timeline."""
    state = CapacitorState(cfg.initial_voltage)
    records = []
    for i, (event, reopen) in enumerate(group_accesses(events, cfg.debounce_window)):
        rng = derive_rng(cfg.seed, "channel", 0, i)
        record, state = _run_access(state, event, cfg, rng, reopen, i, label)
        records.append(record)
    return DeploymentReport(records, cfg.fingerprint(), cfg.seed, (label,))


def replay_trace(trace: Sequence[TraceRecord], cfg: DeploymentConfig) -> DeploymentReport:
    events = segment_actuations(trace, cfg.open_threshold)
    if not events:
        raise InsufficientDataError("trace contains no actuation events")
    return simulate_events(events, cfg, "trace")


def summarize(report: DeploymentReport) -> tuple[list[tuple[str, int, int, float]], tuple[str, int, int, float]]:
    """Per-label rows (label, actuations, packets, success %) and a totals row.

    ``packets`` counts accesses with at least one delivered packet; success
    percentages are truncated to one decimal.
    """
    per: dict[str, list[int]] = {}
    for r in report.records:
        row = per.setdefault(r.label, [0, 0])
        row[0] += 1
        row[1] += r.packets_delivered > 0
    rows = [(label, n, ok, _pct(ok, n)) for label, (n, ok) in per.items()]
    n_tot = sum(r[1] for r in rows)
    ok_tot = sum(r[2] for r in rows)
    return rows, ("Total", n_tot, ok_tot, _pct(ok_tot, n_tot))


def _pct(ok: int, n: int) -> float:
    if n == 0:
        return 0.0
    return math.floor(1000.0 * ok / n + 1e-9) / 10.0


def summary_csv(report: DeploymentReport) -> str:
    rows, total = summarize(report)
    lines = ["label,actuations,packets,success_pct"]
    for label, n, ok, pct in rows + [total]:
        lines.append(f"{label},{n},{ok},{pct:.1f}")
    return "\n".join(lines) + "\n"


def summary_table(report: DeploymentReport) -> str:
    rows, total = summarize(report)
    width = max([len(r[0]) for r in rows + [total]] + [8])
    out = [f"{'Location':<{width}}  {'Actuations':>10}  {'Packets':>8}  {'Success %':>9}"]
    for label, n, ok, pct in rows + [total]:
        out.append(f"{label:<{width}}  {n:>10}  {ok:>8}  {pct:>9.1f}")
    return "\n".join(out) + "\n"


# --- replicates ---------------------------------------------------------------

def replicate_seed(seed: int, replicate: int) -> int:
    return int(derive_rng(seed, "replicate", replicate).integers(0, 2**63 - 1))


def _replicate(args):
    cfg, r = args
    report = simulate_deployment(cfg.with_(seed=replicate_seed(cfg.seed, r)))
    return r, report.outcome_counts, report.success_rate


def run_replicates(cfg: DeploymentConfig, n: int, jobs: int = 1) -> list[tuple[int, dict, float]]:
    """Independent replicates; results are ordered by replicate index."""
    tasks = [(cfg, r) for r in range(n)]
    if jobs <= 1:
        results = [_replicate(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_replicate, tasks))
    return sorted(results, key=lambda x: x[0])
