"""Hinge actuations: encoder traces, event segmentation, actuation statistics
and angular-velocity profiles used by the charging integrator."""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import brentq
from scipy.special import ndtr, ndtri

from .errors import DomainError, InsufficientDataError, TraceFormatError, TraceOrderError

TRACE_HEADER = ("timestamp_ms", "angle_deg", "limit_switch")
OPEN_THRESHOLD_DEG = 5.0
PARTIAL_ANGLE_DEG = 30.0
MAX_LID_ANGLE_DEG = 110.0
MIN_FIT_EVENTS = 10

PHASES = ("opening", "closing")
SHAPES = ("half_sine", "trapezoid")
TRAPEZOID_RAMP = 0.1


@dataclass(frozen=True)
class TraceRecord:
    timestamp: int  # ms since epoch
    angle: float  # degrees, 0 = fully closed
    limit_switch: bool  # True when the closed position is reached


@dataclass(frozen=True)
class ActuationEvent:
    opening_angle: float
    opening_duration: float
    closing_duration: float
    gap_to_next: float = 0.0
    partial: bool = False

    def __post_init__(self):
        if not self.opening_angle > 0:
            raise DomainError(f"opening_angle must be > 0, got {self.opening_angle}")
        if not (self.opening_duration > 0 and self.closing_duration > 0):
            raise DomainError("durations must be > 0")
        if not self.gap_to_next >= 0:
            raise DomainError(f"gap_to_next must be >= 0, got {self.gap_to_next}")


class EventList(list):
    """List of events; ``truncated`` is set when the trace ended mid-excursion."""

    truncated: bool = False


@dataclass(frozen=True)
class MotionProfile:
    phase: str
    shape: str
    angle: float  # degrees swept
    duration: float  # seconds

    def __post_init__(self):
        if self.phase not in PHASES:
            raise DomainError(f"unknown phase {self.phase!r}")
        if self.shape not in SHAPES:
            raise DomainError(f"unknown profile shape {self.shape!r}")
        if self.angle < 0 or self.duration <= 0:
            raise DomainError("profile needs angle >= 0 and duration > 0")

    @property
    def peak_rate(self) -> float:
        """Peak angular speed in degrees per second."""
        if self.shape == "half_sine":
            return math.pi * self.angle / (2.0 * self.duration)
        return self.angle / ((1.0 - TRAPEZOID_RAMP) * self.duration)

    def rate(self, t):
        """Angular speed magnitude (deg/s) at time ``t`` into the phase."""
        t = np.asarray(t, dtype=float)
        T = self.duration
        inside = (t >= 0) & (t <= T)
        if self.shape == "half_sine":
            w = self.peak_rate * np.sin(np.pi * np.clip(t, 0, T) / T)
        else:
            ramp = TRAPEZOID_RAMP * T
            w = self.peak_rate * np.minimum(1.0, np.minimum(t, T - t) / ramp)
        return np.where(inside, np.maximum(w, 0.0), 0.0)

    def rpm(self, t):
        return self.rate(t) / 6.0

    def displacement(self, t):
        """Angle swept since the start of the phase (degrees)."""
        t = np.clip(np.asarray(t, dtype=float), 0.0, self.duration)
        T = self.duration
        if self.shape == "half_sine":
            return 0.5 * self.angle * (1.0 - np.cos(np.pi * t / T))
        ramp = TRAPEZOID_RAMP * T
        w = self.peak_rate
        up = 0.5 * w * np.minimum(t, ramp) ** 2 / ramp
        flat = w * np.clip(t - ramp, 0.0, T - 2 * ramp)
        tail = np.clip(t - (T - ramp), 0.0, ramp)
        down = w * tail - 0.5 * w * tail**2 / ramp
        return up + flat + down


@dataclass(frozen=True)
class ActuationDistribution:
    angle_mean: float = 72.5
    angle_cv: float = 0.25
    open_duration_mean: float = 0.70
    open_duration_cv: float = 0.25
    close_duration_mean: float = 0.45
    close_duration_cv: float = 0.25
    partial_probability: float = 0.005
    partial_angle_range: tuple[float, float] = (5.0, 30.0)
    inter_arrival_mean: float = 1500.0

    def __post_init__(self):
        means = (self.angle_mean, self.open_duration_mean, self.close_duration_mean, self.inter_arrival_mean)
        if min(means) <= 0:
            raise DomainError("distribution means must be > 0")
        if self.angle_mean > MAX_LID_ANGLE_DEG:
            raise DomainError(f"angle_mean above lid travel limit {MAX_LID_ANGLE_DEG}")
        if min(self.angle_cv, self.open_duration_cv, self.close_duration_cv) < 0:
            raise DomainError("coefficients of variation must be >= 0")
        if not 0.0 <= self.partial_probability <= 1.0:
            raise DomainError("partial_probability must lie in [0, 1]")
        lo, hi = self.partial_angle_range
        if not 0 < lo <= hi:
            raise DomainError("partial_angle_range must satisfy 0 < lo <= hi")


# --- traces -----------------------------------------------------------------

def parse_trace(lines: str | Iterable[str]) -> list[TraceRecord]:
    """Parse trace CSV text (``timestamp_ms,angle_deg,limit_switch``).

    A header row is optional; ``#`` comment lines and blank lines are skipped.
    Line numbers in errors are 1-based positions in the input.
    """
    if isinstance(lines, str):
        lines = lines.splitlines()
    records: list[TraceRecord] = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = [f.strip() for f in line.split(",")]
        if tuple(fields) == TRACE_HEADER:
            continue
        if len(fields) != 3:
            raise TraceFormatError(f"expected 3 fields, got {len(fields)}: {line!r}", lineno)
        try:
            ts = int(fields[0])
            angle = float(fields[1])
            switch = fields[2]
        except ValueError:
            raise TraceFormatError(f"unparsable row {line!r}", lineno) from None
        if switch not in ("0", "1"):
            raise TraceFormatError(f"limit_switch must be 0 or 1, got {switch!r}", lineno)
        if not math.isfinite(angle) or angle < 0:
            raise TraceFormatError(f"angle must be a finite value >= 0, got {fields[1]!r}", lineno)
        if records and ts <= records[-1].timestamp:
            raise TraceOrderError(
                f"timestamp {ts} does not increase (previous {records[-1].timestamp})", lineno
            )
        records.append(TraceRecord(ts, angle, switch == "1"))
    return records


def read_trace(path: str | Path) -> list[TraceRecord]:
    with open(path, encoding="utf-8") as fh:
        return parse_trace(fh)


def format_trace(records: Sequence[TraceRecord]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(TRACE_HEADER)
    for r in records:
        writer.writerow([r.timestamp, f"{r.angle:.4f}", int(r.limit_switch)])
    return out.getvalue()


def synthesize_trace(
    events: Sequence[ActuationEvent],
    sample_rate: float = 1000.0,
    shape: str = "half_sine",
    start_ms: int = 0,
    lead_in: float = 1.0,
) -> list[TraceRecord]:
    """Render events as an encoder trace sampled at ``sample_rate`` Hz.

    Each event opens and closes with the given profile shape; the limit switch
    reads closed only while the lid is at rest. The trace ends ``gap_to_next``
    after the last closure.
    """
    if not 0 < sample_rate <= 1000:
        raise DomainError("sample_rate must lie in (0, 1000] Hz for integer-ms timestamps")
    segments = []  # (t_open, t_peak, t_close, opening profile, closing profile)
    t = lead_in
    for ev in events:
        up = angular_velocity_profile(ev, "opening", shape)
        down = angular_velocity_profile(ev, "closing", shape)
        segments.append((t, t + ev.opening_duration, t + ev.opening_duration + ev.closing_duration, up, down))
        t += ev.opening_duration + ev.closing_duration + ev.gap_to_next
    end = t
    n = int(math.floor(end * sample_rate)) + 1
    times = np.arange(n) / sample_rate
    angles = np.zeros(n)
    moving = np.zeros(n, dtype=bool)
    for t0, tp, tc, up, down in segments:
        m_open = (times > t0) & (times <= tp)
        angles[m_open] = up.displacement(times[m_open] - t0)
        m_close = (times > tp) & (times < tc)
        angles[m_close] = up.angle - down.displacement(times[m_close] - tp)
        moving |= m_open | m_close
    stamps = start_ms + np.rint(times * 1000.0).astype(np.int64)
    return [
        TraceRecord(int(ts), float(max(a, 0.0)), not mv)
        for ts, a, mv in zip(stamps, angles, moving)
    ]


def segment_actuations(
    records: Sequence[TraceRecord], open_threshold: float = OPEN_THRESHOLD_DEG
) -> EventList:
    """Split a trace into actuation events.

    An event is one excursion above ``open_threshold``. Its opening runs from
    motion onset (walking back from the threshold crossing to the last rest
    sample) to the peak angle; closing runs from the peak to the first
    limit-switch closure. An excursion still open at the end of the trace is
    dropped and ``truncated`` is set on the result.
    """
    if open_threshold <= 0:
        raise DomainError("open_threshold must be > 0")
    result = EventList()
    n = len(records)
    if n == 0:
        return result
    t = np.array([r.timestamp for r in records], dtype=np.int64)
    a = np.array([r.angle for r in records], dtype=float)
    sw = np.array([r.limit_switch for r in records], dtype=bool)
    if np.any(np.diff(t) <= 0):
        raise TraceOrderError("timestamps must be strictly increasing")

    above = a > open_threshold
    edges = np.diff(above.astype(np.int8))
    starts = list(np.flatnonzero(edges == 1) + 1)
    ends = list(np.flatnonzero(edges == -1))
    if above[0]:
        starts.insert(0, 0)
    if above[-1]:
        ends.append(n - 1)

    spans = []  # (onset, peak, closure)
    for i0, i1 in zip(starts, ends):
        if i1 == n - 1 and above[-1]:
            result.truncated = True
            break
        k = i0
        while k > 0 and a[k - 1] < a[k]:
            k -= 1
        peak = i0 + int(np.argmax(a[i0 : i1 + 1]))
        closed = np.flatnonzero(sw[peak:])
        if closed.size:
            close = peak + int(closed[0])
        else:
            close = i1 + 1
            while close < n - 1 and a[close + 1] < a[close]:
                close += 1
        spans.append((k, peak, close))

    if result.truncated:
        warnings.warn("trace ends mid-excursion; last event dropped", stacklevel=2)

    ts = t / 1000.0
    for idx, (onset, peak, close) in enumerate(spans):
        t_peak = _peak_time(ts, a, peak)
        t_close = _closure_time(ts, a, close)
        if idx + 1 < len(spans):
            gap = ts[spans[idx + 1][0]] - t_close
        else:
            gap = ts[-1] - t_close
        opening = t_peak - ts[onset]
        closing = t_close - t_peak
        if opening <= 0 or closing <= 0:
            continue
        peak_angle = float(a[peak])
        result.append(
            ActuationEvent(
                opening_angle=peak_angle,
                opening_duration=float(opening),
                closing_duration=float(closing),
                gap_to_next=float(max(gap, 0.0)),
                partial=peak_angle < PARTIAL_ANGLE_DEG,
            )
        )
    return result


def _peak_time(ts, a, k: int) -> float:
    """Vertex of the parabola through the samples around the maximum."""
    if k == 0 or k + 1 >= len(a):
        return float(ts[k])
    y0, y1, y2 = a[k - 1], a[k], a[k + 1]
    h0, h1 = ts[k] - ts[k - 1], ts[k + 1] - ts[k]
    denom = h1 * (y0 - y1) + h0 * (y2 - y1)
    if denom >= 0:
        return float(ts[k])
    # vertex of the quadratic through three unevenly spaced points
    num = h1 * h1 * (y0 - y1) - h0 * h0 * (y2 - y1)
    shift = 0.5 * num / denom
    return float(ts[k] + min(max(shift, -h0 / 2), h1 / 2))


def _closure_time(ts, a, k: int) -> float:
    """Closure time between the last moving sample and the first closed one.

    The angle is assumed to come to rest quadratically (zero speed at
    contact), which places closure where sqrt(angle) extrapolates to zero.
    A lid that slams shut reaches zero sooner, so the estimate is capped at
    the first closed sample.
    """
    if k < 2:
        return float(ts[k])
    r1, r2 = math.sqrt(max(a[k - 2], 0.0)), math.sqrt(max(a[k - 1], 0.0))
    if not r1 > r2 > 0:
        return float(ts[k])
    t_est = ts[k - 1] + r2 * (ts[k - 1] - ts[k - 2]) / (r1 - r2)
    return float(min(max(t_est, ts[k - 1]), ts[k]))


# --- kinematics ---------------------------------------------------------------

def hinge_speed_rpm(angle: float, duration: float) -> float:
    """Average hinge speed in RPM for ``angle`` degrees swept in ``duration`` s."""
    if angle <= 0 or duration <= 0:
        raise DomainError(f"angle and duration must be > 0 (got {angle}, {duration})")
    return (angle / 360.0) / duration * 60.0


def angular_velocity_profile(event: ActuationEvent, phase: str, shape: str = "half_sine") -> MotionProfile:
    duration = event.opening_duration if phase == "opening" else event.closing_duration
    return MotionProfile(phase=phase, shape=shape, angle=event.opening_angle, duration=duration)


# --- statistics ---------------------------------------------------------------

def _moments(values) -> tuple[float, float]:
    arr = np.asarray(values, dtype=float)
    mean = float(arr.mean())
    return mean, float(arr.std() / mean)


def fit_distribution(events: Sequence[ActuationEvent]) -> ActuationDistribution:
    """Method-of-moments fit. Means and cvs come from full (non-partial) events."""
    full = [e for e in events if not e.partial]
    if len(full) < MIN_FIT_EVENTS:
        raise InsufficientDataError(
            f"need at least {MIN_FIT_EVENTS} non-partial events, got {len(full)}"
        )
    partials = [e.opening_angle for e in events if e.partial]
    angle_mean, angle_cv = _moments([e.opening_angle for e in full])
    open_mean, open_cv = _moments([e.opening_duration for e in full])
    close_mean, close_cv = _moments([e.closing_duration for e in full])
    gap_mean = float(np.mean([e.gap_to_next for e in events]))
    defaults = ActuationDistribution()
    return ActuationDistribution(
        angle_mean=angle_mean,
        angle_cv=angle_cv,
        open_duration_mean=open_mean,
        open_duration_cv=open_cv,
        close_duration_mean=close_mean,
        close_duration_cv=close_cv,
        partial_probability=len(partials) / len(events),
        partial_angle_range=(min(partials), max(partials)) if partials else defaults.partial_angle_range,
        # a trace with no idle time carries no arrival information
        inter_arrival_mean=gap_mean if gap_mean > 0 else defaults.inter_arrival_mean,
    )


@lru_cache(maxsize=64)
def _truncnorm_loc(mean: float, sd: float, upper: float) -> float:
    """Location of a normal truncated to (0, upper] whose mean equals ``mean``."""

    def truncated_mean(loc):
        a, b = (0.0 - loc) / sd, (upper - loc) / sd
        z = ndtr(b) - ndtr(a)
        pdf = lambda x: math.exp(-0.5 * x * x) / math.sqrt(2 * math.pi)
        return loc + sd * (pdf(a) - pdf(b)) / z

    lo, hi = mean - 10 * sd, mean + 10 * sd
    return brentq(lambda loc: truncated_mean(loc) - mean, lo, hi, xtol=1e-12)


def _lognormal(rng: np.random.Generator, mean: float, cv: float) -> float:
    if cv == 0:
        return mean
    sigma2 = math.log1p(cv * cv)
    return float(rng.lognormal(math.log(mean) - 0.5 * sigma2, math.sqrt(sigma2)))


def sample_actuation(dist: ActuationDistribution, rng: np.random.Generator) -> ActuationEvent:
    """Draw one actuation.

    Full-actuation angles follow a normal truncated to (0, 110] deg, located so
    the truncated mean equals ``angle_mean``; durations are lognormal with the
    given mean and cv; the gap to the next event is exponential.
    """
    partial = bool(rng.random() < dist.partial_probability)
    if partial:
        lo, hi = dist.partial_angle_range
        angle = float(rng.uniform(lo, hi))
    elif dist.angle_cv == 0:
        angle = dist.angle_mean
    else:
        sd = dist.angle_cv * dist.angle_mean
        loc = _truncnorm_loc(dist.angle_mean, sd, MAX_LID_ANGLE_DEG)
        lo_p = ndtr((0.0 - loc) / sd)
        hi_p = ndtr((MAX_LID_ANGLE_DEG - loc) / sd)
        u = rng.random()
        angle = float(loc + sd * ndtri(lo_p + u * (hi_p - lo_p)))
        angle = min(max(angle, 1e-6), MAX_LID_ANGLE_DEG)
    opening = _lognormal(rng, dist.open_duration_mean, dist.open_duration_cv)
    closing = _lognormal(rng, dist.close_duration_mean, dist.close_duration_cv)
    gap = float(rng.exponential(dist.inter_arrival_mean))
    return ActuationEvent(angle, opening, closing, gap, partial)
