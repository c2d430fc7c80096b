"""Offline analyzers for recorded multi-tile sessions.

* Gait: a six-tile insole, one ADC channel per tile.  A channel is *active*
  when its typical windowed variance clearly exceeds its own noise level,
  and *periodic* when its autocorrelation has a significant peak between
  0.4 s and 3 s.  Both tests are invariant to affine rescaling of the
  channel, so raw counts from tiles with very different wiring resistance
  can be compared directly.
* Grasp: a multi-tile hand sensor; the tile with the largest resistance
  change decides whether the object sits at the fingertips or deep in the
  hand.

The ``synthetic_*`` generators produce the fixture sessions used in the
tests; every generation parameter is an argument.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import yaml
from numpy.lib.stride_tricks import sliding_window_view

from .response import ReadoutConfig, ResponseParams, adc_counts, divider_voltage, preset, rf_eval


class TooShort(ValueError):
    pass


class LayoutError(ValueError):
    pass


@dataclass(frozen=True)
class TimeSeriesFrame:
    t: float
    channels: tuple[float, ...]


@dataclass(frozen=True)
class Session:
    """Samples ``data[i, ch]`` taken at times ``t[i]`` (seconds)."""

    t: np.ndarray
    data: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        d = np.asarray(self.data, dtype=float)
        if d.ndim == 1:
            d = d[:, None]
        if d.ndim != 2 or len(d) != len(t):
            raise ValueError("data must be (samples, channels) matching t")
        if len(t) > 1 and not np.all(np.diff(t) > 0):
            raise ValueError("timestamps must be strictly increasing")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "data", d)

    @property
    def n_channels(self) -> int:
        return self.data.shape[1]

    @property
    def duration(self) -> float:
        return float(self.t[-1] - self.t[0]) if len(self.t) > 1 else 0.0

    @property
    def rate(self) -> float:
        return (len(self.t) - 1) / self.duration if self.duration > 0 else 0.0

    def frames(self) -> list[TimeSeriesFrame]:
        return [TimeSeriesFrame(float(t), tuple(float(v) for v in row)) for t, row in zip(self.t, self.data)]

    @classmethod
    def from_frames(cls, frames: Sequence[TimeSeriesFrame]) -> "Session":
        if not frames:
            raise ValueError("empty session")
        n = len(frames[0].channels)
        if any(len(f.channels) != n for f in frames):
            raise ValueError("channel count changes within the session")
        return cls(np.array([f.t for f in frames]), np.array([f.channels for f in frames]))


def _as_session(series) -> Session:
    return series if isinstance(series, Session) else Session.from_frames(list(series))


def read_session_csv(path: str | Path) -> Session:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if not header or header[0] != "t_s" or any(h != f"ch{i}" for i, h in enumerate(header[1:])):
            raise ValueError("session CSV header must be t_s,ch0,ch1,...")
        rows = np.array([[float(v) for v in row] for row in reader if row])
    return Session(rows[:, 0], rows[:, 1:])


def write_session_csv(session: Session, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t_s"] + [f"ch{i}" for i in range(session.n_channels)])
        for t, row in zip(session.t, session.data):
            w.writerow([f"{t:.4f}"] + [f"{v:g}" for v in row])


# --- activity -----------------------------------------------------------

@dataclass(frozen=True)
class ActivityConfig:
    window_s: float = 2.0
    k: float = 6.0
    period_min_s: float = 0.4
    period_max_s: float = 3.0
    min_duration_s: float = 4.0
    min_rate_hz: float = 10.0
    min_peak: float = 0.3


@dataclass(frozen=True)
class ChannelActivity:
    channel: int
    variance: float
    threshold: float
    period: float | None
    active: bool

    @property
    def periodic(self) -> bool:
        return self.period is not None


def noise_variance(x: np.ndarray) -> float:
    """Robust white-noise variance from second differences.

    For white noise of variance s^2 the second difference has variance
    6 s^2; the MAD makes the estimate blind to a smooth underlying signal.
    Quantized data adds a floor of one resolution step squared over 12.
    """
    d2 = x[2:] - 2.0 * x[1:-1] + x[:-2]
    mad = np.median(np.abs(d2 - np.median(d2))) if len(d2) else 0.0
    sigma2 = (1.4826 * mad) ** 2 / 6.0
    u = np.unique(x)
    step = np.min(np.diff(u)) if len(u) > 1 else 0.0
    return float(max(sigma2, step * step / 12.0))


def dominant_period(x: np.ndarray, rate: float, cfg: ActivityConfig = ActivityConfig()) -> float | None:
    """Autocorrelation period in ``[period_min_s, period_max_s]`` or None."""
    x = np.asarray(x, dtype=float) - np.mean(x)
    n = len(x)
    denom = float(np.dot(x, x))
    if denom <= 0:
        return None
    nfft = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, nfft)
    ac = np.fft.irfft(f * np.conj(f), nfft)[:n] / denom
    lo = max(1, int(np.floor(cfg.period_min_s * rate)))
    hi = min(n - 2, int(np.ceil(cfg.period_max_s * rate)))
    if hi <= lo:
        return None
    seg = ac[lo : hi + 1]
    peaks = [i for i in range(1, len(seg) - 1) if seg[i] >= seg[i - 1] and seg[i] > seg[i + 1]]
    if not peaks:
        return None
    i = max(peaks, key=lambda j: seg[j])
    bound = max(1.96 / np.sqrt(n), cfg.min_peak)
    if seg[i] <= bound:
        return None
    y0, y1, y2 = seg[i - 1], seg[i], seg[i + 1]
    den = y0 - 2 * y1 + y2
    shift = 0.5 * (y0 - y2) / den if den != 0 else 0.0
    return float((lo + i + shift) / rate)


def channel_activity(series, channel: int, cfg: ActivityConfig = ActivityConfig()) -> ChannelActivity:
    s = _as_session(series)
    if s.duration < cfg.min_duration_s or s.rate < cfg.min_rate_hz:
        raise TooShort(
            f"need >= {cfg.min_duration_s} s at >= {cfg.min_rate_hz} Hz, "
            f"got {s.duration:.2f} s at {s.rate:.1f} Hz"
        )
    if not 0 <= channel < s.n_channels:
        raise IndexError(f"channel {channel} not in session")
    x = s.data[:, channel]
    win = max(3, int(round(cfg.window_s * s.rate)))
    win = min(win, len(x))
    variance = float(np.median(sliding_window_view(x, win).var(axis=1)))
    # floor at float resolution so rounding in a constant channel never counts
    resolution = 64.0 * float(np.spacing(np.max(np.abs(x)))) if len(x) else 0.0
    threshold = max(cfg.k * noise_variance(x), resolution * resolution)
    active = variance > threshold
    period = dominant_period(x, s.rate, cfg) if active else None
    return ChannelActivity(channel, variance, threshold, period, active)


# --- gait ---------------------------------------------------------------

class Gait(str, enum.Enum):
    WALKING = "Walking"
    STAIRS = "Stairs"
    IDLE = "Idle"


@dataclass(frozen=True)
class GaitLayout:
    zones: Mapping[int, str]

    @property
    def heel_channels(self) -> list[int]:
        return sorted(ch for ch, z in self.zones.items() if z.lower().startswith("heel"))

    @classmethod
    def from_dict(cls, d: Mapping) -> "GaitLayout":
        zones = d.get("channels", d)
        return cls({int(k): str(v) for k, v in zones.items()})

    def to_dict(self) -> dict:
        return {"channels": {int(k): v for k, v in sorted(self.zones.items())}}


def load_layout(path: str | Path) -> dict:
    """Layout file: ``gait: {channels: {...}}`` and/or ``grasp: {tiles: {...}}``."""
    try:
        doc = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise LayoutError(f"layout is not valid YAML: {exc}") from None
    if not isinstance(doc, dict):
        raise LayoutError("layout file must be a mapping")
    return doc


def default_sole_layout() -> GaitLayout:
    return GaitLayout({0: "toe", 1: "forefoot_medial", 2: "forefoot_lateral", 3: "midfoot",
                       4: "heel_medial", 5: "heel_lateral"})


@dataclass(frozen=True)
class GaitReport:
    label: Gait
    channels: tuple[ChannelActivity, ...]
    tie_rule: bool = False


def classify_gait(series, layout: GaitLayout, cfg: ActivityConfig = ActivityConfig()) -> GaitReport:
    """Walking / Stairs / Idle from per-channel activity.

    Clear cases: no channel active is Idle; every channel active and periodic
    is Walking; silent heels with every other channel active and periodic is
    Stairs.  Anything else falls to the tie rule: any active heel channel
    means Walking, otherwise Stairs.
    """
    s = _as_session(series)
    heels = layout.heel_channels
    if not heels:
        raise LayoutError("layout has no heel channel")
    chans = sorted(layout.zones)
    if any(c >= s.n_channels for c in chans):
        raise LayoutError("layout names a channel the session does not have")
    acts = tuple(channel_activity(s, c, cfg) for c in chans)
    by = {a.channel: a for a in acts}
    ok = lambda a: a.active and a.periodic
    if not any(a.active for a in acts):
        return GaitReport(Gait.IDLE, acts)
    if all(ok(a) for a in acts):
        return GaitReport(Gait.WALKING, acts)
    others = [c for c in chans if c not in heels]
    if not any(by[h].active for h in heels) and all(ok(by[c]) for c in others):
        return GaitReport(Gait.STAIRS, acts)
    heel_active = any(by[h].active for h in heels)
    return GaitReport(Gait.WALKING if heel_active else Gait.STAIRS, acts, tie_rule=True)


# --- grasp --------------------------------------------------------------

class Zone(str, enum.Enum):
    FINGERTIP = "Fingertip"
    DEEP = "Deep"


class GraspDecision(str, enum.Enum):
    FINGERTIP = "Fingertip"
    DEEP = "Deep"
    NONE = "None"
    AMBIGUOUS = "Ambiguous"


TIE_FRACTION = 0.05


def default_hand_zones() -> dict[int, Zone]:
    """Four-tile hand sensor, tiles numbered from 1 as printed."""
    return {1: Zone.FINGERTIP, 2: Zone.FINGERTIP, 3: Zone.DEEP, 4: Zone.DEEP}


def _by_tile(values, keys=None) -> dict[int, float]:
    if isinstance(values, Mapping):
        return {int(k): float(v) for k, v in values.items()}
    keys = keys if keys is not None else range(1, len(values) + 1)
    return {int(k): float(v) for k, v in zip(keys, values)}


def localize_grasp(before, after, threshold: float, zone_map: Mapping[int, Zone]) -> GraspDecision:
    """Zone of the tile with the largest |dR| above ``threshold`` (ohm).

    Sequences are matched to tiles 1..n; mappings are matched by key.  If
    the leading tiles (within 5 % of the maximum) span different zones the
    answer is Ambiguous.
    """
    if threshold <= 0:
        raise ValueError("threshold must be > 0")
    if len(before) != len(after):
        raise ValueError(f"tile counts differ: {len(before)} vs {len(after)}")
    b = _by_tile(before, sorted(zone_map) if not isinstance(before, Mapping) else None)
    a = _by_tile(after, sorted(zone_map) if not isinstance(after, Mapping) else None)
    if set(a) != set(b):
        raise ValueError("before and after name different tiles")
    delta = {k: abs(a[k] - b[k]) for k in b}
    over = {k: d for k, d in delta.items() if d > threshold}
    if not over:
        return GraspDecision.NONE
    top = max(over.values())
    leaders = [k for k, d in over.items() if d >= (1.0 - TIE_FRACTION) * top]
    zones = {Zone(zone_map[k]) for k in leaders}
    if len(zones) > 1:
        return GraspDecision.AMBIGUOUS
    return GraspDecision(zones.pop().value)


# --- synthetic fixtures -------------------------------------------------

def stance_force(t: np.ndarray, cadence_hz: float, phase: float, peak: float, duty: float = 0.6) -> np.ndarray:
    """Half-sine load during the stance fraction ``duty`` of each stride."""
    u = np.mod(t * cadence_hz - phase, 1.0)
    f = np.where(u < duty, np.sin(np.pi * u / duty), 0.0)
    return peak * f


SOLE_PHASES = (0.45, 0.40, 0.38, 0.20, 0.0, 0.02)  # toe-off last, heel strike first


def synthetic_gait(
    kind: Gait | str,
    *,
    seed: int,
    duration_s: float = 10.0,
    rate_hz: float = 50.0,
    cadence_hz: float = 1.0,
    peak_force: float = 100.0,
    stand_force: float = 30.0,
    noise_n: float = 0.5,
    wire_ohms: Sequence[float] = (400.0, 900.0, 1500.0, 600.0, 2500.0, 3000.0),
    params: ResponseParams | None = None,
    cfg: ReadoutConfig = ReadoutConfig(),
) -> Session:
    """Six-channel ADC session for walking, stair climbing or standing.

    Per-channel forces go through the response curve (behind a different
    wiring resistance per tile) and the divider/ADC chain.  Stairs leave the
    heel tiles (channels 4 and 5) unloaded.  Idle holds a constant stance
    load on every tile.
    """
    kind = Gait(kind)
    rng = np.random.default_rng(seed)
    params = params or preset("baseline")
    t = np.arange(int(round(duration_s * rate_hz)) + 1) / rate_hz
    cols = []
    for ch in range(6):
        if kind is Gait.IDLE:
            f = np.full_like(t, stand_force)
        elif kind is Gait.STAIRS and ch >= 4:
            f = np.zeros_like(t)
        else:
            f = stance_force(t, cadence_hz, SOLE_PHASES[ch], peak_force)
        f = np.abs(f + rng.normal(0.0, noise_n, size=t.shape))
        r = rf_eval(params, f) + wire_ohms[ch]
        cols.append(adc_counts(divider_voltage(r, cfg), cfg))
    return Session(t, np.column_stack(cols))


def synthetic_grasp(
    active_tile: int | None,
    *,
    seed: int,
    delta_ohm: float = 1500.0,
    base_ohms: Mapping[int, float] | None = None,
    leak_ohm: float = 150.0,
) -> tuple[dict[int, float], dict[int, float]]:
    """(before, after) per-tile resistances for one grasp.

    Tiles 2 and 3 sit behind about twice the wiring resistance of 1 and 4.
    The pressed tile drops by ``delta_ohm``; the others drift by less than
    ``leak_ohm``.
    """
    rng = np.random.default_rng(seed)
    base = dict(base_ohms or {1: 3200.0, 2: 6400.0, 3: 6500.0, 4: 3300.0})
    after = {}
    for k, r in base.items():
        d = delta_ohm if k == active_tile else rng.uniform(-leak_ohm, leak_ohm)
        after[k] = r - d
    return base, after
