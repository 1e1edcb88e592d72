"""SoC power modes and duty-cycled average power / battery lifetime."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

from vega_twin.cwu.power import CwuPowerTable, cwu_power
from vega_twin.memory import retention_power

MODES = ("cognitive_sleep", "retentive_sleep", "soc_active", "cluster_active", "cluster_active_hwce")
BOUNDARIES = ("chip-level", "unit-level")
SCHEMA_VERSION = 1

F_MIN = 32e3
F_MAX = 450e6
SOC_ACTIVE_MW = (0.7, 15.0)
CLUSTER_PEAK_MW = 49.4

# measured operating points the residual terms are solved from
COGNITIVE_SLEEP_UW = 1.7
COGNITIVE_SLEEP_RETENTIVE_UW = 20.9
COGNITIVE_SLEEP_RETAINED_KB = 128


class PowerError(ValueError):
    pass


def _scaled(value: float, exp: int) -> float:
    # 12 significant digits strip float noise so the measured figures come back exactly
    return float(f"{value:.12g}e{exp}")


def _always_on_floor_uw(table: CwuPowerTable) -> float:
    lo = cwu_power(F_MIN, table)
    return COGNITIVE_SLEEP_UW - (lo.p_dyn_datapath_uw + lo.p_leak_uw)


def _retention_overhead_uw() -> float:
    return COGNITIVE_SLEEP_RETENTIVE_UW - COGNITIVE_SLEEP_UW - retention_power(COGNITIVE_SLEEP_RETAINED_KB)


@dataclass(frozen=True)
class PowerConfig:
    boundary: str = "chip-level"
    cwu_f_clk: float = F_MIN
    retained_kb: float = 0.0
    f_clk: float = F_MAX
    cwu_table: CwuPowerTable = field(default_factory=CwuPowerTable)
    wake_energy_j: float = 0.0

    def __post_init__(self) -> None:
        if self.boundary not in BOUNDARIES:
            raise PowerError(f"boundary {self.boundary!r} not in {BOUNDARIES}")
        if self.retained_kb < 0:
            raise PowerError("retained_kb must be >= 0")
        if self.wake_energy_j < 0:
            raise PowerError("wake_energy_j must be >= 0")

    def merged(self, **overrides) -> PowerConfig:
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})


def _check_f(f: float) -> None:
    if not F_MIN <= f <= F_MAX:
        raise PowerError(f"f_clk {f:g} Hz outside {F_MIN:g}..{F_MAX:g} Hz")


def mode_power(mode: str, cfg: PowerConfig | None = None) -> float:
    """Watts drawn in ``mode``."""
    cfg = cfg or PowerConfig()
    if mode == "cognitive_sleep":
        b = cwu_power(cfg.cwu_f_clk, cfg.cwu_table)
        if cfg.boundary == "unit-level":
            uw = b.total_uw
        else:
            # SPI pads sit outside the chip-level figure; the always-on floor is the residual
            uw = b.p_dyn_datapath_uw + b.p_leak_uw + _always_on_floor_uw(cfg.cwu_table)
        if cfg.retained_kb > 0:
            uw += retention_power(cfg.retained_kb) + _retention_overhead_uw()
        return _scaled(uw, -6)
    if mode == "retentive_sleep":
        return _scaled(retention_power(max(cfg.retained_kb, 16), "system-level"), -6)
    if mode == "soc_active":
        _check_f(cfg.f_clk)
        lo, hi = SOC_ACTIVE_MW
        t = (cfg.f_clk - F_MIN) / (F_MAX - F_MIN)
        return _scaled(lo * (1 - t) + hi * t, -3)
    if mode in ("cluster_active", "cluster_active_hwce"):
        _check_f(cfg.f_clk)
        t = cfg.f_clk / F_MAX
        return _scaled(SOC_ACTIVE_MW[1] * (1 - t) + CLUSTER_PEAK_MW * t, -3)
    raise PowerError(f"unknown mode {mode!r}; choose from {MODES}")


@dataclass(frozen=True)
class Segment:
    mode: str
    duration_s: float
    overrides: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise PowerError(f"unknown mode {self.mode!r}")
        if not self.duration_s > 0:
            raise PowerError("segment durations must be > 0")


@dataclass(frozen=True)
class DutyCycleProfile:
    segments: tuple[Segment, ...]
    events_per_period: int = 0  # wake transitions per pass through the segments

    @classmethod
    def periodic(cls, rate_hz: float, active_s: float, active_mode: str = "cluster_active",
                 sleep_mode: str = "cognitive_sleep", active_overrides: dict | None = None,
                 sleep_overrides: dict | None = None) -> DutyCycleProfile:
        if rate_hz <= 0 or active_s <= 0:
            raise PowerError("event rate and active duration must be > 0")
        period = 1.0 / rate_hz
        if active_s >= period:
            raise PowerError("active duration must be shorter than the event period")
        return cls((Segment(active_mode, active_s, dict(active_overrides or {})),
                    Segment(sleep_mode, period - active_s, dict(sleep_overrides or {}))), 1)

    @property
    def duration_s(self) -> float:
        return sum(s.duration_s for s in self.segments)


def average_power(profile: DutyCycleProfile, cfg: PowerConfig | None = None) -> float:
    """Time-weighted mean power in watts, wake transition energy included."""
    cfg = cfg or PowerConfig()
    if not profile.segments:
        raise PowerError("empty profile")
    energy = sum(mode_power(s.mode, cfg.merged(**s.overrides)) * s.duration_s for s in profile.segments)
    energy += profile.events_per_period * cfg.wake_energy_j
    return energy / profile.duration_s


def battery_lifetime(profile: DutyCycleProfile, battery_mah: float, voltage: float,
                     cfg: PowerConfig | None = None) -> float:
    """Hours on an ideal battery."""
    if battery_mah <= 0 or voltage <= 0:
        raise PowerError("battery capacity and voltage must be > 0")
    return battery_mah * 1e-3 * voltage * 3600.0 / average_power(profile, cfg) / 3600.0


_OVERRIDE_KEYS = {"f_clk", "cwu_f_clk", "retained_kb"}


def _segment(raw: dict, where: str) -> Segment:
    try:
        mode, dur = raw["mode"], raw["duration_s"]
    except KeyError as exc:
        raise PowerError(f"{where}: missing {exc.args[0]!r}") from None
    extra = {k: v for k, v in raw.items() if k not in ("mode", "duration_s")}
    unknown = set(extra) - _OVERRIDE_KEYS
    if unknown:
        raise PowerError(f"{where}: unknown field(s) {sorted(unknown)}")
    return Segment(mode, float(dur), {k: float(v) for k, v in extra.items()})


def profile_from_dict(data: dict) -> DutyCycleProfile:
    if data.get("schema_version") != SCHEMA_VERSION:
        raise PowerError(f"profile schema_version must be {SCHEMA_VERSION}")
    if "event" in data:
        e = data["event"]
        return DutyCycleProfile.periodic(float(e["rate_hz"]), float(e["active_s"]),
                                         e.get("active_mode", "cluster_active"),
                                         e.get("sleep_mode", "cognitive_sleep"))
    segs = data.get("segments")
    if not isinstance(segs, list) or not segs:
        raise PowerError("profile needs a non-empty 'segments' list or an 'event' block")
    return DutyCycleProfile(tuple(_segment(s, f"segments[{i}]") for i, s in enumerate(segs)),
                            int(data.get("events_per_period", 0)))


def load_profile(path: str | Path) -> DutyCycleProfile:
    try:
        return profile_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
    except json.JSONDecodeError as exc:
        raise PowerError(f"{path}: line {exc.lineno}: {exc.msg}") from None


def summarize(profile: DutyCycleProfile, cfg: PowerConfig | None = None,
              battery_mah: float = 100.0, voltage: float = 3.6) -> dict:
    cfg = cfg or PowerConfig()
    avg = average_power(profile, cfg)
    return {
        "schema_version": SCHEMA_VERSION,
        "boundary": cfg.boundary,
        "period_s": profile.duration_s,
        "segments": [{"mode": s.mode, "duration_s": s.duration_s,
                      "power_w": mode_power(s.mode, cfg.merged(**s.overrides))} for s in profile.segments],
        "average_power_w": avg,
        "battery_mah": battery_mah,
        "voltage_v": voltage,
        "lifetime_h": battery_lifetime(profile, battery_mah, voltage, cfg),
    }
