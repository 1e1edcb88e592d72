"""INI run configuration with flag > file > built-in precedence."""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from vega_twin.dnn.schedule import DNN_PROFILES, DnnConfig
from vega_twin.memory import CHANNEL_NAMES, PROFILE_NAMES, MemoryConfig, MemoryError_
from vega_twin.power import BOUNDARIES, PowerConfig

ENV_VAR = "VEGA_TWIN_CONFIG"
WEIGHT_HOMES = ("mram", "hyperram")
ENGINES = ("sw", "hwce")


class ConfigError(ValueError):
    pass


def _positive(name: str, v: float) -> float:
    if not v > 0:
        raise ConfigError(f"{name} must be > 0, got {v}")
    return v


@dataclass(frozen=True)
class Settings:
    network: str = "mobilenet_v2"
    weights: str = "mram"
    engine: str | None = None  # None keeps the per-layer engines of the descriptor
    f_soc: float | None = None
    f_cl: float | None = None
    dnn_profile: str = "nominal"
    memory_profile: str = "default"
    lookahead: int | None = None
    seed: int = 0
    jobs: int = 1
    boundary: str = "chip-level"
    cwu_f_clk: float = 32e3
    retained_kb: float = 0.0
    power_f_clk: float = 450e6
    wake_energy_j: float = 0.0
    battery_mah: float = 100.0
    voltage: float = 3.6
    memory_ini: str | None = field(default=None, repr=False)  # raw [memory]/[channel.*] overrides

    def __post_init__(self) -> None:
        if self.weights not in WEIGHT_HOMES:
            raise ConfigError(f"weights must be one of {WEIGHT_HOMES}, got {self.weights!r}")
        if self.engine is not None and self.engine not in ENGINES:
            raise ConfigError(f"engine must be one of {ENGINES}, got {self.engine!r}")
        if self.dnn_profile not in DNN_PROFILES:
            raise ConfigError(f"unknown DNN profile {self.dnn_profile!r}; choose from {DNN_PROFILES}")
        if self.memory_profile not in PROFILE_NAMES:
            raise ConfigError(f"unknown channel profile {self.memory_profile!r}; choose from {PROFILE_NAMES}")
        if self.boundary not in BOUNDARIES:
            raise ConfigError(f"boundary must be one of {BOUNDARIES}")
        for name in ("f_soc", "f_cl"):
            if getattr(self, name) is not None:
                _positive(name, getattr(self, name))
        for name in ("cwu_f_clk", "power_f_clk", "battery_mah", "voltage"):
            _positive(name, getattr(self, name))
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        if self.lookahead is not None and self.lookahead < 0:
            raise ConfigError("lookahead must be >= 0")

    def memory_config(self) -> MemoryConfig:
        try:
            if self.memory_ini is None:
                return MemoryConfig.from_profile(self.memory_profile)
            cp = configparser.ConfigParser()
            cp.read_string(self.memory_ini)
            if not cp.has_section("memory"):
                cp.add_section("memory")
            cp["memory"]["profile"] = self.memory_profile
            return MemoryConfig.from_parser(cp)
        except (MemoryError_, ValueError) as exc:
            raise ConfigError(f"memory configuration: {exc}") from None

    def dnn_config(self) -> DnnConfig:
        over = {"memory": self.memory_config(), "lookahead": self.lookahead}
        if self.f_soc is not None:
            over["f_soc"] = self.f_soc
        if self.f_cl is not None:
            over["f_cl"] = self.f_cl
        return DnnConfig.from_profile(self.dnn_profile, **over)

    def power_config(self) -> PowerConfig:
        return PowerConfig(boundary=self.boundary, cwu_f_clk=self.cwu_f_clk, retained_kb=self.retained_kb,
                           f_clk=self.power_f_clk, wake_energy_j=self.wake_energy_j)


# INI section -> {key: (settings field, parser)}
_KEYS = {
    "dnn": {
        "network": ("network", str), "weights": ("weights", str), "engine": ("engine", str),
        "f_soc": ("f_soc", float), "f_cl": ("f_cl", float), "profile": ("dnn_profile", str),
        "lookahead": ("lookahead", int),
    },
    "power": {
        "boundary": ("boundary", str), "cwu_f_clk": ("cwu_f_clk", float),
        "retained_kb": ("retained_kb", float), "f_clk": ("power_f_clk", float),
        "wake_energy_j": ("wake_energy_j", float), "battery_mah": ("battery_mah", float),
        "voltage": ("voltage", float),
    },
    "run": {"seed": ("seed", int), "jobs": ("jobs", int)},
}
_MEMORY_KEYS = {"profile", "setup_s", "contention_derate"}
_CHANNEL_KEYS = {"bandwidth_mbps", "energy_pj_per_byte"}


def parse_ini(text: str, source: str = "<config>") -> dict:
    """Validated field overrides from INI text."""
    cp = configparser.ConfigParser()
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    out: dict = {}
    mem = configparser.ConfigParser()
    for sec in cp.sections():
        if sec in _KEYS:
            for key, raw in cp[sec].items():
                if key not in _KEYS[sec]:
                    raise ConfigError(f"{source}: [{sec}] unknown key {key!r}")
                name, conv = _KEYS[sec][key]
                try:
                    out[name] = conv(raw)
                except ValueError:
                    raise ConfigError(f"{source}: [{sec}] {key}: cannot parse {raw!r}") from None
        elif sec == "memory" or sec.startswith("channel."):
            allowed = _MEMORY_KEYS if sec == "memory" else _CHANNEL_KEYS
            if sec != "memory" and sec[len("channel."):] not in CHANNEL_NAMES:
                raise ConfigError(f"{source}: unknown channel section [{sec}]")
            bad = set(cp[sec]) - allowed
            if bad:
                raise ConfigError(f"{source}: [{sec}] unknown key(s) {sorted(bad)}")
            mem[sec] = dict(cp[sec])
        else:
            raise ConfigError(f"{source}: unknown section [{sec}]")
    if mem.sections():
        if mem.has_section("memory") and "profile" in mem["memory"]:
            out["memory_profile"] = mem["memory"]["profile"]
        buf = []
        for sec in mem.sections():
            buf.append(f"[{sec}]")
            buf.extend(f"{k} = {v}" for k, v in mem[sec].items())
        out["memory_ini"] = "\n".join(buf) + "\n"
    return out


def config_path(flag: str | None) -> Path | None:
    raw = flag if flag is not None else os.environ.get(ENV_VAR)
    return Path(raw) if raw else None


def resolve(flag_config: str | None = None, flags: dict | None = None) -> Settings:
    """Built-in defaults, then the config file, then non-None CLI flags."""
    values: dict = {}
    path = config_path(flag_config)
    if path is not None:
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        values.update(parse_ini(text, str(path)))
    known = {f.name for f in fields(Settings)}
    for k, v in (flags or {}).items():
        if k not in known:
            raise ConfigError(f"unknown setting {k!r}")
        if v is not None:
            values[k] = v
    try:
        return Settings(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def split_profiles(spec: str | None) -> dict:
    """``--profile a,b``: each name goes to the DNN or the channel-table namespace."""
    out: dict = {}
    if not spec:
        return out
    for name in (s.strip() for s in spec.split(",") if s.strip()):
        if name in DNN_PROFILES:
            key = "dnn_profile"
        elif name in PROFILE_NAMES:
            key = "memory_profile"
        else:
            raise ConfigError(f"unknown profile {name!r}; choose from {DNN_PROFILES + PROFILE_NAMES}")
        if key in out:
            raise ConfigError(f"--profile names two {key.split('_')[0]} profiles")
        out[key] = name
    return out


def with_overrides(s: Settings, **kw) -> Settings:
    return replace(s, **{k: v for k, v in kw.items() if v is not None})
