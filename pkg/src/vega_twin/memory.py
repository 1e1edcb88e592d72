"""Transfer bandwidth, access energy and retention power of the memory hierarchy."""

from __future__ import annotations

import configparser
import io
import math
from dataclasses import dataclass, field, replace

MB = 1_000_000  # bandwidths are quoted in decimal megabytes per second
KIB = 1024

L1_BYTES = 128 * KIB
L2_SHARED_BYTES = 1536 * KIB
L2_PRIVATE_BYTES = 64 * KIB
MRAM_BYTES = 4 * 1024 * KIB
RETENTION_BANK_KB = 16

MRAM_READ_HZ = 40e6
MRAM_DATA_BITS = 64  # 78-bit interface minus 14 ECC bits

CHANNEL_NAMES = ("hyperram_l2", "mram_l2", "l2_l1", "l1")
L3_CHANNELS = ("hyperram_l2", "mram_l2")
CLUSTER_CHANNELS = ("l2_l1", "l1")


class MemoryError_(ValueError):
    pass


@dataclass(frozen=True)
class TransferChannel:
    name: str
    bandwidth_mbps: float
    energy_pj_per_byte: float

    def __post_init__(self) -> None:
        if self.bandwidth_mbps <= 0 or self.energy_pj_per_byte <= 0:
            raise MemoryError_(f"channel {self.name}: bandwidth and energy must be > 0")

    @property
    def bytes_per_s(self) -> float:
        return self.bandwidth_mbps * MB


# Energy column as printed assigns 20 pJ/B to HyperRAM and 880 pJ/B to MRAM;
# the default swaps them so MRAM is the 40x cheaper source.
_PROFILES: dict[str, tuple[tuple[str, float, float], ...]] = {
    "default": (
        ("hyperram_l2", 300.0, 880.0),
        ("mram_l2", 200.0, 20.0),
        ("l2_l1", 1900.0, 1.4),
        ("l1", 8000.0, 0.9),
    ),
    "table5-as-printed": (
        ("hyperram_l2", 300.0, 20.0),
        ("mram_l2", 200.0, 880.0),
        ("l2_l1", 1900.0, 1.4),
        ("l1", 8000.0, 0.9),
    ),
    # energy correction plus the bandwidth rows exchanged, for the reading in
    # which MRAM is the faster source
    "table5-rows-swapped": (
        ("hyperram_l2", 200.0, 880.0),
        ("mram_l2", 300.0, 20.0),
        ("l2_l1", 1900.0, 1.4),
        ("l1", 8000.0, 0.9),
    ),
}

PROFILE_NAMES = tuple(_PROFILES)


@dataclass(frozen=True)
class MemoryConfig:
    channels: dict[str, TransferChannel] = field(default_factory=lambda: _channels("default"))
    setup_s: float = 1e-6
    contention_derate: float = 0.10
    profile: str = "default"

    def __post_init__(self) -> None:
        missing = set(CHANNEL_NAMES) - set(self.channels)
        if missing:
            raise MemoryError_(f"missing channels: {sorted(missing)}")
        if self.setup_s < 0 or not 0 <= self.contention_derate < 1:
            raise MemoryError_("setup must be >= 0 and derate within [0, 1)")

    @classmethod
    def from_profile(cls, name: str, **overrides) -> MemoryConfig:
        if name not in _PROFILES:
            raise MemoryError_(f"unknown channel profile {name!r}; choose from {PROFILE_NAMES}")
        return cls(channels=_channels(name), profile=name, **overrides)

    def channel(self, name: str) -> TransferChannel:
        try:
            return self.channels[name]
        except KeyError:
            raise MemoryError_(f"unknown channel {name!r}") from None

    def with_setup(self, setup_s: float) -> MemoryConfig:
        return replace(self, setup_s=setup_s)

    # --- config file ------------------------------------------------------

    def to_ini(self) -> str:
        cp = configparser.ConfigParser()
        cp["memory"] = {"profile": self.profile, "setup_s": repr(self.setup_s),
                        "contention_derate": repr(self.contention_derate)}
        for name in CHANNEL_NAMES:
            ch = self.channels[name]
            cp[f"channel.{name}"] = {"bandwidth_mbps": repr(ch.bandwidth_mbps),
                                     "energy_pj_per_byte": repr(ch.energy_pj_per_byte)}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    @classmethod
    def from_ini(cls, text: str) -> MemoryConfig:
        cp = configparser.ConfigParser()
        cp.read_string(text)
        return cls.from_parser(cp)

    @classmethod
    def from_parser(cls, cp: configparser.ConfigParser) -> MemoryConfig:
        sec = cp["memory"] if cp.has_section("memory") else {}
        base = cls.from_profile(sec.get("profile", "default"))
        chans = dict(base.channels)
        for name in CHANNEL_NAMES:
            key = f"channel.{name}"
            if cp.has_section(key):
                s = cp[key]
                chans[name] = TransferChannel(
                    name,
                    float(s.get("bandwidth_mbps", chans[name].bandwidth_mbps)),
                    float(s.get("energy_pj_per_byte", chans[name].energy_pj_per_byte)),
                )
        return cls(chans, float(sec.get("setup_s", base.setup_s)),
                   float(sec.get("contention_derate", base.contention_derate)), base.profile)


def _channels(profile: str) -> dict[str, TransferChannel]:
    return {n: TransferChannel(n, bw, e) for n, bw, e in _PROFILES[profile]}


@dataclass(frozen=True)
class MemoryMap:
    l1_bytes: int = L1_BYTES
    l2_shared_bytes: int = L2_SHARED_BYTES
    l2_private_bytes: int = L2_PRIVATE_BYTES
    mram_bytes: int = MRAM_BYTES
    hyperram_bytes: int = 8 * 1024 * KIB


def effective_bandwidth(cfg: MemoryConfig, channel: str, compute_active: bool = False) -> float:
    """Bytes per second, with the L1 contention derate applied while compute runs."""
    ch = cfg.channel(channel)
    bw = ch.bytes_per_s
    if compute_active and channel in CLUSTER_CHANNELS:
        bw *= 1.0 - cfg.contention_derate
    return bw


def transfer_latency(cfg: MemoryConfig, channel: str, nbytes: float, compute_active: bool = False) -> float:
    if nbytes < 0:
        raise MemoryError_("byte count must be >= 0")
    return cfg.setup_s + nbytes / effective_bandwidth(cfg, channel, compute_active)


def transfer_energy(cfg: MemoryConfig, channel: str, nbytes: float) -> float:
    """Joules."""
    if nbytes < 0:
        raise MemoryError_("byte count must be >= 0")
    return nbytes * cfg.channel(channel).energy_pj_per_byte * 1e-12


def mram_peak_gbps() -> float:
    """Raw read bandwidth of the MRAM macro, data bits only."""
    return MRAM_DATA_BITS * MRAM_READ_HZ / 1e9


# (kB, µW) anchors of the linear retention model
RETENTION_PROFILES = {
    "soc": ((16.0, 1.2), (1600.0, 112.0)),
    "system-level": ((16.0, 2.8), (1600.0, 123.7)),
}


def quantize_banks(kb: float) -> int:
    return RETENTION_BANK_KB * math.ceil(kb / RETENTION_BANK_KB - 1e-12)


def retention_power(retained_kb: float, profile: str = "soc") -> float:
    """µW to keep ``retained_kb`` of L2 in retentive mode (rounded up to whole 16 kB banks)."""
    if profile not in RETENTION_PROFILES:
        raise MemoryError_(f"unknown retention profile {profile!r}")
    (k0, p0), (k1, p1) = RETENTION_PROFILES[profile]
    kb = quantize_banks(retained_kb)
    if not k0 <= kb <= k1:
        raise MemoryError_(f"retained size {retained_kb} kB outside {k0:g}..{k1:g} kB")
    t = (kb - k0) / (k1 - k0)
    return p0 * (1.0 - t) + p1 * t  # exact at both anchors
