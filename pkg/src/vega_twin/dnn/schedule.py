"""Discrete-event model of the four-stage double-buffered inference pipeline.

Stage 1 (I/O DMA) copies a layer's weights from MRAM/HyperRAM into L2 while
earlier layers execute, as far ahead as free L2 allows. Stages 2-4 (cluster
DMA in, compute, cluster DMA out) are software-pipelined over tiles with two
buffers per operand. The cluster DMA serialises tile copies in the order
in(0), in(1), out(0), in(2), out(1), ...
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field, replace

from vega_twin.dnn.network import LayerDescriptor, Network
from vega_twin.dnn.placement import WeightPlacement, allocate_weights
from vega_twin.dnn.tiler import TilingSolution, tile_layer
from vega_twin.hwce import HwceConfig
from vega_twin.memory import L1_BYTES, L2_SHARED_BYTES, MemoryConfig, transfer_latency

SW_MAC_PER_CYCLE = {"conv": 15.5, "pw": 15.5, "fc": 15.5, "dw": 3.0, "add": 15.5}
# 3x3 SW rate derived from the HWCE speedup; kept for the alternate profile only
SW_3X3_FROM_SPEEDUP = 6.27
PJ_PER_MAC = {"sw": 3.26, "hwce": 1.54}
ELEMENTWISE_PER_CYCLE = 8.0


class ScheduleError(ValueError):
    pass


@dataclass(frozen=True)
class DnnConfig:
    f_soc: float = 250e6
    f_cl: float = 250e6
    sw_mac_per_cycle: dict[str, float] = field(default_factory=lambda: dict(SW_MAC_PER_CYCLE))
    elementwise_per_cycle: float = ELEMENTWISE_PER_CYCLE
    hwce: HwceConfig = field(default_factory=HwceConfig)
    pj_per_mac: dict[str, float] = field(default_factory=lambda: dict(PJ_PER_MAC))
    memory: MemoryConfig = field(default_factory=MemoryConfig)
    l1_budget: int = L1_BYTES
    l2_bytes: int = L2_SHARED_BYTES
    lookahead: int | None = None  # layers of weight prefetch; None = limited by L2 only
    contention: bool = True
    profile: str = "nominal"

    def __post_init__(self) -> None:
        if self.f_soc <= 0 or self.f_cl <= 0:
            raise ScheduleError("clocks must be positive")
        if self.lookahead is not None and self.lookahead < 0:
            raise ScheduleError("lookahead must be >= 0")

    @classmethod
    def from_profile(cls, name: str, **overrides) -> DnnConfig:
        if name == "nominal":
            base = cls()
        elif name == "hwce-calibrated":
            base = cls(f_cl=450e6, hwce=HwceConfig(mac_per_cycle_eff=27.0), profile=name)
        elif name == "sw3x3-from-speedup":
            rates = dict(SW_MAC_PER_CYCLE)
            rates["conv"] = SW_3X3_FROM_SPEEDUP
            base = cls(sw_mac_per_cycle=rates, profile=name)
        else:
            raise ScheduleError(f"unknown DNN profile {name!r}")
        return replace(base, **overrides)

    def metadata(self) -> dict:
        return {
            "profile": self.profile,
            "f_soc_hz": self.f_soc,
            "f_cl_hz": self.f_cl,
            "sw_mac_per_cycle": dict(sorted(self.sw_mac_per_cycle.items())),
            "hwce_mac_per_cycle": self.hwce.effective_macs,
            "hwce_job_overhead": self.hwce.job_overhead,
            "pj_per_mac": dict(sorted(self.pj_per_mac.items())),
            "memory_profile": self.memory.profile,
            "channels": {n: {"bandwidth_mbps": c.bandwidth_mbps, "energy_pj_per_byte": c.energy_pj_per_byte}
                         for n, c in sorted(self.memory.channels.items())},
            "contention_derate": self.memory.contention_derate if self.contention else 0.0,
            "setup_s": self.memory.setup_s,
            "lookahead": self.lookahead,
        }


DNN_PROFILES = ("nominal", "hwce-calibrated", "sw3x3-from-speedup")


def layer_engine(layer: LayerDescriptor) -> str:
    if layer.engine == "hwce" and not layer.is_3x3_conv:
        warnings.warn(f"{layer.name}: HWCE only accelerates 3x3 convolutions; running in software",
                      stacklevel=3)
        return "sw"
    return layer.engine


def compute_cycles(layer: LayerDescriptor, macs: int, elementwise: int, cfg: DnnConfig) -> float:
    """Cycles for ``macs`` MACs plus ``elementwise`` skip adds of ``layer`` on its engine."""
    ew = elementwise / cfg.elementwise_per_cycle
    if layer_engine(layer) == "hwce":
        if not macs:
            return ew
        return cfg.hwce.job_overhead + math.ceil(macs / cfg.hwce.effective_macs) + ew
    return macs / cfg.sw_mac_per_cycle[layer.kind] + ew


@dataclass
class LayerReport:
    index: int
    name: str
    label: str
    kind: str
    engine: str
    weight_home: str
    n_tiles: int
    start_s: float
    end_s: float
    t_l3_s: float
    t_in_s: float
    t_compute_s: float
    t_out_s: float
    macs: int
    weight_bytes: int
    l2_l1_bytes: int
    e_compute_j: float
    e_l3_j: float
    e_l2_l1_j: float
    chunked: bool

    @property
    def latency_s(self) -> float:
        return self.end_s - self.start_s

    @property
    def bound(self) -> str:
        return "compute" if self.t_compute_s >= max(self.t_in_s + self.t_out_s, self.t_l3_s) else "bandwidth"

    @property
    def energy_j(self) -> float:
        return self.e_compute_j + self.e_l3_j + self.e_l2_l1_j

    def row(self) -> dict:
        d = asdict(self)
        d["latency_s"] = self.latency_s
        d["bound"] = self.bound
        d["energy_j"] = self.energy_j
        return d


@dataclass
class ScheduleReport:
    network: str
    weights: str
    engine: str
    config: dict
    layers: list[LayerReport]

    @property
    def latency_s(self) -> float:
        return self.layers[-1].end_s if self.layers else 0.0

    @property
    def e_compute_j(self) -> float:
        return sum(l.e_compute_j for l in self.layers)

    @property
    def e_l3_j(self) -> float:
        return sum(l.e_l3_j for l in self.layers)

    @property
    def e_l2_l1_j(self) -> float:
        return sum(l.e_l2_l1_j for l in self.layers)

    @property
    def energy_j(self) -> float:
        return self.e_compute_j + self.e_l3_j + self.e_l2_l1_j

    @property
    def compute_s(self) -> float:
        return sum(l.t_compute_s for l in self.layers)

    @property
    def mram_up_to(self) -> str | None:
        last = [l.label for l in self.layers if l.weight_home == "mram"]
        return last[-1] if last else None

    def totals(self) -> dict:
        return {
            "latency_s": self.latency_s,
            "compute_s": self.compute_s,
            "energy_j": self.energy_j,
            "e_compute_j": self.e_compute_j,
            "e_l3_j": self.e_l3_j,
            "e_l2_l1_j": self.e_l2_l1_j,
            "macs": sum(l.macs for l in self.layers),
            "weight_bytes": sum(l.weight_bytes for l in self.layers),
            "mram_up_to": self.mram_up_to,
        }


@dataclass
class _Plan:
    layer: LayerDescriptor
    tiling: TilingSolution
    chunked: bool
    chunk_bytes: int
    group_bytes: int  # weights that must sit in L2 before the first tile
    resident: int  # L2 bytes held by this layer's weights while it runs

    @property
    def acts(self) -> int:
        return self.layer.act_in_bytes + self.layer.act_out_bytes


def _plan(layer: LayerDescriptor, tiling: TilingSolution, cfg: DnnConfig, stream: bool = False) -> _Plan:
    """Whole-layer weight copy, or per-C_out-block streaming when ``stream`` is set or
    the layer does not fit L2 with its activations."""
    w = layer.weight_bytes
    fits = w + layer.act_in_bytes + layer.act_out_bytes <= cfg.l2_bytes
    if tiling.n_cout == 1 or (fits and not stream):
        if not fits:
            raise ScheduleError(f"{layer.name}: weights and activations exceed L2")
        return _Plan(layer, tiling, False, w, w, w)
    chunk = tiling.weight_tile_bytes
    group = min(2, tiling.n_cout) * chunk
    if group + layer.act_in_bytes + layer.act_out_bytes > cfg.l2_bytes:
        raise ScheduleError(f"{layer.name}: activations plus two weight chunks exceed L2")
    return _Plan(layer, tiling, True, chunk, group, group)


def _hides_weights(layer: LayerDescriptor, l3: str, cfg: DnnConfig) -> bool:
    t_compute = compute_cycles(layer, layer.macs, layer.elementwise_ops, cfg) / cfg.f_cl
    return t_compute >= transfer_latency(cfg.memory, l3, layer.weight_bytes)


def _prefetch_from(plans: list[_Plan], j: int, lo: int, cfg: DnnConfig) -> int | None:
    """Earliest layer m in [lo, j) during whose execution the weights of m+1..j fit in L2."""
    for m in range(lo, j):
        pending = sum(plans[i].group_bytes for i in range(m + 1, j + 1))
        if plans[m].resident + plans[m].acts + pending <= cfg.l2_bytes:
            return m
    return None


def schedule_network(net: Network, placement: WeightPlacement | None = None,
                     tilings: list[TilingSolution] | None = None,
                     cfg: DnnConfig | None = None) -> ScheduleReport:
    cfg = cfg or DnnConfig()
    placement = placement or allocate_weights(net)
    if len(placement.homes) != len(net.layers):
        raise ScheduleError("placement does not match the network")
    if tilings is None:
        tilings = [tile_layer(l, cfg.l1_budget) for l in net.layers]
    if len(tilings) != len(net.layers) or any(t.layer != l.name for t, l in zip(tilings, net.layers)):
        raise ScheduleError("tilings do not match the network layers")
    mem = cfg.memory
    plans: list[_Plan] = []

    ready: list[float] = []  # layer start times (previous layer's last copy-out)
    io_free = 0.0
    prev_end = 0.0
    reports: list[LayerReport] = []
    for j, (layer, tiling) in enumerate(zip(net.layers, tilings)):
        ready.append(prev_end)
        l3 = placement.channel(j)
        lo = 0 if cfg.lookahead is None else max(0, j - cfg.lookahead)
        plans.append(_plan(layer, tiling, cfg))
        m = _prefetch_from(plans, j, lo, cfg)
        if m is None and j > 0 and not plans[j].chunked and tiling.n_cout > 1 and _hides_weights(layer, l3, cfg):
            # no room to prefetch the whole layer, but its compute can cover the
            # weight traffic: stream it block by block instead
            plans[j] = _plan(layer, tiling, cfg, stream=True)
            m = _prefetch_from(plans, j, lo, cfg)
        p = plans[j]
        allow = ready[j] if m is None else ready[m]
        t_l3 = 0.0
        wready = ready[j]
        if p.group_bytes:
            start = max(io_free, allow)
            dur = transfer_latency(mem, l3, p.group_bytes)
            io_free = wready = start + dur
            t_l3 += dur
        end, io_free, stats = _run_tiles(p, ready[j], wready, io_free, l3, cfg)
        t_l3 += stats["t_chunks"]
        engine = layer_engine(p.layer)
        e_compute = (p.layer.macs + p.layer.elementwise_ops) * cfg.pj_per_mac[engine] * 1e-12
        e_l3 = p.layer.weight_bytes * mem.channel(l3).energy_pj_per_byte * 1e-12
        e_l2l1 = stats["l2_l1_bytes"] * mem.channel("l2_l1").energy_pj_per_byte * 1e-12
        reports.append(LayerReport(
            index=j, name=p.layer.name, label=p.layer.label, kind=p.layer.kind, engine=engine,
            weight_home=placement.homes[j], n_tiles=p.tiling.n_tiles, start_s=ready[j], end_s=end,
            t_l3_s=t_l3, t_in_s=stats["t_in"], t_compute_s=stats["t_compute"], t_out_s=stats["t_out"],
            macs=p.layer.macs, weight_bytes=p.layer.weight_bytes, l2_l1_bytes=stats["l2_l1_bytes"],
            e_compute_j=e_compute, e_l3_j=e_l3, e_l2_l1_j=e_l2l1, chunked=p.chunked,
        ))
        prev_end = end
    engines = {r.engine for r in reports if r.kind == "conv"}
    return ScheduleReport(net.name, _weights_label(placement), "hwce" if "hwce" in engines else "sw",
                          cfg.metadata(), reports)


def _weights_label(placement: WeightPlacement) -> str:
    homes = set(placement.homes)
    if homes == {"mram"}:
        return "mram"
    if homes == {"hyperram"} or not homes:
        return "hyperram" if homes else "none"
    return "greedy"


def _run_tiles(p: _Plan, start: float, wready: float, io_free: float, l3: str,
               cfg: DnnConfig) -> tuple[float, float, dict]:
    """Tile loop of one layer: C_out blocks outermost, weights re-copied to L1 per block."""
    sol, layer, mem = p.tiling, p.layer, cfg.memory
    per_block = sol.n_h * sol.n_w
    n = sol.n_tiles
    busy = cfg.contention
    comp_s = compute_cycles(layer, sol.tile_macs, sol.tile_elementwise, cfg) / cfg.f_cl
    chunk_ready = {0: wready, 1: wready}
    in_end, comp_end, out_end = [0.0] * n, [0.0] * n, [0.0] * n
    dma = start
    comp = start
    t_in = t_out = t_chunks = 0.0
    l2_l1_bytes = 0

    def copy_out(t: int) -> None:
        nonlocal dma, t_out, l2_l1_bytes
        s = max(dma, comp_end[t])
        d = transfer_latency(mem, "l2_l1", sol.out_tile_bytes, busy)
        dma = out_end[t] = s + d
        t_out += d
        l2_l1_bytes += sol.out_tile_bytes

    for t in range(n):
        block, first = divmod(t, per_block)
        if p.chunked and first == 0 and block >= 2:
            # chunk buffer of block-2 frees once its last tile has been computed
            s = max(io_free, comp_end[block * per_block - per_block - 1])
            d = transfer_latency(mem, l3, p.chunk_bytes)
            io_free = chunk_ready[block] = s + d
            t_chunks += d
        nbytes = sol.in_tile_bytes + (sol.weight_tile_bytes if first == 0 else 0)
        ready = max(start, chunk_ready.get(block, wready) if p.chunked else wready)
        if t >= 2:
            ready = max(ready, comp_end[t - 2])
        s = max(dma, ready)
        d = transfer_latency(mem, "l2_l1", nbytes, busy)
        dma = in_end[t] = s + d
        t_in += d
        l2_l1_bytes += nbytes
        cs = max(comp, in_end[t], out_end[t - 2] if t >= 2 else start)
        comp = comp_end[t] = cs + comp_s
        if t >= 1:
            copy_out(t - 1)
    if n:
        copy_out(n - 1)
    end = out_end[n - 1] if n else start
    return end, io_free, {"t_in": t_in, "t_out": t_out, "t_compute": comp_s * n,
                          "t_chunks": t_chunks, "l2_l1_bytes": l2_l1_bytes}
