"""Layer and network descriptors (8-bit tensors, one byte per parameter)."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

SCHEMA_VERSION = 1
KINDS = ("conv", "dw", "pw", "fc", "add")
ENGINES = ("sw", "hwce")


class NetworkError(ValueError):
    pass


@dataclass(frozen=True)
class LayerDescriptor:
    """One layer. ``h``/``w`` are input spatial dims; ``residual`` fuses a skip add on the output."""

    name: str
    kind: str
    c_in: int
    c_out: int
    h: int
    w: int
    k: int = 1
    stride: int = 1
    pad: int = 0
    residual: bool = False
    engine: str = "sw"
    stage: int | None = None
    index: int | None = None

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise NetworkError(f"{self.name}: kind {self.kind!r} not in {KINDS}")
        if self.engine not in ENGINES:
            raise NetworkError(f"{self.name}: engine {self.engine!r} not in {ENGINES}")
        for f in ("c_in", "c_out", "h", "w", "k", "stride"):
            if getattr(self, f) < 1:
                raise NetworkError(f"{self.name}: {f} must be >= 1, got {getattr(self, f)}")
        if self.pad < 0:
            raise NetworkError(f"{self.name}: pad must be >= 0")
        if self.kind in ("dw", "add") and self.c_in != self.c_out:
            raise NetworkError(f"{self.name}: {self.kind} needs c_in == c_out")
        if self.kind in ("pw", "fc") and self.k != 1:
            raise NetworkError(f"{self.name}: {self.kind} layers have k == 1")
        if self.kind == "fc" and (self.h, self.w) != (1, 1):
            raise NetworkError(f"{self.name}: fc input must be 1x1")
        if self.h + 2 * self.pad < self.k or self.w + 2 * self.pad < self.k:
            raise NetworkError(f"{self.name}: kernel larger than padded input")

    @property
    def h_out(self) -> int:
        return (self.h + 2 * self.pad - self.k) // self.stride + 1

    @property
    def w_out(self) -> int:
        return (self.w + 2 * self.pad - self.k) // self.stride + 1

    @property
    def out_elems(self) -> int:
        return self.c_out * self.h_out * self.w_out

    @property
    def macs_per_output(self) -> int:
        if self.kind == "add":
            return 0
        if self.kind == "dw":
            return self.k * self.k
        return self.k * self.k * self.c_in

    @property
    def macs(self) -> int:
        return self.out_elems * self.macs_per_output

    @property
    def elementwise_ops(self) -> int:
        """Non-MAC element ops (skip additions)."""
        if self.kind == "add" or self.residual:
            return self.out_elems
        return 0

    @property
    def weights_per_cout(self) -> int:
        """Weight bytes per output channel, bias included."""
        if self.kind == "add":
            return 0
        if self.kind == "dw":
            return self.k * self.k + 1
        return self.k * self.k * self.c_in + 1

    @property
    def weight_bytes(self) -> int:
        return self.c_out * self.weights_per_cout

    @property
    def act_in_bytes(self) -> int:
        n = self.c_in * self.h * self.w
        if self.kind == "add" or self.residual:
            n += self.out_elems
        return n

    @property
    def act_out_bytes(self) -> int:
        return self.out_elems

    @property
    def is_3x3_conv(self) -> bool:
        return self.kind == "conv" and self.k == 3

    @property
    def label(self) -> str:
        if self.stage is not None and self.index is not None:
            return f"stage {self.stage}, layer {self.index}"
        return self.name

    def to_dict(self) -> dict:
        d = asdict(self)
        d["weight_bytes"] = self.weight_bytes
        d["macs"] = self.macs
        return {k: v for k, v in d.items() if v is not None}


@dataclass(frozen=True)
class Network:
    name: str
    layers: tuple[LayerDescriptor, ...] = field(default_factory=tuple)
    input_shape: tuple[int, int, int] | None = None

    @property
    def weight_bytes(self) -> int:
        return sum(l.weight_bytes for l in self.layers)

    @property
    def macs(self) -> int:
        return sum(l.macs for l in self.layers)

    def with_engine(self, engine: str) -> Network:
        """Route every 3x3 conv to ``engine``; everything else stays in software."""
        layers = tuple(replace(l, engine=engine if l.is_3x3_conv else "sw") for l in self.layers)
        return replace(self, layers=layers)

    def to_dict(self) -> dict:
        d = {"schema_version": SCHEMA_VERSION, "name": self.name}
        if self.input_shape is not None:
            d["input_shape"] = list(self.input_shape)
        d["layers"] = [l.to_dict() for l in self.layers]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"


_REQUIRED = ("name", "kind", "c_in", "c_out", "h", "w")
_INT_FIELDS = ("c_in", "c_out", "h", "w", "k", "stride", "pad", "stage", "index", "weight_bytes", "macs")
_ALLOWED = set(_INT_FIELDS) | {"name", "kind", "residual", "engine"}


def network_from_dict(data: dict, source: str = "<network>") -> Network:
    if not isinstance(data, dict):
        raise NetworkError(f"{source}: top level must be an object")
    if data.get("schema_version") != SCHEMA_VERSION:
        raise NetworkError(f"{source}: schema_version must be {SCHEMA_VERSION}")
    if not isinstance(data.get("layers"), list):
        raise NetworkError(f"{source}: 'layers' must be a list")
    layers = []
    for i, raw in enumerate(data["layers"]):
        where = f"{source}: layers[{i}]"
        if not isinstance(raw, dict):
            raise NetworkError(f"{where}: must be an object")
        unknown = set(raw) - _ALLOWED
        if unknown:
            raise NetworkError(f"{where}: unknown field(s) {sorted(unknown)}")
        for key in _REQUIRED:
            if key not in raw:
                raise NetworkError(f"{where}: missing field '{key}'")
        for key in _INT_FIELDS:
            if key in raw and (not isinstance(raw[key], int) or isinstance(raw[key], bool)):
                raise NetworkError(f"{where}.{key}: expected integer, got {raw[key]!r}")
            if key in raw and raw[key] < 0:
                raise NetworkError(f"{where}.{key}: must be non-negative, got {raw[key]}")
        fields = {k: v for k, v in raw.items() if k not in ("weight_bytes", "macs")}
        try:
            layer = LayerDescriptor(**fields)
        except NetworkError as exc:
            raise NetworkError(f"{where}: {exc}") from None
        for key, derived in (("weight_bytes", layer.weight_bytes), ("macs", layer.macs)):
            if key in raw and raw[key] != derived:
                raise NetworkError(f"{where}.{key}: declared {raw[key]} but geometry gives {derived}")
        layers.append(layer)
    shape = data.get("input_shape")
    return Network(str(data.get("name", source)), tuple(layers), tuple(shape) if shape else None)


def load_network(path: str | Path) -> Network:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise NetworkError(f"{path}: line {exc.lineno}: {exc.msg}") from None
    return network_from_dict(data, str(path))


def shipped_network_path(name: str) -> Path:
    from importlib import resources
    return Path(str(resources.files("vega_twin.data").joinpath("networks", f"{name}.json")))


def load_shipped(name: str) -> Network:
    return load_network(shipped_network_path(name))


def available_networks() -> list[str]:
    from importlib import resources
    root = resources.files("vega_twin.data").joinpath("networks")
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))
