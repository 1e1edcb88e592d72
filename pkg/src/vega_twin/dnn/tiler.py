"""Exhaustive divisor-aligned tiling under the double-buffered L1 budget."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

from vega_twin.dnn.network import LayerDescriptor
from vega_twin.memory import L1_BYTES


class TilingError(ValueError):
    pass


@lru_cache(maxsize=None)
def divisors(n: int) -> tuple[int, ...]:
    return tuple(d for d in range(1, n + 1) if n % d == 0)


@dataclass(frozen=True)
class TilingSolution:
    layer: str
    c_out_t: int
    h_t: int
    w_t: int
    c_in_t: int
    n_cout: int
    n_h: int
    n_w: int
    weight_tile_bytes: int
    in_tile_bytes: int
    out_tile_bytes: int
    tile_macs: int
    tile_elementwise: int

    @property
    def n_tiles(self) -> int:
        return self.n_cout * self.n_h * self.n_w

    @property
    def buffer_bytes(self) -> int:
        return self.weight_tile_bytes + self.in_tile_bytes + self.out_tile_bytes

    @property
    def l1_footprint(self) -> int:
        return 2 * self.buffer_bytes


def tile_footprint(layer: LayerDescriptor, c_out_t: int, h_t: int, w_t: int) -> tuple[int, int, int]:
    """(weight, input, output) bytes of one tile, input halo included."""
    c_in_t = c_out_t if layer.kind in ("dw", "add") else layer.c_in
    h_in = min((h_t - 1) * layer.stride + layer.k, layer.h + 2 * layer.pad)
    w_in = min((w_t - 1) * layer.stride + layer.k, layer.w + 2 * layer.pad)
    out = c_out_t * h_t * w_t
    inp = c_in_t * h_in * w_in
    if layer.kind == "add" or layer.residual:
        inp += out  # skip tensor tile
    return c_out_t * layer.weights_per_cout, inp, out


def _key(layer: LayerDescriptor, c: int, h: int, w: int) -> tuple:
    macs = c * h * w * max(layer.macs_per_output, 1)
    tiles = (layer.c_out // c) * (layer.h_out // h) * (layer.w_out // w)
    return (macs, -tiles, c, w, h)


def tile_layer(layer: LayerDescriptor, l1_budget_bytes: int = L1_BYTES) -> TilingSolution:
    """Best feasible tiling: most MACs per tile, then fewest tiles, then widest C_out, W, H."""
    best = None
    half = l1_budget_bytes // 2
    for c in divisors(layer.c_out):
        if c * layer.weights_per_cout > half:
            break
        for h in divisors(layer.h_out):
            for w in divisors(layer.w_out):
                if sum(tile_footprint(layer, c, h, w)) > half:
                    break  # footprint grows with w
                key = _key(layer, c, h, w)
                if best is None or key > best[0]:
                    best = (key, c, h, w)
    if best is None:
        raise TilingError(f"{layer.name}: no tiling fits {l1_budget_bytes} B of L1 with double buffering")
    _, c, h, w = best
    wt, it, ot = tile_footprint(layer, c, h, w)
    return TilingSolution(
        layer=layer.name, c_out_t=c, h_t=h, w_t=w,
        c_in_t=c if layer.kind in ("dw", "add") else layer.c_in,
        n_cout=layer.c_out // c, n_h=layer.h_out // h, n_w=layer.w_out // w,
        weight_tile_bytes=wt, in_tile_bytes=it, out_tile_bytes=ot,
        tile_macs=c * h * w * layer.macs_per_output,
        tile_elementwise=c * h * w if layer.elementwise_ops else 0,
    )


def check_solution(layer: LayerDescriptor, sol: TilingSolution, l1_budget_bytes: int = L1_BYTES) -> None:
    """Independent re-derivation of the tile footprint and coverage; raises on violation."""
    c_in_t = sol.c_out_t if layer.kind in ("dw", "add") else layer.c_in
    h_in = min((sol.h_t - 1) * layer.stride + layer.k, layer.h + 2 * layer.pad)
    w_in = min((sol.w_t - 1) * layer.stride + layer.k, layer.w + 2 * layer.pad)
    skip = sol.c_out_t * sol.h_t * sol.w_t if (layer.residual or layer.kind == "add") else 0
    footprint = 2 * (sol.c_out_t * layer.weights_per_cout + c_in_t * h_in * w_in + skip
                     + sol.c_out_t * sol.h_t * sol.w_t)
    if footprint > l1_budget_bytes:
        raise TilingError(f"{layer.name}: footprint {footprint} exceeds {l1_budget_bytes}")
    if footprint != sol.l1_footprint:
        raise TilingError(f"{layer.name}: reported footprint {sol.l1_footprint} != {footprint}")
    if (sol.n_cout * sol.c_out_t, sol.n_h * sol.h_t, sol.n_w * sol.w_t) != (layer.c_out, layer.h_out, layer.w_out):
        raise TilingError(f"{layer.name}: tiles do not cover the output exactly")
    if sol.n_tiles * sol.tile_macs != layer.macs:
        raise TilingError(f"{layer.name}: tile MACs do not sum to the layer MACs")
