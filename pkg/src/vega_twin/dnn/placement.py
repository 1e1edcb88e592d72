"""Greedy prefix placement of layer weights into MRAM."""

from __future__ import annotations

from dataclasses import dataclass

from vega_twin.dnn.network import Network
from vega_twin.memory import MRAM_BYTES

MRAM = "mram"
HYPERRAM = "hyperram"


@dataclass(frozen=True)
class WeightPlacement:
    homes: tuple[str, ...]
    cumulative_mram: tuple[int, ...]
    capacity: int

    @property
    def mram_bytes(self) -> int:
        return self.cumulative_mram[-1] if self.cumulative_mram else 0

    @property
    def last_mram_index(self) -> int | None:
        idx = [i for i, h in enumerate(self.homes) if h == MRAM]
        return idx[-1] if idx else None

    def channel(self, i: int) -> str:
        return "mram_l2" if self.homes[i] == MRAM else "hyperram_l2"


def allocate_weights(net: Network, mram_capacity: int = MRAM_BYTES) -> WeightPlacement:
    """Fill MRAM in network order; the first layer that does not fit and all after it go to HyperRAM."""
    homes, cum = [], []
    used = 0
    spilled = False
    for layer in net.layers:
        if not spilled and used + layer.weight_bytes <= mram_capacity:
            used += layer.weight_bytes
            homes.append(MRAM)
        else:
            spilled = True
            homes.append(HYPERRAM)
        cum.append(used)
    return WeightPlacement(tuple(homes), tuple(cum), mram_capacity)


def all_hyperram(net: Network) -> WeightPlacement:
    return allocate_weights(net, 0)


def mram_up_to(net: Network, placement: WeightPlacement) -> str | None:
    i = placement.last_mram_index
    return None if i is None else net.layers[i].label
