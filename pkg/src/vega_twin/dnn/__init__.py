from vega_twin.dnn.network import (
    LayerDescriptor,
    Network,
    NetworkError,
    available_networks,
    load_network,
    load_shipped,
    network_from_dict,
)
from vega_twin.dnn.placement import WeightPlacement, all_hyperram, allocate_weights, mram_up_to
from vega_twin.dnn.schedule import (
    DNN_PROFILES,
    DnnConfig,
    LayerReport,
    ScheduleError,
    ScheduleReport,
    compute_cycles,
    schedule_network,
)
from vega_twin.dnn.tiler import TilingError, TilingSolution, check_solution, tile_layer

__all__ = [
    "LayerDescriptor", "Network", "NetworkError", "available_networks", "load_network",
    "load_shipped", "network_from_dict",
    "WeightPlacement", "all_hyperram", "allocate_weights", "mram_up_to",
    "DNN_PROFILES", "DnnConfig", "LayerReport", "ScheduleError", "ScheduleReport",
    "compute_cycles", "schedule_network",
    "TilingError", "TilingSolution", "check_solution", "tile_layer",
]
