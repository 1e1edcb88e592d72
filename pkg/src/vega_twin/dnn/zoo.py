"""Builders for the shipped network descriptors."""

from __future__ import annotations

from vega_twin.dnn.network import LayerDescriptor, Network

# (expansion t, channels c, repeats n, first stride s)
MOBILENET_V2_BLOCKS = (
    (1, 16, 1, 1),
    (6, 24, 2, 2),
    (6, 32, 3, 2),
    (6, 64, 4, 2),
    (6, 96, 3, 1),
    (6, 160, 3, 2),
    (6, 320, 1, 1),
)

REPVGG_LAYERS = (1, 2, 4, 14, 1)
REPVGG_WIDTHS = {
    "A0": (0.75, 2.5),
    "A1": (1.0, 2.5),
    "A2": (1.5, 2.75),
}


def mobilenet_v2(resolution: int = 224, classes: int = 1000) -> Network:
    layers: list[LayerDescriptor] = []
    h = resolution
    layers.append(LayerDescriptor("conv0", "conv", 3, 32, h, h, k=3, stride=2, pad=1))
    h = layers[-1].h_out
    c = 32
    block = 0
    for t, c_out, n, s in MOBILENET_V2_BLOCKS:
        for i in range(n):
            stride = s if i == 0 else 1
            hidden = c * t
            tag = f"b{block}"
            if t != 1:
                layers.append(LayerDescriptor(f"{tag}_expand", "pw", c, hidden, h, h))
            layers.append(LayerDescriptor(f"{tag}_dw", "dw", hidden, hidden, h, h, k=3, stride=stride, pad=1))
            h = layers[-1].h_out
            layers.append(LayerDescriptor(f"{tag}_project", "pw", hidden, c_out, h, h,
                                          residual=stride == 1 and c == c_out))
            c = c_out
            block += 1
    layers.append(LayerDescriptor("conv_last", "pw", c, 1280, h, h))
    layers.append(LayerDescriptor("fc", "fc", 1280, classes, 1, 1))
    return Network("mobilenet_v2", tuple(layers), (3, resolution, resolution))


def repvgg(variant: str, resolution: int = 224, classes: int = 1000) -> Network:
    a, b = REPVGG_WIDTHS[variant]
    widths = (min(64, int(64 * a)), int(64 * a), int(128 * a), int(256 * a), int(512 * b))
    layers: list[LayerDescriptor] = []
    c, h = 3, resolution
    for stage, (n, width) in enumerate(zip(REPVGG_LAYERS, widths), start=1):
        for i in range(n):
            stride = 2 if i == 0 else 1
            layers.append(LayerDescriptor(f"s{stage}_l{i + 1}", "conv", c, width, h, h, k=3,
                                          stride=stride, pad=1, stage=stage, index=i + 1))
            c, h = width, layers[-1].h_out
    layers.append(LayerDescriptor("fc", "fc", c, classes, 1, 1))
    return Network(f"repvgg_{variant.lower()}", tuple(layers), (3, resolution, resolution))


def shipped_networks() -> dict[str, Network]:
    nets = {"mobilenet_v2": mobilenet_v2()}
    for v in REPVGG_WIDTHS:
        nets[f"repvgg_{v.lower()}"] = repvgg(v)
    return nets
