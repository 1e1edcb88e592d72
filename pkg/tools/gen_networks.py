"""Regenerate the shipped network descriptors from the builders in vega_twin.dnn.zoo."""

from __future__ import annotations

import argparse
from pathlib import Path

from vega_twin.dnn.zoo import shipped_networks

DEFAULT_OUT = Path(__file__).resolve().parents[1] / "src" / "vega_twin" / "data" / "networks"


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=DEFAULT_OUT)
    args = ap.parse_args(argv)
    args.out.mkdir(parents=True, exist_ok=True)
    for name, net in shipped_networks().items():
        path = args.out / f"{name}.json"
        path.write_text(net.to_json(), encoding="utf-8")
        print(f"{path}: {len(net.layers)} layers, {net.weight_bytes} B weights, {net.macs} MAC")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
