"""Sensor stream file formats: CSV ``sample_index,raw_value`` or raw little-endian int32."""

from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np

from vega_twin.cwu.vm import StreamError


def parse_csv_stream(text: str) -> list[int]:
    values: list[int] = []
    for lineno, row in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not row or row[0].strip().startswith("#"):
            continue
        if lineno == 1 and not row[0].strip().lstrip("-").isdigit():
            continue  # header
        if len(row) != 2:
            raise StreamError(f"line {lineno}: expected 'sample_index,raw_value'")
        try:
            idx, val = int(row[0]), int(row[1])
        except ValueError as exc:
            raise StreamError(f"line {lineno}: non-integer field") from exc
        if idx != len(values):
            raise StreamError(f"line {lineno}: sample index {idx}, expected {len(values)}")
        values.append(val)
    return values


def parse_binary_stream(data: bytes) -> list[int]:
    if len(data) % 4:
        raise StreamError("binary stream length is not a multiple of 4 bytes")
    return np.frombuffer(data, dtype="<i4").astype(int).tolist()


def load_stream(path: str | Path) -> list[int]:
    path = Path(path)
    if path.suffix.lower() == ".csv":
        return parse_csv_stream(path.read_text(encoding="utf-8"))
    return parse_binary_stream(path.read_bytes())


def write_csv_stream(values, path: str | Path) -> None:
    lines = ["sample_index,raw_value"] + [f"{i},{int(v)}" for i, v in enumerate(values)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_binary_stream(values, path: str | Path) -> None:
    Path(path).write_bytes(np.asarray(values, dtype="<i4").tobytes())
