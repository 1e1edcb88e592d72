"""Bit-exact fixed-point model and timing model of the hardware convolution engine.

Operands are sign-extended to 16 bit, products accumulate in 32-bit two's
complement, and the result is arithmetically shifted and saturated on the way
out. Partial sums can be parked in three internal FIFOs so input-channel slices
can be chained without a trip through L1.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

PRECISIONS = (4, 8, 16)
FILTER_SIZES = (3, 5)
N_FIFOS = 3
PEAK_MACS = 27
MAX_SHIFT = 31

FifoRef = Union[int, str, None]


class HwceError(ValueError):
    pass


@dataclass(frozen=True)
class HwceConfig:
    mac_per_cycle_eff: float = 19.0
    job_overhead: int = 100
    rounding: bool = False  # add half an LSB before the shift

    @property
    def effective_macs(self) -> float:
        return min(self.mac_per_cycle_eff, PEAK_MACS)


@dataclass(frozen=True)
class HwceJob:
    """One engine invocation.

    ``accumulate_source`` is ``None``, ``"l1"`` or a FIFO index; ``output_sink``
    is ``"l1"`` or a FIFO index. Filter ``f`` uses FIFO ``index + f``.
    """

    height: int
    width: int
    c_in: int = 1
    filter_size: int = 3
    n_filters: int = 1
    precision_in: int = 8
    precision_w: int = 8
    accumulate_source: FifoRef = None
    output_sink: FifoRef = "l1"
    norm_shift: int = 0
    out_width: int = 16

    def __post_init__(self) -> None:
        if self.filter_size not in FILTER_SIZES:
            raise HwceError(f"filter size {self.filter_size} not in {FILTER_SIZES}")
        if self.filter_size == 5 and self.n_filters != 1:
            raise HwceError("5x5 mode combines all sum-of-products units into one filter")
        if not 1 <= self.n_filters * self.filter_size ** 2 <= PEAK_MACS:
            raise HwceError(f"{self.n_filters} filters of {self.filter_size}x{self.filter_size} exceed {PEAK_MACS} MACs")
        for name in ("precision_in", "precision_w", "out_width"):
            if getattr(self, name) not in PRECISIONS:
                raise HwceError(f"{name}={getattr(self, name)} not in {PRECISIONS}")
        if not 0 <= self.norm_shift <= MAX_SHIFT:
            raise HwceError(f"norm_shift {self.norm_shift} outside 0..{MAX_SHIFT}")
        if self.height < 0 or self.width < 0 or self.c_in < 1:
            raise HwceError("negative geometry or empty channel slice")
        for ref in (self.accumulate_source, self.output_sink):
            if isinstance(ref, int) and not 0 <= ref <= N_FIFOS - self.n_filters:
                raise HwceError(f"FIFO {ref} with {self.n_filters} filters exceeds {N_FIFOS} FIFOs")
            if isinstance(ref, str) and ref != "l1":
                raise HwceError(f"unknown stream {ref!r}")
        if self.output_sink is None:
            raise HwceError("output sink must be 'l1' or a FIFO index")

    @property
    def out_height(self) -> int:
        return max(0, self.height - self.filter_size + 1)

    @property
    def out_width_px(self) -> int:
        return max(0, self.width - self.filter_size + 1)

    @property
    def output_shape(self) -> tuple[int, int, int]:
        return self.n_filters, self.out_height, self.out_width_px

    @property
    def macs(self) -> int:
        return self.n_filters * self.filter_size ** 2 * self.c_in * self.out_height * self.out_width_px


@dataclass
class PartialSumBuffer:
    """Three FIFOs of 32-bit accumulator planes."""

    fifos: tuple[deque, ...] = field(default_factory=lambda: tuple(deque() for _ in range(N_FIFOS)))
    depth: int | None = None  # max planes per FIFO

    def push(self, idx: int, plane: np.ndarray) -> None:
        q = self.fifos[idx]
        if self.depth is not None and len(q) >= self.depth:
            raise HwceError(f"partial-sum FIFO {idx} overflow")
        q.append(np.asarray(plane, dtype=np.int32).copy())

    def pop(self, idx: int) -> np.ndarray:
        if not self.fifos[idx]:
            raise HwceError(f"partial-sum FIFO {idx} is empty")
        return self.fifos[idx].popleft()

    def __len__(self) -> int:
        return sum(len(q) for q in self.fifos)


def signed_range(bits: int) -> tuple[int, int]:
    return -(1 << (bits - 1)), (1 << (bits - 1)) - 1


def wrap32(x: np.ndarray | int) -> np.ndarray:
    return np.asarray(x, dtype=np.int64).astype(np.uint32).astype(np.int32)


def saturate_normalize(acc, shift: int, out_width: int, rounding: bool = False):
    """Arithmetic right shift of a 32-bit accumulator, then clamp to ``out_width`` signed bits."""
    if not 0 <= shift <= MAX_SHIFT:
        raise HwceError(f"shift {shift} outside 0..{MAX_SHIFT}")
    if out_width not in PRECISIONS:
        raise HwceError(f"out_width {out_width} not in {PRECISIONS}")
    a = np.asarray(acc, dtype=np.int64)
    if rounding and shift:
        a = a + (1 << (shift - 1))
    lo, hi = signed_range(out_width)
    out = np.clip(a >> shift, lo, hi)
    return int(out) if out.ndim == 0 else out.astype(np.int32)


def _check_range(x: np.ndarray, bits: int, what: str) -> None:
    lo, hi = signed_range(bits)
    if x.size and (x.min() < lo or x.max() > hi):
        raise HwceError(f"{what} values outside signed {bits}-bit range")


def accumulate(job: HwceJob, x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Raw 32-bit sums of products, shape ``(n_filters, H_out, W_out)``."""
    k = job.filter_size
    if x.shape != (job.c_in, job.height, job.width):
        raise HwceError(f"input shape {x.shape} != {(job.c_in, job.height, job.width)}")
    if w.shape != (job.n_filters, job.c_in, k, k):
        raise HwceError(f"weight shape {w.shape} != {(job.n_filters, job.c_in, k, k)}")
    x = np.asarray(x, dtype=np.int64)
    w = np.asarray(w, dtype=np.int64)
    _check_range(x, job.precision_in, "input")
    _check_range(w, job.precision_w, "weight")
    if not job.out_height or not job.out_width_px:
        return np.zeros(job.output_shape, dtype=np.int32)
    win = sliding_window_view(x, (k, k), axis=(1, 2))  # (C, Ho, Wo, k, k)
    return wrap32(np.einsum("chwij,fcij->fhw", win, w))


def hwce_execute(job: HwceJob, x: np.ndarray, w: np.ndarray, partials: np.ndarray | None = None,
                 buffer: PartialSumBuffer | None = None, config: HwceConfig | None = None) -> np.ndarray | None:
    """Run one job. Returns the normalised output for an L1 sink, else ``None``
    after pushing raw accumulators into ``buffer``."""
    config = config or HwceConfig()
    acc = accumulate(job, x, w).astype(np.int64)
    src = job.accumulate_source
    if src == "l1":
        if partials is None:
            raise HwceError("accumulate_source='l1' needs a partials tensor")
        partials = np.asarray(partials)
        if partials.shape != job.output_shape:
            raise HwceError(f"partials shape {partials.shape} != {job.output_shape}")
        acc = acc + partials.astype(np.int64)
    elif isinstance(src, int):
        if buffer is None:
            raise HwceError("FIFO accumulation needs a PartialSumBuffer")
        for f in range(job.n_filters):
            plane = buffer.pop(src + f)
            if plane.shape != job.output_shape[1:]:
                raise HwceError(f"FIFO {src + f} plane shape {plane.shape} mismatches output")
            acc[f] += plane
    acc = wrap32(acc)
    if job.output_sink == "l1":
        return saturate_normalize(acc, job.norm_shift, job.out_width, config.rounding)
    if buffer is None:
        raise HwceError("FIFO output needs a PartialSumBuffer")
    for f in range(job.n_filters):
        buffer.push(job.output_sink + f, acc[f])
    return None


def hwce_cycles(job: HwceJob, config: HwceConfig | None = None, shadowed: bool = False) -> int:
    """Job latency: overhead (hidden when the next job was shadowed) plus MACs at the effective rate."""
    config = config or HwceConfig()
    # a job cannot exceed the multipliers its filters actually occupy
    rate = min(config.effective_macs, job.n_filters * job.filter_size ** 2)
    return (0 if shadowed else config.job_overhead) + math.ceil(job.macs / rate)


def macs_cycles(macs: int, config: HwceConfig | None = None, filter_size: int = 3) -> float:
    """Layer-level helper used by the pipeline model (no per-job rounding)."""
    config = config or HwceConfig()
    rate = min(config.effective_macs, 25 if filter_size == 5 else PEAK_MACS)
    return macs / rate


def save_tensor(path: str | Path, arr: np.ndarray) -> None:
    """Tensors are stored as ``.npy`` (little-endian, C order)."""
    np.save(Path(path), np.ascontiguousarray(arr, dtype=np.asarray(arr).dtype.newbyteorder("<")), allow_pickle=False)


def load_tensor(path: str | Path) -> np.ndarray:
    return np.load(Path(path), allow_pickle=False)


_JOB_FIELDS = {f for f in HwceJob.__dataclass_fields__}


def job_from_dict(raw: dict, where: str = "job") -> HwceJob:
    unknown = set(raw) - _JOB_FIELDS
    if unknown:
        raise HwceError(f"{where}: unknown field(s) {sorted(unknown)}")
    try:
        return HwceJob(**raw)
    except TypeError as exc:
        raise HwceError(f"{where}: {exc}") from None


def job_to_dict(job: HwceJob) -> dict:
    return {k: getattr(job, k) for k in HwceJob.__dataclass_fields__}


@dataclass(frozen=True)
class ChainStep:
    job: HwceJob
    x: np.ndarray
    w: np.ndarray
    partials: np.ndarray | None = None


def random_chain(rng: np.random.Generator, max_hw: int = 10, max_cin: int = 3) -> list[ChainStep]:
    """A job chain over input-channel slices: FIFO hand-off between jobs, L1 sink at the end."""
    k = int(rng.choice(FILTER_SIZES))
    nf = 1 if k == 5 else int(rng.integers(1, N_FIFOS + 1))
    p_in, p_w, p_out = (int(rng.choice(PRECISIONS)) for _ in range(3))
    h, w = (int(rng.integers(k, k + max_hw)) for _ in range(2))
    n_jobs = int(rng.integers(1, 4))
    fifo = int(rng.integers(0, N_FIFOS - nf + 1))
    start_l1 = bool(rng.integers(0, 2))
    steps = []
    for j in range(n_jobs):
        c_in = int(rng.integers(1, max_cin + 1))
        src: FifoRef = fifo if j else ("l1" if start_l1 else None)
        last = j == n_jobs - 1
        job = HwceJob(h, w, c_in, k, nf, p_in, p_w, src, "l1" if last else fifo,
                      int(rng.integers(0, 20)) if last else 0, p_out if last else 16)
        lo, hi = signed_range(p_in)
        x = rng.integers(lo, hi + 1, size=(c_in, h, w))
        lo, hi = signed_range(p_w)
        wt = rng.integers(lo, hi + 1, size=(nf, c_in, k, k))
        partials = None
        if src == "l1":
            partials = rng.integers(-(1 << 31), 1 << 31, size=job.output_shape)
        steps.append(ChainStep(job, x, wt, partials))
    return steps


def run_chain(steps: list[ChainStep], config: HwceConfig | None = None) -> tuple[np.ndarray, int]:
    """Execute a chain; returns the final L1 output and total cycles."""
    buf = PartialSumBuffer()
    out = None
    cycles = 0
    for s in steps:
        out = hwce_execute(s.job, s.x, s.w, s.partials, buf, config)
        cycles += hwce_cycles(s.job, config)
    if out is None or len(buf):
        raise HwceError("chain must end with an L1 sink and drain every FIFO")
    return out, cycles
