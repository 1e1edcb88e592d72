"""Synthetic two-class scenario for the shipped wake-up program.

The encoder reference here composes hdc primitives directly, so it doubles as
the oracle the VM is checked against.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources

import numpy as np

from vega_twin import hdc
from vega_twin.cwu.isa import CwuProgram, assemble
from vega_twin.cwu.preprocess import ChannelConfig
from vega_twin.cwu.vm import run_stream
from vega_twin.hdc import AssociativeMemory, HDVector, PermutationSet

N_CHANNELS = 3
WINDOW = 16
BASE_CONST = 0
LABEL_CONSTS = (1, 2, 3)
CLASS_MEANS = {
    "A": (8000, -8000, 3000),
    "B": (-8000, 8000, 3000),
}
NOISE_STD = 3000.0


def load_program() -> CwuProgram:
    return assemble(resources.files("vega_twin.data").joinpath("two_class.asm").read_text(encoding="utf-8"))


def channel_configs() -> list[ChannelConfig]:
    return [ChannelConfig(channel_id=c, input_width=16, output_width=16) for c in range(N_CHANNELS)]


def synth_segment(label: str, rng: np.random.Generator, window: int = WINDOW) -> np.ndarray:
    """Shape ``(channels, window)`` int array of raw 16-bit samples."""
    mean = np.asarray(CLASS_MEANS[label], dtype=float)[:, None]
    x = np.rint(mean + rng.normal(0.0, NOISE_STD, size=(N_CHANNELS, window)))
    return np.clip(x, -32768, 32767).astype(np.int64)


def synth_stream(labels: list[str], seed: int, window: int = WINDOW) -> dict[int, list[int]]:
    rng = np.random.default_rng(seed)
    segs = np.concatenate([synth_segment(lab, rng, window) for lab in labels], axis=1)
    return {c: segs[c].tolist() for c in range(N_CHANNELS)}


@dataclass(frozen=True)
class Encoder:
    """Reference window encoder: bundle over samples of item(ch) XOR level(x)."""

    pset: PermutationSet
    base: HDVector
    items: tuple[HDVector, ...]
    cfgs: tuple[ChannelConfig, ...]

    @classmethod
    def build(cls, dim: int = 512, master_seed: int = hdc.DEFAULT_MASTER_SEED) -> Encoder:
        pset = PermutationSet.generate(dim, master_seed)
        base = hdc.im_encode(BASE_CONST, 8, pset)
        items = tuple(hdc.im_encode(k, 8, pset) for k in LABEL_CONSTS)
        return cls(pset, base, items, tuple(channel_configs()))

    def encode_window(self, samples: np.ndarray) -> HDVector:
        acc = hdc.BundleAccumulator.empty(self.base.dim)
        for n in range(samples.shape[1]):
            for c, cfg in enumerate(self.cfgs):
                level = cfg.to_level(int(samples[c, n]))
                v = hdc.bind(hdc.cim_encode(level, (1 << cfg.encoded_width) - 1, self.base), self.items[c])
                acc = hdc.bundle_accumulate(acc, v)
        return hdc.bundle_finalize(acc)


def train_am(encoder: Encoder, examples: int = 10, seed: int = 1) -> AssociativeMemory:
    """Prototype per class = bundle of ``examples`` encoded training windows."""
    rng = np.random.default_rng(seed)
    am = AssociativeMemory.empty(encoder.base.dim)
    for row, label in enumerate(("A", "B")):
        protos = [encoder.encode_window(synth_segment(label, rng)) for _ in range(examples)]
        am = hdc.am_write(am, row, hdc.bundle(protos))
    return am


@dataclass(frozen=True)
class DemoResult:
    labels: tuple[str, ...]
    woke: tuple[bool, ...]
    accuracy: float
    oracle_match: bool
    cycles: int


def run_demo(n_segments: int = 40, seed: int = 7, record_trace: bool = False) -> DemoResult:
    program = load_program()
    enc = Encoder.build(program.vector_dim)
    am = train_am(enc)
    rng = np.random.default_rng(seed)
    labels = [str(x) for x in rng.choice(["A", "B"], size=n_segments)]
    streams = synth_stream(labels, seed + 1)
    res = run_stream(program, channel_configs(), streams, am=am, stop_on_wake=False,
                     record_trace=record_trace)
    woke = [False] * n_segments
    for w in res.wakes:
        woke[w.sample_index // WINDOW] = True
    correct = sum((lab == "A") == hit for lab, hit in zip(labels, woke))
    raw = np.array([streams[c] for c in range(N_CHANNELS)])
    oracle = [enc.encode_window(raw[:, i * WINDOW:(i + 1) * WINDOW]) for i in range(n_segments)]
    match = len(res.queries) == n_segments and all(q == o for q, o in zip(res.queries, oracle))
    ref_am = am
    for row, v in zip((2, 3, 4, 5), (enc.base, *enc.items)):
        ref_am = hdc.am_write(ref_am, row, v)
    match = match and res.final.am == ref_am
    for (_, row, dist), o in zip(res.searches, oracle):
        match = match and (row, dist) == hdc.am_lookup(ref_am, o)
    return DemoResult(tuple(labels), tuple(woke), correct / n_segments, match, res.final.cycles)
