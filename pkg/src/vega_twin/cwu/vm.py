"""Microcode interpreter for the cognitive wake-up controller.

The controller fetches instructions in an endless loop: the PC wraps to 0
after the last instruction. All vector work goes through the single encoder
register; AM rows double as scratchpad and prototype storage.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from typing import Iterator, Sequence

from vega_twin import hdc
from vega_twin.cwu.isa import (
    JUMP_TARGET_BITS,
    MAX_PROGRAM,
    MODE_BIT,
    PAIR_BIT,
    CwuProgram,
    Opcode,
)
from vega_twin.cwu.preprocess import ChannelConfig, ChannelState, preprocess_sample
from vega_twin.hdc import AssociativeMemory, BundleAccumulator, HDVector, PermutationSet

IM_CONSTANT_WIDTH = 8


class VMError(RuntimeError):
    pass


class StreamError(ValueError):
    pass


class StreamExhausted(Exception):
    """Raised internally when WAIT_SAMPLE needs input past the end of the streams."""


@dataclass(frozen=True)
class WakeEvent:
    sample_index: int
    matched_row: int
    distance: int
    elapsed_cycles: int


@dataclass
class ChannelRuntime:
    cfg: ChannelConfig
    state: ChannelState = field(default_factory=ChannelState)
    pending: deque = field(default_factory=deque)
    latched: int | None = None


@dataclass
class VMState:
    """Mutable state of one VM instance (single owner)."""

    pset: PermutationSet
    am: AssociativeMemory
    channels: dict[int, ChannelRuntime]
    reg: HDVector
    pc: int = 0
    cycles: int = 0
    acc: BundleAccumulator | None = None
    search: tuple[int, int] | None = None
    loop_counts: dict[int, int] = field(default_factory=dict)
    sample_index: int = -1
    halted: bool = False
    wake: WakeEvent | None = None

    @classmethod
    def initial(cls, program: CwuProgram, channel_cfgs: Sequence[ChannelConfig],
                am: AssociativeMemory | None = None, master_seed: int = hdc.DEFAULT_MASTER_SEED) -> VMState:
        dim = program.vector_dim
        if am is None:
            am = AssociativeMemory.empty(dim)
        elif am.dim != dim:
            raise VMError(f"AM dimension {am.dim} does not match program dimension {dim}")
        ids = [c.channel_id for c in channel_cfgs]
        if len(set(ids)) != len(ids):
            raise VMError("duplicate channel ids")
        return cls(pset=PermutationSet.generate(dim, master_seed), am=am,
                   channels={c.channel_id: ChannelRuntime(c) for c in channel_cfgs},
                   reg=HDVector.zeros(dim))


class SampleSource:
    """Lockstep raw-sample feed: index ``n`` delivers ``streams[ch][n]`` to every channel."""

    def __init__(self, streams: dict[int, Sequence[int]], max_samples: int | None = None) -> None:
        lengths = {len(s) for s in streams.values()}
        if len(lengths) > 1:
            raise StreamError(f"channel streams differ in length: {sorted(lengths)}")
        self.streams = streams
        self.length = lengths.pop() if lengths else 0
        if max_samples is not None:
            self.length = min(self.length, max_samples)
        self.index = 0

    def next_index(self) -> int:
        if self.index >= self.length:
            raise StreamExhausted
        self.index += 1
        return self.index - 1


def _feed(state: VMState, source: SampleSource) -> None:
    n = source.next_index()
    state.sample_index = n
    for ch_id, rt in state.channels.items():
        if ch_id not in source.streams:
            continue
        rt.state, out = preprocess_sample(rt.cfg, rt.state, int(source.streams[ch_id][n]))
        if out is not None:
            rt.pending.append(out)


def _channel(state: VMState, ch: int) -> ChannelRuntime:
    if ch not in state.channels:
        raise VMError(f"channel {ch} is not configured")
    return state.channels[ch]


def _latched(state: VMState, ch: int) -> tuple[ChannelRuntime, int]:
    rt = _channel(state, ch)
    if rt.latched is None:
        raise VMError(f"encode from channel {ch} before any WAIT_SAMPLE delivered a sample")
    return rt, rt.latched


def vm_step(state: VMState, program: CwuProgram, source: SampleSource,
            trace: list | None = None) -> VMState:
    """Execute one instruction in place and return the state."""
    if state.halted:
        raise VMError("VM is halted")
    if not 0 <= state.pc < len(program.instructions):
        raise VMError(f"PC {state.pc} outside program of {len(program.instructions)} instructions")
    ins = program.instructions[state.pc]
    op = ins.opcode
    dim = program.vector_dim
    vec_cycles = hdc.vector_cycles(dim)
    cycles = 1
    next_pc = state.pc + 1
    event = None

    if op is Opcode.NOP:
        pass
    elif op is Opcode.LOADV:
        state.reg = state.am.read(ins.src)
        cycles = vec_cycles
    elif op is Opcode.STOREV:
        state.am = hdc.am_write(state.am, ins.dst, state.reg)
        cycles = vec_cycles
    elif op is Opcode.XOR:
        state.reg = hdc.bind(state.reg, state.am.read(ins.src))
        cycles = vec_cycles
    elif op is Opcode.AND:
        state.reg = state.reg & state.am.read(ins.src)
        cycles = vec_cycles
    elif op is Opcode.NOT:
        state.reg = ~state.reg
        cycles = vec_cycles
    elif op is Opcode.PERM:
        state.reg = hdc.permute(state.reg, ins.imm & 3, state.pset)
        cycles = vec_cycles
    elif op is Opcode.IMENC:
        pair = 1 if ins.imm & PAIR_BIT else 0
        if ins.imm & MODE_BIT:
            word, width = ins.imm & 0xFF, IM_CONSTANT_WIDTH
        else:
            rt, sample = _latched(state, ins.imm & 0x7)
            word, width = rt.cfg.to_level(sample), rt.cfg.encoded_width
        state.reg = hdc.im_encode(word, width, state.pset, pair)
        cycles = width
    elif op is Opcode.CIMENC:
        base = state.am.read(ins.src)
        if ins.imm & MODE_BIT:
            flips = ins.imm & (PAIR_BIT - 1)
            if flips > dim // 2:
                raise VMError(f"flip count {flips} exceeds {dim // 2}")
            state.reg = hdc.cim_encode(flips, dim // 2, base)
        else:
            rt, sample = _latched(state, ins.imm & 0x7)
            top = (1 << rt.cfg.encoded_width) - 1
            state.reg = hdc.cim_encode(rt.cfg.to_level(sample), top, base)
        cycles = vec_cycles
    elif op is Opcode.BUNDLE_BEGIN:
        state.acc = BundleAccumulator.empty(dim)
        cycles = vec_cycles
    elif op is Opcode.BUNDLE_ACC:
        if state.acc is None:
            raise VMError("BUNDLE_ACC before BUNDLE_BEGIN")
        state.acc = hdc.bundle_accumulate(state.acc, state.reg)
        cycles = vec_cycles
    elif op is Opcode.BUNDLE_END:
        if state.acc is None:
            raise VMError("BUNDLE_END before BUNDLE_BEGIN")
        state.reg = hdc.bundle_finalize(state.acc)
        cycles = vec_cycles
    elif op is Opcode.SEARCH:
        index, distance = hdc.am_lookup(state.am, state.reg)
        state.search = (index, distance)
        cycles = vec_cycles * len(state.am.occupied)
        event = {"search": {"index": index, "distance": distance}}
        if index == program.target_index and distance <= program.wake_threshold:
            state.wake = WakeEvent(state.sample_index, index, distance, state.cycles + cycles)
            event["wake"] = True
    elif op is Opcode.WAIT_SAMPLE:
        rt = _channel(state, ins.imm & 0x7)
        while not rt.pending:
            _feed(state, source)
        rt.latched = rt.pending.popleft()
        event = {"sample": {"channel": ins.imm & 0x7, "value": rt.latched}}
    elif op is Opcode.JUMP:
        target = ins.imm & (MAX_PROGRAM - 1)
        count = ins.imm >> JUMP_TARGET_BITS
        if count == 0:
            next_pc = target
        else:
            remaining = state.loop_counts.get(state.pc, count)
            if remaining > 0:
                state.loop_counts[state.pc] = remaining - 1
                next_pc = target
            else:
                state.loop_counts.pop(state.pc, None)
    elif op is Opcode.HALT:
        state.halted = True
        next_pc = state.pc

    if trace is not None:
        rec = {"cycle": state.cycles, "pc": state.pc, "opcode": op.name}
        if event is not None:
            rec["event"] = event
        trace.append(rec)
    state.cycles += cycles
    state.pc = next_pc % len(program.instructions)
    return state


@dataclass
class RunResult:
    wake: WakeEvent | None
    wakes: list[WakeEvent]
    searches: list[tuple[int, int, int]]
    trace: list[dict]
    final: VMState
    queries: list[HDVector] = field(default_factory=list)

    def trace_jsonl(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.trace)


def run_stream(program: CwuProgram, channel_cfgs: Sequence[ChannelConfig],
               streams: dict[int, Sequence[int]], max_samples: int | None = None,
               am: AssociativeMemory | None = None, stop_on_wake: bool = True,
               record_trace: bool = True, master_seed: int = hdc.DEFAULT_MASTER_SEED,
               max_steps: int = 50_000_000) -> RunResult:
    """Run until a wake event (or the streams run dry, or HALT).

    ``searches`` lists ``(sample_index, row, distance)`` for every SEARCH and
    ``queries`` the encoder register each SEARCH compared.
    """
    if not program.instructions:
        raise VMError("empty program")
    for ch, s in streams.items():
        if ch not in {c.channel_id for c in channel_cfgs}:
            raise StreamError(f"stream for unconfigured channel {ch}")
    source = SampleSource(streams, max_samples)
    state = VMState.initial(program, channel_cfgs, am, master_seed)
    trace: list | None = [] if record_trace else None
    wakes: list[WakeEvent] = []
    searches: list[tuple[int, int, int]] = []
    queries: list[HDVector] = []
    for _ in range(max_steps):
        if state.halted:
            break
        is_search = program.instructions[state.pc].opcode is Opcode.SEARCH
        try:
            vm_step(state, program, source, trace)
        except StreamExhausted:
            break
        if is_search:
            searches.append((state.sample_index, *state.search))
            queries.append(state.reg)
            if state.wake is not None:
                wakes.append(state.wake)
                state.wake = None
                if stop_on_wake:
                    break
    else:
        raise VMError(f"no termination within {max_steps} steps")
    return RunResult(wakes[0] if wakes else None, wakes, searches, trace or [], state, queries)


def iter_program_cycles(result: RunResult) -> Iterator[int]:
    for rec in result.trace:
        yield rec["cycle"]
