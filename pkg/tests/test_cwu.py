import json

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from vega_twin import hdc
from vega_twin.cwu import (
    AsmError,
    ChannelConfig,
    ChannelState,
    CwuProgram,
    MicroInstruction,
    Opcode,
    PreprocessError,
    StreamError,
    VMError,
    VMState,
    assemble,
    cwu_power,
    disassemble,
    preprocess_sample,
    run_stream,
    vm_step,
)
from vega_twin.cwu.demo import Encoder, load_program, run_demo
from vega_twin.cwu.power import proportional_prediction, round_sig
from vega_twin.cwu.streams import parse_binary_stream, parse_csv_stream
from vega_twin.cwu.vm import SampleSource
from vega_twin.hdc import AssociativeMemory, HDVector, PermutationSet

CORPUS = """
; twenty instruction corpus program
.dim 1024
.threshold 300
.target 2
start:
    NOP
    WAIT_SAMPLE ch1
    IMENC ch1
    IMENC ch1, 1
    IMENC #200, 1
    STOREV r15
    LOADV r15
    XOR r3
    AND r4
    NOT
    PERM #3
    CIMENC r2, ch7
    CIMENC r0, #511
    BUNDLE_BEGIN
loop: BUNDLE_ACC
    JUMP loop, 127
    BUNDLE_END
    SEARCH
    JUMP start
    HALT
"""


def feed(cfg, xs):
    state = ChannelState()
    out = []
    for x in xs:
        state, y = preprocess_sample(cfg, state, x)
        out.append(y)
    return out


def ema_oracle(xs, k):
    m = None
    seq = []
    for x in xs:
        m = x if m is None else m + ((x - m) >> k)
        seq.append(m)
    return seq


# --- assembler -------------------------------------------------------------

def test_halt_only():
    p = assemble("HALT")
    assert len(p.instructions) == 1
    assert p.instructions[0].opcode is Opcode.HALT


def test_program_too_long():
    with pytest.raises(AsmError, match="program exceeds 64 instructions"):
        assemble("NOP\n" * 65)
    assert len(assemble("NOP\n" * 64).instructions) == 64


def test_corpus_round_trip():
    p = assemble(CORPUS)
    assert len(p.instructions) == 20
    q = assemble(disassemble(p))
    assert q.words == p.words
    assert (q.vector_dim, q.wake_threshold, q.target_index) == (1024, 300, 2)
    assert disassemble(q) == disassemble(p)


def test_nop_disassembles_bare():
    p = CwuProgram((MicroInstruction(Opcode.NOP),))
    assert disassemble(p).splitlines()[-1].strip() == "NOP"


def test_word_layout():
    ins = MicroInstruction(Opcode.HALT, dst=0xF, src=0x1, imm=0x1ABC)
    assert ins.encode() == (15 << 21) | (15 << 17) | (1 << 13) | 0x1ABC
    assert ins.encode() < 1 << 26


@given(op=st.sampled_from(list(Opcode)),
       dst=st.sampled_from([0, 1, 7, 14, 15]),
       src=st.sampled_from([0, 1, 7, 14, 15]),
       imm=st.sampled_from([0, 1, 63, 64, 255, 2047, 2048, 4095, 4096, 8190, 8191]))
def test_all_opcode_field_boundaries_round_trip(op, dst, src, imm):
    p = CwuProgram((MicroInstruction(op, dst, src, imm),))
    assert assemble(disassemble(p)).words == p.words
    assert CwuProgram.from_bytes(p.to_bytes()).words == p.words


def test_reserved_opcode_reports_offset():
    good = MicroInstruction(Opcode.NOP).encode()
    with pytest.raises(AsmError, match="reserved opcode 16 at byte offset 8"):
        CwuProgram.from_words([good, good, 16 << 21])


@pytest.mark.parametrize("src,msg", [
    ("FOO", "unknown mnemonic"),
    ("LOADV r16", "out of range"),
    ("PERM #4", "out of range"),
    ("WAIT_SAMPLE ch8", "out of range"),
    ("JUMP nowhere", "undefined label"),
    ("IMENC #256", "out of range"),
    ("XOR", "takes 1 operand"),
])
def test_assembler_errors(src, msg):
    with pytest.raises(AsmError, match=msg):
        assemble(src)


def test_error_carries_line_number():
    with pytest.raises(AsmError) as ei:
        assemble("NOP\n; c\nBOGUS\n")
    assert ei.value.line == 3


def test_forward_label():
    p = assemble("JUMP end\nNOP\nend: HALT")
    assert p.instructions[0].imm == 2


# --- preprocessing ---------------------------------------------------------

def test_ema_step_response():
    cfg = ChannelConfig(input_width=8, output_width=8, signed=False, lowpass=True, lowpass_shift=2)
    xs = [0] + [16] * 9
    out = feed(cfg, xs)
    assert out[:5] == [0, 4, 7, 9, 10]
    assert out == ema_oracle(xs, 2)


@given(st.lists(st.integers(-2048, 2047), min_size=1, max_size=60), st.integers(0, 6))
def test_ema_matches_scalar_oracle(xs, k):
    cfg = ChannelConfig(input_width=12, output_width=12, lowpass=True, lowpass_shift=k)
    assert feed(cfg, xs) == ema_oracle(xs, k)


def test_offset_removal_constant_converges_to_zero():
    cfg = ChannelConfig(offset_removal=True, lowpass_shift=3)
    out = feed(cfg, [1234] * 50)
    assert out[-1] == 0


def test_offset_removal_after_step_converges():
    cfg = ChannelConfig(offset_removal=True, lowpass_shift=2)
    xs = [0] * 5 + [500] * 200
    out = feed(cfg, xs)
    assert out == [x - m for x, m in zip(xs, ema_oracle(xs, 2))]
    assert out[5] == 375  # EMA is updated before the offset is removed
    assert 0 <= out[-1] < 4  # integer EMA stalls once (x-m) >> k reaches 0


def test_subsample_four_of_eight():
    cfg = ChannelConfig(subsample=4)
    out = feed(cfg, list(range(8)))
    assert [y for y in out if y is not None] == [0, 4]


def test_lbp_code():
    cfg = ChannelConfig(lbp=True, lbp_window=3)
    out = feed(cfg, [5, 1, 9, 4])
    # centre 4 vs previous 9, 1, 5 -> bits 1, 0, 1
    assert out == [None, None, None, 0b101]


@given(st.lists(st.integers(-100, 100), min_size=9, max_size=30))
def test_lbp_matches_definition(xs):
    cfg = ChannelConfig(lbp=True, lbp_window=8)
    out = feed(cfg, xs)
    for n in range(8, len(xs)):
        want = sum(1 << i for i in range(8) if xs[n - i - 1] > xs[n])
        assert out[n] == want


def test_width_conversion():
    cfg = ChannelConfig(input_width=16, output_width=8, signed=False)
    assert feed(cfg, [0xABCD]) == [0xAB]


def test_preprocess_range_error():
    with pytest.raises(PreprocessError, match="outside"):
        feed(ChannelConfig(input_width=8), [128])
    with pytest.raises(PreprocessError):
        ChannelConfig(channel_id=8)
    with pytest.raises(PreprocessError):
        ChannelConfig(lowpass_shift=-1)
    with pytest.raises(PreprocessError):
        ChannelConfig(subsample=0)


# --- VM --------------------------------------------------------------------

def fresh(program, am=None, cfgs=(ChannelConfig(),)):
    return VMState.initial(program, list(cfgs), am)


def am_with(rows, dim=512, seed=0):
    rng = np.random.default_rng(seed)
    am = AssociativeMemory.empty(dim)
    vecs = {}
    for r in rows:
        vecs[r] = HDVector.random(dim, rng)
        am = hdc.am_write(am, r, vecs[r])
    return am, vecs


def test_nop_changes_only_pc_and_cycles():
    p = assemble("NOP\nNOP")
    am, _ = am_with([0])
    s = fresh(p, am)
    reg, am0 = s.reg, s.am
    vm_step(s, p, SampleSource({}))
    assert (s.pc, s.cycles) == (1, 1)
    assert s.reg == reg and s.am == am0


def test_pc_wraps():
    p = assemble("NOP\nNOP")
    s = fresh(p)
    src = SampleSource({})
    vm_step(s, p, src)
    vm_step(s, p, src)
    assert s.pc == 0


def test_loadv_xor_matches_bind():
    p = assemble("LOADV r1\nXOR r2")
    am, v = am_with([1, 2])
    s = fresh(p, am)
    vm_step(s, p, SampleSource({}))
    vm_step(s, p, SampleSource({}))
    assert s.reg == hdc.bind(v[1], v[2])


def test_cycle_costs():
    p = assemble(".dim 1536\nLOADV r0\nIMENC #5\nSEARCH")
    am, _ = am_with([0, 1, 2], dim=1536)
    s = fresh(p, am)
    src = SampleSource({})
    vm_step(s, p, src)
    assert s.cycles == 3
    vm_step(s, p, src)
    assert s.cycles == 3 + 8
    vm_step(s, p, src)
    assert s.cycles == 11 + 3 * 3


def test_search_on_empty_am():
    p = assemble("SEARCH")
    with pytest.raises(ValueError, match="empty"):
        vm_step(fresh(p), p, SampleSource({}))


def test_imenc_without_sample():
    p = assemble("IMENC ch0")
    with pytest.raises(VMError, match="before any WAIT_SAMPLE"):
        vm_step(fresh(p), p, SampleSource({}))


def test_halted_vm_refuses_step():
    p = assemble("HALT")
    s = fresh(p)
    vm_step(s, p, SampleSource({}))
    with pytest.raises(VMError):
        vm_step(s, p, SampleSource({}))


def test_jump_repeat_count():
    p = assemble("top: NOP\nJUMP top, 3\nHALT")
    res = run_stream(p, [ChannelConfig()], {})
    assert [r["pc"] for r in res.trace] == [0, 1] * 4 + [2]


STRAIGHT_OPS = ["LOADV", "STOREV", "XOR", "AND", "NOT", "PERM", "IMENC", "BUNDLE", "SEARCH"]


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.sampled_from(STRAIGHT_OPS), st.integers(0, 15), st.integers(0, 255)),
                min_size=1, max_size=40),
       st.integers(0, 2**32 - 1))
def test_straight_line_programs_match_oracle(ops, seed):
    rng = np.random.default_rng(seed)
    pset = PermutationSet.generate(512, 0)
    am = AssociativeMemory.empty(512)
    for r in range(16):
        am = hdc.am_write(am, r, HDVector.random(512, rng))
    lines, reg, ref_am, searches = [], HDVector.zeros(512), am, []
    for name, row, k in ops:
        if name == "LOADV":
            lines.append(f"LOADV r{row}")
            reg = ref_am.read(row)
        elif name == "STOREV":
            lines.append(f"STOREV r{row}")
            ref_am = hdc.am_write(ref_am, row, reg)
        elif name == "XOR":
            lines.append(f"XOR r{row}")
            reg = hdc.bind(reg, ref_am.read(row))
        elif name == "AND":
            lines.append(f"AND r{row}")
            reg = reg & ref_am.read(row)
        elif name == "NOT":
            lines.append("NOT")
            reg = ~reg
        elif name == "PERM":
            lines.append(f"PERM #{k & 3}")
            reg = hdc.permute(reg, k & 3, pset)
        elif name == "IMENC":
            lines.append(f"IMENC #{k}, {row & 1}")
            reg = hdc.im_encode(k, 8, pset, row & 1)
        elif name == "BUNDLE":
            picks = [ref_am.read(r) for r in range(row % 5 + 1)]
            lines.append("BUNDLE_BEGIN")
            for r in range(row % 5 + 1):
                lines += [f"LOADV r{r}", "BUNDLE_ACC"]
            lines.append("BUNDLE_END")
            reg = hdc.bundle(picks)
        else:
            lines.append("SEARCH")
            searches.append(hdc.am_lookup(ref_am, reg))
    lines.append("HALT")
    assume(len(lines) <= 64)
    res = run_stream(assemble("\n".join(lines)), [ChannelConfig()], {}, am=am, stop_on_wake=False)
    assert res.final.reg == reg
    assert res.final.am == ref_am
    assert [s[1:] for s in res.searches] == searches


def test_wake_on_first_search_with_own_encoding():
    p = assemble(".threshold 512\nWAIT_SAMPLE ch0\nIMENC ch0\nSEARCH\n")
    cfg = ChannelConfig(input_width=8, output_width=8, signed=False)
    pset = PermutationSet.generate(512, 0)
    am = hdc.am_write(AssociativeMemory.empty(512), 0, hdc.im_encode(42, 8, pset))
    res = run_stream(p, [cfg], {0: [42, 7, 9]}, am=am)
    assert res.wake is not None
    assert res.wake.sample_index == 0
    assert (res.wake.matched_row, res.wake.distance) == (0, 0)
    assert len(res.searches) == 1


def test_zero_threshold_never_wakes_on_orthogonal_data():
    p = assemble(".threshold 0\nWAIT_SAMPLE ch0\nIMENC ch0\nSEARCH\n")
    cfg = ChannelConfig(input_width=8, output_width=8, signed=False)
    am, _ = am_with([0])
    res = run_stream(p, [cfg], {0: list(range(0, 200, 3))}, am=am)
    assert res.wake is None
    assert len(res.searches) == len(range(0, 200, 3))
    assert all(d > 0 for _, _, d in res.searches)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 512), st.integers(0, 512), st.integers(0, 1000))
def test_wake_monotone_in_threshold(t1, t2, seed):
    lo, hi = sorted((t1, t2))
    cfg = ChannelConfig(input_width=8, output_width=8, signed=False)
    rng = np.random.default_rng(seed)
    stream = {0: rng.integers(0, 256, size=20).tolist()}
    pset = PermutationSet.generate(512, 0)
    am = hdc.am_write(AssociativeMemory.empty(512), 0, hdc.im_encode(int(stream[0][5]), 8, pset))
    am = hdc.am_write(am, 1, HDVector.random(512, rng))
    runs = {}
    for t in (lo, hi):
        p = assemble(f".threshold {t}\nWAIT_SAMPLE ch0\nIMENC ch0\nSEARCH\n")
        runs[t] = {w.sample_index for w in run_stream(p, [cfg], stream, am=am, stop_on_wake=False).wakes}
    assert runs[lo] <= runs[hi]


def test_vm_deterministic_trace():
    a = run_demo(n_segments=6, record_trace=True)
    b = run_demo(n_segments=6, record_trace=True)
    assert a == b
    p = load_program()
    from vega_twin.cwu.demo import channel_configs, synth_stream, train_am
    am = train_am(Encoder.build())
    streams = synth_stream(["A", "B", "A"], 3)
    t1 = run_stream(p, channel_configs(), streams, am=am, stop_on_wake=False).trace_jsonl()
    t2 = run_stream(p, channel_configs(), streams, am=am, stop_on_wake=False).trace_jsonl()
    assert t1 == t2
    first = json.loads(t1.splitlines()[0])
    assert set(first) >= {"cycle", "pc", "opcode"}


def test_two_class_demo():
    r = run_demo()
    assert r.accuracy >= 0.9
    assert r.oracle_match


def test_unequal_streams_rejected():
    with pytest.raises(StreamError, match="differ in length"):
        run_stream(assemble("HALT"), [ChannelConfig(0), ChannelConfig(1)], {0: [1, 2], 1: [1]})


def test_csv_and_binary_streams():
    assert parse_csv_stream("sample_index,raw_value\n0,5\n1,-7\n") == [5, -7]
    with pytest.raises(StreamError):
        parse_csv_stream("0,5\n2,6\n")
    with pytest.raises(StreamError):
        parse_csv_stream("0,5,1\n")
    data = np.array([3, -4, 2**31 - 1], dtype="<i4").tobytes()
    assert parse_binary_stream(data) == [3, -4, 2**31 - 1]
    with pytest.raises(StreamError):
        parse_binary_stream(b"\x00\x01\x02")


# --- power -----------------------------------------------------------------

def test_power_table_rows():
    lo = cwu_power(32e3)
    assert (lo.p_dyn_datapath_uw, lo.p_dyn_pads_uw, lo.p_leak_uw) == (0.99, 1.28, 0.70)
    assert round_sig(lo.total_uw) == 2.97
    hi = cwu_power(200e3)
    assert (hi.p_dyn_datapath_uw, hi.p_dyn_pads_uw, hi.p_leak_uw) == (6.21, 8.00, 0.70)
    assert round_sig(hi.total_uw) == 14.9


def test_power_interpolation_midpoint():
    mid = cwu_power(116e3)
    assert mid.p_leak_uw == 0.70
    assert mid.p_dyn_datapath_uw == pytest.approx((0.99 + 6.21) / 2)
    assert mid.sample_rate == pytest.approx(575.0)
    assert mid.p_dyn_pads_uw == pytest.approx((1.28 + 8.00) / 2)


def test_proportional_consistency():
    pred = proportional_prediction(200e3)
    assert abs(pred - 14.9) / 14.9 < 0.05


def test_power_monotone_and_positive():
    fs = np.linspace(1e3, 400e3, 50)
    totals = [cwu_power(f).total_uw for f in fs]
    assert all(b >= a for a, b in zip(totals, totals[1:]))
    assert min(totals) >= 0.70
    with pytest.raises(ValueError):
        cwu_power(0)


def test_pads_follow_sample_rate_not_clock():
    a = cwu_power(200e3, sample_rate=150.0)
    assert a.p_dyn_pads_uw == pytest.approx(1.28)
    assert a.p_dyn_datapath_uw == pytest.approx(6.21)
