"""26-bit microcode format, assembler and disassembler for the wake-up controller.

Word layout (MSB to LSB)::

    25..21  opcode   5 bits
    20..17  dst      4 bits   AM row written by STOREV
    16..13  src      4 bits   AM row read by LOADV/XOR/AND/CIMENC
    12..0   imm     13 bits   see the operand table below

Operand encodings inside ``imm``:

    PERM         imm = permutation id (0..3)
    IMENC chN,p  imm = p << 11 | N                  encode channel N's latched sample
    IMENC #v,p   imm = 1 << 12 | p << 11 | v       encode constant v (0..255, 8 bits wide)
    CIMENC rS,chN          imm = N                  level = channel N's latched sample
    CIMENC rS,#f           imm = 1 << 12 | f        flip f bits directly (0..2047)
    WAIT_SAMPLE chN        imm = N
    JUMP tgt[,n]           imm = n << 6 | tgt       n > 0 repeats the jump n times, then falls through

Text syntax: one instruction per line, ``;`` starts a comment, ``label:``
defines a jump target. ``.dim``, ``.threshold`` and ``.target`` set the
program-level vector width, wake threshold and target AM row. Any legal word
can also be written with explicit fields: ``NOP dst=1 src=0 imm=7``.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field

from vega_twin.hdc import AM_ROWS, LEGAL_DIMS

WORD_BITS = 26
MAX_PROGRAM = 64
OPCODE_BITS, DST_BITS, SRC_BITS, IMM_BITS = 5, 4, 4, 13
IMM_MASK = (1 << IMM_BITS) - 1
MODE_BIT = 1 << 12
PAIR_BIT = 1 << 11
MAX_CHANNELS = 8
JUMP_TARGET_BITS = 6
JUMP_COUNT_MAX = (1 << (IMM_BITS - JUMP_TARGET_BITS)) - 1


class Opcode(enum.IntEnum):
    NOP = 0
    LOADV = 1
    STOREV = 2
    XOR = 3
    AND = 4
    NOT = 5
    PERM = 6
    IMENC = 7
    CIMENC = 8
    BUNDLE_BEGIN = 9
    BUNDLE_ACC = 10
    BUNDLE_END = 11
    SEARCH = 12
    WAIT_SAMPLE = 13
    JUMP = 14
    HALT = 15


class AsmError(ValueError):
    def __init__(self, message: str, line: int | None = None) -> None:
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class MicroInstruction:
    opcode: Opcode
    dst: int = 0
    src: int = 0
    imm: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "opcode", Opcode(self.opcode))
        for name, bits in (("dst", DST_BITS), ("src", SRC_BITS), ("imm", IMM_BITS)):
            value = getattr(self, name)
            if not 0 <= value < (1 << bits):
                raise AsmError(f"{name}={value} does not fit in {bits} bits")

    def encode(self) -> int:
        return (int(self.opcode) << 21) | (self.dst << 17) | (self.src << 13) | self.imm

    @classmethod
    def decode(cls, word: int, offset: int = 0) -> MicroInstruction:
        if not 0 <= word < (1 << WORD_BITS):
            raise AsmError(f"word {word:#x} at byte offset {offset} exceeds {WORD_BITS} bits")
        op = word >> 21
        if op not in Opcode._value2member_map_:
            raise AsmError(f"reserved opcode {op} at byte offset {offset}")
        return cls(Opcode(op), (word >> 17) & 0xF, (word >> 13) & 0xF, word & IMM_MASK)


@dataclass(frozen=True)
class CwuProgram:
    instructions: tuple[MicroInstruction, ...]
    vector_dim: int = 512
    wake_threshold: int = 512
    target_index: int = 0
    labels: dict[str, int] = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self) -> None:
        if len(self.instructions) > MAX_PROGRAM:
            raise AsmError(f"program exceeds {MAX_PROGRAM} instructions")
        if self.vector_dim not in LEGAL_DIMS:
            raise AsmError(f"vector dimension {self.vector_dim} not in {LEGAL_DIMS}")
        if not 0 <= self.target_index < AM_ROWS:
            raise AsmError(f"target index {self.target_index} out of range")
        if not 0 <= self.wake_threshold <= self.vector_dim:
            raise AsmError(f"wake threshold {self.wake_threshold} out of range 0..{self.vector_dim}")

    @property
    def words(self) -> list[int]:
        return [ins.encode() for ins in self.instructions]

    def to_bytes(self) -> bytes:
        return b"".join(w.to_bytes(4, "little") for w in self.words)

    @classmethod
    def from_bytes(cls, data: bytes, **params) -> CwuProgram:
        if len(data) % 4:
            raise AsmError("binary image length is not a multiple of 4 bytes")
        words = [int.from_bytes(data[i:i + 4], "little") for i in range(0, len(data), 4)]
        return cls.from_words(words, **params)

    @classmethod
    def from_words(cls, words: list[int], **params) -> CwuProgram:
        if len(words) > MAX_PROGRAM:
            raise AsmError(f"program exceeds {MAX_PROGRAM} instructions")
        ins = tuple(MicroInstruction.decode(w, 4 * i) for i, w in enumerate(words))
        return cls(ins, **params)


_NO_OPERAND = {Opcode.NOP, Opcode.NOT, Opcode.BUNDLE_BEGIN, Opcode.BUNDLE_ACC,
               Opcode.BUNDLE_END, Opcode.SEARCH, Opcode.HALT}
_SRC_ONLY = {Opcode.LOADV, Opcode.XOR, Opcode.AND}

_LABEL_RE = re.compile(r"^([A-Za-z_][\w.]*):")
_FIELD_RE = re.compile(r"^(dst|src|imm)=(\S+)$")


def _int(token: str, line: int) -> int:
    try:
        return int(token, 0)
    except ValueError:
        raise AsmError(f"expected an integer, got {token!r}", line) from None


def _ranged(value: int, hi: int, what: str, line: int) -> int:
    if not 0 <= value <= hi:
        raise AsmError(f"{what} {value} out of range 0..{hi}", line)
    return value


def _reg(token: str, line: int) -> int:
    if not re.fullmatch(r"[rR]\d+", token):
        raise AsmError(f"expected an AM row like r3, got {token!r}", line)
    return _ranged(int(token[1:]), AM_ROWS - 1, "AM row", line)


def _channel(token: str, line: int) -> int:
    if not re.fullmatch(r"ch\d+", token, flags=re.IGNORECASE):
        raise AsmError(f"expected a channel like ch0, got {token!r}", line)
    return _ranged(int(token[2:]), MAX_CHANNELS - 1, "channel", line)


def _immediate(token: str, line: int) -> int:
    if not token.startswith("#"):
        raise AsmError(f"expected an immediate like #3, got {token!r}", line)
    return _int(token[1:], line)


def _split_operands(rest: str) -> list[str]:
    return [t.strip() for t in rest.split(",") if t.strip()] if rest.strip() else []


def _parse_instruction(op: Opcode, operands: list[str], line: int,
                       labels: dict[str, int]) -> MicroInstruction:
    if operands and all(_FIELD_RE.match(t) for t in " ".join(operands).split()):
        fields = {}
        for t in " ".join(operands).split():
            name, value = _FIELD_RE.match(t).groups()
            fields[name] = _int(value, line)
        try:
            return MicroInstruction(op, **fields)
        except AsmError as exc:
            raise AsmError(str(exc), line) from None

    def arity(n: int) -> None:
        if len(operands) != n:
            raise AsmError(f"{op.name} takes {n} operand(s), got {len(operands)}", line)

    if op in _NO_OPERAND:
        arity(0)
        return MicroInstruction(op)
    if op in _SRC_ONLY:
        arity(1)
        return MicroInstruction(op, src=_reg(operands[0], line))
    if op is Opcode.STOREV:
        arity(1)
        return MicroInstruction(op, dst=_reg(operands[0], line))
    if op is Opcode.PERM:
        arity(1)
        return MicroInstruction(op, imm=_ranged(_immediate(operands[0], line), 3, "permutation", line))
    if op is Opcode.WAIT_SAMPLE:
        arity(1)
        return MicroInstruction(op, imm=_channel(operands[0], line))
    if op is Opcode.IMENC:
        if len(operands) not in (1, 2):
            raise AsmError("IMENC takes a channel or #constant and an optional pair select", line)
        pair = _ranged(_int(operands[1], line), 1, "pair select", line) if len(operands) == 2 else 0
        if operands[0].startswith("#"):
            value = _ranged(_immediate(operands[0], line), 0xFF, "IM constant", line)
            return MicroInstruction(op, imm=MODE_BIT | pair * PAIR_BIT | value)
        return MicroInstruction(op, imm=pair * PAIR_BIT | _channel(operands[0], line))
    if op is Opcode.CIMENC:
        arity(2)
        src = _reg(operands[0], line)
        if operands[1].startswith("#"):
            flips = _ranged(_immediate(operands[1], line), PAIR_BIT - 1, "flip count", line)
            return MicroInstruction(op, src=src, imm=MODE_BIT | flips)
        return MicroInstruction(op, src=src, imm=_channel(operands[1], line))
    if op is Opcode.JUMP:
        if len(operands) not in (1, 2):
            raise AsmError("JUMP takes a target and an optional repeat count", line)
        tgt = operands[0]
        if tgt.startswith("#"):
            target = _immediate(tgt, line)
        elif tgt in labels:
            target = labels[tgt]
        else:
            raise AsmError(f"undefined label {tgt!r}", line)
        target = _ranged(target, MAX_PROGRAM - 1, "jump target", line)
        count = _ranged(_int(operands[1], line), JUMP_COUNT_MAX, "repeat count", line) if len(operands) == 2 else 0
        return MicroInstruction(op, imm=count << JUMP_TARGET_BITS | target)
    raise AsmError(f"unhandled opcode {op.name}", line)  # pragma: no cover


def assemble(source: str) -> CwuProgram:
    params = {"vector_dim": 512, "wake_threshold": None, "target_index": 0}
    pending: list[tuple[int, str, list[str]]] = []
    labels: dict[str, int] = {}
    for lineno, raw in enumerate(source.splitlines(), start=1):
        text = raw.split(";", 1)[0].strip()
        while (m := _LABEL_RE.match(text)):
            name = m.group(1)
            if name in labels:
                raise AsmError(f"duplicate label {name!r}", lineno)
            labels[name] = len(pending)
            text = text[m.end():].strip()
        if not text:
            continue
        head, _, rest = text.partition(" ")
        if head.startswith("."):
            key = {".dim": "vector_dim", ".threshold": "wake_threshold", ".target": "target_index"}.get(head.lower())
            if key is None:
                raise AsmError(f"unknown directive {head!r}", lineno)
            params[key] = _int(rest.strip(), lineno)
            continue
        try:
            op = Opcode[head.upper()]
        except KeyError:
            raise AsmError(f"unknown mnemonic {head!r}", lineno) from None
        pending.append((lineno, op, _split_operands(rest)))
        if len(pending) > MAX_PROGRAM:
            raise AsmError(f"program exceeds {MAX_PROGRAM} instructions", lineno)
    ins = tuple(_parse_instruction(op, ops, ln, labels) for ln, op, ops in pending)
    if params["wake_threshold"] is None:
        params["wake_threshold"] = params["vector_dim"]
    return CwuProgram(ins, labels=labels, **params)


def _pretty(ins: MicroInstruction, label_of: dict[int, str]) -> str | None:
    op, dst, src, imm = ins.opcode, ins.dst, ins.src, ins.imm
    if op in _NO_OPERAND:
        return op.name if (dst, src, imm) == (0, 0, 0) else None
    if op in _SRC_ONLY:
        return f"{op.name} r{src}" if (dst, imm) == (0, 0) else None
    if op is Opcode.STOREV:
        return f"STOREV r{dst}" if (src, imm) == (0, 0) else None
    if dst or (src and op is not Opcode.CIMENC):
        return None
    if op is Opcode.PERM:
        return f"PERM #{imm}" if imm <= 3 else None
    if op is Opcode.WAIT_SAMPLE:
        return f"WAIT_SAMPLE ch{imm}" if imm < MAX_CHANNELS else None
    if op is Opcode.IMENC:
        pair = 1 if imm & PAIR_BIT else 0
        low = imm & (PAIR_BIT - 1)
        suffix = ", 1" if pair else ""
        if imm & MODE_BIT:
            return f"IMENC #{low}{suffix}" if low <= 0xFF else None
        return f"IMENC ch{low}{suffix}" if low < MAX_CHANNELS else None
    if op is Opcode.CIMENC:
        if imm & MODE_BIT:
            return f"CIMENC r{src}, #{imm & (PAIR_BIT - 1)}" if not imm & PAIR_BIT else None
        return f"CIMENC r{src}, ch{imm}" if imm < MAX_CHANNELS else None
    if op is Opcode.JUMP:
        target, count = imm & (MAX_PROGRAM - 1), imm >> JUMP_TARGET_BITS
        name = label_of.get(target, f"#{target}")
        return f"JUMP {name}, {count}" if count else f"JUMP {name}"
    return None  # pragma: no cover


def disassemble(program: CwuProgram) -> str:
    """Canonical text; ``assemble(disassemble(p))`` reproduces ``p`` bit for bit."""
    targets = sorted({ins.imm & (MAX_PROGRAM - 1) for ins in program.instructions
                      if ins.opcode is Opcode.JUMP})
    label_of = {t: f"L{t}" for t in targets if t < len(program.instructions)}
    lines = [f".dim {program.vector_dim}",
             f".threshold {program.wake_threshold}",
             f".target {program.target_index}"]
    for pc, ins in enumerate(program.instructions):
        if pc in label_of:
            lines.append(f"{label_of[pc]}:")
        text = _pretty(ins, label_of)
        if text is None:
            text = f"{ins.opcode.name} dst={ins.dst} src={ins.src} imm={ins.imm}"
        lines.append(f"    {text}")
    return "\n".join(lines) + "\n"
