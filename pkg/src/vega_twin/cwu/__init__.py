from vega_twin.cwu.isa import (
    AsmError,
    CwuProgram,
    MicroInstruction,
    Opcode,
    assemble,
    disassemble,
)
from vega_twin.cwu.power import CwuPowerBreakdown, CwuPowerRow, CwuPowerTable, cwu_power
from vega_twin.cwu.preprocess import ChannelConfig, ChannelState, PreprocessError, preprocess_sample
from vega_twin.cwu.vm import RunResult, StreamError, VMError, VMState, WakeEvent, run_stream, vm_step

__all__ = [
    "AsmError", "CwuProgram", "MicroInstruction", "Opcode", "assemble", "disassemble",
    "CwuPowerBreakdown", "CwuPowerRow", "CwuPowerTable", "cwu_power",
    "ChannelConfig", "ChannelState", "PreprocessError", "preprocess_sample",
    "RunResult", "StreamError", "VMError", "VMState", "WakeEvent", "run_stream", "vm_step",
]
