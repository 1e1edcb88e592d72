"""Per-channel sensor preprocessing ahead of the HDC encoder.

Stage order is fixed: width conversion, EMA update, offset removal or
low-pass output, subsampling, then local binary pattern coding.
"""

from __future__ import annotations

from dataclasses import dataclass, field

MAX_CHANNELS = 8
MAX_LBP_WINDOW = 8


class PreprocessError(ValueError):
    pass


@dataclass(frozen=True)
class ChannelConfig:
    channel_id: int = 0
    input_width: int = 16
    output_width: int = 16
    signed: bool = True
    offset_removal: bool = False
    lowpass: bool = False
    lowpass_shift: int = 4
    subsample: int = 1
    lbp: bool = False
    lbp_window: int = 8

    def __post_init__(self) -> None:
        if not 0 <= self.channel_id < MAX_CHANNELS:
            raise PreprocessError(f"channel id {self.channel_id} out of range 0..{MAX_CHANNELS - 1}")
        if not 1 <= self.input_width <= 32 or not 1 <= self.output_width <= 32:
            raise PreprocessError("data widths must be within 1..32 bits")
        if self.lowpass_shift < 0:
            raise PreprocessError("lowpass_shift must be >= 0")
        if self.subsample < 1:
            raise PreprocessError("subsample factor must be >= 1")
        if self.offset_removal and self.lowpass:
            # both stages read the single per-channel EMA
            raise PreprocessError("offset removal and low-pass share one EMA; enable at most one")
        if self.lbp and not 1 <= self.lbp_window <= MAX_LBP_WINDOW:
            raise PreprocessError(f"LBP window must be within 1..{MAX_LBP_WINDOW}")

    @property
    def encoded_width(self) -> int:
        """Bit width D of the samples handed to the encoder."""
        return self.lbp_window if self.lbp else self.output_width

    @property
    def signed_output(self) -> bool:
        return not self.lbp and (self.signed or self.offset_removal)

    def raw_range(self) -> tuple[int, int]:
        if self.signed:
            return -(1 << (self.input_width - 1)), (1 << (self.input_width - 1)) - 1
        return 0, (1 << self.input_width) - 1

    def to_level(self, sample: int) -> int:
        """Map a processed sample to an unsigned ``encoded_width``-bit level."""
        top = (1 << self.encoded_width) - 1
        if self.signed_output:
            sample += 1 << (self.encoded_width - 1)
        return min(max(sample, 0), top)


@dataclass(frozen=True)
class ChannelState:
    ema: int | None = None
    tick: int = 0
    history: tuple[int, ...] = field(default_factory=tuple)


def convert_width(x: int, src_bits: int, dst_bits: int) -> int:
    if dst_bits < src_bits:
        return x >> (src_bits - dst_bits)
    return x << (dst_bits - src_bits)


def preprocess_sample(cfg: ChannelConfig, state: ChannelState, raw: int) -> tuple[ChannelState, int | None]:
    lo, hi = cfg.raw_range()
    if not lo <= raw <= hi:
        raise PreprocessError(f"raw sample {raw} outside {cfg.input_width}-bit range [{lo}, {hi}]")
    x = convert_width(raw, cfg.input_width, cfg.output_width)
    # EMA starts from the first sample so a constant input is already converged
    m = x if state.ema is None else state.ema + ((x - state.ema) >> cfg.lowpass_shift)
    if cfg.offset_removal:
        y = x - m
    elif cfg.lowpass:
        y = m
    else:
        y = x
    tick = state.tick + 1
    if state.tick % cfg.subsample:
        return ChannelState(m, tick, state.history), None
    if not cfg.lbp:
        return ChannelState(m, tick, state.history), y
    history = (state.history + (y,))[-(cfg.lbp_window + 1):]
    if len(history) <= cfg.lbp_window:
        return ChannelState(m, tick, history), None
    centre = history[-1]
    code = 0
    for i in range(cfg.lbp_window):
        if history[-2 - i] > centre:
            code |= 1 << i
    return ChannelState(m, tick, history), code
