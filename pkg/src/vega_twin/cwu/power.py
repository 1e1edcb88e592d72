"""CWU power model anchored on the two measured operating points."""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class CwuPowerRow:
    f_clk_hz: float
    p_dyn_datapath_uw: float
    p_dyn_pads_uw: float
    p_leak_uw: float
    max_sample_rate: float
    reported_total_uw: float | None = None

    @property
    def total_uw(self) -> float:
        return self.p_dyn_datapath_uw + self.p_dyn_pads_uw + self.p_leak_uw


@dataclass(frozen=True)
class CwuPowerTable:
    rows: tuple[CwuPowerRow, ...] = field(default_factory=lambda: DEFAULT_ROWS)
    voltage: float = 0.6

    def __post_init__(self) -> None:
        if len(self.rows) < 2:
            raise ValueError("power table needs at least two rows")
        fs = [r.f_clk_hz for r in self.rows]
        if sorted(set(fs)) != fs:
            raise ValueError("power table rows must have strictly increasing f_clk")

    def row_at(self, f_clk_hz: float) -> CwuPowerRow | None:
        for r in self.rows:
            if r.f_clk_hz == f_clk_hz:
                return r
        return None


DEFAULT_ROWS = (
    CwuPowerRow(32e3, 0.99, 1.28, 0.70, 150.0, 2.97),
    CwuPowerRow(200e3, 6.21, 8.00, 0.70, 1000.0, 14.9),
)


@dataclass(frozen=True)
class CwuPowerBreakdown:
    f_clk_hz: float
    sample_rate: float
    p_dyn_datapath_uw: float
    p_dyn_pads_uw: float
    p_leak_uw: float

    @property
    def total_uw(self) -> float:
        return self.p_dyn_datapath_uw + self.p_dyn_pads_uw + self.p_leak_uw

    @property
    def dynamic_uw(self) -> float:
        return self.p_dyn_datapath_uw + self.p_dyn_pads_uw

    def as_dict(self) -> dict:
        return {
            "f_clk_hz": self.f_clk_hz,
            "sample_rate": self.sample_rate,
            "p_dyn_datapath_uw": self.p_dyn_datapath_uw,
            "p_dyn_pads_uw": self.p_dyn_pads_uw,
            "p_leak_uw": self.p_leak_uw,
            "total_uw": self.total_uw,
        }


def round_sig(x: float, digits: int = 3) -> float:
    """Round to the number of significant digits the measurements are quoted with."""
    return float(f"{x:.{digits}g}")


def _affine(x: float, x0: float, y0: float, x1: float, y1: float) -> float:
    return y0 + (y1 - y0) * (x - x0) / (x1 - x0)


def _bracket(rows: tuple[CwuPowerRow, ...], x: float, key) -> tuple[CwuPowerRow, CwuPowerRow]:
    for a, b in zip(rows, rows[1:]):
        if key(b) >= x:
            return a, b
    return rows[-2], rows[-1]


def max_sample_rate(f_clk_hz: float, table: CwuPowerTable | None = None) -> float:
    table = table or CwuPowerTable()
    a, b = _bracket(table.rows, f_clk_hz, lambda r: r.f_clk_hz)
    return max(0.0, _affine(f_clk_hz, a.f_clk_hz, a.max_sample_rate, b.f_clk_hz, b.max_sample_rate))


def cwu_power(f_clk_hz: float, table: CwuPowerTable | None = None,
              sample_rate: float | None = None) -> CwuPowerBreakdown:
    """Power breakdown in µW.

    Datapath dynamic power is piecewise affine in f_clk through the table rows;
    pad power is piecewise affine in the per-channel sample rate (pads toggle
    per SPI transaction). Leakage is the tabulated constant. Without an explicit
    sample rate the channel runs at the maximum rate for the clock.
    """
    if f_clk_hz <= 0:
        raise ValueError("f_clk must be positive")
    table = table or CwuPowerTable()
    sps = max_sample_rate(f_clk_hz, table) if sample_rate is None else sample_rate
    if sps < 0:
        raise ValueError("sample rate must be >= 0")
    exact = table.row_at(f_clk_hz)
    if exact is not None and sps == exact.max_sample_rate:
        return CwuPowerBreakdown(f_clk_hz, sps, exact.p_dyn_datapath_uw, exact.p_dyn_pads_uw, exact.p_leak_uw)
    a, b = _bracket(table.rows, f_clk_hz, lambda r: r.f_clk_hz)
    dp = _affine(f_clk_hz, a.f_clk_hz, a.p_dyn_datapath_uw, b.f_clk_hz, b.p_dyn_datapath_uw)
    pa, pb = _bracket(table.rows, sps, lambda r: r.max_sample_rate)
    pads = _affine(sps, pa.max_sample_rate, pa.p_dyn_pads_uw, pb.max_sample_rate, pb.p_dyn_pads_uw)
    leak = _affine(f_clk_hz, a.f_clk_hz, a.p_leak_uw, b.f_clk_hz, b.p_leak_uw)
    return CwuPowerBreakdown(f_clk_hz, sps, max(dp, 0.0), max(pads, 0.0), leak)


def proportional_prediction(f_clk_hz: float, table: CwuPowerTable | None = None) -> float:
    """Total predicted by scaling the lowest row's dynamic terms proportionally (clock and sample rate)."""
    table = table or CwuPowerTable()
    lo = table.rows[0]
    sps = max_sample_rate(f_clk_hz, table)
    return (lo.p_dyn_datapath_uw * f_clk_hz / lo.f_clk_hz
            + lo.p_dyn_pads_uw * sps / lo.max_sample_rate + lo.p_leak_uw)
