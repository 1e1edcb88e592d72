"""Schedule report emitters: CSV, versioned JSON and stacked-bar SVG."""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from dataclasses import fields
from importlib import resources
from pathlib import Path

from vega_twin.dnn.schedule import LayerReport, ScheduleReport

SCHEMA_VERSION = 1
FORMATS = ("csv", "json", "svg")

# stable CSV column order
COLUMNS = tuple(f.name for f in fields(LayerReport)) + ("latency_s", "bound", "energy_j")
_TYPES = {f.name: f.type for f in fields(LayerReport)}
_TYPES.update(latency_s="float", bound="str", energy_j="float")

# stage colours for the per-layer bars
STAGE_COLORS = {"compute": "#ff7f0e", "l2_l1": "#1f77b4", "l3_l2": "#2ca02c"}


class ReportError(RuntimeError):
    pass


def _cell(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def to_csv(report: ScheduleReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for layer in report.layers:
        row = layer.row()
        w.writerow([_cell(row[c]) for c in COLUMNS])
    return buf.getvalue()


def _parse(col: str, raw: str):
    t = _TYPES[col]
    if t == "int":
        return int(raw)
    if t == "float":
        return float(raw)
    if t == "bool":
        if raw not in ("true", "false"):
            raise ReportError(f"column {col}: expected true/false, got {raw!r}")
        return raw == "true"
    return raw


def parse_csv(text: str) -> list[dict]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != COLUMNS:
        raise ReportError("CSV header does not match the report columns")
    return [{c: _parse(c, v) for c, v in zip(COLUMNS, r)} for r in rows[1:]]


def to_dict(report: ScheduleReport) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "dnn-sim",
        "metadata": {"network": report.network, "weights": report.weights, "engine": report.engine,
                     "config": report.config},
        "totals": report.totals(),
        "layers": [{c: layer.row()[c] for c in COLUMNS} for layer in report.layers],
    }


def dumps(data: dict) -> str:
    return json.dumps(data, indent=2, sort_keys=True) + "\n"


def to_json(report: ScheduleReport) -> str:
    return dumps(to_dict(report))


def report_schema() -> dict:
    text = resources.files("vega_twin.data").joinpath("dnn_report.schema.json").read_text(encoding="utf-8")
    return json.loads(text)


def to_svg(report: ScheduleReport) -> str:
    """Per-layer stacked bars of compute, L2-L1 and L3-L2 stage time in ms."""
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError as exc:
        raise ReportError("SVG output needs matplotlib (install the 'plot' extra)") from exc
    with matplotlib.rc_context({"svg.hashsalt": "vega-twin", "svg.fonttype": "path"}):
        n = len(report.layers)
        fig, ax = plt.subplots(figsize=(max(6.0, 0.15 * n + 2), 3.5))
        xs = list(range(n))
        comp = [l.t_compute_s * 1e3 for l in report.layers]
        l2l1 = [(l.t_in_s + l.t_out_s) * 1e3 for l in report.layers]
        l3 = [l.t_l3_s * 1e3 for l in report.layers]
        ax.bar(xs, comp, color=STAGE_COLORS["compute"], label="compute")
        ax.bar(xs, l2l1, bottom=comp, color=STAGE_COLORS["l2_l1"], label="L2-L1")
        ax.bar(xs, l3, bottom=[a + b for a, b in zip(comp, l2l1)], color=STAGE_COLORS["l3_l2"], label="L3-L2")
        ax.set_xlabel("layer")
        ax.set_ylabel("time [ms]")
        ax.set_title(f"{report.network} ({report.weights}, {report.engine})")
        ax.legend(loc="upper right", fontsize="small")
        fig.tight_layout()
        buf = io.StringIO()
        fig.savefig(buf, format="svg", metadata={"Date": None})
        plt.close(fig)
    return buf.getvalue()


def render(report: ScheduleReport, fmt: str) -> str:
    if fmt == "csv":
        return to_csv(report)
    if fmt == "json":
        return to_json(report)
    if fmt == "svg":
        return to_svg(report)
    raise ReportError(f"unknown report format {fmt!r}; choose from {FORMATS}")


def _umask() -> int:
    mask = os.umask(0)
    os.umask(mask)
    return mask


def atomic_write(path: str | Path, data: str | bytes) -> None:
    """Write via a temp file in the target directory, then rename over the target."""
    path = Path(path)
    raw = data.encode("utf-8") if isinstance(data, str) else data
    try:
        fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent or ".")
    except OSError as exc:
        raise ReportError(f"cannot write {path}: {exc.strerror}") from None
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(raw)
        os.chmod(tmp, 0o666 & ~_umask())
        os.replace(tmp, path)
    except OSError as exc:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise ReportError(f"cannot write {path}: {exc.strerror}") from None


def emit_report(report: ScheduleReport, fmt: str, path: str | Path) -> None:
    atomic_write(path, render(report, fmt))
