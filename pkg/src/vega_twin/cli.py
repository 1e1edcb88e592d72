"""``vega-twin`` command line: one binary, one subcommand per model.

Exit codes (also emitted as JSON on stderr):

    0  success
    2  usage error (bad flags)
    3  configuration error
    4  input file missing or unreadable
    5  input failed to parse or validate
    6  model rejected the request at run time
    7  output could not be written
    8  optional dependency missing
    70 internal error
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from vega_twin import config as cfgmod
from vega_twin import hdc, hwce, power, report
from vega_twin.cwu import demo, streams
from vega_twin.cwu.isa import AsmError, CwuProgram, assemble, disassemble
from vega_twin.cwu.preprocess import ChannelConfig, PreprocessError
from vega_twin.cwu.vm import StreamError, VMError, run_stream
from vega_twin.dnn import (
    NetworkError,
    ScheduleError,
    TilingError,
    all_hyperram,
    allocate_weights,
    available_networks,
    load_network,
    load_shipped,
    schedule_network,
)
from vega_twin.memory import MemoryError_

SCHEMA_VERSION = 1
COMMANDS = ("cwu-asm", "cwu-run", "hwce-run", "dnn-sim", "power-est", "suite")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_INPUT = 4
EXIT_VALIDATION = 5
EXIT_MODEL = 6
EXIT_OUTPUT = 7
EXIT_DEPENDENCY = 8
EXIT_INTERNAL = 70

_SUFFIX_FORMATS = {".csv": "csv", ".svg": "svg", ".json": "json", ".bin": "bin", ".asm": "asm",
                   ".s": "asm", ".hex": "hex", ".npy": "npy"}


class CliError(Exception):
    def __init__(self, code: int, message: str) -> None:
        super().__init__(message)
        self.code = code


def _classify(exc: BaseException) -> int:
    if isinstance(exc, CliError):
        return exc.code
    if isinstance(exc, cfgmod.ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, (FileNotFoundError, IsADirectoryError, PermissionError)):
        return EXIT_INPUT
    if isinstance(exc, report.ReportError):
        return EXIT_DEPENDENCY if "matplotlib" in str(exc) else EXIT_OUTPUT
    if isinstance(exc, (NetworkError, AsmError, StreamError, PreprocessError, json.JSONDecodeError)):
        return EXIT_VALIDATION
    if isinstance(exc, (VMError, ScheduleError, TilingError, hwce.HwceError, power.PowerError,
                        hdc.HDCError, MemoryError_)):
        return EXIT_MODEL
    return EXIT_INTERNAL


def _error_json(code: int, exc: BaseException) -> str:
    return json.dumps({"error": {"code": code, "type": type(exc).__name__, "message": str(exc)}},
                      sort_keys=True)


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # argparse's default prints prose and exits 2
        raise CliError(EXIT_USAGE, message)


# --- helpers ---------------------------------------------------------------


def _read_text(path: str | Path) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CliError(EXIT_INPUT, f"cannot read {path}: {exc.strerror}") from None


def _read_bytes(path: str | Path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise CliError(EXIT_INPUT, f"cannot read {path}: {exc.strerror}") from None


def _read_json(path: str | Path) -> dict:
    try:
        return json.loads(_read_text(path))
    except json.JSONDecodeError as exc:
        raise CliError(EXIT_VALIDATION, f"{path}: line {exc.lineno}: {exc.msg}") from None


def _format(args, default: str, allowed: tuple[str, ...]) -> str:
    fmt = args.format
    if fmt is None and args.out:
        fmt = _SUFFIX_FORMATS.get(Path(args.out).suffix.lower())
    fmt = fmt or default
    if fmt not in allowed:
        raise CliError(EXIT_USAGE, f"--format {fmt!r} not supported here; choose from {allowed}")
    return fmt


def _emit(args, data: str | bytes) -> None:
    if args.out:
        report.atomic_write(args.out, data)
    elif isinstance(data, bytes):
        sys.stdout.buffer.write(data)
    else:
        sys.stdout.write(data)


def _settings(args) -> cfgmod.Settings:
    flags = {k: getattr(args, k, None) for k in (
        "network", "weights", "engine", "f_soc", "f_cl", "seed", "jobs", "lookahead",
        "boundary", "retained_kb", "battery_mah", "voltage", "power_f_clk")}
    flags.update(cfgmod.split_profiles(getattr(args, "profile", None)))
    return cfgmod.resolve(args.config, flags)


def _sha(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


# --- cwu -------------------------------------------------------------------


def program_to_json(prog: CwuProgram) -> str:
    return report.dumps({"schema_version": SCHEMA_VERSION, "kind": "cwu-program",
                         "vector_dim": prog.vector_dim, "wake_threshold": prog.wake_threshold,
                         "target_index": prog.target_index, "words": prog.words})


def load_program(path: str | Path) -> CwuProgram:
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".json":
        data = _read_json(path)
        if data.get("schema_version") != SCHEMA_VERSION or data.get("kind") != "cwu-program":
            raise CliError(EXIT_VALIDATION, f"{path}: not a version {SCHEMA_VERSION} cwu-program image")
        return CwuProgram.from_words(list(data["words"]), vector_dim=data["vector_dim"],
                                     wake_threshold=data["wake_threshold"], target_index=data["target_index"])
    if suffix == ".bin":
        return CwuProgram.from_bytes(_read_bytes(path))
    return assemble(_read_text(path))


def cmd_cwu_asm(args) -> int:
    prog = load_program(args.source)
    fmt = _format(args, "asm" if args.disassemble else ("bin" if args.out else "hex"),
                  ("bin", "hex", "json", "asm"))
    if fmt == "bin":
        _emit(args, prog.to_bytes())
    elif fmt == "hex":
        _emit(args, "".join(f"{w:07x}\n" for w in prog.words))
    elif fmt == "json":
        _emit(args, program_to_json(prog))
    else:
        _emit(args, disassemble(prog))
    return EXIT_OK


def load_am(path: str | Path, dim: int) -> hdc.AssociativeMemory:
    data = _read_json(path)
    if data.get("schema_version") != SCHEMA_VERSION or data.get("dim") != dim:
        raise CliError(EXIT_VALIDATION, f"{path}: need schema_version {SCHEMA_VERSION} and dim {dim}")
    am = hdc.AssociativeMemory.empty(dim)
    for row, text in sorted(data.get("rows", {}).items(), key=lambda kv: int(kv[0])):
        am = hdc.am_write(am, int(row), hdc.HDVector.from_hex(text, dim))
    return am


def cmd_cwu_run(args, s: cfgmod.Settings) -> int:
    if not args.stream:
        if args.program:
            raise CliError(EXIT_USAGE, "--program needs at least one --stream")
        res = demo.run_demo(n_segments=args.segments, seed=s.seed)
        out = {"schema_version": SCHEMA_VERSION, "kind": "cwu-run", "mode": "demo", "seed": s.seed,
               "segments": len(res.labels), "accuracy": res.accuracy, "oracle_match": res.oracle_match,
               "cycles": res.cycles, "labels": "".join(res.labels),
               "woke": "".join("1" if w else "0" for w in res.woke)}
        _emit(args, report.dumps(out))
        return EXIT_OK
    prog = load_program(args.program) if args.program else demo.load_program()
    data = {ch: streams.load_stream(p) for ch, p in enumerate(args.stream)}
    cfgs = [ChannelConfig(channel_id=ch) for ch in data]
    am = load_am(args.am, prog.vector_dim) if args.am else None
    res = run_stream(prog, cfgs, data, max_samples=args.max_samples, am=am,
                     stop_on_wake=not args.no_stop, record_trace=bool(args.trace))
    if args.trace:
        report.atomic_write(args.trace, res.trace_jsonl())
    out = {"schema_version": SCHEMA_VERSION, "kind": "cwu-run", "mode": "streams",
           "cycles": res.final.cycles,
           "wakes": [{"sample_index": w.sample_index, "row": w.matched_row, "distance": w.distance,
                      "cycles": w.elapsed_cycles} for w in res.wakes],
           "searches": [list(x) for x in res.searches]}
    _emit(args, report.dumps(out))
    return EXIT_OK


# --- hwce ------------------------------------------------------------------


def _steps_from_file(path: Path) -> list[hwce.ChainStep]:
    data = _read_json(path)
    if data.get("schema_version") != SCHEMA_VERSION or not isinstance(data.get("steps"), list):
        raise CliError(EXIT_VALIDATION, f"{path}: need schema_version {SCHEMA_VERSION} and a 'steps' list")
    steps = []
    for i, raw in enumerate(data["steps"]):
        where = f"{path}: steps[{i}]"
        try:
            job = hwce.job_from_dict(raw["job"], where + ".job")
            x = hwce.load_tensor(path.parent / raw["input"])
            w = hwce.load_tensor(path.parent / raw["filters"])
            p = hwce.load_tensor(path.parent / raw["partials"]) if raw.get("partials") else None
        except KeyError as exc:
            raise CliError(EXIT_VALIDATION, f"{where}: missing {exc.args[0]!r}") from None
        except (OSError, ValueError) as exc:
            if isinstance(exc, hwce.HwceError):
                raise CliError(EXIT_VALIDATION, str(exc)) from None
            raise CliError(EXIT_INPUT, f"{where}: {exc}") from None
        steps.append(hwce.ChainStep(job, x, w, p))
    return steps


def cmd_hwce_run(args, s: cfgmod.Settings) -> int:
    fmt = _format(args, "json", ("json", "npy"))
    if args.job:
        chains = [_steps_from_file(Path(args.job))]
    else:
        rng = np.random.default_rng(s.seed)
        chains = [hwce.random_chain(rng) for _ in range(args.chains)]
    results = []
    last = None
    for steps in chains:
        out, cycles = hwce.run_chain(steps)
        last = out
        results.append({"jobs": [hwce.job_to_dict(st.job) for st in steps], "cycles": cycles,
                        "macs": sum(st.job.macs for st in steps), "shape": list(out.shape),
                        "sha256": _sha(np.ascontiguousarray(out, dtype="<i4").tobytes())})
    if fmt == "npy":
        if not args.out:
            raise CliError(EXIT_USAGE, "npy output needs --out")
        import io
        buf = io.BytesIO()
        np.save(buf, np.ascontiguousarray(last, dtype="<i4"), allow_pickle=False)
        _emit(args, buf.getvalue())
        return EXIT_OK
    _emit(args, report.dumps({"schema_version": SCHEMA_VERSION, "kind": "hwce-run",
                              "seed": None if args.job else s.seed, "chains": results}))
    return EXIT_OK


# --- dnn -------------------------------------------------------------------


def resolve_network(name_or_path: str):
    p = Path(name_or_path)
    if p.suffix == ".json" or p.exists():
        if not p.exists():
            raise CliError(EXIT_INPUT, f"network file {p} not found")
        return load_network(p)
    if name_or_path in available_networks():
        return load_shipped(name_or_path)
    raise CliError(EXIT_INPUT, f"unknown network {name_or_path!r}; shipped: {available_networks()}")


def cmd_dnn_sim(args, s: cfgmod.Settings) -> int:
    fmt = _format(args, "json", report.FORMATS)
    net = resolve_network(s.network)
    if s.engine is not None:
        net = net.with_engine(s.engine)
    placement = allocate_weights(net) if s.weights == "mram" else all_hyperram(net)
    rep = schedule_network(net, placement, cfg=s.dnn_config())
    _emit(args, report.render(rep, fmt))
    return EXIT_OK


# --- power -----------------------------------------------------------------

DEFAULT_DUTY = {"schema_version": 1, "event": {"rate_hz": 1 / 3600, "active_s": 0.1,
                                               "active_mode": "cluster_active", "sleep_mode": "cognitive_sleep"}}


def cmd_power_est(args, s: cfgmod.Settings) -> int:
    prof = power.load_profile(args.duty_cycle) if args.duty_cycle else power.profile_from_dict(DEFAULT_DUTY)
    out = power.summarize(prof, s.power_config(), s.battery_mah, s.voltage)
    out["kind"] = "power-est"
    _emit(args, report.dumps(out))
    return EXIT_OK


# --- suite -----------------------------------------------------------------


@dataclass(frozen=True)
class Scenario:
    name: str
    argv: tuple[str, ...]


def default_suite() -> list[Scenario]:
    asm = str(resources.files("vega_twin.data").joinpath("two_class.asm"))
    out = [
        Scenario("cwu_program.json", ("cwu-asm", asm, "--format", "json")),
        Scenario("cwu_demo.json", ("cwu-run",)),
        Scenario("hwce_random.json", ("hwce-run", "--chains", "50")),
        Scenario("power_hourly_wake.json", ("power-est",)),
        Scenario("mobilenet_v2_mram.json", ("dnn-sim", "--network", "mobilenet_v2", "--weights", "mram")),
        Scenario("mobilenet_v2_mram.csv", ("dnn-sim", "--network", "mobilenet_v2", "--weights", "mram")),
        Scenario("mobilenet_v2_hyperram.json", ("dnn-sim", "--network", "mobilenet_v2", "--weights", "hyperram")),
        Scenario("mobilenet_v2_hyperram.csv", ("dnn-sim", "--network", "mobilenet_v2", "--weights", "hyperram")),
    ]
    for v in ("a0", "a1", "a2"):
        out.append(Scenario(f"repvgg_{v}_sw.json", ("dnn-sim", "--network", f"repvgg_{v}", "--engine", "sw")))
        out.append(Scenario(f"repvgg_{v}_hwce.json", ("dnn-sim", "--network", f"repvgg_{v}", "--engine", "hwce",
                                                      "--profile", "hwce-calibrated")))
    try:
        import matplotlib  # noqa: F401
    except ImportError:
        pass
    else:
        out.append(Scenario("mobilenet_v2_mram.svg", ("dnn-sim", "--network", "mobilenet_v2", "--weights", "mram")))
    return out


def _run_one(argv: list[str]) -> tuple[int, str]:
    import io
    import contextlib
    err = io.StringIO()
    with contextlib.redirect_stderr(err):
        code = main(argv)
    return code, err.getvalue()


def cmd_suite(args, s: cfgmod.Settings) -> int:
    if not args.out:
        raise CliError(EXIT_USAGE, "suite needs --out DIR")
    root = Path(args.out)
    try:
        root.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(EXIT_OUTPUT, f"cannot create {root}: {exc.strerror}") from None
    common = ["--seed", str(s.seed)]
    if args.config:
        common += ["--config", args.config]
    runs = [list(sc.argv) + common + ["--out", str(root / sc.name)] for sc in default_suite()]
    if s.jobs > 1:
        with ProcessPoolExecutor(max_workers=s.jobs) as pool:
            results = list(pool.map(_run_one, runs))
    else:
        results = [_run_one(r) for r in runs]
    manifest = []
    failed = 0
    for sc, (code, err) in zip(default_suite(), results):
        entry = {"name": sc.name, "argv": list(sc.argv), "exit_code": code}
        if code == EXIT_OK:
            entry["sha256"] = _sha((root / sc.name).read_bytes())
        else:
            failed += 1
            entry["stderr"] = err.strip()
        manifest.append(entry)
    report.atomic_write(root / "manifest.json", report.dumps(
        {"schema_version": SCHEMA_VERSION, "kind": "suite", "seed": s.seed, "scenarios": manifest}))
    if failed:
        raise CliError(EXIT_MODEL, f"{failed} scenario(s) failed; see manifest.json")
    return EXIT_OK


# --- entry point -----------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help=f"INI file (default: ${cfgmod.ENV_VAR})")
    common.add_argument("--seed", type=int, help="master seed for synthetic inputs")
    common.add_argument("--out", help="output path (stdout when omitted)")
    common.add_argument("--format", help="output format (default from --out suffix)")

    p = _Parser(prog="vega-twin", description="Behavioural and performance model of an IoT SoC.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    a = sub.add_parser("cwu-asm", parents=[common], help="assemble or disassemble wake-up microcode")
    a.add_argument("source", help=".asm source, .bin image or .json image")
    a.add_argument("--disassemble", action="store_true", help="emit canonical assembly")

    r = sub.add_parser("cwu-run", parents=[common], help="run a wake-up program on sensor streams")
    r.add_argument("--program", help="program (.asm/.bin/.json); default: shipped two-class program")
    r.add_argument("--stream", action="append", help="per-channel stream file, in channel order")
    r.add_argument("--am", help="associative-memory JSON (rows as hex)")
    r.add_argument("--max-samples", type=int)
    r.add_argument("--trace", help="write the instruction trace as JSON lines")
    r.add_argument("--no-stop", action="store_true", help="keep running after the first wake event")
    r.add_argument("--segments", type=int, default=40, help="demo segments when no stream is given")

    h = sub.add_parser("hwce-run", parents=[common], help="run convolution-engine jobs bit-exactly")
    h.add_argument("--job", help="job chain JSON; default: random chains from --seed")
    h.add_argument("--chains", type=int, default=10, help="random chains to run")

    d = sub.add_parser("dnn-sim", parents=[common], help="schedule a network and report latency/energy")
    d.add_argument("--network", help="shipped network name or descriptor path")
    d.add_argument("--weights", choices=cfgmod.WEIGHT_HOMES)
    d.add_argument("--engine", choices=cfgmod.ENGINES)
    d.add_argument("--f-soc", type=float, dest="f_soc")
    d.add_argument("--f-cl", type=float, dest="f_cl")
    d.add_argument("--profile", help="DNN and/or channel-table profile names, comma separated")
    d.add_argument("--lookahead", type=int)

    w = sub.add_parser("power-est", parents=[common], help="duty-cycled average power and battery life")
    w.add_argument("--duty-cycle", help="profile JSON; default: one 100 ms wake per hour")
    w.add_argument("--boundary", choices=power.BOUNDARIES)
    w.add_argument("--retained-kb", type=float, dest="retained_kb")
    w.add_argument("--battery-mah", type=float, dest="battery_mah")
    w.add_argument("--voltage", type=float)
    w.add_argument("--f-cl", type=float, dest="power_f_clk", help="active-mode clock")

    s = sub.add_parser("suite", parents=[common], help="run the default scenario suite into --out DIR")
    s.add_argument("--jobs", type=int, help="scenarios run in parallel")
    return p


_HANDLERS = {"cwu-run": cmd_cwu_run, "hwce-run": cmd_hwce_run, "dnn-sim": cmd_dnn_sim,
             "power-est": cmd_power_est, "suite": cmd_suite}


def run(argv: list[str]) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "cwu-asm":
        return cmd_cwu_asm(args)
    return _HANDLERS[args.command](args, _settings(args))


def main(argv: list[str] | None = None) -> int:
    try:
        return run(list(sys.argv[1:] if argv is None else argv))
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except Exception as exc:  # noqa: BLE001 - every failure maps to a code
        code = _classify(exc)
        print(_error_json(code, exc), file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
