"""Acceptance criteria 1-10; each test records a one-line verdict."""

import json
import time

import numpy as np

from vega_twin import cli, hwce
from vega_twin.cwu.demo import run_demo
from vega_twin.cwu.power import cwu_power, round_sig
from vega_twin.dnn import (
    all_hyperram,
    allocate_weights,
    check_solution,
    load_shipped,
    mram_up_to,
    schedule_network,
    tile_layer,
)
from vega_twin.hdc import (
    AssociativeMemory,
    HDVector,
    PermutationSet,
    am_lookup,
    am_write,
    bind,
    bundle,
    cim_encode,
    hamming,
    im_encode,
)
from vega_twin.memory import L1_BYTES
from vega_twin.power import PowerConfig, mode_power


def _dnn(capsys, *argv):
    code = cli.main(["dnn-sim", *argv])
    out, err = capsys.readouterr()
    assert code == 0, err
    return json.loads(out)


# 1 -------------------------------------------------------------------------


def test_c1_cwu_power_anchors(criterion):
    t0 = time.perf_counter()
    lo, hi = cwu_power(32e3), cwu_power(200e3)
    sleep = mode_power("cognitive_sleep")
    retained = mode_power("cognitive_sleep", PowerConfig(retained_kb=128))
    dt = time.perf_counter() - t0
    ok = (round_sig(lo.total_uw) == 2.97 and round_sig(hi.total_uw) == 14.9
          and sleep == 1.7e-6 and retained == 20.9e-6 and dt < 1.0)
    assert criterion(1, ok, f"CWU {round_sig(lo.total_uw)} / {round_sig(hi.total_uw)} uW, "
                            f"sleep {sleep * 1e6:g} / {retained * 1e6:g} uW, {dt:.3f} s")


# 2 -------------------------------------------------------------------------


def _hdc_suite() -> dict[str, bool]:
    dim = 512
    rng = np.random.default_rng(2024)
    pset = PermutationSet.generate(dim, 0)
    res = {}

    def rv():
        return HDVector.random(dim, rng)

    iso = True
    for _ in range(500):
        a, b, c = rv(), rv(), rv()
        iso &= hamming(bind(a, c), bind(b, c)) == hamming(a, b)
    res["xor isometry"] = iso

    maj = True
    for n in (1, 2, 5, 33, 200):
        v = rv()
        maj &= bundle([v] * n) == v
    for _ in range(100):
        vs = [rv() for _ in range(int(rng.integers(1, 8)) * 2 + 1)]
        votes = np.sum([v.bits for v in vs], axis=0)
        maj &= np.array_equal(bundle(vs).bits, (votes * 2 > len(vs)).astype(np.uint8))
    res["bundling idempotence/majority"] = maj

    pairs, dists = set(), []
    while len(dists) < 1000:
        a, b = (int(x) for x in rng.integers(0, 2 ** 16, size=2))
        if a != b and (a, b) not in pairs:
            pairs.add((a, b))
            dists.append(hamming(im_encode(a, 16, pset), im_encode(b, 16, pset)))
    res["IM quasi-orthogonality"] = abs(float(np.mean(dists)) - 256) <= 3

    mono = True
    base = rv()
    for m in range(1, 65):
        vecs = [cim_encode(i, m, base) for i in range(m + 1)]
        d = np.array([[hamming(x, y) for y in vecs] for x in vecs])
        gaps = np.abs(np.subtract.outer(np.arange(m + 1), np.arange(m + 1)))
        for g in range(m):
            mono &= d[gaps == g].max() <= d[gaps == g + 1].min()
    res["CIM monotonicity"] = bool(mono)

    am_ok = True
    for _ in range(10_000):
        n = int(rng.integers(1, 17))
        slots = rng.choice(16, size=n, replace=False)
        pattern = rng.integers(0, 2, size=(n + 1, 8))
        am, stored = AssociativeMemory.empty(dim), {}
        for s, bits in zip(slots, pattern[:-1]):
            v = HDVector(np.tile(bits, dim // 8).astype(np.uint8))
            am, stored[int(s)] = am_write(am, int(s), v), v
        q = np.tile(pattern[-1], dim // 8)
        d = {s: int(np.count_nonzero(v.bits != q)) for s, v in stored.items()}
        best = min(sorted(d), key=lambda s: d[s])
        am_ok &= am_lookup(am, HDVector(q.astype(np.uint8))) == (best, d[best])
    res["AM lookup vs brute force"] = am_ok
    return res


def test_c2_hdc_properties(criterion):
    t0 = time.perf_counter()
    res = _hdc_suite()
    dt = time.perf_counter() - t0
    failed = [k for k, v in res.items() if not v]
    assert criterion(2, not failed and dt < 30, f"{len(res) - len(failed)}/{len(res)} properties, {dt:.1f} s"
                     + (f", failed: {failed}" if failed else ""))


# 3 -------------------------------------------------------------------------


def test_c3_cwu_end_to_end(criterion):
    t0 = time.perf_counter()
    res = run_demo(n_segments=40, seed=7)
    dt = time.perf_counter() - t0
    ok = res.accuracy >= 0.9 and res.oracle_match and dt < 30
    assert criterion(3, ok, f"accuracy {res.accuracy:.3f}, oracle match {res.oracle_match}, {dt:.1f} s")


# 4 -------------------------------------------------------------------------


def _wrap(v):
    v &= 0xFFFFFFFF
    return v - (1 << 32) if v >= 1 << 31 else v


def _oracle_chain(steps):
    """Shift-and-add convolution in Python integers with an explicit FIFO model."""
    fifos = {0: [], 1: [], 2: []}
    out = None
    for s in steps:
        j = s.job
        k = j.filter_size
        oh, ow = j.height - k + 1, j.width - k + 1
        x = s.x.astype(object)
        acc = np.zeros((j.n_filters, oh, ow), dtype=object)
        for f in range(j.n_filters):
            for c in range(j.c_in):
                for dy in range(k):
                    for dx in range(k):
                        acc[f] += int(s.w[f, c, dy, dx]) * x[c, dy:dy + oh, dx:dx + ow]
        if j.accumulate_source == "l1":
            acc += s.partials.astype(object)
        elif isinstance(j.accumulate_source, int):
            for f in range(j.n_filters):
                acc[f] += fifos[j.accumulate_source + f].pop(0).astype(object)
        acc = np.vectorize(_wrap, otypes=[object])(acc) if acc.size else acc
        if j.output_sink == "l1":
            lo, hi = -(1 << (j.out_width - 1)), (1 << (j.out_width - 1)) - 1
            sat = np.vectorize(lambda v: max(lo, min(hi, v >> j.norm_shift)), otypes=[object])
            out = sat(acc) if acc.size else acc
        else:
            for f in range(j.n_filters):
                fifos[j.output_sink + f].append(acc[f])
    return out


def test_c4_hwce_bit_exact(criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    jobs = chained = mismatches = 0
    seen = set()
    while jobs < 1000:
        steps = hwce.random_chain(rng)
        got, _ = hwce.run_chain(steps)
        want = _oracle_chain(steps)
        mismatches += not (got.shape == want.shape and all(int(a) == int(b) for a, b in zip(got.ravel(), want.ravel())))
        jobs += len(steps)
        chained += len(steps) > 1
        for s in steps:
            seen.add((s.job.precision_in, s.job.filter_size))
            seen.add((s.job.precision_w, s.job.filter_size))
    dt = time.perf_counter() - t0
    coverage = seen >= {(p, k) for p in (4, 8, 16) for k in (3, 5)}
    ok = mismatches == 0 and coverage and chained > 100 and dt < 120
    assert criterion(4, ok, f"{jobs} jobs ({chained} FIFO chains), {mismatches} mismatches, {dt:.1f} s")


# 5 -------------------------------------------------------------------------


def test_c5_repvgg_latency_and_speedup(criterion, capsys):
    t0 = time.perf_counter()
    target = {"a0": 358, "a1": 610, "a2": 1320}
    parts, ok = [], True
    for v, ms in target.items():
        sw = _dnn(capsys, "--network", f"repvgg_{v}", "--engine", "sw", "--f-cl", "250e6")["totals"]["latency_s"]
        hw = _dnn(capsys, "--network", f"repvgg_{v}", "--engine", "hwce",
                  "--profile", "hwce-calibrated")["totals"]["latency_s"]
        err = sw * 1e3 / ms - 1
        speedup = sw / hw
        ok &= abs(err) <= 0.05 and 2.7 <= speedup <= 3.3
        parts.append(f"{v.upper()} {sw * 1e3:.0f} ms ({err:+.1%}) x{speedup:.2f}")
    dt = time.perf_counter() - t0
    ok &= dt < 10
    assert criterion(5, ok, ", ".join(parts) + f", {dt:.1f} s")


# 6, 7 ----------------------------------------------------------------------


def _mobilenet_pair(capsys):
    return (_dnn(capsys, "--network", "mobilenet_v2", "--weights", "mram"),
            _dnn(capsys, "--network", "mobilenet_v2", "--weights", "hyperram"))


def test_c6_mobilenet_energy(criterion, capsys):
    t0 = time.perf_counter()
    mram, hyper = _mobilenet_pair(capsys)
    e_m, e_h = mram["totals"]["energy_j"], hyper["totals"]["energy_j"]
    gap_ref = 3.4e6 * 880e-12
    dt = time.perf_counter() - t0
    ok = (abs(e_m / 1.19e-3 - 1) <= 0.15 and 3.0 <= e_h / e_m <= 4.0
          and abs((e_h - e_m) / gap_ref - 1) <= 0.15 and dt < 10)
    assert criterion(6, ok, f"MRAM {e_m * 1e3:.3f} mJ, ratio {e_h / e_m:.2f}, "
                            f"gap {(e_h - e_m) * 1e3:.2f} mJ vs {gap_ref * 1e3:.2f}, {dt:.1f} s")


def test_c7_compute_bound_and_time_gap(criterion, capsys):
    t0 = time.perf_counter()
    mram, hyper = _mobilenet_pair(capsys)
    ok = True
    for rep in (mram, hyper):
        layers = rep["layers"]
        ok &= all(l["bound"] == "compute" for l in layers[:-1]) and layers[-1]["bound"] != "compute"
        ok &= layers[-1]["kind"] in ("fc", "pw")
    diff = mram["totals"]["latency_s"] - hyper["totals"]["latency_s"]
    per_layer = [m["latency_s"] - h["latency_s"] for m, h in zip(mram["layers"], hyper["layers"])]
    spill = max(abs(d) for d in per_layer[:-1])
    ok &= abs(abs(diff) - 3e-3) <= 1e-3 and spill <= 0.01 * abs(diff)
    dt = time.perf_counter() - t0
    ok &= dt < 10
    assert criterion(7, ok, f"only the final layer bandwidth-bound, |dt| {abs(diff) * 1e3:.2f} ms, "
                            f"largest other-layer shift {spill * 1e6:.1f} us, {dt:.1f} s")


# 8 -------------------------------------------------------------------------


def _brute_optimum(layer, budget=L1_BYTES):
    best = None
    depthwise = layer.kind in ("dw", "add")
    per_cout = layer.k * layer.k * (1 if depthwise else layer.c_in) + 1 if layer.kind != "add" else 0
    for c in (d for d in range(1, layer.c_out + 1) if layer.c_out % d == 0):
        for h in (d for d in range(1, layer.h_out + 1) if layer.h_out % d == 0):
            for w in (d for d in range(1, layer.w_out + 1) if layer.w_out % d == 0):
                hin = min((h - 1) * layer.stride + layer.k, layer.h + 2 * layer.pad)
                win = min((w - 1) * layer.stride + layer.k, layer.w + 2 * layer.pad)
                inp = (c if depthwise else layer.c_in) * hin * win
                skip = c * h * w if (layer.residual or layer.kind == "add") else 0
                if 2 * (c * per_cout + inp + skip + c * h * w) > budget:
                    continue
                tiles = (layer.c_out // c) * (layer.h_out // h) * (layer.w_out // w)
                key = (c * h * w * layer.macs_per_output, -tiles, c, w, h)
                best = key if best is None or key > best else best
    return best


def test_c8_tiler(criterion):
    t0 = time.perf_counter()
    net = load_shipped("mobilenet_v2")
    bad = []
    for layer in net.layers:
        sol = tile_layer(layer)
        try:
            check_solution(layer, sol)
        except ValueError:
            bad.append(layer.name)
            continue
        if (sol.tile_macs, -sol.n_tiles, sol.c_out_t, sol.w_t, sol.h_t) != _brute_optimum(layer):
            bad.append(layer.name)
    dt = time.perf_counter() - t0
    assert criterion(8, not bad and dt < 60, f"{len(net.layers) - len(bad)}/{len(net.layers)} layers "
                                             f"feasible and optimal, {dt:.1f} s")


# 9 -------------------------------------------------------------------------


def test_c9_greedy_placement(criterion):
    t0 = time.perf_counter()
    expected = {"repvgg_a0": "stage 4, layer 12", "repvgg_a1": "stage 4, layer 6", "repvgg_a2": "stage 4, layer 3"}
    got = {}
    for name in expected:
        net = load_shipped(name)
        got[name] = mram_up_to(net, allocate_weights(net))
    dt = time.perf_counter() - t0
    ok = got == expected and dt < 1
    detail = ", ".join(f"{n[-2:].upper()} {got[n]}" + ("" if got[n] == expected[n] else f" (table: {expected[n]})")
                       for n in expected)
    assert criterion(9, ok, f"{detail}, {dt:.2f} s")


# 10 ------------------------------------------------------------------------


def test_c10_determinism(criterion, tmp_path, capsys):
    runs = []
    for i, jobs in enumerate(("1", "3")):
        out = tmp_path / f"run{i}"
        assert cli.main(["suite", "--out", str(out), "--seed", "11", "--jobs", jobs]) == 0
        runs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
    capsys.readouterr()
    same = runs[0] == runs[1]
    assert criterion(10, same and len(runs[0]) > 10,
                     f"{len(runs[0])} files byte-identical across sequential and parallel runs: {same}")
