"""Acceptance criteria 1-10; the terminal summary prints one PASS/FAIL line each."""

import math
import os
import subprocess
import sys
import time

import numpy as np
import pytest

from oracles import brute_rw_chamfer, trapezoid_bd
from roipcc.cloud import PointCloud, VoxelGrid
from roipcc.codec import decode_layers, encode_cloud
from roipcc.entropy import ac_decode, ac_encode
from roipcc.metrics import (RDCurve, bd_psnr, chamfer, d1_psnr, d2_psnr, rw_chamfer)
from roipcc.octree import decode_base, encode_base
from roipcc.rd import (DEFAULT_STEPS, Scene, default_grid, machine_proxy, pareto_front, sweep,
                       sweep_csv, sweep_curves_json)
from roipcc.roi import LabelConfig, MaskMap, build_mask, select_regions
from roipcc.synthetic import room_scene

BACKGROUND = LabelConfig.default().background_labels


def criterion(n, title):
    return pytest.mark.criterion(n, title)


@criterion(1, "base layer lossless on 1000 random grids, < 60 s")
def test_c1_base_layer_lossless():
    rng = np.random.default_rng(1)
    start = time.perf_counter()
    for _ in range(1000):
        depth = int(rng.integers(1, 13))
        want = int(rng.integers(1, 5001))
        vox = np.unique(rng.integers(0, 1 << depth, size=(want, 3)), axis=0)
        counts = rng.integers(1, 20, len(vox))
        origin = rng.normal(size=3) * 100
        g = VoxelGrid(vox, counts, float(rng.uniform(0.001, 2.0)), origin)
        out = decode_base(encode_base(g))
        assert np.array_equal(out.voxels, g.voxels)
        assert np.array_equal(out.counts, g.counts)
        assert out.step == g.step and np.array_equal(out.origin, g.origin)
    elapsed = time.perf_counter() - start
    print(f"criterion 1: 1000 grids in {elapsed:.1f} s")
    assert elapsed < 60


@criterion(2, "end-to-end L-inf bound delta/(2(1+m)), zero violations")
def test_c2_error_bound():
    rng = np.random.default_rng(2)
    violations = checked = 0
    for _ in range(50):
        n = int(rng.integers(1, 20_001))
        pts = rng.normal(size=(n, 3)) * rng.uniform(0.1, 5.0)
        labels = rng.integers(0, 41, n)
        cloud = PointCloud(pts, labels)
        part = select_regions(labels, BACKGROUND)
        mask = build_mask(part, n, float(rng.choice([1.0, 0.5, 3.0])))
        for _ in range(3):
            step = float(rng.choice(DEFAULT_STEPS))
            delta = step / float(rng.choice([1, 2, 4, 8, 16]))
            enc = encode_cloud(cloud, step, delta, mask)
            _, _, rec = decode_layers(enc.base, enc.enhancement)
            src = enc.source_index
            err = np.abs(rec.positions - pts[src]).max(axis=1)
            bound = delta / (2 * mask.weights[src])
            violations += int((err > bound).sum())
            checked += n
    print(f"criterion 2: {checked} points checked, {violations} violations")
    assert violations == 0


@criterion(3, "ROI: fg D1 MSE >= 1.5x lower and total bpp higher, 5 seeds")
def test_c3_roi_effect():
    for seed in range(5):
        cloud = room_scene(5000, fg_fraction=0.3, seed=seed)
        part = select_regions(cloud.labels, BACKGROUND)
        assert len(part.fg_indices) == 1500
        step, delta = 0.3, 0.15
        results = {}
        for name, mask in (("roi", build_mask(part, cloud.count, 1.0)),
                           ("flat", MaskMap(np.zeros(cloud.count)))):
            enc = encode_cloud(cloud, step, delta, mask)
            _, _, rec = decode_layers(enc.base, enc.enhancement)
            results[name] = (machine_proxy(cloud, rec, part),
                             8 * (len(enc.base) + len(enc.enhancement)) / cloud.count)
        ratio = results["flat"][0] / results["roi"][0]
        print(f"criterion 3 seed {seed}: fg MSE ratio {ratio:.2f}, "
              f"bpp {results['roi'][1]:.3f} vs {results['flat'][1]:.3f}")
        assert ratio >= 1.5
        assert results["roi"][1] > results["flat"][1]


@criterion(4, "RW-CD equals CD for constant masks, rel <= 1e-12")
def test_c4_rwcd_degeneracy():
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(100):
        a = rng.normal(size=(int(rng.integers(1, 400)), 3))
        b = rng.normal(size=(int(rng.integers(1, 400)), 3))
        c = float(rng.choice([0.0, 1.0, rng.uniform(0, 10)]))
        cd = chamfer(a, b)
        rel = abs(rw_chamfer(a, b, MaskMap(np.full(len(a), c))) - cd) / cd
        worst = max(worst, rel)
    print(f"criterion 4: worst relative gap {worst:.2e}")
    assert worst <= 1e-12


@criterion(5, "RW-CD equals brute-force oracle, rel <= 1e-10")
def test_c5_rwcd_oracle():
    rng = np.random.default_rng(5)
    worst = 0.0
    for i in range(50):
        n1, n2 = int(rng.integers(1, 301)), int(rng.integers(1, 301))
        if i % 5 == 0:  # lattice points force nearest-neighbour ties
            a = rng.integers(0, 4, size=(n1, 3)).astype(float)
            b = rng.integers(0, 4, size=(n2, 3)) + 0.5
        else:
            a, b = rng.random((n1, 3)), rng.random((n2, 3))
        m = rng.integers(0, 2, n1) * rng.choice([1.0, 2.5])
        got = rw_chamfer(a, b, MaskMap(m))
        want = brute_rw_chamfer(a, b, m)
        worst = max(worst, abs(got - want) / want)
    print(f"criterion 5: worst relative gap {worst:.2e}")
    assert worst <= 1e-10


@criterion(6, "metric spot values (singleton D1, tangential D2 >= D1)")
def test_c6_metric_spot_values():
    for peak in (1.0, 1023.0):
        got = d1_psnr([[0, 0, 0]], [[1, 0, 0]], peak=peak)
        assert abs(got - 10 * math.log10(3 * peak**2)) <= 1e-9
    rng = np.random.default_rng(6)
    ref = np.c_[rng.random((500, 2)) * 2, np.zeros(500)]
    rec = ref + [0.02, -0.01, 0.0]
    d1, d2 = d1_psnr(ref, rec, peak=2.0), d2_psnr(ref, rec, peak=2.0)
    print(f"criterion 6: tangential shift D1 {d1:.2f} dB, D2 {d2:.2f} dB")
    assert d2 >= d1


@criterion(7, "BD-PSNR: offset exact to 1e-9, hand curves vs oracle to 1e-6")
def test_c7_bd_correctness():
    a = RDCurve((0.25, 0.5, 1.0, 2.0), (28.0, 32.5, 36.1, 38.9))
    for offset in (2.0, -1.25, 0.3):
        b = RDCurve(a.rates, tuple(q + offset for q in a.qualities))
        assert abs(bd_psnr(a, b) - offset) <= 1e-9
    hand = [
        (RDCurve((0.3, 0.8, 1.7, 3.1), (31.2, 35.0, 38.1, 40.2)),
         RDCurve((0.25, 0.7, 1.9, 3.5), (32.0, 35.9, 39.4, 41.0))),
        (RDCurve((0.1, 0.2, 0.4, 0.8), (25.0, 29.0, 32.0, 34.0)),
         RDCurve((0.15, 0.3, 0.6, 1.2), (27.5, 30.0, 33.8, 35.1))),
    ]
    for ca, cb in hand:
        want = trapezoid_bd(np.log10(ca.rates), ca.qualities, np.log10(cb.rates), cb.qualities)
        assert abs(bd_psnr(ca, cb) - want) <= 1e-6


@criterion(8, "entropy coder: 1e6-symbol round trip, skewed source < 0.2 bit/symbol")
def test_c8_entropy_coder():
    rng = np.random.default_rng(8)
    s = rng.integers(0, 256, 1_000_000)
    assert np.array_equal(ac_decode(ac_encode(s), len(s)), s)
    skew = np.where(rng.random(100_000) < 0.99, 17, rng.integers(0, 256, 100_000))
    bits = 8 * len(ac_encode(skew)) / len(skew)
    print(f"criterion 8: skewed source at {bits:.3f} bit/symbol")
    assert bits < 0.2


@criterion(9, "default grid matches protocol; 75-point sweep < 120 s; front >= 3 points")
def test_c9_sweep_protocol():
    grid = default_grid()
    assert len(grid) == 75
    assert sorted({c.step for c in grid}) == [0.15, 0.225, 0.3, 0.375, 0.45]
    assert sorted({c.alpha for c in grid}) == [1.0, 2.0, 3.0, 4.0, 5.0]
    assert {c.beta for c in grid} == {1.0} and {c.gamma for c in grid} == {0.01}
    assert {round(c.step / c.res_step, 9) for c in grid} == {2.0, 4.0, 8.0}
    cloud = room_scene(5000, seed=9)
    start = time.perf_counter()
    points = sweep(cloud, BACKGROUND, grid, threads=1)
    elapsed = time.perf_counter() - start
    front = pareto_front(points)
    distinct = {(p.bpp_total, p.d1_db) for p in front}
    print(f"criterion 9: sweep {elapsed:.1f} s, front {len(front)} points "
          f"({len(distinct)} distinct)")
    assert len(points) == 75 and elapsed < 120
    assert all(np.isfinite([p.bpp_base, p.bpp_enh, p.cd, p.rw_cd, p.d1_db, p.d2_db,
                            p.machine_proxy, p.cost]).all() for p in points)
    assert len(distinct) >= 3


def _cli(tmp, *argv, env=None):
    run_env = dict(os.environ, **(env or {}))
    proc = subprocess.run([sys.executable, "-m", "roipcc.cli", *map(str, argv)],
                          cwd=tmp, env=run_env, capture_output=True)
    assert proc.returncode == 0, proc.stderr.decode()
    return proc.stdout


@criterion(10, "encode/decode/eval/sweep byte-identical across runs and thread counts")
def test_c10_determinism(tmp_path):
    _cli(tmp_path, "synth", "in.ply", "--points", "3000", "--seed", "10")
    outputs = []
    for run in range(2):
        d = tmp_path / f"run{run}"
        d.mkdir()
        threads = "1" if run == 0 else str(max(2, os.cpu_count() or 2))
        _cli(d, "encode", "../in.ply", "-o", "x.rpcg")
        _cli(d, "decode", "x.rpcg", "-o", "x.ply")
        ev = _cli(d, "eval", "../in.ply", "x.ply", "--container", "x.rpcg")
        _cli(d, "sweep", "../in.ply", "--csv", "s.csv", "--curves", "c.json",
             env={"RPCGC_THREADS": threads})
        outputs.append({name: (d / name).read_bytes()
                        for name in ("x.rpcg", "x.ply", "s.csv", "c.json")} | {"eval": ev})
    assert outputs[0] == outputs[1]
    # in-process: thread pool vs serial
    cloud = room_scene(2000, seed=10)
    scene = Scene(cloud, BACKGROUND)
    grid = default_grid()[:30]
    serial, pooled = sweep(scene, None, grid, threads=1), sweep(scene, None, grid, threads=8)
    assert sweep_csv(serial) == sweep_csv(pooled)
    assert sweep_curves_json(serial) == sweep_curves_json(pooled)
