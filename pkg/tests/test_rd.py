import warnings

import numpy as np
import pytest

from oracles import brute_nearest
from roipcc.cloud import PointCloud
from roipcc.codec import decode_layers, encode_cloud
from roipcc.metrics import d1_mse, d1_psnr
from roipcc.rd import (RDConfig, RDPoint, Scene, default_grid, evaluate_config, machine_proxy,
                       pareto_front, sweep, sweep_csv, sweep_curves, total_cost)
from roipcc.roi import RegionPartition, select_regions
from roipcc.synthetic import room_scene

BG = {1, 2}


def pt(rate, quality, **kw):
    vals = dict(bpp_base=rate, bpp_enh=0.0, cd=0.0, rw_cd=0.0, d1_db=quality, d2_db=quality,
                machine_proxy=0.0, cost=0.0, config=RDConfig(0.3, 0.1))
    vals.update(kw)
    return RDPoint(**vals)


def test_total_cost_example():
    p = pt(1.5, 0, bpp_enh=0.5, rw_cd=0.5, machine_proxy=10)
    assert total_cost(p, RDConfig(0.3, 0.1, alpha=1, beta=1, delta_base=1, gamma=0.01)) == \
        pytest.approx(2.6, abs=1e-15)
    assert total_cost(p, RDConfig(0.3, 0.1, gamma=0)) == pytest.approx(2.5)
    c1, c2 = RDConfig(0.3, 0.1, alpha=1), RDConfig(0.3, 0.1, alpha=2)
    assert total_cost(p, c2) - total_cost(p, c1) == pytest.approx(0.5)


def test_config_validation():
    with pytest.raises(ValueError):
        RDConfig(0, 0.1)
    with pytest.raises(ValueError):
        RDConfig(0.3, 0.1, alpha=-1)
    with pytest.raises(ValueError):
        RDConfig.from_dict({"step": 0.3, "res_step": 0.1, "bogus": 1})


def test_machine_proxy(rng):
    orig = rng.random((200, 3))
    part = RegionPartition(np.arange(100), np.arange(100, 200))
    c = PointCloud(orig)
    assert machine_proxy(c, c, part) == 0.0
    rec = orig.copy()
    rec[100:] += 0.3
    assert machine_proxy(c, PointCloud(rec), part) == machine_proxy(c, PointCloud(orig[:100]), part)
    rec2 = orig + rng.normal(scale=0.05, size=orig.shape)
    expected = np.mean([brute_nearest(rec2, orig[i])[1] for i in range(100)])
    assert machine_proxy(c, PointCloud(rec2), part) == pytest.approx(expected, rel=1e-12)
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        assert machine_proxy(c, c, RegionPartition([], np.arange(200))) == 0.0
    assert w and issubclass(w[0].category, RuntimeWarning)


def test_pareto_examples(rng):
    a, b = pt(1, 60), pt(2, 58)
    assert pareto_front([a, b]) == [a]
    chain = [pt(r, 30 + r) for r in (1, 2, 3)]
    assert pareto_front(chain[::-1]) == chain
    d1, d2 = pt(1, 60), pt(1, 60)
    assert pareto_front([d1, d2]) == [d1, d2]


@pytest.mark.parametrize("seed", range(5))
def test_pareto_matches_quadratic_check(seed):
    rng = np.random.default_rng(seed)
    pts = [pt(float(r), float(q)) for r, q in
           zip(rng.integers(1, 10, 60), rng.integers(20, 40, 60))]

    def dominated(p):
        return any(o.bpp_total <= p.bpp_total and o.d1_db >= p.d1_db
                   and (o.bpp_total < p.bpp_total or o.d1_db > p.d1_db) for o in pts)

    expected = {id(p) for p in pts if not dominated(p)}
    front = pareto_front(pts)
    assert {id(p) for p in front} == expected
    assert [p.bpp_total for p in front] == sorted(p.bpp_total for p in front)


@pytest.fixture(scope="module")
def scene():
    return Scene(room_scene(3000, seed=11), BG)


def test_evaluate_config_properties(scene):
    cfg = RDConfig(0.3, 0.075)
    p = evaluate_config(scene, None, cfg)
    assert p == evaluate_config(scene, None, cfg)
    assert p.cost == total_cost(p, cfg)
    big = evaluate_config(scene, None, RDConfig(0.3, 10.0))
    f = len(scene.partition.fg_indices) / scene.cloud.count
    flag_bits = -(f * np.log2(f) + (1 - f) * np.log2(1 - f))
    assert big.bpp_base == p.bpp_base
    assert big.bpp_enh < flag_bits + 0.25
    _, _, base_rec = decode_layers(encode_cloud(scene.cloud, 0.3, 10.0).base)
    assert big.d1_db == d1_psnr(scene.reference, base_rec)
    rates = [evaluate_config(scene, None, RDConfig(s, 0.05)).bpp_base for s in (0.45, 0.3, 0.15)]
    assert rates[0] <= rates[1] <= rates[2]


def test_machine_proxy_below_d1_mse(scene):
    enc = encode_cloud(scene.cloud, 0.3, 0.1, scene.mask(1.0))
    _, _, rec = decode_layers(enc.base, enc.enhancement)
    assert machine_proxy(scene.cloud, rec, scene.partition) <= d1_mse(scene.cloud, rec)


def test_sweep_small_grid(scene):
    grid = [RDConfig(0.3, 0.3 / d, alpha=a) for d in (2, 4, 8) for a in (1, 3)]
    out = sweep(scene, None, grid)
    assert [p.config for p in out] == grid
    assert out == sweep(scene, None, grid[::-1])[::-1]
    assert sweep(scene, None, grid[:1]) == out[:1]
    same_step = pareto_front(out)
    assert len({p.bpp_total for p in same_step}) >= 2


def test_argmin_invariant_to_weight_scaling(scene):
    grid = [RDConfig(s, s / 4, alpha=a, gamma=0.01) for s in (0.15, 0.3, 0.45) for a in (1, 5)]
    scaled = [RDConfig(c.step, c.res_step, alpha=3 * c.alpha, beta=3 * c.beta,
                       delta_base=3 * c.delta_base, gamma=3 * c.gamma) for c in grid]
    a = sweep(scene, None, grid)
    b = sweep(scene, None, scaled)
    assert np.argmin([p.cost for p in a]) == np.argmin([p.cost for p in b])


def test_outputs(scene):
    out = sweep(scene, None, [RDConfig(0.3, 0.15), RDConfig(0.3, 0.075)])
    csv = sweep_csv(out).splitlines()
    assert len(csv) == 3 and csv[0].endswith(",pareto")
    curves = sweep_curves(out)["curves"]
    assert curves[0]["name"] == "pareto"
    assert all(len(c["points"][0]) == 2 for c in curves)


def test_default_grid_shape():
    g = default_grid()
    assert len(g) == 75 and len(set(g)) == 75
