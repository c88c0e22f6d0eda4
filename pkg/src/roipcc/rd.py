"""Rate-distortion sweeps over codec configurations.

The cost of a configuration is::

    delta_base * bpp_base + beta * bpp_enh + alpha * rw_cd + gamma * machine_proxy

where ``machine_proxy`` (the mean squared nearest-neighbour error of the
foreground points) stands in for a downstream detector's loss.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields

import numpy as np

from .cloud import PointCloud
from .codec import decode_layers, encode_cloud
from .metrics import Reference, chamfer, d1_mse, d2_mse, psnr_from_mse, rw_chamfer
from .roi import MaskMap, RegionPartition, build_mask, select_regions
from .spatial import SpatialIndex

DEFAULT_STEPS = (0.15, 0.225, 0.3, 0.375, 0.45)
DEFAULT_RES_DIVISORS = (2, 4, 8)
DEFAULT_ALPHAS = (1.0, 2.0, 3.0, 4.0, 5.0)
DEFAULT_BETA = 1.0
DEFAULT_GAMMA = 0.01
DEFAULT_DELTA_BASE = 1.0
THREADS_ENV = "RPCGC_THREADS"


@dataclass(frozen=True)
class RDConfig:
    step: float
    res_step: float
    alpha: float = 1.0
    beta: float = DEFAULT_BETA
    delta_base: float = DEFAULT_DELTA_BASE
    gamma: float = DEFAULT_GAMMA
    fg_weight: float = 1.0

    def __post_init__(self):
        for name in ("step", "res_step"):
            v = getattr(self, name)
            if not (v > 0 and np.isfinite(v)):
                raise ValueError(f"{name} must be positive, got {v}")
        for name in ("alpha", "beta", "delta_base", "gamma", "fg_weight"):
            v = getattr(self, name)
            if not (v >= 0 and np.isfinite(v)):
                raise ValueError(f"{name} must be non-negative, got {v}")

    @classmethod
    def from_dict(cls, obj: dict) -> "RDConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in obj.items()})

    def codec_key(self) -> tuple[float, float, float]:
        """The knobs that change the bitstream (the weights only change cost)."""
        return (self.step, self.res_step, self.fg_weight)


@dataclass(frozen=True)
class RDPoint:
    bpp_base: float
    bpp_enh: float
    cd: float
    rw_cd: float
    d1_db: float
    d2_db: float
    machine_proxy: float
    cost: float
    config: RDConfig

    @property
    def bpp_total(self) -> float:
        return self.bpp_base + self.bpp_enh

    def row(self) -> dict:
        out = asdict(self.config)
        out.update({k: getattr(self, k) for k in
                    ("bpp_base", "bpp_enh", "bpp_total", "cd", "rw_cd", "d1_db",
                     "d2_db", "machine_proxy", "cost")})
        return out


def total_cost(point: RDPoint, config: RDConfig) -> float:
    return (config.delta_base * point.bpp_base + config.beta * point.bpp_enh
            + config.alpha * point.rw_cd + config.gamma * point.machine_proxy)


def machine_proxy(original: PointCloud, reconstructed: PointCloud,
                  partition: RegionPartition, index: SpatialIndex | None = None) -> float:
    fg = np.asarray(partition.fg_indices)
    if fg.size == 0:
        warnings.warn("no foreground points; machine proxy is 0", RuntimeWarning,
                      stacklevel=2)
        return 0.0
    index = index or SpatialIndex(reconstructed.positions)
    _, d2 = index.nearest_many(original.positions[fg])
    return float(d2.mean())


class Scene:
    """A labelled cloud plus everything reusable across configurations."""

    def __init__(self, cloud: PointCloud, background, peak: float | None = None,
                 knn: int = 12):
        if cloud.labels is None:
            raise ValueError("RD evaluation needs a labelled cloud")
        self.cloud = cloud
        self.partition = select_regions(cloud.labels, background)
        self.reference = Reference(cloud, peak=peak, knn=knn)

    def mask(self, fg_weight: float) -> MaskMap:
        return build_mask(self.partition, self.cloud.count, fg_weight)


def _measure(scene: Scene, key) -> dict:
    step, res_step, fg_weight = key
    cloud = scene.cloud
    mask = scene.mask(fg_weight)
    enc = encode_cloud(cloud, step, res_step, mask)
    _, _, rec = decode_layers(enc.base, enc.enhancement)
    rec_index = SpatialIndex(rec.positions)
    ref = scene.reference
    n = cloud.count
    return {
        "bpp_base": 8 * len(enc.base) / n,
        "bpp_enh": 8 * len(enc.enhancement) / n,
        "cd": chamfer(cloud, rec),
        "rw_cd": rw_chamfer(cloud, rec, mask),
        "d1_db": psnr_from_mse(d1_mse(ref, rec.positions), ref.peak),
        "d2_db": psnr_from_mse(d2_mse(ref, rec.positions), ref.peak),
        "machine_proxy": machine_proxy(cloud, rec, scene.partition, rec_index),
    }


def _point(measured: dict, config: RDConfig) -> RDPoint:
    provisional = RDPoint(cost=0.0, config=config, **measured)
    return RDPoint(cost=total_cost(provisional, config), config=config, **measured)


def evaluate_config(cloud: PointCloud | Scene, background, config: RDConfig) -> RDPoint:
    """Encode, decode and measure one configuration."""
    scene = cloud if isinstance(cloud, Scene) else Scene(cloud, background)
    return _point(_measure(scene, config.codec_key()), config)


def default_grid() -> list[RDConfig]:
    return [
        RDConfig(step=s, res_step=s / d, alpha=a, beta=DEFAULT_BETA,
                 delta_base=DEFAULT_DELTA_BASE, gamma=DEFAULT_GAMMA)
        for s, d, a in itertools.product(DEFAULT_STEPS, DEFAULT_RES_DIVISORS, DEFAULT_ALPHAS)
    ]


def threads_from_env(default: int = 1) -> int:
    raw = os.environ.get(THREADS_ENV)
    if not raw:
        return default
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    return max(1, n)


def sweep(cloud: PointCloud | Scene, background, grid: list[RDConfig] | None = None,
          threads: int | None = None) -> list[RDPoint]:
    """Evaluate every configuration; results follow the order of ``grid``.

    Configurations that differ only in their cost weights share one encoding.
    """
    grid = default_grid() if grid is None else list(grid)
    if not grid:
        raise ValueError("empty configuration grid")
    scene = cloud if isinstance(cloud, Scene) else Scene(cloud, background)
    threads = threads_from_env() if threads is None else max(1, threads)
    keys = list(dict.fromkeys(c.codec_key() for c in grid))
    if threads == 1:
        measured = [_measure(scene, k) for k in keys]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            measured = list(pool.map(lambda k: _measure(scene, k), keys))
    by_key = dict(zip(keys, measured))
    return [_point(by_key[c.codec_key()], c) for c in grid]


def _value(p: RDPoint, key: str) -> float:
    return p.bpp_total if key == "bpp_total" else getattr(p, key)


def pareto_front(points, rate_key: str = "bpp_total", quality_key: str = "d1_db"):
    """Points not dominated in (lower rate, higher quality), sorted by rate.

    Exact duplicates do not dominate each other, so all copies survive.
    """
    pts = list(points)
    if not pts:
        raise ValueError("pareto_front needs at least one point")
    order = sorted(range(len(pts)), key=lambda i: (_value(pts[i], rate_key),
                                                   -_value(pts[i], quality_key), i))
    front = []
    best_before = -np.inf
    for _, group in itertools.groupby(order, key=lambda i: _value(pts[i], rate_key)):
        group = list(group)
        top = _value(pts[group[0]], quality_key)
        if top > best_before:
            front.extend(pts[i] for i in group if _value(pts[i], quality_key) == top)
        best_before = max(best_before, top)
    return front


CSV_FIELDS = ("step", "res_step", "alpha", "beta", "delta_base", "gamma", "fg_weight",
              "bpp_base", "bpp_enh", "bpp_total", "cd", "rw_cd", "d1_db", "d2_db",
              "machine_proxy", "cost", "pareto")


def sweep_csv(points: list[RDPoint]) -> str:
    front = {id(p) for p in pareto_front(points)}
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    w.writeheader()
    for p in points:
        row = {k: repr(float(v)) for k, v in p.row().items()}
        row["pareto"] = int(id(p) in front)
        w.writerow(row)
    return buf.getvalue()


def _curve_points(points):
    best = {}
    for p in points:
        r = p.bpp_total
        if r not in best or p.d1_db > best[r]:
            best[r] = p.d1_db
    return [[r, best[r]] for r in sorted(best)]


def sweep_curves(points: list[RDPoint]) -> dict:
    """Plot-ready curves: the Pareto front plus one curve per res_step/step ratio."""
    curves = [{"name": "pareto", "points": _curve_points(pareto_front(points))}]
    groups: dict[float, list[RDPoint]] = {}
    for p in points:
        ratio = round(p.config.step / p.config.res_step, 6)
        groups.setdefault(ratio, []).append(p)
    for ratio in sorted(groups):
        curves.append({"name": f"res_step=step/{ratio:g}",
                       "points": _curve_points(groups[ratio])})
    return {"curves": curves}


def sweep_curves_json(points: list[RDPoint]) -> str:
    return json.dumps(sweep_curves(points), indent=2)
