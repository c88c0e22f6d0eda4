"""Labelled synthetic indoor scenes for tests and demos."""

from __future__ import annotations

import numpy as np

from .cloud import PointCloud

WALL, FLOOR, CHAIR, TABLE = 1, 2, 5, 7


def _box_surface(rng, n, lo, hi):
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    size = hi - lo
    areas = np.array([size[1] * size[2], size[0] * size[2], size[0] * size[1]] * 2)
    face = rng.choice(6, size=n, p=areas / areas.sum())
    pts = lo + rng.random((n, 3)) * size
    axis = face % 3
    pinned = np.where(face < 3, lo[axis], hi[axis])
    pts[np.arange(n), axis] = pinned
    return pts


def room_scene(n: int = 5000, fg_fraction: float = 0.3, seed: int = 0,
               noise: float = 0.005) -> PointCloud:
    """A 4 x 4 x 2.5 room (floor + two walls) holding a table and a chair.

    ``fg_fraction`` of the points land on the two objects.
    """
    rng = np.random.default_rng(seed)
    n_fg = int(round(n * fg_fraction))
    n_table = n_fg // 2
    n_chair = n_fg - n_table
    n_bg = n - n_fg
    n_floor = n_bg // 2
    n_wall = n_bg - n_floor

    floor = np.c_[rng.random((n_floor, 2)) * 4.0, np.zeros(n_floor)]
    wall_x = rng.random(n_wall) < 0.5
    u, h = rng.random(n_wall) * 4.0, rng.random(n_wall) * 2.5
    walls = np.where(wall_x[:, None], np.c_[u, np.zeros(n_wall), h],
                     np.c_[np.zeros(n_wall), u, h])
    table = _box_surface(rng, n_table, (0.8, 1.0, 0.0), (2.0, 1.8, 0.75))
    chair = _box_surface(rng, n_chair, (2.5, 2.4, 0.0), (3.0, 2.9, 0.9))

    pts = np.vstack([floor, walls, table, chair])
    pts += rng.normal(scale=noise, size=pts.shape)
    labels = np.concatenate([
        np.full(n_floor, FLOOR), np.full(n_wall, WALL),
        np.full(n_table, TABLE), np.full(n_chair, CHAIR)])
    perm = rng.permutation(n)
    return PointCloud(pts[perm], labels[perm])
