"""Point cloud containers and the quantize / dequantize pair of the base layer."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Voxel indices are confined to [-2**20, 2**20) per axis so a biased 21-bit
# Morton key fits in 63 bits.
INDEX_BITS = 21
INDEX_BIAS = 1 << (INDEX_BITS - 1)
MAX_DEPTH = INDEX_BITS - 1


@dataclass(frozen=True, eq=False)
class PointCloud:
    positions: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        if not np.isfinite(pos).all():
            raise ValueError("point coordinates must be finite")
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        if self.labels is not None:
            lab = np.asarray(self.labels).reshape(-1)
            if lab.size and not np.issubdtype(lab.dtype, np.integer):
                if not np.array_equal(lab, np.round(lab)):
                    raise ValueError("labels must be integers")
            lab = lab.astype(np.int64)
            if lab.shape[0] != pos.shape[0]:
                raise ValueError(
                    f"{lab.shape[0]} labels for {pos.shape[0]} points")
            if lab.size and lab.min() < 0:
                raise ValueError("labels must be non-negative")
            lab.setflags(write=False)
            object.__setattr__(self, "labels", lab)

    @property
    def count(self) -> int:
        return self.positions.shape[0]

    def __len__(self):
        return self.count

    def __eq__(self, other):
        if not isinstance(other, PointCloud):
            return NotImplemented
        if (self.labels is None) != (other.labels is None):
            return False
        return (np.array_equal(self.positions, other.positions)
                and (self.labels is None or np.array_equal(self.labels, other.labels)))

    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        if self.count == 0:
            raise ValueError("empty cloud has no bounding box")
        return self.positions.min(axis=0), self.positions.max(axis=0)


@dataclass(frozen=True, eq=False)
class VoxelGrid:
    """Deduplicated integer voxels, stored in Morton order, with multiplicities."""

    voxels: np.ndarray
    counts: np.ndarray
    step: float
    origin: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        vox = np.asarray(self.voxels, dtype=np.int64).reshape(-1, 3)
        cnt = np.asarray(self.counts, dtype=np.int64).reshape(-1)
        origin = np.asarray(self.origin, dtype=np.float64).reshape(3)
        step = float(self.step)
        if not (step > 0 and np.isfinite(step)):
            raise ValueError(f"step must be positive, got {self.step}")
        if not np.isfinite(origin).all():
            raise ValueError("origin must be finite")
        if cnt.shape[0] != vox.shape[0]:
            raise ValueError("one count per voxel required")
        if cnt.size and cnt.min() < 1:
            raise ValueError("voxel counts must be positive")
        if vox.size and (vox.min() < -INDEX_BIAS or vox.max() >= INDEX_BIAS):
            raise ValueError(f"voxel index outside [-2**{INDEX_BITS - 1}, 2**{INDEX_BITS - 1})")
        keys = morton_keys(vox)
        order = np.argsort(keys, kind="stable")
        keys = keys[order]
        if keys.size > 1 and (np.diff(keys) == 0).any():
            raise ValueError("voxel indices must be unique")
        vox, cnt = vox[order], cnt[order]
        for a in (vox, cnt, origin):
            a.setflags(write=False)
        object.__setattr__(self, "voxels", vox)
        object.__setattr__(self, "counts", cnt)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "step", step)

    @property
    def size(self) -> int:
        return self.voxels.shape[0]

    @property
    def point_count(self) -> int:
        return int(self.counts.sum())

    def centers(self) -> np.ndarray:
        return self.origin + self.voxels * self.step

    def __eq__(self, other):
        if not isinstance(other, VoxelGrid):
            return NotImplemented
        return (self.step == other.step
                and np.array_equal(self.origin, other.origin)
                and np.array_equal(self.voxels, other.voxels)
                and np.array_equal(self.counts, other.counts))


def interleave(v: np.ndarray, nbits: int) -> np.ndarray:
    """Bit-interleave non-negative (N, 3) integers, x taking the high bit."""
    v = np.asarray(v).reshape(-1, 3).astype(np.uint64)
    keys = np.zeros(v.shape[0], dtype=np.uint64)
    for b in range(nbits):
        shift = np.uint64(b)
        for axis, pos in ((0, 2), (1, 1), (2, 0)):
            bit = (v[:, axis] >> shift) & np.uint64(1)
            keys |= bit << np.uint64(3 * b + pos)
    return keys


def deinterleave(keys: np.ndarray, nbits: int) -> np.ndarray:
    keys = np.asarray(keys, dtype=np.uint64).reshape(-1)
    v = np.zeros((keys.shape[0], 3), dtype=np.uint64)
    for b in range(nbits):
        for axis, pos in ((0, 2), (1, 1), (2, 0)):
            bit = (keys >> np.uint64(3 * b + pos)) & np.uint64(1)
            v[:, axis] |= bit << np.uint64(b)
    return v.astype(np.int64)


def morton_keys(voxels: np.ndarray) -> np.ndarray:
    """Interleaved (x high, y, z low) bit keys of biased voxel indices.

    For indices in [0, 2**20) the ordering equals plain Morton order, i.e.
    the order in which a breadth-first octree emits its leaves.
    """
    v = np.asarray(voxels, dtype=np.int64).reshape(-1, 3) + INDEX_BIAS
    return interleave(v, INDEX_BITS)


def round_half_away(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    a = np.abs(x)
    whole = np.floor(a)
    # a - floor(a) is exact, so the half-way comparison is too
    return np.copysign(whole + (a - whole >= 0.5), x)


def quantize(cloud: PointCloud, step: float, origin=None) -> tuple[VoxelGrid, np.ndarray]:
    """Snap points to a voxel lattice.

    Returns the grid and, for every input point, the row of its voxel in
    ``grid.voxels``.  ``origin`` defaults to zero; pass ``"min"`` to anchor
    the lattice at the cloud's bounding-box minimum (non-negative indices).
    """
    step = float(step)
    if not step > 0:
        raise ValueError(f"step must be positive, got {step}")
    if origin is None:
        origin = np.zeros(3)
    elif isinstance(origin, str):
        if origin != "min":
            raise ValueError(f"unknown origin mode {origin!r}")
        origin = cloud.bbox()[0] if cloud.count else np.zeros(3)
    origin = np.asarray(origin, dtype=np.float64).reshape(3)
    if cloud.count == 0:
        return VoxelGrid(np.zeros((0, 3), np.int64), np.zeros(0, np.int64), step, origin), \
            np.zeros(0, np.int64)
    idx = round_half_away((cloud.positions - origin) / step).astype(np.int64)
    keys = morton_keys(idx)
    uniq, first, inverse, counts = np.unique(
        keys, return_index=True, return_inverse=True, return_counts=True)
    grid = VoxelGrid(idx[first], counts, step, origin)
    return grid, inverse.reshape(-1).astype(np.int64)


def dequantize(grid: VoxelGrid) -> PointCloud:
    """One point per voxel at ``origin + voxel * step``, Morton order."""
    return PointCloud(grid.centers())
