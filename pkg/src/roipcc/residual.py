"""Enhancement layer: ROI-weighted scalar coding of per-point residuals.

Each residual ``r`` (point minus its voxel centre) is scaled by ``1 + m`` and
quantized with step ``res_step``::

    s = round(r * (1 + m) / res_step)        r_hat = s * res_step / (1 + m)

so foreground points (``m > 0``) see the finer effective step
``res_step / (1 + m)``.  Stream layout (little-endian)::

    "RPCE" | u8 version | f64 res_step | f64 fg_weight
           | u32 point_count | u32 payload_len | payload

The payload is one range-coded segment: one foreground flag per point, then
three zig-zag symbols per point (512-symbol adaptive model, one context per
flag value, last symbol escapes to a 32-bit raw offset).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace

import numpy as np

from .cloud import PointCloud, VoxelGrid, round_half_away
from .entropy import ESCAPE_LIMIT, AdaptiveModel, RangeDecoder, RangeEncoder
from .errors import DecodeError
from .roi import MaskMap

MAGIC = b"RPCE"
VERSION = 1
ALPHABET = 512
_HEADER = struct.Struct("<4sBddII")
HEADER_SIZE = _HEADER.size
_MAX_ZIGZAG = ALPHABET - 1 + ESCAPE_LIMIT


@dataclass(frozen=True, eq=False)
class ResidualSet:
    """Residual vectors grouped by parent voxel (Morton order).

    ``parents`` holds the row of each residual's voxel in the grid;
    ``source_index`` (encoder side only) maps residuals back to input points.
    """

    residuals: np.ndarray
    parents: np.ndarray
    res_step: float | None = None
    source_index: np.ndarray | None = None
    fg_flags: np.ndarray | None = None

    @property
    def count(self) -> int:
        return self.residuals.shape[0]

    def with_values(self, residuals) -> "ResidualSet":
        return replace(self, residuals=np.asarray(residuals, dtype=np.float64))

    def parent_voxels(self, grid: VoxelGrid) -> np.ndarray:
        return grid.voxels[self.parents]


def compute_residuals(original: PointCloud, grid: VoxelGrid, assignment) -> ResidualSet:
    assignment = np.asarray(assignment, dtype=np.int64).reshape(-1)
    if assignment.shape[0] != original.count:
        raise ValueError("assignment length differs from point count")
    if original.count and (assignment.min() < 0 or assignment.max() >= grid.size):
        raise ValueError("assignment refers to a voxel outside the grid")
    if not np.array_equal(np.bincount(assignment, minlength=grid.size), grid.counts):
        raise ValueError("assignment is inconsistent with the grid's voxel counts")
    order = np.argsort(assignment, kind="stable")
    parents = assignment[order]
    r = original.positions[order] - grid.centers()[parents]
    return ResidualSet(r, parents, source_index=order)


def _zigzag(s):
    return np.where(s < 0, -2 * s - 1, 2 * s)


def _unzigzag(z):
    return np.where(z & 1, -((z + 1) >> 1), z >> 1)


def _fg_weight(mask: MaskMap) -> float:
    positive = np.unique(mask.values[mask.values > 0])
    if len(positive) > 1:
        raise ValueError("enhancement coding supports one foreground weight; "
                         f"mask holds {len(positive)} distinct positive values")
    return float(positive[0]) if len(positive) else 0.0


def quantize_residuals(residuals: np.ndarray, weights: np.ndarray, res_step: float):
    return round_half_away(residuals * weights[:, None] / res_step).astype(np.int64)


def encode_enhancement(residuals: ResidualSet, mask: MaskMap, res_step: float) -> bytes:
    res_step = float(res_step)
    if not (res_step > 0 and np.isfinite(res_step)):
        raise ValueError(f"res_step must be positive, got {res_step}")
    if len(mask) != residuals.count:
        raise ValueError(f"mask has {len(mask)} values for {residuals.count} residuals")
    fg_weight = _fg_weight(mask)
    flags = (mask.values > 0).astype(np.int64)
    symbols = quantize_residuals(residuals.residuals, mask.weights, res_step)
    z = _zigzag(symbols).reshape(-1)
    if z.size and z.max() >= _MAX_ZIGZAG:
        raise ValueError("residual symbol too large; res_step is far below the base step")

    enc = RangeEncoder()
    if residuals.count:
        enc.encode(flags, AdaptiveModel(2))
        enc.encode(z, AdaptiveModel(ALPHABET, contexts=2),
                   contexts=np.repeat(flags, 3), escape=True)
        payload = enc.finish()
    else:
        payload = b""
    return _HEADER.pack(MAGIC, VERSION, res_step, fg_weight, residuals.count,
                        len(payload)) + payload


def read_header(data: bytes):
    if len(data) < HEADER_SIZE:
        raise DecodeError("enhancement stream shorter than its header", position=len(data))
    magic, version, res_step, fg_weight, npts, plen = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise DecodeError(f"bad enhancement magic {magic!r}", position=0)
    if version != VERSION:
        raise DecodeError(f"unsupported enhancement version {version}", position=4)
    if not (res_step > 0 and np.isfinite(res_step)):
        raise DecodeError("invalid residual step", position=5)
    if not (fg_weight >= 0 and np.isfinite(fg_weight)):
        raise DecodeError("invalid foreground weight", position=13)
    if HEADER_SIZE + plen != len(data):
        raise DecodeError(f"payload length {plen} disagrees with stream size "
                          f"{len(data)}", position=HEADER_SIZE - 4)
    if npts == 0 and plen != 0:
        raise DecodeError("empty residual set with non-empty payload", position=21)
    return res_step, fg_weight, npts


def decode_enhancement(data: bytes, grid: VoxelGrid) -> ResidualSet:
    data = bytes(data)
    res_step, fg_weight, npts = read_header(data)
    if npts != grid.point_count:
        raise DecodeError(f"enhancement carries {npts} residuals but the base "
                          f"layer holds {grid.point_count} points", position=21)
    parents = np.repeat(np.arange(grid.size), grid.counts)
    if npts == 0:
        return ResidualSet(np.zeros((0, 3)), parents, res_step,
                           fg_flags=np.zeros(0, dtype=bool))
    dec = RangeDecoder(data[HEADER_SIZE:])
    flags = dec.decode(npts, AdaptiveModel(2))
    z = dec.decode(3 * npts, AdaptiveModel(ALPHABET, contexts=2),
                   contexts=np.repeat(flags, 3), escape=True)
    symbols = _unzigzag(z).reshape(npts, 3)
    weights = 1.0 + fg_weight * flags
    r_hat = symbols * res_step / weights[:, None]
    return ResidualSet(r_hat, parents, res_step, fg_flags=flags.astype(bool))


def reconstruct(grid: VoxelGrid, residuals: ResidualSet) -> PointCloud:
    """Voxel centres plus residuals, in canonical (voxel, within-voxel) order."""
    if residuals.count != grid.point_count:
        raise ValueError(f"{residuals.count} residuals for {grid.point_count} points")
    if not np.array_equal(np.bincount(residuals.parents, minlength=grid.size), grid.counts):
        raise ValueError("residual grouping disagrees with voxel counts")
    return PointCloud(grid.centers()[residuals.parents] + residuals.residuals)
