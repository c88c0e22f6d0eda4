"""Two-layer encode / decode of a whole point cloud."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cloud import PointCloud, VoxelGrid, quantize
from .octree import decode_base, encode_base
from .residual import (ResidualSet, compute_residuals, decode_enhancement,
                       encode_enhancement, reconstruct)
from .roi import MaskMap


@dataclass(frozen=True, eq=False)
class Encoded:
    base: bytes
    enhancement: bytes
    grid: VoxelGrid
    residuals: ResidualSet   # encoder side, carries source_index
    mask: MaskMap            # aligned with the original points

    @property
    def point_count(self) -> int:
        return self.residuals.count

    @property
    def source_index(self) -> np.ndarray:
        """Original index of each reconstructed point."""
        return self.residuals.source_index


def encode_cloud(cloud: PointCloud, step: float, res_step: float,
                 mask: MaskMap | None = None) -> Encoded:
    """Quantize with the lattice anchored at the bounding-box minimum, code the
    voxels losslessly, then code the mask-weighted residuals."""
    if mask is None:
        mask = MaskMap(np.zeros(cloud.count))
    if len(mask) != cloud.count:
        raise ValueError(f"mask has {len(mask)} values for {cloud.count} points")
    grid, assignment = quantize(cloud, step, origin="min")
    base = encode_base(grid)
    residuals = compute_residuals(cloud, grid, assignment)
    enh = encode_enhancement(residuals, mask.take(residuals.source_index), res_step)
    return Encoded(base, enh, grid, residuals, mask)


def decode_layers(base: bytes, enhancement: bytes | None = None):
    """Return (grid, decoded residuals or None, reconstruction)."""
    grid = decode_base(base)
    if enhancement is None:
        parents = np.repeat(np.arange(grid.size), grid.counts)
        return grid, None, PointCloud(grid.centers()[parents])
    res = decode_enhancement(enhancement, grid)
    return grid, res, reconstruct(grid, res)
