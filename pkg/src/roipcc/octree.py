"""Lossless base layer: breadth-first octree occupancy coding of a VoxelGrid.

Stream layout (little-endian)::

    "RPCB" | u8 version | u8 depth | f64 step | 3 x f64 origin
           | u32 voxel_count | u32 payload_len | payload

The payload is one range-coded segment: every occupancy byte (order-0
adaptive model over 256 symbols) followed by the per-leaf point counts as
context-adaptive Elias-gamma bins.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .cloud import MAX_DEPTH, VoxelGrid, deinterleave, interleave
from .entropy import GAMMA_CONTEXTS, AdaptiveModel, RangeDecoder, RangeEncoder
from .errors import DecodeError

MAGIC = b"RPCB"
VERSION = 1
_HEADER = struct.Struct("<4sBBd3dII")
HEADER_SIZE = _HEADER.size

_CHILD_BITS = np.arange(8, dtype=np.uint64)
_POPCOUNT = np.array([bin(i).count("1") for i in range(256)], dtype=np.int64)


@dataclass(frozen=True, eq=False)
class OccupancyStream:
    depth: int
    codes: np.ndarray        # uint8, breadth-first
    leaf_counts: np.ndarray  # Morton order

    def level_sizes(self) -> list[int]:
        """Node count per level, following the popcount chain."""
        sizes, pos, n = [], 0, 1
        for _ in range(self.depth):
            sizes.append(n)
            n = int(_POPCOUNT[self.codes[pos:pos + n]].sum())
            pos += sizes[-1]
        return sizes

    def check(self):
        if (self.codes == 0).any():
            raise ValueError("empty occupancy byte")
        sizes = self.level_sizes()
        if sum(sizes) != len(self.codes):
            raise ValueError("occupancy byte count breaks the popcount chain")
        leaves = int(_POPCOUNT[self.codes[len(self.codes) - sizes[-1]:]].sum())
        if leaves != len(self.leaf_counts):
            raise ValueError("leaf count mismatch")


def octree_depth(grid: VoxelGrid) -> int:
    if grid.size == 0:
        return 0
    return max(1, int(grid.voxels.max()).bit_length())


def build_octree(grid: VoxelGrid) -> OccupancyStream:
    if grid.size == 0:
        raise ValueError("cannot build an octree over an empty grid")
    if grid.voxels.min() < 0:
        raise ValueError("octree coding needs non-negative voxel indices")
    depth = octree_depth(grid)
    if depth > MAX_DEPTH:
        raise ValueError(f"octree depth {depth} exceeds {MAX_DEPTH}")
    keys = interleave(grid.voxels, depth)  # already sorted: grid is Morton ordered
    levels = []
    for level in range(depth):
        shift = np.uint64(3 * (depth - 1 - level))
        prefix = keys >> (shift + np.uint64(3))
        child = (keys >> shift) & np.uint64(7)
        starts = np.flatnonzero(np.r_[True, prefix[1:] != prefix[:-1]])
        bits = np.left_shift(np.uint64(1), child)
        levels.append(np.bitwise_or.reduceat(bits, starts).astype(np.uint8))
    return OccupancyStream(depth, np.concatenate(levels), grid.counts.copy())


def expand_level(prefixes: np.ndarray, codes: np.ndarray) -> np.ndarray:
    """Child keys of a level's nodes, node-major, child index ascending."""
    occupied = ((codes[:, None].astype(np.uint64) >> _CHILD_BITS) & np.uint64(1)) == 1
    children = (prefixes[:, None] << np.uint64(3)) | _CHILD_BITS
    return children[occupied]


def voxels_from_occupancy(stream: OccupancyStream) -> np.ndarray:
    prefixes = np.zeros(1, dtype=np.uint64)
    pos = 0
    for _ in range(stream.depth):
        n = prefixes.shape[0]
        prefixes = expand_level(prefixes, stream.codes[pos:pos + n])
        pos += n
    return deinterleave(prefixes, stream.depth)


def encode_base(grid: VoxelGrid) -> bytes:
    if grid.size == 0:
        payload, depth = b"", 0
    else:
        occ = build_octree(grid)
        depth = occ.depth
        enc = RangeEncoder()
        enc.encode(occ.codes, AdaptiveModel(256))
        enc.encode_gamma(occ.leaf_counts, AdaptiveModel(2, contexts=GAMMA_CONTEXTS))
        payload = enc.finish()
    header = _HEADER.pack(MAGIC, VERSION, depth, grid.step, *grid.origin,
                          grid.size, len(payload))
    return header + payload


def read_header(data: bytes):
    if len(data) < HEADER_SIZE:
        raise DecodeError("base stream shorter than its header", position=len(data))
    magic, version, depth, step, ox, oy, oz, nvox, plen = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise DecodeError(f"bad base-layer magic {magic!r}", position=0)
    if version != VERSION:
        raise DecodeError(f"unsupported base-layer version {version}", position=4)
    if not (step > 0 and np.isfinite(step)) or not np.isfinite([ox, oy, oz]).all():
        raise DecodeError("invalid quantization parameters", position=6)
    if nvox == 0 and (depth != 0 or plen != 0):
        raise DecodeError("empty grid with non-empty payload", position=5)
    if nvox > 0 and not 1 <= depth <= MAX_DEPTH:
        raise DecodeError(f"invalid octree depth {depth}", position=5)
    if HEADER_SIZE + plen != len(data):
        raise DecodeError(f"payload length {plen} disagrees with stream size "
                          f"{len(data)}", position=HEADER_SIZE - 4)
    return depth, step, np.array([ox, oy, oz]), nvox, plen


def decode_base(data: bytes) -> VoxelGrid:
    data = bytes(data)
    depth, step, origin, nvox, _ = read_header(data)
    if nvox == 0:
        return VoxelGrid(np.zeros((0, 3), np.int64), np.zeros(0, np.int64), step, origin)
    dec = RangeDecoder(data[HEADER_SIZE:])
    model = AdaptiveModel(256)
    prefixes = np.zeros(1, dtype=np.uint64)
    codes = []
    for level in range(depth):
        n = prefixes.shape[0]
        if n > nvox:
            raise DecodeError(f"level {level} has {n} nodes for {nvox} voxels",
                              position=HEADER_SIZE + dec.position)
        level_codes = dec.decode(n, model).astype(np.uint8)
        if (level_codes == 0).any():
            raise DecodeError("empty occupancy byte", position=HEADER_SIZE + dec.position)
        codes.append(level_codes)
        prefixes = expand_level(prefixes, level_codes)
    if prefixes.shape[0] != nvox:
        raise DecodeError(f"octree holds {prefixes.shape[0]} leaves, header says {nvox}",
                          position=HEADER_SIZE + dec.position)
    counts = dec.decode_gamma(nvox, AdaptiveModel(2, contexts=GAMMA_CONTEXTS))
    return VoxelGrid(deinterleave(prefixes, depth), counts, step, origin)
