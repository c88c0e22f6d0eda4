"""Single-file container bundling the base and enhancement layers.

Layout (little-endian)::

    "RPCG" | u8 version | u8 flags | f64 step | f64 res_step | 3 x f64 origin
           | u32 point_count | 8-byte label-config digest
           | u32 base_len | u32 enh_len | base segment | enhancement segment
           | u32 CRC-32 of every preceding byte
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

import numpy as np

from . import octree, residual
from .errors import DecodeError

MAGIC = b"RPCG"
VERSION = 1
FLAG_CANONICAL_ORDER = 0x01  # points come back voxel by voxel, not in input order
FLAG_NO_ROI = 0x02
_HEADER = struct.Struct("<4sBBdd3dI8sII")
HEADER_SIZE = _HEADER.size
_CRC = struct.Struct("<I")


@dataclass(frozen=True)
class Container:
    step: float
    res_step: float
    origin: tuple[float, float, float]
    point_count: int
    label_digest: bytes
    base: bytes
    enhancement: bytes
    flags: int = FLAG_CANONICAL_ORDER

    @property
    def roi(self) -> bool:
        return not self.flags & FLAG_NO_ROI

    def to_bytes(self) -> bytes:
        if len(self.label_digest) != 8:
            raise ValueError("label digest must be 8 bytes")
        head = _HEADER.pack(MAGIC, VERSION, self.flags, self.step, self.res_step,
                            *self.origin, self.point_count, self.label_digest,
                            len(self.base), len(self.enhancement))
        body = head + self.base + self.enhancement
        return body + _CRC.pack(zlib.crc32(body))

    @classmethod
    def from_bytes(cls, data: bytes) -> "Container":
        data = bytes(data)
        if len(data) < HEADER_SIZE + _CRC.size:
            raise DecodeError("container is truncated", position=len(data))
        if data[:4] != MAGIC:
            raise DecodeError(f"bad container magic {data[:4]!r}", position=0)
        (stored,) = _CRC.unpack_from(data, len(data) - _CRC.size)
        if zlib.crc32(data[:-_CRC.size]) != stored:
            raise DecodeError("CRC mismatch: container is corrupt",
                              position=len(data) - _CRC.size)
        (_, version, flags, step, res_step, ox, oy, oz, npts, digest,
         base_len, enh_len) = _HEADER.unpack_from(data)
        if version != VERSION:
            raise DecodeError(f"unsupported container version {version}", position=4)
        if HEADER_SIZE + base_len + enh_len + _CRC.size != len(data):
            raise DecodeError("segment lengths disagree with container size",
                              position=HEADER_SIZE - 8)
        base = data[HEADER_SIZE:HEADER_SIZE + base_len]
        enh = data[HEADER_SIZE + base_len:HEADER_SIZE + base_len + enh_len]
        box = cls(step, res_step, (ox, oy, oz), npts, digest, base, enh, flags)
        box._check_segments()
        return box

    def _check_segments(self):
        _, step, origin, _, _ = octree.read_header(self.base)
        if step != self.step or not np.array_equal(origin, self.origin):
            raise DecodeError("base segment disagrees with container header",
                              position=HEADER_SIZE)
        res_step, _, npts = residual.read_header(self.enhancement)
        if res_step != self.res_step or npts != self.point_count:
            raise DecodeError("enhancement segment disagrees with container header",
                              position=HEADER_SIZE + len(self.base))
