"""Region-of-interest masks from per-point category labels.

Labels are partitioned into foreground and background by a configurable set
of background categories.  Foreground points get mask value ``m = 1`` so their
coding and metric weight ``1 + m`` is doubled; background points keep
``m = 0``.  Masks move between point sets by nearest-neighbour lookup.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .spatial import SpatialIndex

# NYU40-style ids as used by ScanNet annotations (subset).
DEFAULT_LABEL_NAMES = {
    1: "wall", 2: "floor", 3: "cabinet", 4: "bed", 5: "chair", 6: "sofa",
    7: "table", 8: "door", 9: "window", 10: "bookshelf", 11: "picture",
    12: "counter", 14: "desk", 16: "curtain", 24: "refrigerator",
    28: "showercurtain", 33: "toilet", 34: "sink", 36: "bathtub",
    39: "furniture",
}
DEFAULT_BACKGROUND_NAMES = ("wall", "floor", "door", "furniture")


@dataclass(frozen=True)
class LabelConfig:
    background_labels: frozenset[int]
    label_names: dict[int, str] = field(default_factory=dict)

    @classmethod
    def default(cls) -> "LabelConfig":
        names = dict(DEFAULT_LABEL_NAMES)
        bg = frozenset(i for i, n in names.items() if n in DEFAULT_BACKGROUND_NAMES)
        return cls(bg, names)

    @classmethod
    def from_dict(cls, obj: dict) -> "LabelConfig":
        names = {int(k): str(v) for k, v in obj.get("label_names", {}).items()}
        if "background_labels" in obj:
            bg = frozenset(int(x) for x in obj["background_labels"])
        else:
            lookup = names or DEFAULT_LABEL_NAMES
            bg = frozenset(i for i, n in lookup.items() if n in DEFAULT_BACKGROUND_NAMES)
        return cls(bg, names)

    @classmethod
    def load(cls, path) -> "LabelConfig":
        with open(path) as f:
            return cls.from_dict(json.load(f))

    def to_dict(self) -> dict:
        return {
            "background_labels": sorted(self.background_labels),
            "label_names": {str(k): v for k, v in sorted(self.label_names.items())},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def digest(self) -> bytes:
        """8-byte fingerprint stored in container headers."""
        return hashlib.sha256(self.to_json().encode()).digest()[:8]


@dataclass(frozen=True, eq=False)
class RegionPartition:
    fg_indices: np.ndarray
    bg_indices: np.ndarray

    def __post_init__(self):
        for name in ("fg_indices", "bg_indices"):
            idx = np.asarray(getattr(self, name), dtype=np.int64).reshape(-1)
            object.__setattr__(self, name, idx)

    @property
    def size(self) -> int:
        return len(self.fg_indices) + len(self.bg_indices)

    def foreground_flags(self, n: int | None = None) -> np.ndarray:
        n = self.size if n is None else n
        flags = np.zeros(n, dtype=bool)
        flags[self.fg_indices] = True
        return flags


@dataclass(frozen=True, eq=False)
class MaskMap:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if not np.isfinite(v).all() or (v < 0).any():
            raise ValueError("mask values must be finite and non-negative")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.shape[0]

    @property
    def weights(self) -> np.ndarray:
        return 1.0 + self.values

    def take(self, order) -> "MaskMap":
        return MaskMap(self.values[np.asarray(order)])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["index", "m"])
        for i, m in enumerate(self.values):
            w.writerow([i, repr(float(m))])
        return buf.getvalue()


def select_regions(labels, background_set) -> RegionPartition:
    labels = np.asarray(labels).reshape(-1)
    bg = np.isin(labels, list(background_set))
    return RegionPartition(np.flatnonzero(~bg), np.flatnonzero(bg))


def build_mask(partition: RegionPartition, n: int, fg_weight: float = 1.0) -> MaskMap:
    fg, bg = partition.fg_indices, partition.bg_indices
    for part in (fg, bg):
        if len(part) and (part.min() < 0 or part.max() >= n):
            raise IndexError(f"partition index out of range for {n} points")
    if len(np.union1d(fg, bg)) != n or len(np.intersect1d(fg, bg)):
        raise ValueError(f"partition must split 0..{n - 1} into disjoint parts")
    values = np.zeros(n)
    values[fg] = fg_weight
    return MaskMap(values)


def transfer_mask(source_points, source_mask: MaskMap, target_points,
                  index: SpatialIndex | None = None) -> MaskMap:
    """Give every target point the mask value of its nearest source point."""
    source_points = np.asarray(source_points, dtype=np.float64).reshape(-1, 3)
    if source_points.shape[0] == 0:
        raise ValueError("cannot transfer a mask from an empty point set")
    if len(source_mask) != source_points.shape[0]:
        raise ValueError("source mask does not align with source points")
    target = np.asarray(target_points, dtype=np.float64).reshape(-1, 3)
    if target.shape[0] == 0:
        return MaskMap(np.zeros(0))
    index = index or SpatialIndex(source_points)
    nn, _ = index.nearest_many(target)
    return MaskMap(source_mask.values[nn])


def scale_residuals(residuals, mask: MaskMap):
    """Multiply every residual vector by its weight ``1 + m``."""
    if len(mask) != residuals.count:
        raise ValueError(f"mask has {len(mask)} values for {residuals.count} residuals")
    return residuals.with_values(residuals.residuals * mask.weights[:, None])


def unscale_residuals(residuals, mask: MaskMap):
    if len(mask) != residuals.count:
        raise ValueError(f"mask has {len(mask)} values for {residuals.count} residuals")
    return residuals.with_values(residuals.residuals / mask.weights[:, None])
