"""Geometry distortion and rate metrics.

Distances are squared Euclidean throughout.  D1 / D2 PSNR follow the MPEG
convention ``10 log10(3 peak^2 / MSE)`` with the symmetric (max) MSE; the
ROI-weighted Chamfer distance normalizes the per-point weights ``1 + m`` in
each direction so that any constant mask gives back plain Chamfer distance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cloud import PointCloud
from .errors import NoOverlapError
from .roi import MaskMap
from .spatial import SpatialIndex

PSNR_CAP = 100.0
DEFAULT_KNN = 12


def _points(cloud) -> np.ndarray:
    pts = cloud.positions if isinstance(cloud, PointCloud) else \
        np.asarray(cloud, dtype=np.float64).reshape(-1, 3)
    if pts.shape[0] == 0:
        raise ValueError("metrics need non-empty point clouds")
    return pts


class Reference:
    """A reference cloud with its search index, normals and peak cached."""

    def __init__(self, cloud, peak: float | None = None, knn: int = DEFAULT_KNN):
        self.points = _points(cloud)
        self.index = SpatialIndex(self.points)
        self.knn = knn
        self._normals = None
        if peak is None:
            peak = default_peak(self.points)
        if not peak > 0:
            raise ValueError(f"peak must be positive, got {peak}")
        self.peak = float(peak)

    @property
    def normals(self) -> np.ndarray:
        if self._normals is None:
            self._normals = estimate_normals(self.points, self.knn, index=self.index)
        return self._normals


def default_peak(points) -> float:
    """Largest bounding-box extent of the reference."""
    pts = _points(points)
    return float((pts.max(axis=0) - pts.min(axis=0)).max())


def _directional(src: np.ndarray, dst_index: SpatialIndex):
    return dst_index.nearest_many(src)


def chamfer(p1, p2) -> float:
    a, b = _points(p1), _points(p2)
    _, d_ab = _directional(a, SpatialIndex(b))
    _, d_ba = _directional(b, SpatialIndex(a))
    return float(d_ab.mean() + d_ba.mean())


def rw_chamfer(p1, p2, mask: MaskMap) -> float:
    """Chamfer distance with normalized weights ``1 + m``.

    Points of ``p1`` carry their own weight; each point of ``p2`` borrows the
    weight of its nearest ``p1`` point.
    """
    a, b = _points(p1), _points(p2)
    if len(mask) != a.shape[0]:
        raise ValueError(f"mask has {len(mask)} values for {a.shape[0]} points")
    w1 = mask.weights
    _, d_ab = _directional(a, SpatialIndex(b))
    nn_ba, d_ba = _directional(b, SpatialIndex(a))
    w2 = w1[nn_ba]
    return float(np.dot(w1, d_ab) / w1.sum() + np.dot(w2, d_ba) / w2.sum())


def psnr_from_mse(mse: float, peak: float) -> float:
    signal = 3.0 * peak * peak
    if mse < signal * 1e-10:
        return PSNR_CAP
    return 10.0 * math.log10(signal / mse)


def d1_mse(ref, rec) -> float:
    ref = ref if isinstance(ref, Reference) else Reference(ref, peak=1.0)
    b = _points(rec)
    _, d_ab = _directional(ref.points, SpatialIndex(b))
    _, d_ba = _directional(b, ref.index)
    return float(max(d_ab.mean(), d_ba.mean()))


def d1_psnr(ref, rec, peak: float | None = None) -> float:
    ref = ref if isinstance(ref, Reference) else Reference(ref, peak=peak)
    if peak is not None and not peak > 0:
        raise ValueError(f"peak must be positive, got {peak}")
    return psnr_from_mse(d1_mse(ref, rec), ref.peak if peak is None else peak)


def estimate_normals(points, k: int = DEFAULT_KNN, index: SpatialIndex | None = None) -> np.ndarray:
    """Unit normals from the covariance of each point's k-neighbourhood.

    The normal is the eigenvector of the smallest eigenvalue, signed so that
    its largest-magnitude component is positive.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if k < 3:
        raise ValueError("normal estimation needs k >= 3")
    if pts.shape[0] < k:
        raise ValueError(f"{pts.shape[0]} points cannot supply {k} neighbours")
    index = index or SpatialIndex(pts)
    nbr, _ = index.knn_many(pts, k)
    local = pts[nbr]
    local = local - local.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", local, local) / k
    _, vecs = np.linalg.eigh(cov)
    normals = vecs[:, :, 0]
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    lead = np.abs(normals).argmax(axis=1)
    sign = np.sign(normals[np.arange(len(normals)), lead])
    return normals * sign[:, None]


def d2_mse(ref, rec) -> float:
    ref = ref if isinstance(ref, Reference) else Reference(ref, peak=1.0)
    b = _points(rec)
    normals = ref.normals
    nn_ab, _ = _directional(ref.points, SpatialIndex(b))
    e_ab = np.einsum("ni,ni->n", b[nn_ab] - ref.points, normals)
    nn_ba, _ = _directional(b, ref.index)
    e_ba = np.einsum("ni,ni->n", ref.points[nn_ba] - b, normals[nn_ba])
    return float(max((e_ab ** 2).mean(), (e_ba ** 2).mean()))


def d2_psnr(ref, rec, peak: float | None = None, k: int = DEFAULT_KNN) -> float:
    ref = ref if isinstance(ref, Reference) else Reference(ref, peak=peak, knn=k)
    if peak is not None and not peak > 0:
        raise ValueError(f"peak must be positive, got {peak}")
    return psnr_from_mse(d2_mse(ref, rec), ref.peak if peak is None else peak)


def bits_per_point(total_bits: int, n: int) -> float:
    if n <= 0:
        raise ValueError("bits per point needs a positive point count")
    if total_bits < 0:
        raise ValueError("bit count must be non-negative")
    return total_bits / n


# ---------------------------------------------------------------------------
# Bjontegaard deltas


@dataclass(frozen=True)
class RDCurve:
    rates: tuple[float, ...]
    qualities: tuple[float, ...]
    name: str = ""

    def __post_init__(self):
        r = tuple(float(x) for x in self.rates)
        q = tuple(float(x) for x in self.qualities)
        if len(r) != len(q):
            raise ValueError("rates and qualities differ in length")
        if len(r) < 2:
            raise ValueError("an RD curve needs at least 2 points")
        if not all(map(math.isfinite, r + q)):
            raise ValueError("RD values must be finite")
        if min(r) <= 0:
            raise ValueError("rates must be positive")
        if any(b <= a for a, b in zip(r, r[1:])):
            raise ValueError("rates must be strictly increasing")
        object.__setattr__(self, "rates", r)
        object.__setattr__(self, "qualities", q)

    @classmethod
    def from_points(cls, points, name: str = "") -> "RDCurve":
        pts = sorted((float(r), float(q)) for r, q in points)
        return cls(tuple(p[0] for p in pts), tuple(p[1] for p in pts), name)


def _fit(x, y):
    deg = min(3, len(x) - 1)
    return np.polyfit(np.asarray(x), np.asarray(y), deg)


def _avg_gap(xa, ya, xb, yb):
    lo = max(min(xa), min(xb))
    hi = min(max(xa), max(xb))
    if not hi > lo:
        raise NoOverlapError(f"curves do not overlap (interval [{lo:g}, {hi:g}])")
    ia, ib = np.polyint(_fit(xa, ya)), np.polyint(_fit(xb, yb))
    area_a = np.polyval(ia, hi) - np.polyval(ia, lo)
    area_b = np.polyval(ib, hi) - np.polyval(ib, lo)
    return float((area_b - area_a) / (hi - lo))


def bd_psnr(a: RDCurve, b: RDCurve) -> float:
    """Average quality gain of ``b`` over ``a`` (dB) across shared log-rates."""
    return _avg_gap(np.log10(a.rates), a.qualities, np.log10(b.rates), b.qualities)


def bd_rate(a: RDCurve, b: RDCurve) -> float:
    """Average rate change of ``b`` relative to ``a`` (percent) at equal quality."""
    if len(set(a.qualities)) < len(a.qualities) or len(set(b.qualities)) < len(b.qualities):
        raise ValueError("BD-rate needs distinct quality values on each curve")
    gap = _avg_gap(a.qualities, np.log10(a.rates), b.qualities, np.log10(b.rates))
    return float((10.0 ** gap - 1.0) * 100.0)


def metrics_report(ref, rec, mask: MaskMap | None = None, peak: float | None = None,
                   knn: int = DEFAULT_KNN, base_bits: int | None = None,
                   enh_bits: int | None = None, n_original: int | None = None) -> dict:
    """The JSON-ready metric report for a reference / reconstruction pair.

    ``d2_db`` is None when the reference has fewer than ``knn`` points, since
    its normals are then undefined.
    """
    ref_pts, rec_pts = _points(ref), _points(rec)
    reference = Reference(ref_pts, peak=peak, knn=knn)
    if mask is None:
        mask = MaskMap(np.zeros(ref_pts.shape[0]))
    report = {
        "d1_db": psnr_from_mse(d1_mse(reference, rec_pts), reference.peak),
        "d2_db": (psnr_from_mse(d2_mse(reference, rec_pts), reference.peak)
                  if ref_pts.shape[0] >= knn else None),
        "cd": chamfer(ref_pts, rec_pts),
        "rw_cd": rw_chamfer(ref_pts, rec_pts, mask),
        "bpp_base": None,
        "bpp_enh": None,
        "bpp_total": None,
    }
    n = n_original or ref_pts.shape[0]
    if base_bits is not None:
        report["bpp_base"] = bits_per_point(base_bits, n)
        report["bpp_enh"] = bits_per_point(enh_bits or 0, n)
        report["bpp_total"] = report["bpp_base"] + report["bpp_enh"]
    return report
