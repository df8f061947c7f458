"""Dataset construction helpers: representative-frame selection and thermal-to-RGB alignment."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import cv2
import numpy as np
from sklearn.cluster import KMeans

from .data_model import Sequence
from .errors import ParseError, RankDeficiencyError

log = logging.getLogger(__name__)

DESCRIPTOR_SIDE = 16


@dataclass
class FrameDescriptor:
    frame_index: int
    feature: np.ndarray


def frame_descriptors(seq: Sequence, side: int = DESCRIPTOR_SIDE) -> list[FrameDescriptor]:
    """Downscaled grayscale intensities of the RGB channel, flattened."""
    out = []
    for i, fr in enumerate(seq.frames):
        gray = cv2.cvtColor(fr.rgb.astype(np.float32), cv2.COLOR_RGB2GRAY)
        small = cv2.resize(gray, (side, side), interpolation=cv2.INTER_AREA)
        out.append(FrameDescriptor(i, small.ravel().astype(np.float64)))
    return out


def select_representative_frames(seq: Sequence, k: int, seed: int = 0) -> list[int]:
    """k-means over frame descriptors; per cluster, the member frame nearest the centroid.

    Ties go to the lowest frame index. The result is sorted ascending. Clusters
    that end up empty are dropped with a warning, so the list can be shorter than k.
    """
    n = len(seq.frames)
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    feats = np.stack([d.feature for d in frame_descriptors(seq)])
    if k == n:
        return list(range(n))
    with warnings.catch_warnings():
        # identical frames make sklearn warn about fewer distinct points than clusters
        warnings.simplefilter("ignore")
        km = KMeans(n_clusters=k, init="k-means++", n_init=1, max_iter=300, tol=1e-6, random_state=seed).fit(feats)
    selected = set()
    empty = 0
    for c in range(k):
        members = np.flatnonzero(km.labels_ == c)
        if members.size == 0:
            empty += 1
            continue
        d = np.linalg.norm(feats[members] - km.cluster_centers_[c], axis=1)
        best = members[d == d.min()].min()
        selected.add(int(best))
    missing = k - len(selected)
    if missing:
        warnings.warn(f"{missing} of {k} clusters yielded no distinct frame ({empty} empty)", RuntimeWarning, stacklevel=2)
    return sorted(selected)


# ---------------------------------------------------------------------------
# alignment


@dataclass
class AlignmentMap:
    """Homogeneous 3x3 map from thermal pixels to RGB pixels (bottom-right entry 1)."""

    matrix: np.ndarray
    rms_error: float = float("nan")

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.shape != (3, 3):
            raise ValueError(f"alignment matrix must be 3x3, got {m.shape}")
        if abs(m[2, 2]) > 1e-15:
            m = m / m[2, 2]
        self.matrix = m

    @property
    def condition_number(self) -> float:
        return float(np.linalg.cond(self.matrix))

    def transform(self, pts) -> np.ndarray:
        return _apply_h(self.matrix, np.asarray(pts, dtype=np.float64))

    def to_text(self) -> str:
        return " ".join(repr(float(v)) for v in self.matrix.ravel())

    @classmethod
    def from_text(cls, text: str) -> "AlignmentMap":
        vals = [float(v) for v in text.split()]
        if len(vals) != 9:
            raise ValueError(f"expected 9 numbers, got {len(vals)}")
        return cls(np.array(vals).reshape(3, 3))


def _apply_h(h, pts):
    ph = np.hstack([pts, np.ones((len(pts), 1))]) @ h.T
    return ph[:, :2] / ph[:, 2:3]


def _normalizer(pts):
    """Similarity moving the centroid to the origin with mean distance sqrt(2)."""
    c = pts.mean(axis=0)
    d = np.linalg.norm(pts - c, axis=1).mean()
    if d < 1e-12:
        raise RankDeficiencyError("all points coincide")
    s = np.sqrt(2) / d
    return np.array([[s, 0, -s * c[0]], [0, s, -s * c[1]], [0, 0, 1.0]])


def _all_collinear(pts, tol=1e-9):
    q = pts - pts.mean(axis=0)
    sv = np.linalg.svd(q, compute_uv=False)
    return sv[-1] <= tol * max(sv[0], 1e-300)


def estimate_alignment(correspondences, affine: bool = False) -> AlignmentMap:
    """Least-squares map from thermal to RGB points by normalised DLT.

    ``correspondences`` is a sequence of ``((xt, yt), (xr, yr))`` pairs or an
    ``(N, 2, 2)`` array. With ``affine=True`` a 6-DoF affine map is fitted instead.
    """
    c = np.asarray(correspondences, dtype=np.float64)
    if c.ndim != 3 or c.shape[1:] != (2, 2):
        raise ValueError(f"correspondences must have shape (N, 2, 2), got {c.shape}")
    src, dst = c[:, 0], c[:, 1]
    need = 3 if affine else 4
    if len(c) < need:
        raise ValueError(f"need at least {need} correspondences, got {len(c)}")
    if _all_collinear(src) or _all_collinear(dst):
        raise RankDeficiencyError("correspondences are collinear")

    ts, td = _normalizer(src), _normalizer(dst)
    s = _apply_h(ts, src)
    d = _apply_h(td, dst)
    n = len(c)
    if affine:
        a = np.zeros((2 * n, 6))
        a[0::2, 0:2], a[0::2, 2] = s, 1
        a[1::2, 3:5], a[1::2, 5] = s, 1
        sol, _, rank, _ = np.linalg.lstsq(a, d.reshape(-1), rcond=None)
        if rank < 6:
            raise RankDeficiencyError(f"affine system has rank {rank} < 6")
        hn = np.vstack([sol.reshape(2, 3), [0, 0, 1]])
    else:
        a = np.zeros((2 * n, 9))
        x, y = s[:, 0], s[:, 1]
        u, v = d[:, 0], d[:, 1]
        a[0::2, 0], a[0::2, 1], a[0::2, 2] = -x, -y, -1
        a[0::2, 6], a[0::2, 7], a[0::2, 8] = u * x, u * y, u
        a[1::2, 3], a[1::2, 4], a[1::2, 5] = -x, -y, -1
        a[1::2, 6], a[1::2, 7], a[1::2, 8] = v * x, v * y, v
        _, sv, vt = np.linalg.svd(a)
        if sv[7] <= 1e-10 * sv[0]:
            raise RankDeficiencyError("degenerate correspondence configuration (DLT rank < 8)")
        hn = vt[-1].reshape(3, 3)
    h = np.linalg.inv(td) @ hn @ ts
    if abs(h[2, 2]) < 1e-15:
        raise RankDeficiencyError("map sends the origin to infinity")
    h = h / h[2, 2]
    rms = float(np.sqrt(np.mean(np.sum((_apply_h(h, src) - dst) ** 2, axis=1))))
    return AlignmentMap(h, rms)


def apply_alignment(amap: AlignmentMap, img: np.ndarray, out_size: tuple[int, int]) -> np.ndarray:
    """Resample a thermal image into the RGB frame (inverse warp, bilinear, zero fill).

    ``out_size`` is ``(height, width)``.
    """
    m = amap.matrix
    if not np.all(np.isfinite(m)) or abs(np.linalg.det(m)) < 1e-12 or amap.condition_number > 1e12:
        raise RankDeficiencyError("alignment map is singular")
    h, w = out_size
    src = np.asarray(img, dtype=np.float32)
    return cv2.warpPerspective(src, m, (w, h), flags=cv2.INTER_LINEAR, borderMode=cv2.BORDER_CONSTANT, borderValue=0)


def read_points(path) -> np.ndarray:
    """Correspondence file: one ``xt yt xr yr`` line per point (commas also accepted)."""
    rows = []
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            vals = line.replace(",", " ").split()
            try:
                if len(vals) != 4:
                    raise ValueError
                rows.append([float(v) for v in vals])
            except ValueError:
                raise ParseError("expected 4 numbers 'xt yt xr yr'", lineno) from None
    return np.array(rows).reshape(-1, 2, 2)
