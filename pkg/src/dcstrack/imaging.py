"""Grayscale frames, integral images and Haar-like features.

Frames are plain 2-D ``float64`` arrays indexed ``[row, col]`` with
intensities in ``[0, 1]``. Haar features live in normalized patch
coordinates and are turned into pixel sub-rectangles once per patch size,
so a feature is evaluated with a handful of integral-image lookups.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .validation import BoundsError, DegenerateFeatureError, Rect, check_frame

# kind -> (columns, rows, weights in row-major sub-rect order); weights sum to
# zero over equal-area cells, so a constant patch responds with exactly 0.
HAAR_LAYOUTS = {
    "two-rect-horizontal": (1, 2, (1.0, -1.0)),
    "two-rect-vertical": (2, 1, (1.0, -1.0)),
    "three-rect": (3, 1, (1.0, -2.0, 1.0)),
    "four-rect": (2, 2, (1.0, -1.0, -1.0, 1.0)),
}
HAAR_KINDS = tuple(HAAR_LAYOUTS)


def rgb_to_gray(rgb) -> np.ndarray:
    """Luma ``0.299 R + 0.587 G + 0.114 B`` of an 8-bit ``(H, W, 3)`` image, in [0, 1]."""
    rgb = np.asarray(rgb, dtype=np.float64)
    gray = rgb[..., 0] * 0.299 + rgb[..., 1] * 0.587 + rgb[..., 2] * 0.114
    return gray / 255.0


class IntegralImage:
    """Summed-area table of a frame.

    ``table[j, i]`` holds the sum of all pixels strictly above row ``j`` and
    left of column ``i``; the table is ``(height + 1, width + 1)`` with a zero
    first row and column.
    """

    __slots__ = ("table", "width", "height")

    def __init__(self, table: np.ndarray):
        table = np.asarray(table, dtype=np.float64)
        table.setflags(write=False)
        self.table = table
        self.height = table.shape[0] - 1
        self.width = table.shape[1] - 1

    def rect_sum(self, r: Rect) -> float:
        return rect_sum(self, r)


def build_integral(frame) -> IntegralImage:
    frame = check_frame(frame)
    h, w = frame.shape
    table = np.zeros((h + 1, w + 1), dtype=np.float64)
    np.cumsum(np.cumsum(frame, axis=0), axis=1, out=table[1:, 1:])
    return IntegralImage(table)


def rect_sum(ii: IntegralImage, r: Rect) -> float:
    """Sum of the pixels covered by ``r``; raises :class:`BoundsError` if it leaves the image."""
    x, y, w, h = r
    if w <= 0 or h <= 0 or not Rect(x, y, w, h).inside(ii.width, ii.height):
        raise BoundsError(f"rect {tuple(r)} outside {ii.width}x{ii.height} image")
    s = ii.table
    return float(s[y + h, x + w] - s[y + h, x] - s[y, x + w] + s[y, x])


@dataclass(frozen=True)
class HaarFeature:
    """A Haar-like feature.

    Parameters
    ----------
    kind : str
        One of :data:`HAAR_KINDS`.
    box : tuple of float
        ``(x, y, w, h)`` of the feature inside the unit patch square.
    """

    kind: str
    box: tuple[float, float, float, float]

    def __post_init__(self):
        if self.kind not in HAAR_LAYOUTS:
            raise ValueError(f"unknown Haar kind {self.kind!r}")
        bx, by, bw, bh = self.box
        if bw <= 0 or bh <= 0 or bx < 0 or by < 0 or bx + bw > 1 + 1e-12 or by + bh > 1 + 1e-12:
            raise ValueError(f"feature box {self.box} not inside the unit square")

    @property
    def weights(self) -> tuple[float, ...]:
        return HAAR_LAYOUTS[self.kind][2]

    def subrects(self, patch_w: int, patch_h: int) -> list[tuple[int, int, int, int, float]]:
        """Pixel sub-rectangles ``(dx, dy, w, h, weight)`` relative to the patch origin.

        The box is snapped to whole pixels and split into equal cells, so the
        weighted areas cancel exactly.
        """
        nx, ny, weights = HAAR_LAYOUTS[self.kind]
        bx, by, bw, bh = self.box
        x0 = int(np.floor(bx * patch_w))
        y0 = int(np.floor(by * patch_h))
        cw = int(np.floor(bw * patch_w)) // nx
        ch = int(np.floor(bh * patch_h)) // ny
        if cw == 0 or ch == 0:
            raise DegenerateFeatureError(
                f"{self.kind} feature {self.box} has a 0-px cell on a {patch_w}x{patch_h} patch"
            )
        cells = []
        for row in range(ny):
            for col in range(nx):
                cells.append((x0 + col * cw, y0 + row * ch, cw, ch, weights[row * nx + col]))
        return cells


def eval_haar(ii: IntegralImage, f: HaarFeature, patch: Rect) -> float:
    """Response of ``f`` on ``patch``, normalized by the patch area."""
    x, y, w, h = patch
    if not Rect(x, y, w, h).inside(ii.width, ii.height):
        raise BoundsError(f"patch {tuple(patch)} outside {ii.width}x{ii.height} image")
    total = 0.0
    for dx, dy, cw, ch, weight in f.subrects(w, h):
        total += weight * rect_sum(ii, Rect(x + dx, y + dy, cw, ch))
    return total / (w * h)


def random_feature(rng: np.random.Generator, min_size: float = 0.1) -> HaarFeature:
    kind = HAAR_KINDS[int(rng.integers(len(HAAR_KINDS)))]
    bw, bh = rng.uniform(min_size, 1.0, size=2)
    bx = rng.uniform(0.0, 1.0 - bw)
    by = rng.uniform(0.0, 1.0 - bh)
    return HaarFeature(kind, (float(bx), float(by), float(bw), float(bh)))


def generate_feature_pool(seed, m: int, min_size: float = 0.1) -> list[HaarFeature]:
    """Draw ``m`` features with uniformly chosen kinds and boxes of side >= ``min_size``.

    ``seed`` may be an integer or an existing ``numpy.random.Generator``.
    """
    if m < 1:
        raise ValueError(f"pool size must be >= 1, got {m}")
    if not 0.0 < min_size <= 1.0:
        raise ValueError(f"min_size must lie in (0, 1], got {min_size}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return [random_feature(rng, min_size) for _ in range(m)]


class FeatureBank:
    """Features compiled to pixel offsets for one fixed patch geometry.

    ``offset`` places the patch relative to the anchor point passed to
    :meth:`responses` (for object parts, the object's top-left corner), so a
    whole batch of anchors is evaluated with one gather.
    """

    def __init__(self, features: Sequence[HaarFeature], patch_w: int, patch_h: int,
                 offset: tuple[int, int] = (0, 0)):
        self.features = list(features)
        self.patch_w = int(patch_w)
        self.patch_h = int(patch_h)
        self.offset = (int(offset[0]), int(offset[1]))
        ox, oy = self.offset
        cdx, cdy, coef, starts = [], [], [], []
        norm = 1.0 / (self.patch_w * self.patch_h)
        for f in self.features:
            starts.append(len(coef))
            for dx, dy, cw, ch, weight in f.subrects(self.patch_w, self.patch_h):
                x0, y0 = ox + dx, oy + dy
                for cx, cy, sign in ((x0 + cw, y0 + ch, 1.0), (x0, y0 + ch, -1.0),
                                     (x0 + cw, y0, -1.0), (x0, y0, 1.0)):
                    cdx.append(cx)
                    cdy.append(cy)
                    coef.append(sign * weight * norm)
        self._cdx = np.asarray(cdx, dtype=np.intp)
        self._cdy = np.asarray(cdy, dtype=np.intp)
        self._coef = np.asarray(coef, dtype=np.float64)
        self._starts = np.asarray(starts, dtype=np.intp)

    def __len__(self) -> int:
        return len(self.features)

    def subset(self, indices) -> "FeatureBank":
        return FeatureBank([self.features[i] for i in indices], self.patch_w, self.patch_h,
                           self.offset)

    def responses(self, ii: IntegralImage, xs, ys) -> np.ndarray:
        """Responses for anchors ``(xs[i], ys[i])`` as an ``(n_anchors, n_features)`` array.

        Anchors must keep every patch inside the image; callers clip first.
        """
        xs = np.asarray(xs, dtype=np.intp).reshape(-1, 1)
        ys = np.asarray(ys, dtype=np.intp).reshape(-1, 1)
        if len(self.features) == 0:
            return np.zeros((xs.shape[0], 0))
        vals = ii.table[ys + self._cdy, xs + self._cdx] * self._coef
        return np.add.reduceat(vals, self._starts, axis=1)
