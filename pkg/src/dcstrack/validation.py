"""Input validation helpers and the package's exception types."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np


class BoundsError(IndexError):
    """A rectangle does not fit inside the image it is evaluated against."""


class DegenerateFeatureError(ValueError):
    """A Haar feature collapses to a zero-pixel sub-rectangle at some patch size."""


class SamplingError(RuntimeError):
    """No admissible sample positions remain after clipping to the frame."""


class ProtocolError(ValueError):
    """Ground truth does not cover the frames an evaluation needs."""


class ExhaustedPoolError(ValueError):
    """Every pool index has been excluded from selection."""


class Rect(NamedTuple):
    """Axis-aligned box in 0-based pixel coordinates (top-left corner + extent)."""

    x: int
    y: int
    w: int
    h: int

    @property
    def center(self) -> tuple[float, float]:
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)

    @property
    def area(self) -> int:
        return self.w * self.h

    def shift(self, dx: int, dy: int) -> "Rect":
        return Rect(self.x + dx, self.y + dy, self.w, self.h)

    def inside(self, width: int, height: int) -> bool:
        return (
            self.x >= 0
            and self.y >= 0
            and self.x + self.w <= width
            and self.y + self.h <= height
        )


def check_rect(rect, name: str = "rect") -> Rect:
    """Coerce a 4-sequence to :class:`Rect` and require positive extents."""
    try:
        x, y, w, h = (int(v) for v in rect)
    except (TypeError, ValueError) as exc:
        raise ValueError(f"{name} must be four integers x,y,w,h, got {rect!r}") from exc
    if w <= 0 or h <= 0:
        raise ValueError(f"{name} must have w>0 and h>0, got {(x, y, w, h)}")
    return Rect(x, y, w, h)


def check_frame(frame) -> np.ndarray:
    """Return ``frame`` as a 2-D float64 array, rejecting empty or non-finite input."""
    arr = np.asarray(frame, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"frame must be 2-D (height, width), got shape {arr.shape}")
    if arr.shape[0] == 0 or arr.shape[1] == 0:
        raise ValueError("frame must have positive width and height")
    if not np.all(np.isfinite(arr)):
        raise ValueError("frame contains non-finite intensities")
    return arr


def check_labels(y, name: str = "y") -> np.ndarray:
    """Return ``y`` as a float64 vector whose entries are all -1 or +1."""
    arr = np.asarray(y, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {arr.shape}")
    if not np.all((arr == 1.0) | (arr == -1.0)):
        raise ValueError(f"{name} entries must be -1 or +1")
    return arr
