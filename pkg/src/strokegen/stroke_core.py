"""Stroke-sequence data model, coordinate conventions, and rasterization.

Conventions used throughout the package:

* A stroke sequence is an ordered list of (dx, dy, pen) triples. dx/dy are
  offsets from the previous point in normalized line units (x right, y down).
  pen is binary: 0 = the pen was writing while moving to the NEXT point,
  1 = the pen was lifted (no ink on the segment leaving this point).
* Absolute coordinates are recovered by cumulative summation; the first
  point sits at origin + (dx0, dy0).
* One line of text nominally spans y in [0, 1] ("line units").
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DegenerateStroke, InvalidArgument, InvalidStroke


class StrokePoint(NamedTuple):
    dx: float
    dy: float
    pen: int


class StrokeSequence:
    """Immutable ordered sequence of stroke points.

    Backed by a read-only (N, 2) float64 offset array and an (N,) uint8 pen
    array. All operations on it are pure.
    """

    __slots__ = ("_offsets", "_pen")

    def __init__(self, points):
        arr = np.asarray(points, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[1] != 3:
            raise InvalidStroke(f"expected (N, 3) points, got shape {arr.shape}")
        if arr.shape[0] < 1:
            raise InvalidStroke("a stroke sequence needs at least one point")
        offsets = arr[:, :2].copy()
        pen = arr[:, 2]
        if not np.all(np.isfinite(offsets)):
            raise InvalidStroke("non-finite offset")
        if not np.all((pen == 0) | (pen == 1)):
            raise InvalidStroke("pen bits must be 0 or 1")
        offsets.setflags(write=False)
        pen_u8 = pen.astype(np.uint8)
        pen_u8.setflags(write=False)
        self._offsets = offsets
        self._pen = pen_u8

    @classmethod
    def from_arrays(cls, offsets, pen) -> "StrokeSequence":
        offsets = np.asarray(offsets, dtype=np.float64)
        pen = np.asarray(pen, dtype=np.float64).reshape(-1, 1)
        return cls(np.hstack([offsets.reshape(len(pen), 2), pen]))

    @property
    def offsets(self) -> np.ndarray:
        """(N, 2) read-only array of (dx, dy)."""
        return self._offsets

    @property
    def pen(self) -> np.ndarray:
        """(N,) read-only array of pen bits (0 = writing, 1 = lifted)."""
        return self._pen

    def __len__(self) -> int:
        return self._offsets.shape[0]

    def __iter__(self):
        for (dx, dy), p in zip(self._offsets, self._pen):
            yield StrokePoint(float(dx), float(dy), int(p))

    def __eq__(self, other) -> bool:
        if not isinstance(other, StrokeSequence):
            return NotImplemented
        return np.array_equal(self._offsets, other._offsets) and np.array_equal(
            self._pen, other._pen
        )

    def __repr__(self) -> str:
        return f"StrokeSequence(n={len(self)})"

    def to_list(self) -> list[list[float]]:
        """Plain-python [[dx, dy, pen], ...] rows, e.g. for JSON encoding."""
        return [[float(dx), float(dy), int(p)] for (dx, dy), p in zip(self._offsets, self._pen)]

    def scaled(self, factor: float) -> "StrokeSequence":
        """Uniformly scale all offsets. Pen bits are preserved."""
        if not (math.isfinite(factor) and factor > 0):
            raise InvalidArgument(f"scale factor must be finite and positive, got {factor}")
        return StrokeSequence.from_arrays(self._offsets * factor, self._pen)


@dataclass(frozen=True)
class RasterImage:
    """Grayscale-or-color raster with pixel values in [0, 1], shape (H, W, C)."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim == 2:
            px = px[:, :, None]
        if px.ndim != 3 or px.size == 0:
            raise InvalidArgument(f"expected non-empty (H, W[, C]) pixels, got shape {px.shape}")
        if px.min() < 0.0 or px.max() > 1.0:
            raise InvalidArgument("pixel values must lie in [0, 1]")
        px = px.copy()
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]

    def gray(self) -> np.ndarray:
        """(H, W) channel-mean view of the image."""
        return self.pixels.mean(axis=2)


def offsets_to_absolute(seq: StrokeSequence, origin: tuple[float, float] = (0.0, 0.0)) -> np.ndarray:
    """Cumulative-sum offsets into absolute coordinates.

    Returns an (N, 3) array of (x, y, pen); row 0 is origin + (dx0, dy0).
    """
    ox, oy = origin
    if not (math.isfinite(ox) and math.isfinite(oy)):
        raise InvalidStroke("non-finite origin")
    xy = np.cumsum(seq.offsets, axis=0)
    xy = xy + np.array([ox, oy])
    return np.column_stack([xy, seq.pen.astype(np.float64)])


def absolute_to_offsets(points) -> StrokeSequence:
    """Difference absolute (x, y, pen) points back into a StrokeSequence.

    Inverse of offsets_to_absolute with origin (0, 0), up to float round-off.
    """
    arr = np.asarray(points, dtype=np.float64)
    if arr.size == 0:
        raise InvalidStroke("empty input")
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise InvalidStroke(f"expected (N, 3) points, got shape {arr.shape}")
    offsets = np.diff(arr[:, :2], axis=0, prepend=np.zeros((1, 2)))
    return StrokeSequence.from_arrays(offsets, arr[:, 2])


def ink_mask(seq: StrokeSequence) -> np.ndarray:
    """(N,) bool mask of points that participate in a drawn segment.

    Point i is ink if the segment i -> i+1 is drawn (pen_i == 0) or the
    segment i-1 -> i was (pen_{i-1} == 0). A trailing point reached with the
    pen down is ink even if its own bit is 1 (the pen lifts after it).
    """
    down = seq.pen == 0
    # the last point draws no outgoing segment
    starts = down.copy()
    starts[-1] = False
    mask = starts.copy()
    mask[1:] |= down[:-1]
    return mask


def ink_bounding_box(seq: StrokeSequence) -> tuple[float, float, float, float]:
    """(x0, y0, x1, y1) box of the absolute ink points. Raises if there is no ink."""
    mask = ink_mask(seq)
    if not mask.any():
        raise DegenerateStroke("sequence contains no drawn segment")
    pts = offsets_to_absolute(seq)[mask, :2]
    x0, y0 = pts.min(axis=0)
    x1, y1 = pts.max(axis=0)
    return float(x0), float(y0), float(x1), float(y1)


def normalize(seq: StrokeSequence) -> StrokeSequence:
    """Rescale and translate so the ink bounding box has height 1 at origin.

    Aspect ratio is preserved; pen bits are untouched. Sequences with no ink
    or a zero-height ink box are rejected.
    """
    x0, y0, x1, y1 = ink_bounding_box(seq)
    height = y1 - y0
    if height <= 0.0:
        raise DegenerateStroke("ink bounding box has zero height")
    absolute = offsets_to_absolute(seq)
    absolute[:, 0] = (absolute[:, 0] - x0) / height
    absolute[:, 1] = (absolute[:, 1] - y0) / height
    return absolute_to_offsets(absolute)


def render(
    seq: StrokeSequence,
    height: int,
    width: int,
    line_width: float | None = None,
    margin_fraction: float = 0.08,
) -> RasterImage:
    """Rasterize a sequence to dark anti-aliased polylines on white.

    The unit square of line coordinates maps to the canvas height minus a
    margin, so a normalized sequence (ink height 1) fills the image
    vertically. Ink wider than the canvas is clipped. Deterministic: the
    same input always yields a bit-identical image.

    Args:
        seq: sequence in line units.
        height, width: canvas size in pixels.
        line_width: stroke thickness in pixels; defaults to 2 px at
            height 128, scaled proportionally.
        margin_fraction: blank border as a fraction of the canvas height.
    """
    if height <= 0 or width <= 0:
        raise InvalidArgument(f"canvas dimensions must be positive, got {height}x{width}")
    if line_width is None:
        line_width = 2.0 * height / 128.0
    if not (math.isfinite(line_width) and line_width > 0):
        raise InvalidArgument(f"line width must be positive, got {line_width}")

    margin = margin_fraction * height
    scale = height - 2.0 * margin
    pts = offsets_to_absolute(seq)
    px = pts[:, 0] * scale + margin
    py = pts[:, 1] * scale + margin

    ink = np.zeros((height, width), dtype=np.float64)
    half = line_width / 2.0
    reach = half + 1.0  # AA ramp extends ~1 px beyond the core

    for i in range(len(seq) - 1):
        if seq.pen[i] != 0:
            continue
        _stamp_segment(ink, px[i], py[i], px[i + 1], py[i + 1], half, reach)

    return RasterImage(1.0 - ink)


def _stamp_segment(ink, ax, ay, bx, by, half, reach):
    """Max-composite one segment's anti-aliased coverage into `ink`."""
    h, w = ink.shape
    x_lo = max(int(math.floor(min(ax, bx) - reach)), 0)
    x_hi = min(int(math.ceil(max(ax, bx) + reach)) + 1, w)
    y_lo = max(int(math.floor(min(ay, by) - reach)), 0)
    y_hi = min(int(math.ceil(max(ay, by) + reach)) + 1, h)
    if x_lo >= x_hi or y_lo >= y_hi:
        return

    ys, xs = np.mgrid[y_lo:y_hi, x_lo:x_hi]
    # distance from pixel centers to the segment
    dx, dy = bx - ax, by - ay
    len_sq = dx * dx + dy * dy
    if len_sq == 0.0:
        dist = np.hypot(xs + 0.5 - ax, ys + 0.5 - ay)
    else:
        t = ((xs + 0.5 - ax) * dx + (ys + 0.5 - ay) * dy) / len_sq
        t = np.clip(t, 0.0, 1.0)
        dist = np.hypot(xs + 0.5 - (ax + t * dx), ys + 0.5 - (ay + t * dy))

    coverage = np.clip(half + 0.5 - dist, 0.0, 1.0)
    region = ink[y_lo:y_hi, x_lo:x_hi]
    np.maximum(region, coverage, out=region)
