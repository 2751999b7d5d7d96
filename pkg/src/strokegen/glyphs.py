"""Parametric polyline capitals used by the synthetic dataset generator.

Each glyph is a list of strokes; each stroke is a polyline of (x, y) control
points in glyph space: x grows right from 0, y grows UP from the baseline
(0) to cap height (1). Strokes per letter range from 1 to 4 so generated
sequences contain pen lifts both within and between letters.
"""

from __future__ import annotations

import numpy as np

# fmt: off
GLYPHS: dict[str, list[list[tuple[float, float]]]] = {
    "A": [[(0.0, 0.0), (0.3, 1.0), (0.6, 0.0)], [(0.12, 0.4), (0.48, 0.4)]],
    "B": [[(0.0, 0.0), (0.0, 1.0)],
          [(0.0, 1.0), (0.5, 0.88), (0.5, 0.58), (0.0, 0.52)],
          [(0.0, 0.52), (0.58, 0.42), (0.58, 0.1), (0.0, 0.0)]],
    "C": [[(0.58, 0.85), (0.3, 1.0), (0.0, 0.75), (0.0, 0.25), (0.3, 0.0), (0.58, 0.15)]],
    "D": [[(0.0, 0.0), (0.0, 1.0)],
          [(0.0, 1.0), (0.55, 0.78), (0.55, 0.22), (0.0, 0.0)]],
    "E": [[(0.0, 0.0), (0.0, 1.0)], [(0.0, 1.0), (0.55, 1.0)],
          [(0.0, 0.5), (0.45, 0.5)], [(0.0, 0.0), (0.55, 0.0)]],
    "F": [[(0.0, 0.0), (0.0, 1.0)], [(0.0, 1.0), (0.55, 1.0)],
          [(0.0, 0.5), (0.42, 0.5)]],
    "G": [[(0.58, 0.85), (0.3, 1.0), (0.0, 0.75), (0.0, 0.25), (0.3, 0.0), (0.58, 0.12)],
          [(0.58, 0.12), (0.58, 0.45), (0.35, 0.45)]],
    # crossbar drawn second so consecutive strokes never jump far in x
    # (keeps intra-word gaps well below the smallest word gap)
    "H": [[(0.0, 0.0), (0.0, 1.0)], [(0.0, 0.5), (0.6, 0.5)],
          [(0.6, 0.0), (0.6, 1.0)]],
    "I": [[(0.0, 0.0), (0.0, 1.0)]],
    "J": [[(0.5, 1.0), (0.5, 0.2), (0.3, 0.0), (0.05, 0.12)]],
    "K": [[(0.0, 0.0), (0.0, 1.0)], [(0.0, 0.45), (0.52, 1.0)],
          [(0.16, 0.58), (0.55, 0.0)]],
    "L": [[(0.0, 1.0), (0.0, 0.0), (0.5, 0.0)]],
    "M": [[(0.0, 0.0), (0.0, 1.0), (0.32, 0.35), (0.64, 1.0), (0.64, 0.0)]],
    "N": [[(0.0, 0.0), (0.0, 1.0), (0.6, 0.0), (0.6, 1.0)]],
    "O": [[(0.3, 0.0), (0.0, 0.25), (0.0, 0.75), (0.3, 1.0), (0.6, 0.75), (0.6, 0.25), (0.3, 0.0)]],
    "P": [[(0.0, 0.0), (0.0, 1.0)],
          [(0.0, 1.0), (0.55, 0.9), (0.55, 0.55), (0.0, 0.45)]],
    "Q": [[(0.3, 0.0), (0.0, 0.25), (0.0, 0.75), (0.3, 1.0), (0.6, 0.75), (0.6, 0.25), (0.3, 0.0)],
          [(0.4, 0.25), (0.66, -0.06)]],
    "R": [[(0.0, 0.0), (0.0, 1.0)],
          [(0.0, 1.0), (0.55, 0.9), (0.55, 0.55), (0.0, 0.45)],
          [(0.14, 0.45), (0.6, 0.0)]],
    "S": [[(0.55, 0.85), (0.3, 1.0), (0.05, 0.85), (0.3, 0.55), (0.55, 0.22), (0.3, 0.0), (0.05, 0.12)]],
    "T": [[(0.0, 1.0), (0.6, 1.0)], [(0.3, 1.0), (0.3, 0.0)]],
    "U": [[(0.0, 1.0), (0.0, 0.25), (0.3, 0.0), (0.6, 0.25), (0.6, 1.0)]],
    "V": [[(0.0, 1.0), (0.3, 0.0), (0.6, 1.0)]],
    "W": [[(0.0, 1.0), (0.16, 0.0), (0.32, 0.6), (0.48, 0.0), (0.64, 1.0)]],
    "X": [[(0.0, 1.0), (0.6, 0.0)], [(0.6, 1.0), (0.0, 0.0)]],
    "Y": [[(0.0, 1.0), (0.3, 0.5)], [(0.6, 1.0), (0.3, 0.5), (0.3, 0.0)]],
    "Z": [[(0.0, 1.0), (0.6, 1.0), (0.0, 0.0), (0.6, 0.0)]],
}
# fmt: on

# every character of a sample occupies exactly this many sequence points,
# space characters included (they march pen-up across the word gap)
POINTS_PER_CHAR = 8


def glyph_width(char: str) -> float:
    """Nominal advance width of a glyph (max x over its control points)."""
    return max(x for stroke in GLYPHS[char] for x, _ in stroke)


def _polyline_length(points: np.ndarray) -> float:
    return float(np.sum(np.hypot(*np.diff(points, axis=0).T)))


def _resample(points: np.ndarray, count: int) -> np.ndarray:
    """Arc-length uniform resampling of a polyline to `count` points."""
    seg = np.hypot(*np.diff(points, axis=0).T)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = cum[-1]
    if total == 0.0:
        return np.repeat(points[:1], count, axis=0)
    targets = np.linspace(0.0, total, count)
    xs = np.interp(targets, cum, points[:, 0])
    ys = np.interp(targets, cum, points[:, 1])
    return np.column_stack([xs, ys])


def glyph_points(char: str) -> list[np.ndarray]:
    """Strokes of a glyph resampled so the whole letter has POINTS_PER_CHAR points.

    Points are distributed across strokes proportionally to stroke length,
    with a minimum of 2 per stroke.
    """
    strokes = [np.asarray(s, dtype=np.float64) for s in GLYPHS[char]]
    lengths = np.array([_polyline_length(s) for s in strokes])
    counts = np.full(len(strokes), 2, dtype=int)
    spare = POINTS_PER_CHAR - counts.sum()
    if spare < 0:
        raise ValueError(f"glyph {char!r} has too many strokes for {POINTS_PER_CHAR} points")
    if spare > 0:
        weights = lengths / lengths.sum()
        extra = np.floor(weights * spare).astype(int)
        counts += extra
        # hand out the rounding remainder to the longest strokes
        for idx in np.argsort(-lengths, kind="stable")[: spare - extra.sum()]:
            counts[idx] += 1
    return [_resample(s, c) for s, c in zip(strokes, counts)]
