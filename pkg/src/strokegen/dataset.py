"""Samples, layouts, JSONL storage, and the synthetic multi-writer corpus.

A sample couples a text line with its stroke sequence, a writer id, and one
bounding box per word in line coordinates. Sequences follow the convention
from stroke_core: pen=0 draws to the next point, offsets accumulate from the
line origin, y grows downward, one line of text is ~1 unit tall.

File format is JSON lines, one sample per line:

    {"text": str, "writer_id": int,
     "strokes": [[dx, dy, pen], ...],
     "layout": [{"word": str, "bbox": [x0, y0, x1, y1]}, ...]}

Loaders for corpora that use other pen conventions must convert on ingest;
nothing downstream re-checks the convention.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    InvalidArgument,
    LayoutError,
    LayoutUnderflow,
    ParseError,
    ValidationError,
)
from .glyphs import GLYPHS, POINTS_PER_CHAR, glyph_points, glyph_width
from .stroke_core import StrokeSequence, ink_mask, offsets_to_absolute

BASELINE_Y = 0.85  # baseline depth within the unit-high line, y-down


def _is_printable_ascii(text: str) -> bool:
    return all(32 <= ord(c) < 127 for c in text)


@dataclass(frozen=True)
class WordBox:
    word: str
    x0: float
    y0: float
    x1: float
    y1: float

    def as_dict(self) -> dict:
        return {"word": self.word, "bbox": [self.x0, self.y0, self.x1, self.y1]}

    def dilated(self, margin: float) -> "WordBox":
        return WordBox(self.word, self.x0 - margin, self.y0 - margin,
                       self.x1 + margin, self.y1 + margin)

    def contains(self, x: float, y: float) -> bool:
        return self.x0 <= x <= self.x1 and self.y0 <= y <= self.y1


class WordLayout:
    """Ordered word bounding boxes for one text line."""

    def __init__(self, boxes: Sequence[WordBox]):
        boxes = list(boxes)
        if not boxes:
            raise LayoutError("layout needs at least one word box")
        for b in boxes:
            if not b.word or " " in b.word:
                raise LayoutError(f"bad layout word {b.word!r}")
            if not (b.x0 < b.x1 and b.y0 < b.y1):
                raise LayoutError(f"degenerate box for {b.word!r}: "
                                  f"[{b.x0}, {b.y0}, {b.x1}, {b.y1}]")
            if not all(math.isfinite(v) for v in (b.x0, b.y0, b.x1, b.y1)):
                raise LayoutError(f"non-finite box for {b.word!r}")
        for a, b in zip(boxes, boxes[1:]):
            if b.x0 < a.x0:
                raise LayoutError("word boxes not ordered left to right")
        self.boxes = boxes

    def __len__(self) -> int:
        return len(self.boxes)

    def __iter__(self):
        return iter(self.boxes)

    def __getitem__(self, i: int) -> WordBox:
        return self.boxes[i]

    def __eq__(self, other) -> bool:
        if not isinstance(other, WordLayout):
            return NotImplemented
        return self.boxes == other.boxes

    @property
    def text(self) -> str:
        return " ".join(b.word for b in self.boxes)

    def translated(self, dx: float, dy: float) -> "WordLayout":
        return WordLayout([WordBox(b.word, b.x0 + dx, b.y0 + dy, b.x1 + dx, b.y1 + dy)
                           for b in self.boxes])

    def as_list(self) -> list[dict]:
        return [b.as_dict() for b in self.boxes]

    @classmethod
    def from_list(cls, items: Sequence[dict]) -> "WordLayout":
        boxes = []
        for item in items:
            if set(item) != {"word", "bbox"}:
                raise LayoutError(f"layout entry keys {sorted(item)} != ['bbox', 'word']")
            bbox = item["bbox"]
            if not (isinstance(bbox, (list, tuple)) and len(bbox) == 4):
                raise LayoutError("bbox must be [x0, y0, x1, y1]")
            boxes.append(WordBox(item["word"], *(float(v) for v in bbox)))
        return cls(boxes)


@dataclass(frozen=True)
class Sample:
    text: str
    writer_id: int
    strokes: StrokeSequence
    layout: WordLayout

    def __post_init__(self):
        if not self.text:
            raise ValidationError(0, "empty text")
        if not _is_printable_ascii(self.text):
            raise ValidationError(0, f"text not printable ASCII: {self.text!r}")
        if not isinstance(self.writer_id, int) or self.writer_id < 0:
            raise ValidationError(0, f"bad writer_id {self.writer_id!r}")
        if self.layout.text != self.text:
            raise ValidationError(
                0, f"layout words {self.layout.text!r} do not spell text {self.text!r}")

    def as_dict(self) -> dict:
        return {
            "text": self.text,
            "writer_id": self.writer_id,
            "strokes": self.strokes.to_list(),
            "layout": self.layout.as_list(),
        }


_SAMPLE_KEYS = {"text", "writer_id", "strokes", "layout"}


def _sample_from_dict(obj: dict) -> Sample:
    if not isinstance(obj, dict):
        raise ValueError("sample must be a JSON object")
    if set(obj) != _SAMPLE_KEYS:
        raise ValueError(f"sample keys {sorted(obj)} != {sorted(_SAMPLE_KEYS)}")
    strokes = StrokeSequence(obj["strokes"])
    layout = WordLayout.from_list(obj["layout"])
    if not isinstance(obj["writer_id"], int) or isinstance(obj["writer_id"], bool):
        raise ValueError(f"writer_id must be an int, got {obj['writer_id']!r}")
    return Sample(obj["text"], obj["writer_id"], strokes, layout)


def load_samples(path) -> list[Sample]:
    """Read a JSONL sample file. Raises ParseError / ValidationError with
    1-based line numbers."""
    samples = []
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(lineno, str(exc)) from exc
            try:
                samples.append(_sample_from_dict(obj))
            except ValidationError as exc:
                raise ValidationError(lineno, exc.reason) from exc
            except Exception as exc:
                raise ValidationError(lineno, str(exc)) from exc
    return samples


def save_samples(path, samples: Iterable[Sample]) -> None:
    with open(path, "w", encoding="ascii") as fh:
        for sample in samples:
            fh.write(json.dumps(sample.as_dict()) + "\n")


# ---------------------------------------------------------------------------
# layout derivation from ink

def _stroke_groups(points: np.ndarray, pen: np.ndarray) -> list[np.ndarray]:
    """Split absolute points into maximal pen-down runs (each includes the
    final lift point of its run)."""
    groups = []
    i = 0
    n = len(pen)
    while i < n:
        if pen[i] == 0 and i + 1 < n:
            j = i
            while j + 1 < n and pen[j] == 0:
                j += 1
            groups.append(points[i:j + 1])
            i = j + 1
        else:
            i += 1
    return groups


def _bbox(points: np.ndarray) -> tuple[float, float, float, float]:
    x0, y0 = points.min(axis=0)
    x1, y1 = points.max(axis=0)
    if x1 <= x0:
        x1 = x0 + 1e-9
    if y1 <= y0:
        y1 = y0 + 1e-9
    return float(x0), float(y0), float(x1), float(y1)


def derive_layout(seq: StrokeSequence, text: str) -> WordLayout:
    """Recover per-word boxes from ink alone by splitting at the K-1 widest
    horizontal gaps between consecutive stroke groups.

    Raises LayoutUnderflow when the ink has fewer stroke groups than the
    text has words.
    """
    words = text.split(" ")
    if not words or any(not w for w in words):
        raise InvalidArgument(f"text {text!r} does not split into words")
    points = offsets_to_absolute(seq)[:, :2]
    groups = _stroke_groups(points, seq.pen)
    if len(groups) < len(words):
        raise LayoutUnderflow(
            f"{len(groups)} stroke groups cannot cover {len(words)} words")
    if len(words) == 1:
        return WordLayout([WordBox(words[0], *_bbox(np.concatenate(groups)))])

    ends = np.array([g[:, 0].max() for g in groups])
    starts = np.array([g[:, 0].min() for g in groups])
    gaps = starts[1:] - ends[:-1]  # gap after group k, k = 0..G-2
    cut_count = len(words) - 1
    order = np.argsort(-gaps, kind="stable")
    cuts = np.sort(order[:cut_count])
    clusters = []
    prev = 0
    for cut in cuts:
        clusters.append(np.concatenate(groups[prev:cut + 1]))
        prev = cut + 1
    clusters.append(np.concatenate(groups[prev:]))
    boxes = [WordBox(w, *_bbox(c)) for w, c in zip(words, clusters)]
    boxes.sort(key=lambda b: b.x0)
    # re-pair words with boxes left to right in reading order
    boxes = [WordBox(w, b.x0, b.y0, b.x1, b.y1) for w, b in zip(words, boxes)]
    return WordLayout(boxes)


# ---------------------------------------------------------------------------
# synthetic corpus

DEFAULT_VOCAB = (
    "AT", "BY", "DO", "GO", "IF", "IN", "ME", "NO", "OF", "ON", "OR", "TO", "UP", "WE",
    "AND", "ARE", "BOX", "CAT", "DOG", "FOR", "HAS", "JOY", "KEY", "LOW", "MIX",
    "NEW", "OLD", "PEN", "QUIZ", "RED", "SKY", "TOP", "VAN", "WHO", "YES", "ZIG",
    "BLUE", "DARK", "EAST", "FERN", "GOLD", "HAWK", "IRON", "JUMP", "KITE", "LAMP",
)


@dataclass(frozen=True)
class SyntheticWriterStyle:
    """Per-writer handwriting parameters for the synthetic generator."""

    writer_id: int
    slant: float        # radians, positive leans the letter tops rightward
    glyph_scale: float  # cap height in line units
    spacing: float      # gap between letter boxes in line units
    jitter: float       # per-point gaussian noise, line units

    def __post_init__(self):
        if not (0.0 < self.glyph_scale <= 1.0):
            raise InvalidArgument(f"glyph_scale {self.glyph_scale} outside (0, 1]")
        if abs(self.slant) > 0.6:
            raise InvalidArgument(f"slant {self.slant} too steep to stay legible")


def writer_styles(num_writers: int, seed: int) -> list[SyntheticWriterStyle]:
    """Deterministic style table. Slants step by 0.1 rad; scale and spacing
    are evenly spaced but independently shuffled so no single feature orders
    the writers."""
    if num_writers < 1:
        raise InvalidArgument("need at least one writer")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x57F1E5]))
    slants = (np.arange(num_writers) - (num_writers - 1) / 2) * 0.1
    ramp = (np.arange(num_writers) / max(num_writers - 1, 1))
    scales = 0.5 + 0.35 * rng.permutation(ramp)
    gaps = 0.06 + 0.10 * rng.permutation(ramp)
    return [
        SyntheticWriterStyle(w, float(slants[w]), float(scales[w]),
                             float(gaps[w]), jitter=0.008)
        for w in range(num_writers)
    ]


def _render_word(word: str, style: SyntheticWriterStyle, cursor: float,
                 rng: np.random.Generator) -> tuple[list[np.ndarray], float]:
    """Absolute points for one word. Returns (per-stroke point arrays,
    cursor after the word). Points carry jitter."""
    shear = math.tan(style.slant)
    strokes_out = []
    x = cursor
    for ci, char in enumerate(word):
        if ci > 0:
            x += style.spacing
        for stroke in glyph_points(char):
            gx, gy = stroke[:, 0], stroke[:, 1]
            px = x + (gx + shear * gy) * style.glyph_scale
            py = BASELINE_Y - gy * style.glyph_scale
            pts = np.column_stack([px, py])
            pts = pts + rng.normal(0.0, style.jitter, size=pts.shape)
            strokes_out.append(pts)
        x += glyph_width(char) * style.glyph_scale
    return strokes_out, x


def _assemble(word_strokes: list[list[np.ndarray]]) -> tuple[np.ndarray, np.ndarray]:
    """Stitch per-word stroke lists into one absolute (N, 2) array plus pen
    bits, inserting POINTS_PER_CHAR pen-up points across each word gap."""
    points = []
    pen = []
    for wi, strokes in enumerate(word_strokes):
        if wi > 0:
            # march across the gap: evenly spaced pen-up points ending just
            # short of the next word's first point
            prev = points[-1]
            nxt = strokes[0][0]
            for k in range(1, POINTS_PER_CHAR + 1):
                frac = k / (POINTS_PER_CHAR + 1)
                points.append(prev + frac * (nxt - prev))
                pen.append(1)
        for stroke in strokes:
            for pi, pt in enumerate(stroke):
                points.append(pt)
                pen.append(0 if pi + 1 < len(stroke) else 1)
    return np.asarray(points), np.asarray(pen, dtype=np.uint8)


def generate_sample(text: str, style: SyntheticWriterStyle,
                    rng: np.random.Generator,
                    word_gap_range: tuple[float, float] = (0.7, 1.4)) -> Sample:
    """One synthetic sample for `text` (capital words separated by single
    spaces) in the given writer style.

    The default word gap floor (0.7) keeps measured word gaps above any
    intra-word group gap even at maximum shear, so largest-gap layout
    derivation recovers the generator's own boxes. Coordinates are anchored
    so the pen starts at the origin: the first offset carries no absolute
    position, and the layout boxes live in the same pen-anchored frame."""
    words = text.split(" ")
    if any(not w or any(c not in GLYPHS for c in w) for w in words):
        raise InvalidArgument(f"text {text!r} must be capital A-Z words")
    word_strokes = []
    boxes = []
    cursor = 0.0
    for wi, word in enumerate(words):
        if wi > 0:
            cursor += float(rng.uniform(*word_gap_range))
        strokes, cursor = _render_word(word, style, cursor, rng)
        pts = np.concatenate(strokes)
        boxes.append(WordBox(word, *_bbox(pts)))
        word_strokes.append(strokes)
    points, pen = _assemble(word_strokes)
    shift = points[0].copy()
    points = points - shift
    layout = WordLayout(boxes).translated(-float(shift[0]), -float(shift[1]))
    offsets = np.diff(np.vstack([[0.0, 0.0], points]), axis=0)
    seq = StrokeSequence.from_arrays(offsets, pen)
    return Sample(text, style.writer_id, seq, layout)


def generate_synthetic(num_writers: int, per_writer: int, seed: int,
                       vocab: Sequence[str] = DEFAULT_VOCAB,
                       words_range: tuple[int, int] = (2, 3)) -> list[Sample]:
    """Deterministic multi-writer corpus. Same arguments, same samples."""
    if per_writer < 1:
        raise InvalidArgument("need at least one sample per writer")
    for word in vocab:
        if not word or any(c not in GLYPHS for c in word):
            raise InvalidArgument(f"vocab word {word!r} is not capital A-Z")
    styles = writer_styles(num_writers, seed)
    samples = []
    for w in range(num_writers):
        for s in range(per_writer):
            rng = np.random.default_rng(np.random.SeedSequence([seed, w, s]))
            n_words = int(rng.integers(words_range[0], words_range[1] + 1))
            words = [vocab[int(rng.integers(len(vocab)))] for _ in range(n_words)]
            samples.append(generate_sample(" ".join(words), styles[w], rng))
    return samples


def sequence_points_per_char(samples: Sequence[Sample]) -> float:
    """Mean sequence points per text character; the synthetic generator
    produces exactly POINTS_PER_CHAR."""
    total_pts = sum(len(s.strokes) for s in samples)
    total_chars = sum(len(s.text) for s in samples)
    return total_pts / total_chars


def ink_points(sample: Sample) -> np.ndarray:
    """Absolute coordinates of the points that participate in drawn
    segments."""
    points = offsets_to_absolute(sample.strokes)[:, :2]
    return points[ink_mask(sample.strokes)]
