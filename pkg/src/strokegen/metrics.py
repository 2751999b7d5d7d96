"""Image-space evaluation of rendered strokes, plus layout adherence.

PSNR and MSSIM are self-contained. Inception score and Frechet distance
need a pretrained classifier, so they sit behind a FeatureExtractor plug-in
and stay absent from reports unless one is supplied.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np
from scipy import linalg, ndimage

from .dataset import WordLayout
from .errors import InvalidArgument
from .stroke_core import RasterImage, StrokeSequence, offsets_to_absolute

PSNR_CAP_DB = 100.0


def _check_pair(a: RasterImage, b: RasterImage) -> None:
    if a.pixels.shape != b.pixels.shape:
        raise InvalidArgument(
            f"image shapes differ: {a.pixels.shape} vs {b.pixels.shape}")


def psnr(a: RasterImage, b: RasterImage) -> float:
    """Peak signal-to-noise ratio in dB on unit range, capped at 100 for
    identical images."""
    _check_pair(a, b)
    mse = float(np.mean((a.pixels - b.pixels) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(10.0 * math.log10(1.0 / mse), PSNR_CAP_DB)


def mssim(a: RasterImage, b: RasterImage, window: int = 11,
          c1: float = 0.01 ** 2, c2: float = 0.03 ** 2) -> float:
    """Mean SSIM over all valid sliding windows (uniform window, biased
    variances, standard stability constants on unit range)."""
    _check_pair(a, b)
    if window < 2 or window % 2 == 0:
        raise InvalidArgument(f"window must be odd and > 1, got {window}")
    if min(a.height, a.width) < window:
        raise InvalidArgument(
            f"image {a.height}x{a.width} smaller than window {window}")
    half = window // 2
    crop = (slice(half, a.height - half), slice(half, a.width - half))
    scores = []
    for c in range(a.channels):
        x = a.pixels[:, :, c]
        y = b.pixels[:, :, c]
        mu_x = ndimage.uniform_filter(x, window)[crop]
        mu_y = ndimage.uniform_filter(y, window)[crop]
        var_x = ndimage.uniform_filter(x * x, window)[crop] - mu_x * mu_x
        var_y = ndimage.uniform_filter(y * y, window)[crop] - mu_y * mu_y
        cov = ndimage.uniform_filter(x * y, window)[crop] - mu_x * mu_y
        num = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)
        den = (mu_x ** 2 + mu_y ** 2 + c1) * (var_x + var_y + c2)
        scores.append(float(np.mean(num / den)))
    return float(np.mean(scores))


class FeatureExtractor(Protocol):
    """Plug-in interface for IS/FID backbones."""

    def features(self, images: Sequence[RasterImage]) -> np.ndarray:
        """(n, d) feature rows."""
        ...

    def class_probs(self, images: Sequence[RasterImage]) -> np.ndarray:
        """(n, classes) rows summing to 1."""
        ...


def inception_score(probs: np.ndarray) -> float:
    """exp of the mean KL between per-image class posteriors and their
    marginal."""
    p = np.clip(np.asarray(probs, dtype=np.float64), 1e-12, 1.0)
    p = p / p.sum(axis=1, keepdims=True)
    marginal = p.mean(axis=0)
    kl = (p * (np.log(p) - np.log(marginal))).sum(axis=1)
    return float(np.exp(kl.mean()))


def frechet_distance(feat_a: np.ndarray, feat_b: np.ndarray) -> float:
    """Frechet distance between Gaussians fitted to two feature sets."""
    a = np.asarray(feat_a, dtype=np.float64)
    b = np.asarray(feat_b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise InvalidArgument("feature sets must be 2-D with equal width")
    mu_a, mu_b = a.mean(axis=0), b.mean(axis=0)
    cov_a = np.cov(a, rowvar=False)
    cov_b = np.cov(b, rowvar=False)
    cov_a = np.atleast_2d(cov_a)
    cov_b = np.atleast_2d(cov_b)
    covmean = linalg.sqrtm(cov_a @ cov_b)
    if np.iscomplexobj(covmean):
        covmean = covmean.real
    diff = mu_a - mu_b
    return float(diff @ diff + np.trace(cov_a + cov_b - 2.0 * covmean))


@dataclass
class MetricReport:
    psnr: float
    mssim: float
    n_pairs: int
    is_score: float | None = None
    fid: float | None = None
    layout_adherence: float | None = None

    def __post_init__(self):
        if not (-1.0 - 1e-9 <= self.mssim <= 1.0 + 1e-9):
            raise InvalidArgument(f"mssim {self.mssim} outside [-1, 1]")
        if not math.isfinite(self.psnr):
            raise InvalidArgument("psnr must be finite (identical images cap at 100)")

    def as_dict(self) -> dict:
        out = {"psnr": self.psnr, "mssim": self.mssim, "n_pairs": self.n_pairs}
        for key in ("is_score", "fid", "layout_adherence"):
            value = getattr(self, key)
            if value is not None:
                out[key] = value
        return out

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True, indent=2)

    def to_text(self) -> str:
        return "".join(f"{k} {v}\n" for k, v in sorted(self.as_dict().items()))


def batch_report(gen: Sequence[RasterImage], ref: Sequence[RasterImage],
                 feature_extractor: FeatureExtractor | None = None) -> MetricReport:
    """Mean pairwise PSNR/MSSIM; IS over generated images and FID between
    the two sets when an extractor is supplied."""
    if len(gen) == 0 or len(ref) == 0:
        raise InvalidArgument("empty image lists")
    if len(gen) != len(ref):
        raise InvalidArgument(f"{len(gen)} generated vs {len(ref)} reference images")
    psnrs = [psnr(g, r) for g, r in zip(gen, ref)]
    ssims = [mssim(g, r) for g, r in zip(gen, ref)]
    is_score = fid = None
    if feature_extractor is not None:
        is_score = inception_score(feature_extractor.class_probs(gen))
        fid = frechet_distance(feature_extractor.features(gen),
                               feature_extractor.features(ref))
    return MetricReport(float(np.mean(psnrs)), float(np.mean(ssims)),
                        len(gen), is_score=is_score, fid=fid)


# ---------------------------------------------------------------------------
# layout adherence

def layout_adherence(seq: StrokeSequence, layout: WordLayout,
                     dilation: float = 0.15) -> float:
    """Fraction of pen-down points (pen bit 0, absolute coordinates) inside
    the union of layout boxes dilated by `dilation` line-heights on every
    side. A sequence with no pen-down points scores 0."""
    counts = layout_adherence_counts(seq, layout, dilation)
    inside, total = counts
    return inside / total if total else 0.0


def layout_adherence_counts(seq: StrokeSequence, layout: WordLayout,
                            dilation: float = 0.15) -> tuple[int, int]:
    """(points inside, pen-down points) for pooling across many samples."""
    if dilation < 0:
        raise InvalidArgument("dilation must be non-negative")
    points = offsets_to_absolute(seq)
    down = points[seq.pen == 0][:, :2]
    if len(down) == 0:
        return 0, 0
    boxes = [b.dilated(dilation) for b in layout]
    inside = np.zeros(len(down), dtype=bool)
    for box in boxes:
        inside |= ((down[:, 0] >= box.x0) & (down[:, 0] <= box.x1)
                   & (down[:, 1] >= box.y0) & (down[:, 1] <= box.y1))
    return int(inside.sum()), len(down)


def pooled_adherence(pairs: Sequence[tuple[StrokeSequence, WordLayout]],
                     dilation: float = 0.15) -> float:
    """Adherence pooled over many (sequence, layout) pairs."""
    inside = total = 0
    for seq, layout in pairs:
        i, t = layout_adherence_counts(seq, layout, dilation)
        inside += i
        total += t
    return inside / total if total else 0.0
