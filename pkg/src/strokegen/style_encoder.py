"""Multi-scale attention style encoder with a writer-ID pretraining head.

A style image is converted to a pyramid (full resolution plus Gaussian
downsampled variants), cut into P x P patches, and every patch token is the
sum of three parts: a bias-free linear projection of its pixels, a spatial
embedding looked up from a coarse G_h x G_w grid shared across scales, and
a per-scale embedding. The grid lookup hashes patch (i, j) proportionally:

    t_i = floor(i * G_h / (h/P)),  t_j = floor(j * G_w / (w/P))

so patches near the same place in the image land on the same grid cell no
matter the scale. A small transformer trunk contextualizes the tokens and a
linear head over the pooled tokens classifies the writer for pretraining.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch
from scipy import ndimage
from torch import nn

from .errors import DegenerateStroke, InvalidArgument, NumericalError
from .nn import EncoderBlock
from .stroke_core import (RasterImage, StrokeSequence, ink_bounding_box,
                          render)

PROVENANCE_DTYPE = np.dtype([("scale", np.int64), ("i", np.int64), ("j", np.int64),
                             ("t_i", np.int64), ("t_j", np.int64)])


@dataclass(frozen=True)
class MultiScaleConfig:
    full_size: tuple[int, int] = (128, 1024)
    scales: tuple[tuple[int, int], ...] = ((96, 768), (64, 512))
    patch: int = 16
    grid: tuple[int, int] = (4, 32)
    dim: int = 96
    heads: int = 4
    layers: int = 4
    channels: int = 1
    local_crop: tuple[int, int] = (77, 384)

    def __post_init__(self):
        h, w = self.full_size
        for (sh, sw) in self.sizes:
            if sh % self.patch or sw % self.patch:
                raise InvalidArgument(
                    f"size {sh}x{sw} not divisible by patch {self.patch}")
            if sh > h or sw > w:
                raise InvalidArgument("scaled size exceeds full resolution")
        gh, gw = self.grid
        if gh > h // self.patch or gw > w // self.patch:
            raise InvalidArgument(
                f"grid {gh}x{gw} exceeds full-resolution patch counts")
        if gh < 1 or gw < 1:
            raise InvalidArgument("grid must be at least 1x1")
        ch, cw = self.local_crop
        if ch > h or cw > w:
            raise InvalidArgument("local_crop larger than the full image")
        if self.dim % self.heads:
            raise InvalidArgument(f"dim {self.dim} not divisible by heads {self.heads}")

    @property
    def sizes(self) -> tuple[tuple[int, int], ...]:
        return (self.full_size,) + tuple(self.scales)

    @property
    def num_scales(self) -> int:
        return 1 + len(self.scales)

    def tokens_at(self, k: int) -> int:
        h, w = self.sizes[k]
        return (h // self.patch) * (w // self.patch)

    @property
    def total_tokens(self) -> int:
        return sum(self.tokens_at(k) for k in range(self.num_scales))


def hash_spatial_index(i: int, j: int, h: int, w: int, patch: int,
                       g_h: int, g_w: int) -> tuple[int, int]:
    """Grid cell of patch (i, j) in an h x w image cut into patch-sized
    squares. Exact integer arithmetic, floored."""
    rows, cols = h // patch, w // patch
    if not (0 <= i < rows and 0 <= j < cols):
        raise InvalidArgument(
            f"patch ({i}, {j}) outside {rows}x{cols} patch grid")
    return (i * g_h) // rows, (j * g_w) // cols


def token_provenance(cfg: MultiScaleConfig) -> np.ndarray:
    """Per-token (scale, i, j, t_i, t_j) records in embedding order: all
    full-resolution patches row-major, then each coarser scale."""
    records = []
    for k, (h, w) in enumerate(cfg.sizes):
        for i in range(h // cfg.patch):
            for j in range(w // cfg.patch):
                t_i, t_j = hash_spatial_index(i, j, h, w, cfg.patch, *cfg.grid)
                records.append((k, i, j, t_i, t_j))
    return np.array(records, dtype=PROVENANCE_DTYPE)


def gaussian_downsample(img: RasterImage, target: tuple[int, int]) -> RasterImage:
    """Blur-then-bilinear-resample to `target` (h, w). The blur sigma is half
    the per-axis shrink factor, so energy spreads enough for the sparser
    sampling to see it."""
    th, tw = target
    if th > img.height or tw > img.width:
        raise InvalidArgument(
            f"cannot upscale {img.height}x{img.width} to {th}x{tw}")
    if th <= 0 or tw <= 0:
        raise InvalidArgument("target size must be positive")
    if (th, tw) == (img.height, img.width):
        return RasterImage(img.pixels.copy())
    fy = img.height / th
    fx = img.width / tw
    out = np.empty((th, tw, img.channels), dtype=np.float64)
    yy = (np.arange(th) + 0.5) * fy - 0.5
    xx = (np.arange(tw) + 0.5) * fx - 0.5
    coords = np.meshgrid(yy, xx, indexing="ij")
    for c in range(img.channels):
        plane = img.pixels[:, :, c]
        if fy > 1.0 or fx > 1.0:
            plane = ndimage.gaussian_filter(
                plane, sigma=(0.5 * fy, 0.5 * fx), mode="reflect")
        out[:, :, c] = ndimage.map_coordinates(
            plane, coords, order=1, mode="nearest")
    return RasterImage(np.clip(out, 0.0, 1.0))


def build_pyramid(img: RasterImage, cfg: MultiScaleConfig) -> list[np.ndarray]:
    """Grayscale (h, w) planes for every configured scale, largest first.
    Inputs larger than cfg.full_size are downsampled onto it first."""
    gray = RasterImage(img.gray()[:, :, None])
    if (gray.height, gray.width) != cfg.full_size:
        gray = gaussian_downsample(gray, cfg.full_size)
    planes = [gray.pixels[:, :, 0]]
    for size in cfg.scales:
        planes.append(gaussian_downsample(gray, size).pixels[:, :, 0])
    return planes


def render_style_image(strokes: StrokeSequence, cfg: MultiScaleConfig) -> RasterImage:
    """Render strokes at cfg.full_size for use as a style reference.

    The canvas assumes line coordinates (unit square to canvas height), but
    sequences arrive pen-anchored with the ink placed anywhere. The ink is
    shifted (never scaled) so its box is vertically centered on the canvas
    and starts just inside the left edge; size, slant, and spacing cues all
    survive the shift.

    The proportional line width (2 px at 128 px height) drops below a
    pixel on small canvases, and the resulting faint ink starves the
    patch encoder of signal, so the width is floored at 1.5 px.
    """
    h, w = cfg.full_size
    try:
        x0, y0, x1, y1 = ink_bounding_box(strokes)
    except DegenerateStroke:
        return render(strokes, h, w, line_width=max(1.5, 2.0 * h / 128.0))
    offsets = strokes.offsets.copy()
    offsets[0, 0] += 0.05 - x0
    offsets[0, 1] += 0.5 - (y0 + y1) / 2.0
    shifted = StrokeSequence.from_arrays(offsets, strokes.pen)
    return render(shifted, h, w, line_width=max(1.5, 2.0 * h / 128.0))


@dataclass
class MultiScaleStyleFeatures:
    """Contextualized patch features with per-patch provenance."""

    features: torch.Tensor       # (N, D)
    provenance: np.ndarray       # PROVENANCE_DTYPE, length N
    cfg: MultiScaleConfig

    def __post_init__(self):
        if self.features.shape[0] != len(self.provenance):
            raise InvalidArgument("features and provenance lengths differ")

    def __len__(self) -> int:
        return self.features.shape[0]


class StyleEncoder(nn.Module):
    """Patch + spatial + scale embeddings, transformer trunk, writer head."""

    def __init__(self, cfg: MultiScaleConfig, num_writers: int):
        super().__init__()
        if num_writers < 1:
            raise InvalidArgument("need at least one writer class")
        self.cfg = cfg
        self.num_writers = num_writers
        # bias-free so zero pixels + zero tables give exactly zero tokens
        self.patch_proj = nn.Linear(cfg.patch * cfg.patch, cfg.dim, bias=False)
        self.spatial_table = nn.Parameter(
            torch.randn(cfg.grid[0], cfg.grid[1], cfg.dim) * 0.02)
        self.scale_table = nn.Parameter(
            torch.randn(cfg.num_scales, cfg.dim) * 0.02)
        self.blocks = nn.ModuleList(
            EncoderBlock(cfg.dim, cfg.heads) for _ in range(cfg.layers))
        self.out_norm = nn.LayerNorm(cfg.dim)
        self.writer_head = nn.Linear(cfg.dim, num_writers)

        prov = token_provenance(cfg)
        self._provenance = prov
        cells = torch.from_numpy(
            (prov["t_i"] * cfg.grid[1] + prov["t_j"]).astype(np.int64))
        scales = torch.from_numpy(prov["scale"].astype(np.int64))
        self.register_buffer("token_cells", cells, persistent=False)
        self.register_buffer("token_scales", scales, persistent=False)

    @property
    def provenance(self) -> np.ndarray:
        return self._provenance

    def _patchify(self, plane: torch.Tensor) -> torch.Tensor:
        """(B, h, w) -> (B, n_patches, P*P), row-major patch order."""
        p = self.cfg.patch
        b, h, w = plane.shape
        x = plane.reshape(b, h // p, p, w // p, p)
        return x.permute(0, 1, 3, 2, 4).reshape(b, (h // p) * (w // p), p * p)

    def embed_patches(self, pyramid: Sequence[torch.Tensor]) -> torch.Tensor:
        """Pyramid of (B, h_k, w_k) planes -> (B, N, D) embedded tokens."""
        if len(pyramid) != self.cfg.num_scales:
            raise InvalidArgument(
                f"expected {self.cfg.num_scales} scales, got {len(pyramid)}")
        for k, plane in enumerate(pyramid):
            if tuple(plane.shape[-2:]) != self.cfg.sizes[k]:
                raise InvalidArgument(
                    f"scale {k} shape {tuple(plane.shape[-2:])} != {self.cfg.sizes[k]}")
        patches = torch.cat([self._patchify(p) for p in pyramid], dim=1)
        tokens = self.patch_proj(patches)
        flat_table = self.spatial_table.reshape(-1, self.cfg.dim)
        tokens = tokens + flat_table[self.token_cells] + self.scale_table[self.token_scales]
        return tokens

    def forward(self, pyramid: Sequence[torch.Tensor]) -> torch.Tensor:
        x = self.embed_patches(pyramid)
        for block in self.blocks:
            x = block(x)
        return self.out_norm(x)

    def writer_logits(self, features: torch.Tensor) -> torch.Tensor:
        """(B, N, D) features -> (B, num_writers) logits via mean pooling."""
        return self.writer_head(features.mean(dim=1))


def encode_style(img: RasterImage, encoder: StyleEncoder) -> MultiScaleStyleFeatures:
    """Full-pipeline style features for one image, evaluation mode."""
    pyramid = build_pyramid(img, encoder.cfg)
    tensors = [torch.tensor(p, dtype=torch.float32)[None] for p in pyramid]
    was_training = encoder.training
    encoder.eval()
    try:
        with torch.no_grad():
            feats = encoder(tensors)[0]
    finally:
        encoder.train(was_training)
    if not torch.isfinite(feats).all():
        raise NumericalError("style features are not finite")
    return MultiScaleStyleFeatures(feats, encoder.provenance.copy(), encoder.cfg)


def classify_writer(features: MultiScaleStyleFeatures,
                    encoder: StyleEncoder) -> torch.Tensor:
    """Writer probability vector (sums to 1) for one image's features."""
    with torch.no_grad():
        logits = encoder.writer_logits(features.features[None])
    return torch.softmax(logits[0], dim=-1)


def local_style_patches(features: MultiScaleStyleFeatures,
                        crop: tuple[int, int] | None = None,
                        rng: np.random.Generator | None = None) -> MultiScaleStyleFeatures:
    """Restrict full-resolution tokens to those whose patch centers fall in a
    crop window (boundaries inclusive); coarse-scale tokens always pass.

    The window is centered unless an rng is given (training), in which case
    its top-left corner is drawn uniformly.
    """
    cfg = features.cfg
    ch, cw = cfg.local_crop if crop is None else crop
    h, w = cfg.full_size
    if ch > h or cw > w:
        raise InvalidArgument(f"crop {ch}x{cw} larger than image {h}x{w}")
    if ch <= 0 or cw <= 0:
        raise InvalidArgument("crop must be positive")
    if rng is None:
        y0 = (h - ch) / 2.0
        x0 = (w - cw) / 2.0
    else:
        y0 = float(rng.integers(0, h - ch + 1))
        x0 = float(rng.integers(0, w - cw + 1))
    prov = features.provenance
    cy = prov["i"] * cfg.patch + cfg.patch / 2.0
    cx = prov["j"] * cfg.patch + cfg.patch / 2.0
    inside = (cy >= y0) & (cy <= y0 + ch) & (cx >= x0) & (cx <= x0 + cw)
    keep = (prov["scale"] != 0) | inside
    idx = torch.from_numpy(np.flatnonzero(keep))
    return MultiScaleStyleFeatures(features.features[idx], prov[keep], cfg)
