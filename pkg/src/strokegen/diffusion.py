"""Conditional denoising diffusion over stroke sequences.

Offsets are standardized (per-component mean/std measured on the training
set) before noising; pen bits are never noised. The denoiser predicts the
exact noise draw plus a pen-down probability per point, and the ancestral
sampler runs the reverse chain

    y_{t-1} = (y_t - beta_t/sqrt(1-abar_t) * eps_hat) / sqrt(alpha_t) + sigma_t * z

with z = 0 at t = 1. The noise level enters the network as sqrt(abar_t)
through feature-wise affine modulation; conditioning enters only through
cross-attention, so zeroing those value projections provably disconnects it.

Schedule arrays are indexed by t - 1 for t in [1, T].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import torch
from torch import nn

from .dataset import Sample, WordLayout, sequence_points_per_char
from .errors import DivergenceError, InvalidArgument, NumericalError
from .nn import Attention, AffineModulation, Feedforward, sinusoidal_positions
from .stroke_core import RasterImage, StrokeSequence
from .style_encoder import (MultiScaleStyleFeatures, StyleEncoder,
                            encode_style, local_style_patches,
                            render_style_image)
from .text_layout import TextLayoutEncoder, Vocabulary

DIVERGENCE_LIMIT = 1e3

PROFILE_BETAS = {"full": (1e-4, 0.02), "toy": (1e-4, 0.15)}
PROFILE_STEPS = {"full": 1000, "toy": 50}


@dataclass(frozen=True)
class DiffusionSchedule:
    """Linear-beta schedule; index i holds step t = i + 1."""

    betas: np.ndarray
    sigma_mode: str = "beta"

    @property
    def steps(self) -> int:
        return len(self.betas)

    @property
    def alphas(self) -> np.ndarray:
        return 1.0 - self.betas

    @property
    def alpha_bars(self) -> np.ndarray:
        return np.cumprod(self.alphas)

    @property
    def sigmas(self) -> np.ndarray:
        if self.sigma_mode == "beta":
            var = self.betas.copy()
        elif self.sigma_mode == "alpha_literal":
            # takes the variance equal to sqrt(beta) at face value
            var = np.sqrt(self.betas)
        else:
            raise InvalidArgument(f"unknown sigma_mode {self.sigma_mode!r}")
        sig = np.sqrt(var)
        sig[0] = 0.0  # final reverse step adds no noise
        return sig


def make_schedule(steps: int | None = None, profile: str = "full",
                  beta_min: float | None = None, beta_max: float | None = None,
                  sigma_mode: str = "beta") -> DiffusionSchedule:
    """Linear beta schedule. Profile supplies defaults (full: T=1000,
    1e-4 -> 0.02; toy: T=50, 1e-4 -> 0.15); explicit arguments override."""
    if profile not in PROFILE_BETAS:
        raise InvalidArgument(f"unknown profile {profile!r}")
    if steps is None:
        steps = PROFILE_STEPS[profile]
    if not isinstance(steps, int) or steps < 2:
        raise InvalidArgument(f"need at least 2 steps, got {steps!r}")
    defaults = PROFILE_BETAS[profile]
    lo = defaults[0] if beta_min is None else beta_min
    hi = defaults[1] if beta_max is None else beta_max
    betas = np.linspace(lo, hi, steps, dtype=np.float64)
    if not (0.0 < betas[0] and betas[-1] < 1.0 and lo <= hi):
        raise InvalidArgument(f"betas must rise within (0, 1), got {lo}..{hi}")
    sched = DiffusionSchedule(betas, sigma_mode)
    if beta_min is None and beta_max is None:
        final = sched.alpha_bars[-1]
        if final >= 0.05:
            raise InvalidArgument(
                f"profile {profile!r} leaves abar_T = {final:.4f}, too much signal")
    return sched


def _check_t(t: int, sched: DiffusionSchedule) -> None:
    if not (1 <= t <= sched.steps):
        raise InvalidArgument(f"t = {t} outside [1, {sched.steps}]")


def forward_noise(y0: torch.Tensor, t, eps: torch.Tensor,
                  sched: DiffusionSchedule) -> torch.Tensor:
    """Closed-form corruption y_t = sqrt(abar_t) y0 + sqrt(1-abar_t) eps.

    t is an int applied to the whole tensor, or a (B,) int tensor applied
    per batch row of a (B, N, 2) y0.
    """
    if y0.shape != eps.shape:
        raise InvalidArgument(f"y0 {tuple(y0.shape)} vs eps {tuple(eps.shape)}")
    bars = torch.from_numpy(sched.alpha_bars).to(y0.dtype)
    if isinstance(t, int):
        _check_t(t, sched)
        ab = bars[t - 1]
    else:
        if int(t.min()) < 1 or int(t.max()) > sched.steps:
            raise InvalidArgument("t outside [1, T]")
        ab = bars[t.long() - 1].view(-1, *([1] * (y0.dim() - 1)))
    return torch.sqrt(ab) * y0 + torch.sqrt(1.0 - ab) * eps


# ---------------------------------------------------------------------------
# denoiser network

class DenoiserBlock(nn.Module):
    def __init__(self, dim: int, heads: int, cond_dim: int):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.mod1 = AffineModulation(dim, dim)
        self.self_attn = Attention(dim, heads)
        self.norm2 = nn.LayerNorm(dim)
        self.cross_attn = Attention(dim, heads, kv_dim=cond_dim)
        self.norm3 = nn.LayerNorm(dim)
        self.mod3 = AffineModulation(dim, dim)
        self.ff = Feedforward(dim)

    def forward(self, x, cond, level, key_mask):
        h, _ = self.self_attn(self.mod1(self.norm1(x), level),
                              key_padding_mask=key_mask)
        x = x + h
        h, _ = self.cross_attn(self.norm2(x), cond)
        x = x + h
        return x + self.ff(self.mod3(self.norm3(x), level))


class StrokeDenoiser(nn.Module):
    """Self-attention over stroke tokens, cross-attention to conditioning,
    noise level injected by affine modulation. Heads: eps (N x 2 linear) and
    pen-down probability (N, sigmoid)."""

    def __init__(self, dim: int, heads: int, layers: int, cond_dim: int,
                 max_len: int = 4096):
        super().__init__()
        self.dim = dim
        self.max_len = max_len
        self.in_proj = nn.Linear(2, dim)
        self.level_mlp = nn.Sequential(
            nn.Linear(1, dim), nn.SiLU(), nn.Linear(dim, dim))
        self.blocks = nn.ModuleList(
            DenoiserBlock(dim, heads, cond_dim) for _ in range(layers))
        self.out_norm = nn.LayerNorm(dim)
        self.eps_head = nn.Linear(dim, 2)
        self.pen_head = nn.Linear(dim, 1)
        self.register_buffer("positions", sinusoidal_positions(max_len, dim),
                             persistent=False)

    def forward(self, y_t: torch.Tensor, cond: torch.Tensor,
                sqrt_ab: torch.Tensor, key_mask: torch.Tensor | None = None):
        """y_t (B, N, 2), cond (B, N, cond_dim), sqrt_ab (B,).

        Cross-attention uses the conditioning row of every stroke position
        as keys; padded positions are masked out of self-attention and
        ignored by the losses.
        """
        n = y_t.shape[1]
        if n > self.max_len:
            raise InvalidArgument("sequence longer than positional table")
        if cond.shape[:2] != y_t.shape[:2]:
            raise InvalidArgument(
                f"cond rows {tuple(cond.shape[:2])} != strokes {tuple(y_t.shape[:2])}")
        x = self.in_proj(y_t) + self.positions[None, :n]
        level = self.level_mlp(sqrt_ab.to(x.dtype)[:, None])
        for block in self.blocks:
            x = block(x, cond, level, key_mask)
        x = self.out_norm(x)
        eps_hat = self.eps_head(x)
        d_hat = torch.sigmoid(self.pen_head(x)).squeeze(-1)
        d_hat = d_hat.clamp(1e-7, 1.0 - 1e-7)
        return eps_hat, d_hat


def denoise(y_t: torch.Tensor, cond: torch.Tensor, sqrt_ab: torch.Tensor,
            model: StrokeDenoiser, key_mask: torch.Tensor | None = None):
    """Functional wrapper that also guards against non-finite outputs."""
    eps_hat, d_hat = model(y_t, cond, sqrt_ab, key_mask)
    if not (torch.isfinite(eps_hat).all() and torch.isfinite(d_hat).all()):
        raise NumericalError("denoiser produced non-finite values")
    return eps_hat, d_hat


# ---------------------------------------------------------------------------
# losses

def loss_stroke(eps: torch.Tensor, eps_hat: torch.Tensor,
                valid: torch.Tensor | None = None) -> torch.Tensor:
    """Mean squared error over all (or the unmasked) entries."""
    if eps.shape != eps_hat.shape:
        raise InvalidArgument(
            f"shape mismatch {tuple(eps.shape)} vs {tuple(eps_hat.shape)}")
    diff = eps_hat - eps
    if valid is not None:
        diff = diff[valid]
    return (diff * diff).mean()


def loss_drawn(d0: torch.Tensor, d_hat: torch.Tensor,
               valid: torch.Tensor | None = None) -> torch.Tensor:
    """Mean binary cross-entropy of pen-down truth against predictions."""
    if d0.shape != d_hat.shape:
        raise InvalidArgument(
            f"shape mismatch {tuple(d0.shape)} vs {tuple(d_hat.shape)}")
    if not bool(((d0 == 0) | (d0 == 1)).all()):
        raise InvalidArgument("d0 must be 0/1")
    flat = d_hat.detach()
    if float(flat.min()) <= 0.0 or float(flat.max()) >= 1.0:
        raise NumericalError("d_hat left (0, 1) despite clamping")
    if valid is not None:
        d0, d_hat = d0[valid], d_hat[valid]
    return -(d0 * torch.log(d_hat) + (1.0 - d0) * torch.log1p(-d_hat)).mean()


# ---------------------------------------------------------------------------
# reverse process

def reverse_step(y_t: torch.Tensor, eps_hat: torch.Tensor, t: int,
                 sched: DiffusionSchedule,
                 noise: torch.Tensor | None = None,
                 sigma: float | None = None) -> torch.Tensor:
    """One ancestral step to y_{t-1}; noise is the standard normal z."""
    _check_t(t, sched)
    beta = float(sched.betas[t - 1])
    alpha = 1.0 - beta
    abar = float(sched.alpha_bars[t - 1])
    mean = (y_t - beta / math.sqrt(1.0 - abar) * eps_hat) / math.sqrt(alpha)
    if sigma is None:
        sigma = float(sched.sigmas[t - 1])
    if noise is None or t == 1 or sigma == 0.0:
        return mean
    return mean + sigma * noise


def reverse_chain(y_start: torch.Tensor,
                  eps_fn: Callable[[torch.Tensor, int], torch.Tensor],
                  sched: DiffusionSchedule,
                  generator: torch.Generator | None = None,
                  sigmas: Sequence[float] | None = None,
                  guard: bool = True) -> torch.Tensor:
    """Run t = T..1. eps_fn(y_t, t) supplies the noise estimate, which lets
    tests drive the chain with an exact oracle instead of a network."""
    y = y_start
    for t in range(sched.steps, 0, -1):
        eps = eps_fn(y, t)
        sigma = float(sched.sigmas[t - 1]) if sigmas is None else float(sigmas[t - 1])
        noise = None
        if t > 1 and sigma > 0.0:
            noise = torch.randn(y.shape, generator=generator, dtype=y.dtype)
        y = reverse_step(y, eps, t, sched, noise=noise, sigma=sigma)
        if guard:
            _check_divergence(y, t)
    return y


def _check_divergence(y: torch.Tensor, t: int) -> None:
    if not torch.isfinite(y).all():
        raise DivergenceError(f"non-finite values at t = {t}")
    peak = float(y.abs().max())
    if peak > DIVERGENCE_LIMIT:
        raise DivergenceError(f"|y| = {peak:.3g} exceeds {DIVERGENCE_LIMIT:g} at t = {t}")


# ---------------------------------------------------------------------------
# training

@dataclass
class SequenceStats:
    """Standardization constants measured on the training set."""

    offset_mean: np.ndarray  # (2,)
    offset_std: np.ndarray   # (2,)
    points_per_char: float

    @classmethod
    def measure(cls, samples: Sequence[Sample]) -> "SequenceStats":
        offsets = np.concatenate([s.strokes.offsets for s in samples])
        std = offsets.std(axis=0)
        std[std < 1e-8] = 1.0
        return cls(offsets.mean(axis=0), std, sequence_points_per_char(samples))

    def standardize(self, offsets: np.ndarray) -> np.ndarray:
        return (offsets - self.offset_mean) / self.offset_std

    def destandardize(self, offsets: np.ndarray) -> np.ndarray:
        return offsets * self.offset_std + self.offset_mean

    def as_dict(self) -> dict:
        return {"offset_mean": self.offset_mean.tolist(),
                "offset_std": self.offset_std.tolist(),
                "points_per_char": self.points_per_char}

    @classmethod
    def from_dict(cls, d: dict) -> "SequenceStats":
        return cls(np.array(d["offset_mean"]), np.array(d["offset_std"]),
                   float(d["points_per_char"]))


class StyleBank:
    """Frozen style features for every training sample, plus same-writer
    pairing so conditioning always comes from a different sample than the
    one being denoised."""

    def __init__(self, samples: Sequence[Sample], encoder: StyleEncoder):
        self.features: list[MultiScaleStyleFeatures] = []
        self.by_writer: dict[int, list[int]] = {}
        encoder.eval()
        for idx, sample in enumerate(samples):
            img = render_style_image(sample.strokes, encoder.cfg)
            self.features.append(encode_style(img, encoder))
            self.by_writer.setdefault(sample.writer_id, []).append(idx)

    def source_for(self, idx: int, writer_id: int,
                   rng: np.random.Generator) -> int:
        pool = self.by_writer[writer_id]
        if len(pool) == 1:
            return pool[0]
        while True:
            pick = pool[int(rng.integers(len(pool)))]
            if pick != idx:
                return pick


@dataclass
class Batch:
    tokens: torch.Tensor        # (B, L) int64
    char_mask: torch.Tensor     # (B, L) bool, True = padded
    y0: torch.Tensor            # (B, N, 2) standardized offsets
    drawn: torch.Tensor         # (B, N) float 1 = pen down at this point
    stroke_mask: torch.Tensor   # (B, N) bool, True = padded
    style: torch.Tensor         # (B, S, Ds)
    style_mask: torch.Tensor    # (B, S) bool
    omega: torch.Tensor         # (B, W, D) layout tokens
    omega_mask: torch.Tensor    # (B, W) bool
    lengths: list[int]


@dataclass
class TrainState:
    text_encoder: TextLayoutEncoder
    denoiser: StrokeDenoiser
    optimizer: torch.optim.Optimizer
    sched: DiffusionSchedule
    stats: SequenceStats
    torch_gen: torch.Generator
    np_rng: np.random.Generator
    step: int = 0
    lambda_pen: float = 1.0
    base_lr: float = 0.0
    warmup: int = 0
    decay_iters: int = 0
    ema_decay: float = 0.0
    ema: dict | None = None
    ablate_layout: bool = False
    history: list = field(default_factory=list)


def ema_shadow(text_encoder: TextLayoutEncoder,
               denoiser: StrokeDenoiser) -> dict[str, torch.Tensor]:
    """Fresh exponential-moving-average copy of the trainable weights."""
    shadow = {}
    for prefix, module in (("text", text_encoder), ("denoiser", denoiser)):
        for name, p in module.named_parameters():
            shadow[f"{prefix}.{name}"] = p.detach().clone()
    return shadow


def ema_apply(shadow: dict, text_encoder: TextLayoutEncoder,
              denoiser: StrokeDenoiser) -> None:
    """Overwrite module weights with their moving averages (for sampling)."""
    for prefix, module in (("text", text_encoder), ("denoiser", denoiser)):
        for name, p in module.named_parameters():
            p.data = shadow[f"{prefix}.{name}"].clone()


def drawn_bits(seq: StrokeSequence) -> np.ndarray:
    """Per-point pen-down indicator d0 (1 = this point draws to the next)."""
    return (seq.pen == 0).astype(np.float64)


def prepare_batch(samples: Sequence[Sample], indices: Sequence[int],
                  bank: StyleBank, state: TrainState,
                  crop_rng: np.random.Generator | None) -> Batch:
    vocab = state.text_encoder.vocab
    chosen = [samples[i] for i in indices]
    token_rows = [vocab.tokenize(s.text) for s in chosen]
    lengths = [len(s.strokes) for s in chosen]
    l_max = max(len(r) for r in token_rows)
    n_max = max(lengths)

    tokens = torch.zeros(len(chosen), l_max, dtype=torch.int64)
    char_mask = torch.ones(len(chosen), l_max, dtype=torch.bool)
    y0 = torch.zeros(len(chosen), n_max, 2)
    drawn = torch.zeros(len(chosen), n_max)
    stroke_mask = torch.ones(len(chosen), n_max, dtype=torch.bool)

    style_rows = []
    omega_rows = []
    for b, (idx, sample) in enumerate(zip(indices, chosen)):
        row = token_rows[b]
        tokens[b, :len(row)] = torch.tensor(row)
        char_mask[b, :len(row)] = False
        std = state.stats.standardize(sample.strokes.offsets)
        y0[b, :lengths[b]] = torch.from_numpy(std).to(torch.float32)
        drawn[b, :lengths[b]] = torch.from_numpy(
            drawn_bits(sample.strokes)).to(torch.float32)
        stroke_mask[b, :lengths[b]] = False
        src = bank.source_for(idx, sample.writer_id, state.np_rng)
        feats = local_style_patches(bank.features[src], rng=crop_rng)
        style_rows.append(feats.features)
        omega_rows.append(state.text_encoder.encode_layout(sample.layout))

    s_max = max(r.shape[0] for r in style_rows)
    style = torch.zeros(len(chosen), s_max, style_rows[0].shape[1])
    style_mask = torch.ones(len(chosen), s_max, dtype=torch.bool)
    w_max = max(r.shape[0] for r in omega_rows)
    omega = torch.zeros(len(chosen), w_max, omega_rows[0].shape[1])
    omega_mask = torch.ones(len(chosen), w_max, dtype=torch.bool)
    for b, (srow, orow) in enumerate(zip(style_rows, omega_rows)):
        style[b, :srow.shape[0]] = srow
        style_mask[b, :srow.shape[0]] = False
        omega[b, :orow.shape[0]] = orow
        omega_mask[b, :orow.shape[0]] = False
    return Batch(tokens, char_mask, y0, drawn, stroke_mask, style, style_mask,
                 omega, omega_mask, lengths)


def trim_batch(batch: Batch) -> Batch:
    """Cut wholly padded tails, so a batch extended with extra padding
    becomes tensor-identical to the original (the bit-identity contract)."""
    n = max(batch.lengths)
    l = int((~batch.char_mask).sum(dim=1).max())
    s = int((~batch.style_mask).sum(dim=1).max())
    w = int((~batch.omega_mask).sum(dim=1).max())
    return Batch(batch.tokens[:, :l], batch.char_mask[:, :l],
                 batch.y0[:, :n], batch.drawn[:, :n], batch.stroke_mask[:, :n],
                 batch.style[:, :s], batch.style_mask[:, :s],
                 batch.omega[:, :w], batch.omega_mask[:, :w],
                 list(batch.lengths))


def _draw_noise(batch: Batch, state: TrainState) -> tuple[torch.Tensor, torch.Tensor]:
    """Per-sample t and eps, drawn at each sample's true length so extra
    padding never shifts the stream."""
    steps = state.sched.steps
    b, n_max = batch.y0.shape[:2]
    t = torch.zeros(b, dtype=torch.int64)
    eps = torch.zeros(b, n_max, 2)
    for i, length in enumerate(batch.lengths):
        t[i] = int(torch.randint(1, steps + 1, (1,), generator=state.torch_gen))
        eps[i, :length] = torch.randn(length, 2, generator=state.torch_gen)
    return t, eps


def conditioning(state: TrainState, batch: Batch, y_t: torch.Tensor) -> torch.Tensor:
    enc = state.text_encoder
    chars = enc.embed_chars(batch.tokens)
    gamma, _ = enc.text_style_attention(chars, batch.style,
                                        style_mask=batch.style_mask)
    return enc.fuse(gamma, y_t, batch.omega, char_mask=batch.char_mask,
                    omega_mask=batch.omega_mask,
                    ablate_layout=state.ablate_layout)


def train_step(state: TrainState, batch: Batch) -> tuple[float, float]:
    """One optimizer update; returns (loss_stroke, loss_drawn) floats."""
    state.text_encoder.train()
    state.denoiser.train()
    batch = trim_batch(batch)
    t, eps = _draw_noise(batch, state)
    y_t = forward_noise(batch.y0, t, eps, state.sched)
    cond = conditioning(state, batch, y_t)
    sqrt_ab = torch.sqrt(
        torch.from_numpy(state.sched.alpha_bars)[t - 1]).to(torch.float32)
    eps_hat, d_hat = denoise(y_t, cond, sqrt_ab, state.denoiser,
                             key_mask=batch.stroke_mask)
    valid = ~batch.stroke_mask
    l_stroke = loss_stroke(eps, eps_hat, valid=valid)
    l_drawn = loss_drawn(batch.drawn, d_hat, valid=valid)
    total = l_stroke + state.lambda_pen * l_drawn
    if not torch.isfinite(total):
        raise NumericalError(f"loss diverged at step {state.step}")
    if state.base_lr > 0.0:
        for group in state.optimizer.param_groups:
            group["lr"] = state.base_lr * _lr_factor(state.step + 1,
                                                     state.warmup,
                                                     state.decay_iters)
    state.optimizer.zero_grad()
    total.backward()
    state.optimizer.step()
    state.step += 1
    if state.ema is not None and state.ema_decay > 0.0:
        with torch.no_grad():
            for prefix, module in (("text", state.text_encoder),
                                   ("denoiser", state.denoiser)):
                for name, p in module.named_parameters():
                    state.ema[f"{prefix}.{name}"].mul_(state.ema_decay).add_(
                        p.detach(), alpha=1.0 - state.ema_decay)
    return float(l_stroke.detach()), float(l_drawn.detach())


def _lr_factor(step: int, warmup: int, decay_iters: int,
               floor: float = 0.1) -> float:
    """Linear ramp over `warmup` steps, then cosine decay to `floor` of the
    base rate by `decay_iters`."""
    factor = min(1.0, step / warmup) if warmup > 0 else 1.0
    if decay_iters > warmup:
        progress = min(1.0, max(0.0, (step - warmup) / (decay_iters - warmup)))
        factor *= floor + (1.0 - floor) * 0.5 * (1.0 + math.cos(math.pi * progress))
    return factor


def smoothed_trace(values: Sequence[float], window: int = 100) -> list[float]:
    """Trailing-window running means, same length as the input."""
    out = []
    acc = 0.0
    vals = list(values)
    for i, v in enumerate(vals):
        acc += v
        if i >= window:
            acc -= vals[i - window]
        out.append(acc / min(i + 1, window))
    return out


# ---------------------------------------------------------------------------
# sampling

def generation_length(text: str, stats: SequenceStats) -> int:
    n = int(round(len(text) * stats.points_per_char))
    if n < 2:
        raise InvalidArgument(f"text {text!r} yields a {n}-point sequence")
    return n


def sample(text: str, layout: WordLayout, style_img: RasterImage,
           sched: DiffusionSchedule, model: "GenerationModel", seed: int,
           init: str = "gaussian") -> StrokeSequence:
    """Generate a stroke sequence for the text in the given layout, imitating
    the style image. Deterministic for a fixed seed."""
    if layout.text != text:
        raise InvalidArgument(
            f"layout words {layout.text!r} do not spell {text!r}")
    enc = model.text_encoder
    den = model.denoiser
    enc.eval()
    den.eval()
    tokens = torch.tensor([enc.vocab.tokenize(text)], dtype=torch.int64)
    n = generation_length(text, model.stats)
    feats = local_style_patches(encode_style(style_img, model.style_encoder))
    style = feats.features[None]
    gen = torch.Generator().manual_seed(seed)
    if init == "gaussian":
        y = torch.randn(1, n, 2, generator=gen)
    elif init == "uniform":
        y = torch.rand(1, n, 2, generator=gen) * 2.0 - 1.0
    else:
        raise InvalidArgument(f"unknown init {init!r}")

    bars = torch.from_numpy(sched.alpha_bars)
    d_hat = None
    with torch.no_grad():
        chars = enc.embed_chars(tokens)
        gamma, _ = enc.text_style_attention(chars, style)
        omega = enc.encode_layout(layout)[None]
        for t in range(sched.steps, 0, -1):
            cond = enc.fuse(gamma, y, omega, ablate_layout=model.ablate_layout)
            sqrt_ab = torch.sqrt(bars[t - 1]).to(torch.float32)[None]
            eps_hat, d_hat = denoise(y, cond, sqrt_ab, den)
            noise = None
            if t > 1 and float(sched.sigmas[t - 1]) > 0.0:
                noise = torch.randn(y.shape, generator=gen)
            y = reverse_step(y, eps_hat, t, sched, noise=noise)
            _check_divergence(y, t)

    offsets = model.stats.destandardize(y[0].numpy().astype(np.float64))
    pen = (d_hat[0].numpy() < 0.5).astype(np.uint8)  # d >= 0.5 means drawn
    return StrokeSequence.from_arrays(offsets, pen)


@dataclass
class GenerationModel:
    """Everything sampling needs: frozen style encoder, conditioning
    encoder, denoiser, schedule, and dataset statistics."""

    style_encoder: StyleEncoder
    text_encoder: TextLayoutEncoder
    denoiser: StrokeDenoiser
    sched: DiffusionSchedule
    stats: SequenceStats
    ablate_layout: bool = False
