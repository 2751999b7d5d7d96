"""Shared neural blocks: sinusoidal positions, bias-free multi-head
attention, and feature-wise affine modulation.

All attention projections are bias-free so that zeroing a value matrix
provably removes that path's contribution (used by the conditioning
ablation checks). Padded key positions are handled by trimming whole-batch
padding tails and masking the rest, which keeps outputs for valid rows
bit-identical between padded and unpadded calls.
"""

from __future__ import annotations

import math

import torch
from torch import nn

from .errors import InvalidArgument


def sinusoidal_positions(length: int, dim: int, *, dtype=torch.float32,
                         device=None) -> torch.Tensor:
    """Standard fixed sin/cos position table, shape (length, dim)."""
    if dim % 2 != 0:
        raise InvalidArgument(f"position dim {dim} must be even")
    pos = torch.arange(length, dtype=torch.float64, device=device)[:, None]
    idx = torch.arange(dim // 2, dtype=torch.float64, device=device)[None, :]
    angles = pos / torch.pow(10000.0, 2.0 * idx / dim)
    table = torch.cat([torch.sin(angles), torch.cos(angles)], dim=1)
    return table.to(dtype)


class Attention(nn.Module):
    """Multi-head attention with bias-free projections.

    Covers both self-attention (key defaults to the query source) and
    cross-attention with a differently sized key/value source.
    """

    def __init__(self, dim: int, heads: int, kv_dim: int | None = None):
        super().__init__()
        if dim % heads != 0:
            raise InvalidArgument(f"dim {dim} not divisible by heads {heads}")
        kv_dim = dim if kv_dim is None else kv_dim
        self.dim = dim
        self.heads = heads
        self.head_dim = dim // heads
        self.q_proj = nn.Linear(dim, dim, bias=False)
        self.k_proj = nn.Linear(kv_dim, dim, bias=False)
        self.v_proj = nn.Linear(kv_dim, dim, bias=False)
        self.out_proj = nn.Linear(dim, dim, bias=False)

    def forward(self, query: torch.Tensor, key: torch.Tensor | None = None,
                key_padding_mask: torch.Tensor | None = None,
                need_weights: bool = False):
        """query (B, Lq, dim); key (B, Lk, kv_dim) or None for self-attention.
        key_padding_mask (B, Lk) bool, True where padded. Returns (out,
        weights) with weights (B, heads, Lq, Lk) or None."""
        if key is None:
            key = query
        b, lq, _ = query.shape
        lk = key.shape[1]
        if key_padding_mask is not None:
            if key_padding_mask.shape != (b, lk):
                raise InvalidArgument("key_padding_mask shape mismatch")
            valid = int((~key_padding_mask).sum(dim=1).max().item())
            if valid == 0:
                raise InvalidArgument("all keys padded")
            if valid < lk:
                key = key[:, :valid]
                key_padding_mask = key_padding_mask[:, :valid]
                lk = valid
            if not key_padding_mask.any():
                key_padding_mask = None

        q = self.q_proj(query).view(b, lq, self.heads, self.head_dim).transpose(1, 2)
        k = self.k_proj(key).view(b, lk, self.heads, self.head_dim).transpose(1, 2)
        v = self.v_proj(key).view(b, lk, self.heads, self.head_dim).transpose(1, 2)
        scores = q @ k.transpose(-2, -1) / math.sqrt(self.head_dim)
        if key_padding_mask is not None:
            scores = scores.masked_fill(
                key_padding_mask[:, None, None, :], float("-inf"))
        weights = torch.softmax(scores, dim=-1)
        out = (weights @ v).transpose(1, 2).reshape(b, lq, self.dim)
        out = self.out_proj(out)
        return out, (weights if need_weights else None)


class AffineModulation(nn.Module):
    """Feature-wise affine conditioning: x * (1 + scale) + shift.

    Zero-initialised so modulation starts as the identity.
    """

    def __init__(self, cond_dim: int, dim: int):
        super().__init__()
        self.proj = nn.Linear(cond_dim, 2 * dim)
        nn.init.zeros_(self.proj.weight)
        nn.init.zeros_(self.proj.bias)

    def forward(self, x: torch.Tensor, cond: torch.Tensor) -> torch.Tensor:
        scale, shift = self.proj(cond).chunk(2, dim=-1)
        if x.dim() == 3 and scale.dim() == 2:
            scale = scale[:, None, :]
            shift = shift[:, None, :]
        return x * (1.0 + scale) + shift


class Feedforward(nn.Module):
    def __init__(self, dim: int, hidden_mult: int = 4):
        super().__init__()
        self.net = nn.Sequential(
            nn.Linear(dim, hidden_mult * dim),
            nn.GELU(),
            nn.Linear(hidden_mult * dim, dim),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.net(x)


class EncoderBlock(nn.Module):
    """Pre-norm self-attention + feedforward, for the style trunk."""

    def __init__(self, dim: int, heads: int):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = Attention(dim, heads)
        self.norm2 = nn.LayerNorm(dim)
        self.ff = Feedforward(dim)

    def forward(self, x: torch.Tensor,
                key_padding_mask: torch.Tensor | None = None) -> torch.Tensor:
        h, _ = self.attn(self.norm1(x), key_padding_mask=key_padding_mask)
        x = x + h
        return x + self.ff(self.norm2(x))
