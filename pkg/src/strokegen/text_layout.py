"""Fusing characters, style patches, and word layout into per-stroke-token
conditioning.

The chain, all cross-attention with bias-free projections:

    gamma = Attn(query=char embeddings,  kv=local style patches)
    beta  = Attn(query=noisy stroke tokens, kv=gamma)
    theta = Attn(query=beta,             kv=gamma)
    delta = Attn(query=theta,            kv=layout tokens)
    out   = theta + delta

gamma has no residual, so with a single style patch every character's gamma
row is exactly that patch's value head. Zeroing the delta value projection
(or passing ablate_layout=True) removes the layout contribution exactly,
leaving out == theta.
"""

from __future__ import annotations

import torch
from torch import nn

from .dataset import WordLayout
from .errors import InvalidArgument, LayoutError, ValidationError, VocabError
from .nn import Attention, sinusoidal_positions
from .style_encoder import MultiScaleStyleFeatures

PRINTABLE_ASCII = "".join(chr(c) for c in range(32, 127))


class Vocabulary:
    """Ordered character set with a stable index assignment."""

    def __init__(self, chars: str = PRINTABLE_ASCII):
        if len(set(chars)) != len(chars):
            raise InvalidArgument("vocabulary has duplicate characters")
        if not chars:
            raise InvalidArgument("vocabulary is empty")
        self.chars = chars
        self._index = {c: i for i, c in enumerate(chars)}

    def __len__(self) -> int:
        return len(self.chars)

    def __contains__(self, char: str) -> bool:
        return char in self._index

    def tokenize(self, text: str) -> list[int]:
        out = []
        for pos, char in enumerate(text):
            idx = self._index.get(char)
            if idx is None:
                raise VocabError(char, pos)
            out.append(idx)
        return out

    def detokenize(self, indices) -> str:
        try:
            return "".join(self.chars[int(i)] for i in indices)
        except IndexError as exc:
            raise InvalidArgument(f"token index out of range: {exc}") from exc

    def manifest(self) -> str:
        """One escaped character per line; round-trips via from_manifest."""
        return "\n".join(c.encode("unicode_escape").decode("ascii")
                         for c in self.chars)

    @classmethod
    def from_manifest(cls, text: str) -> "Vocabulary":
        chars = [line.encode("ascii").decode("unicode_escape")
                 for line in text.split("\n")]
        return cls("".join(chars))


def layout_features(layout: WordLayout) -> torch.Tensor:
    """(W, 7) geometry rows: x0, y0, x1, y1, width, height, index/total."""
    total = len(layout)
    rows = []
    for wi, box in enumerate(layout):
        if not (box.x1 > box.x0 and box.y1 > box.y0):
            raise ValidationError(0, f"degenerate box for word {box.word!r}")
        rows.append([box.x0, box.y0, box.x1, box.y1,
                     box.x1 - box.x0, box.y1 - box.y0, wi / total])
    feats = torch.tensor(rows, dtype=torch.float32)
    if not torch.isfinite(feats).all():
        raise ValidationError(0, "layout features are not finite")
    return feats


class TextLayoutEncoder(nn.Module):
    """Owns the character table, layout projection, and the attention chain."""

    def __init__(self, vocab: Vocabulary, dim: int, style_dim: int,
                 heads: int = 1, max_len: int = 4096):
        super().__init__()
        self.vocab = vocab
        self.dim = dim
        self.max_len = max_len
        self.char_table = nn.Embedding(len(vocab), dim)
        self.stroke_proj = nn.Linear(2, dim)
        self.layout_proj = nn.Linear(7, dim)
        self.gamma_attn = Attention(dim, heads, kv_dim=style_dim)
        self.beta_attn = Attention(dim, heads)
        self.theta_attn = Attention(dim, heads)
        self.delta_attn = Attention(dim, heads)
        self.register_buffer("positions", sinusoidal_positions(max_len, dim),
                             persistent=False)

    def embed_chars(self, token_batch: torch.Tensor) -> torch.Tensor:
        """(B, L) int tokens -> (B, L, dim) embeddings with positions."""
        if token_batch.shape[1] > self.max_len:
            raise InvalidArgument("text longer than positional table")
        return self.char_table(token_batch) + self.positions[None, :token_batch.shape[1]]

    def text_style_attention(self, chars: torch.Tensor,
                             style: torch.Tensor,
                             style_mask: torch.Tensor | None = None,
                             need_weights: bool = False):
        """chars (B, L, dim) queries over style patches (B, S, style_dim).

        No residual: the output is purely a softmax mixture of the style
        value heads, one row per character.
        """
        return self.gamma_attn(chars, style, key_padding_mask=style_mask,
                               need_weights=need_weights)

    def encode_layout(self, layout: WordLayout) -> torch.Tensor:
        """(W, dim) tokens, one per word, order preserved."""
        return self.layout_proj(layout_features(layout))

    def fuse(self, gamma: torch.Tensor, y_t: torch.Tensor,
             omega: torch.Tensor, char_mask: torch.Tensor | None = None,
             omega_mask: torch.Tensor | None = None,
             ablate_layout: bool = False) -> torch.Tensor:
        """Conditioning rows for each stroke token.

        gamma (B, L, dim); y_t (B, N, 2) noisy offsets; omega (B, W, dim)
        layout tokens. Masks are True where padded. Each output row depends
        only on its own stroke token, so padded stroke rows are garbage but
        never leak into valid ones.
        """
        if omega.shape[1] == 0:
            raise LayoutError("layout must contain at least one word")
        n = y_t.shape[1]
        if n > self.max_len:
            raise InvalidArgument("stroke sequence longer than positional table")
        q = self.stroke_proj(y_t) + self.positions[None, :n]
        beta, _ = self.beta_attn(q, gamma, key_padding_mask=char_mask)
        theta, _ = self.theta_attn(beta, gamma, key_padding_mask=char_mask)
        if ablate_layout:
            return theta
        delta, _ = self.delta_attn(theta, omega, key_padding_mask=omega_mask)
        return theta + delta
