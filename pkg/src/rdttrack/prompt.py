"""Multi-modal prompt blocks: channel reduction, fovea enhancement, prompt accumulation."""

from __future__ import annotations

import torch
from torch import nn

from .errors import ShapeError
from .tokenizer import TokenSet


def fovea_weights(a: torch.Tensor, lam: float) -> torch.Tensor:
    """``lam * softmax`` over the spatial positions of a ``(B, C, h, w)`` map, per channel."""
    b, c = a.shape[:2]
    w = torch.softmax(a.reshape(b, c, -1), dim=-1)
    return (lam * w).reshape(a.shape)


def fovea(a: torch.Tensor, lam: float) -> torch.Tensor:
    """Fovea-enhanced map ``a * fovea_weights(a, lam)``."""
    return a * fovea_weights(a, lam)


def fovea_tokens(tokens: torch.Tensor, n_template: int, lam: float) -> torch.Tensor:
    # Softmax over the token axis of each region equals the spatial softmax of the
    # reshaped map, so no reshape is needed.
    z, x = tokens[:, :n_template], tokens[:, n_template:]
    wz = lam * torch.softmax(z, dim=1)
    wx = lam * torch.softmax(x, dim=1)
    return torch.cat([z * wz, x * wx], dim=1)


class PromptBlock(nn.Module):
    def __init__(self, embed_dim: int, reduction: int = 4, lam: float = 1.0, layer_index: int = 0):
        super().__init__()
        if embed_dim % reduction:
            raise ValueError(f"reduction {reduction} does not divide embed_dim {embed_dim}")
        if lam <= 0:
            raise ValueError("lambda must be positive")
        hidden = embed_dim // reduction
        self.lam = float(lam)
        self.layer_index = layer_index
        # 1x1 convolutions over tokens are per-token linear maps
        self.conv_down_h = nn.Linear(embed_dim, hidden)
        self.conv_down_p = nn.Linear(embed_dim, hidden)
        self.conv_up = nn.Linear(hidden, embed_dim)
        for m in (self.conv_down_h, self.conv_down_p):
            nn.init.xavier_uniform_(m.weight)
            nn.init.zeros_(m.bias)
        nn.init.normal_(self.conv_up.weight, std=0.01)
        nn.init.zeros_(self.conv_up.bias)

    def forward(self, h_prev: TokenSet, p_prev: TokenSet) -> TokenSet:
        return prompt_block(h_prev, p_prev, self)


def prompt_block(h_prev: TokenSet, p_prev: TokenSet, params: PromptBlock, lam: float | None = None) -> TokenSet:
    """``conv_up(fovea(conv_down_h(h_prev)) + conv_down_p(p_prev))``.

    ``lam`` overrides the block's smoothing constant (used for gradient checks).
    """
    if h_prev.tokens.shape != p_prev.tokens.shape or h_prev.n_template != p_prev.n_template:
        raise ShapeError(
            f"backbone tokens {tuple(h_prev.tokens.shape)} and prompts {tuple(p_prev.tokens.shape)} differ"
        )
    lam = params.lam if lam is None else lam
    a_rgb = params.conv_down_h(h_prev.tokens)
    a_p = params.conv_down_p(p_prev.tokens)
    enhanced = fovea_tokens(a_rgb, h_prev.n_template, lam)
    return h_prev.replace(params.conv_up(enhanced + a_p), "prompt")


def initial_prompt(t_rgb: TokenSet, t_dtir: TokenSet, params: PromptBlock) -> TokenSet:
    """First prompt, from the RGB tokens and the fused D-TIR tokens."""
    return prompt_block(t_rgb, t_dtir, params)
