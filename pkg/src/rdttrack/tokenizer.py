"""Patch embedding of template/search crops into per-modality token matrices.

Token tensors are laid out ``(batch, n_tokens, C)``; the first ``n_template``
tokens come from the template crop, the remaining ``n_search`` from the search
crop, both in row-major patch order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .errors import ShapeError

MODALITIES = ("rgb", "depth", "tir")


@dataclass(frozen=True)
class PatchEmbedConfig:
    patch_size: int = 8
    embed_dim: int = 64
    template_size: int = 32
    search_size: int = 64

    def __post_init__(self):
        for name in ("template_size", "search_size"):
            if getattr(self, name) % self.patch_size:
                raise ShapeError(f"{name}={getattr(self, name)} not divisible by patch_size={self.patch_size}")

    @property
    def h_z(self) -> int:
        return self.template_size // self.patch_size

    @property
    def h_x(self) -> int:
        return self.search_size // self.patch_size

    @property
    def n_template(self) -> int:
        return self.h_z * self.h_z

    @property
    def n_search(self) -> int:
        return self.h_x * self.h_x

    @property
    def n_tokens(self) -> int:
        return self.n_template + self.n_search


@dataclass
class TokenSet:
    tokens: torch.Tensor  # (B, n_template + n_search, C)
    modality: str
    n_template: int
    n_search: int

    def __post_init__(self):
        if self.tokens.dim() != 3:
            raise ShapeError(f"tokens must be (B, N, C), got {tuple(self.tokens.shape)}")
        if self.tokens.shape[1] != self.n_template + self.n_search:
            raise ShapeError(
                f"token count {self.tokens.shape[1]} != n_template + n_search = {self.n_template + self.n_search}"
            )

    @property
    def template(self) -> torch.Tensor:
        return self.tokens[:, : self.n_template]

    @property
    def search(self) -> torch.Tensor:
        return self.tokens[:, self.n_template :]

    @property
    def embed_dim(self) -> int:
        return self.tokens.shape[2]

    def replace(self, tokens: torch.Tensor, modality: str | None = None) -> "TokenSet":
        return TokenSet(tokens, modality or self.modality, self.n_template, self.n_search)


def to_three_channel(img):
    """Replicate a single-channel image into 3 identical channels (channel-last).

    Already 3-channel images are returned unchanged.
    """
    if isinstance(img, torch.Tensor):
        if img.dim() >= 3 and img.shape[-1] == 3:
            return img
        if img.dim() >= 3 and img.shape[-1] == 1:
            img = img[..., 0]
        return img.unsqueeze(-1).expand(*img.shape, 3).clone()
    img = np.asarray(img)
    if img.ndim == 3 and img.shape[2] == 3:
        return img
    if img.ndim == 3 and img.shape[2] == 1:
        img = img[..., 0]
    if img.ndim != 2:
        raise ShapeError(f"expected a single-channel image, got shape {img.shape}")
    return np.repeat(img[..., None], 3, axis=2)


def _check_crop(x: torch.Tensor, size: int, what: str):
    if x.dim() != 4 or x.shape[1] != 3:
        raise ShapeError(f"{what} crop must be (B, 3, H, W), got {tuple(x.shape)}")
    if x.shape[2] != size:
        raise ShapeError(f"{what} crop height {x.shape[2]} != configured {size}")
    if x.shape[3] != size:
        raise ShapeError(f"{what} crop width {x.shape[3]} != configured {size}")


def embed(
    template_crop: torch.Tensor,
    search_crop: torch.Tensor,
    proj: nn.Conv2d,
    pos_z: torch.Tensor,
    pos_x: torch.Tensor,
    cfg: PatchEmbedConfig,
    modality: str = "rgb",
) -> TokenSet:
    """``[PE(Z) + Pos_Z || PE(X) + Pos_X]`` concatenated along the token axis."""
    _check_crop(template_crop, cfg.template_size, "template")
    _check_crop(search_crop, cfg.search_size, "search")
    tz = proj(template_crop).flatten(2).transpose(1, 2) + pos_z
    tx = proj(search_crop).flatten(2).transpose(1, 2) + pos_x
    return TokenSet(torch.cat([tz, tx], dim=1), modality, cfg.n_template, cfg.n_search)


class Tokenizer(nn.Module):
    """Per-modality patch projections with positional encodings shared across modalities."""

    def __init__(self, cfg: PatchEmbedConfig, modalities=MODALITIES):
        super().__init__()
        self.cfg = cfg
        p, c = cfg.patch_size, cfg.embed_dim
        self.proj = nn.ModuleDict({m: nn.Conv2d(3, c, kernel_size=p, stride=p) for m in modalities})
        self.pos_z = nn.Parameter(torch.zeros(1, cfg.n_template, c))
        self.pos_x = nn.Parameter(torch.zeros(1, cfg.n_search, c))
        nn.init.trunc_normal_(self.pos_z, std=0.02)
        nn.init.trunc_normal_(self.pos_x, std=0.02)

    def forward(self, template_crop, search_crop, modality: str = "rgb") -> TokenSet:
        return embed(template_crop, search_crop, self.proj[modality], self.pos_z, self.pos_x, self.cfg, modality)
