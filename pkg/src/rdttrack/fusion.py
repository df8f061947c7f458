"""Depth-TIR fusion: per-modality 1x1 convs, mutual orthogonal projection, channel fusion."""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from torch import nn

from .errors import ShapeError
from .tokenizer import TokenSet

PROJECTION_MODES = ("norm", "strict")


@dataclass
class FeatureMap:
    data: torch.Tensor  # (B, C, h, h)
    region: str  # "template" | "search"
    modality: str  # "depth" | "tir" | "fused"

    @property
    def side(self) -> int:
        return self.data.shape[-1]


def _square_side(n: int, what: str) -> int:
    side = math.isqrt(n)
    if side * side != n:
        raise ShapeError(f"{what} token count {n} is not a perfect square")
    return side


def tokens_to_maps(tokens: TokenSet) -> tuple[FeatureMap, FeatureMap]:
    """Row-major unflattening of the template and search token blocks into spatial grids."""
    hz = _square_side(tokens.n_template, "template")
    hx = _square_side(tokens.n_search, "search")
    b, _, c = tokens.tokens.shape
    z = tokens.template.transpose(1, 2).reshape(b, c, hz, hz)
    x = tokens.search.transpose(1, 2).reshape(b, c, hx, hx)
    return FeatureMap(z, "template", tokens.modality), FeatureMap(x, "search", tokens.modality)


def maps_to_tokens(template: FeatureMap, search: FeatureMap, modality: str | None = None) -> TokenSet:
    tz = template.data.flatten(2).transpose(1, 2)
    tx = search.data.flatten(2).transpose(1, 2)
    return TokenSet(torch.cat([tz, tx], dim=1), modality or template.modality, tz.shape[1], tx.shape[1])


def project_pair(f_d, f_tir, alpha, beta, eps: float, mode: str = "norm"):
    """Remove from each map its component along the other, per spatial location.

    Inner products and norms run over the channel axis (dim 1). Both outputs are
    computed from the original inputs. ``mode="norm"`` divides by ``||f|| + eps``,
    ``mode="strict"`` by ``||f||^2 + eps`` (an exact projection).
    """
    if f_d.shape != f_tir.shape:
        raise ShapeError(f"depth map {tuple(f_d.shape)} and TIR map {tuple(f_tir.shape)} differ")
    if mode not in PROJECTION_MODES:
        raise ValueError(f"unknown projection mode {mode!r}")
    inner = (f_d * f_tir).sum(dim=1, keepdim=True)
    sq_d = (f_d * f_d).sum(dim=1, keepdim=True)
    sq_t = (f_tir * f_tir).sum(dim=1, keepdim=True)
    if mode == "strict":
        den_t, den_d = sq_t + eps, sq_d + eps
    else:
        # sqrt(x + tiny) keeps the gradient finite at all-zero pixels
        den_t = torch.sqrt(sq_t + 1e-30) + eps
        den_d = torch.sqrt(sq_d + 1e-30) + eps
    out_d = f_d - alpha * inner / den_t * f_tir
    out_t = f_tir - beta * inner / den_d * f_d
    return out_d, out_t


def orthogonal_project(f_d: FeatureMap, f_tir: FeatureMap, params: "DepthTIRFusion") -> tuple[FeatureMap, FeatureMap]:
    if f_d.region != f_tir.region:
        raise ShapeError(f"region mismatch: {f_d.region} vs {f_tir.region}")
    out_d, out_t = project_pair(f_d.data, f_tir.data, params.alpha, params.beta, params.eps, params.mode)
    return FeatureMap(out_d, f_d.region, f_d.modality), FeatureMap(out_t, f_tir.region, f_tir.modality)


class DepthTIRFusion(nn.Module):
    """Trainable parameters of the depth/TIR fusion stage.

    ``use_projection=False`` skips the orthogonal projection entirely (alpha and
    beta do not exist). ``learn_alpha_beta=False`` keeps the projection with alpha
    and beta fixed buffers.
    """

    def __init__(
        self,
        embed_dim: int,
        mode: str = "norm",
        eps: float = 1e-6,
        use_projection: bool = True,
        learn_alpha_beta: bool = True,
        alpha_init: float = 1.0,
        beta_init: float = 1.0,
    ):
        super().__init__()
        if eps <= 0:
            raise ValueError("eps must be positive")
        if mode not in PROJECTION_MODES:
            raise ValueError(f"unknown projection mode {mode!r}")
        self.embed_dim = embed_dim
        self.mode = mode
        self.eps = float(eps)
        self.use_projection = use_projection
        self.conv_d = nn.Conv2d(embed_dim, embed_dim, 1)
        self.conv_tir = nn.Conv2d(embed_dim, embed_dim, 1)
        self.conv_fuse = nn.Conv2d(2 * embed_dim, embed_dim, 1)
        if use_projection:
            a = torch.tensor(float(alpha_init))
            b = torch.tensor(float(beta_init))
            if learn_alpha_beta:
                self.alpha = nn.Parameter(a)
                self.beta = nn.Parameter(b)
            else:
                self.register_buffer("alpha", a)
                self.register_buffer("beta", b)

    def fuse_maps(self, f_d: FeatureMap, f_tir: FeatureMap) -> FeatureMap:
        d = FeatureMap(self.conv_d(f_d.data), f_d.region, f_d.modality)
        t = FeatureMap(self.conv_tir(f_tir.data), f_tir.region, f_tir.modality)
        if self.use_projection:
            d, t = orthogonal_project(d, t, self)
        fused = self.conv_fuse(torch.cat([d.data, t.data], dim=1))
        return FeatureMap(fused, f_d.region, "fused")

    def forward(self, d_tokens: TokenSet, tir_tokens: TokenSet) -> TokenSet:
        return fuse(d_tokens, tir_tokens, self)


def fuse(d_tokens: TokenSet, tir_tokens: TokenSet, params: DepthTIRFusion) -> TokenSet:
    """Depth and TIR token sets -> fused D-TIR token set with the same layout."""
    if d_tokens.tokens.shape != tir_tokens.tokens.shape or d_tokens.n_template != tir_tokens.n_template:
        raise ShapeError(
            f"depth tokens {tuple(d_tokens.tokens.shape)}/{d_tokens.n_template} and TIR tokens "
            f"{tuple(tir_tokens.tokens.shape)}/{tir_tokens.n_template} are not structurally identical"
        )
    dz, dx = tokens_to_maps(d_tokens)
    tz, tx = tokens_to_maps(tir_tokens)
    fz = params.fuse_maps(dz, tz)
    fx = params.fuse_maps(dx, tx)
    return maps_to_tokens(fz, fx, "fused")
