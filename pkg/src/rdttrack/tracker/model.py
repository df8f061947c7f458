from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import NamedTuple

import torch
import torch.nn.functional as F
from torch import nn

from ..errors import ShapeError
from ..fusion import DepthTIRFusion
from ..prompt import PromptBlock, prompt_block
from ..tokenizer import PatchEmbedConfig, Tokenizer, TokenSet

TRAINABLE_PREFIXES = ("fusion.", "prompts.")


@dataclass(frozen=True)
class ModelConfig:
    patch_size: int = 8
    embed_dim: int = 64
    template_size: int = 32
    search_size: int = 64
    depth: int = 4  # number of encoder layers L
    num_heads: int = 4
    mlp_ratio: float = 2.0
    reduction: int = 4
    fovea_lambda: float = 1.0
    fusion_mode: str = "norm"
    fusion_eps: float = 1e-6
    modalities: tuple[str, ...] = ("rgb", "depth", "tir")
    use_projection: bool = True
    learn_alpha_beta: bool = True

    def __post_init__(self):
        mods = tuple(self.modalities)
        object.__setattr__(self, "modalities", mods)
        if "rgb" not in mods:
            raise ValueError("the RGB modality is mandatory")
        unknown = set(mods) - {"rgb", "depth", "tir"}
        if unknown:
            raise ValueError(f"unknown modalities {sorted(unknown)}")
        if self.embed_dim % self.num_heads:
            raise ValueError("num_heads must divide embed_dim")

    @property
    def patch(self) -> PatchEmbedConfig:
        return PatchEmbedConfig(self.patch_size, self.embed_dim, self.template_size, self.search_size)

    @property
    def aux_modalities(self) -> tuple[str, ...]:
        return tuple(m for m in ("depth", "tir") if m in self.modalities)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["modalities"] = list(self.modalities)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["modalities"] = tuple(d.get("modalities", ("rgb", "depth", "tir")))
        return cls(**d)


class HeadOutput(NamedTuple):
    score: torch.Tensor  # (B, h_x, h_x) in (0, 1)
    offset: torch.Tensor  # (B, 2, h_x, h_x) sub-cell (x, y) offset in (0, 1)
    size: torch.Tensor  # (B, 2, h_x, h_x) (w, h) relative to the search crop, in (0, 1)


class Attention(nn.Module):
    def __init__(self, dim, num_heads):
        super().__init__()
        self.num_heads = num_heads
        self.qkv = nn.Linear(dim, 3 * dim)
        self.proj = nn.Linear(dim, dim)

    def forward(self, x):
        b, n, c = x.shape
        qkv = self.qkv(x).reshape(b, n, 3, self.num_heads, c // self.num_heads).permute(2, 0, 3, 1, 4)
        out = F.scaled_dot_product_attention(qkv[0], qkv[1], qkv[2])
        return self.proj(out.transpose(1, 2).reshape(b, n, c))


class EncoderLayer(nn.Module):
    """Pre-norm transformer block: self-attention and feed-forward, each with a skip connection."""

    def __init__(self, dim, num_heads, mlp_ratio=2.0):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = Attention(dim, num_heads)
        self.norm2 = nn.LayerNorm(dim)
        hidden = int(dim * mlp_ratio)
        self.mlp = nn.Sequential(nn.Linear(dim, hidden), nn.GELU(), nn.Linear(hidden, dim))

    def forward(self, x):
        x = x + self.attn(self.norm1(x))
        return x + self.mlp(self.norm2(x))


class CenterHead(nn.Module):
    """Per-token score / offset / size branches over the search-region tokens."""

    def __init__(self, dim):
        super().__init__()
        self.norm = nn.LayerNorm(dim)
        self.score = nn.Sequential(nn.Linear(dim, dim), nn.ReLU(), nn.Linear(dim, 1))
        self.offset = nn.Sequential(nn.Linear(dim, dim), nn.ReLU(), nn.Linear(dim, 2))
        self.size = nn.Sequential(nn.Linear(dim, dim), nn.ReLU(), nn.Linear(dim, 2))
        self.apply(_init_weights)
        # start the score map low so the initial classification loss is moderate
        nn.init.constant_(self.score[-1].bias, -2.0)

    def forward(self, search_tokens: torch.Tensor) -> HeadOutput:
        b, n, _ = search_tokens.shape
        side = math.isqrt(n)
        x = self.norm(search_tokens)

        def to_map(t):
            return t.transpose(1, 2).reshape(b, -1, side, side)

        score = torch.sigmoid(to_map(self.score(x)))[:, 0]
        offset = torch.sigmoid(to_map(self.offset(x)))
        size = torch.sigmoid(to_map(self.size(x)))
        return HeadOutput(score, offset, size)


class TrackerModel(nn.Module):
    """Frozen RGB transformer tracker with trainable D-TIR fusion and per-layer prompt blocks.

    Parameters whose names start with ``fusion.`` or ``prompts.`` are trainable;
    everything else (patch embeddings, positional encodings, encoder, head) is
    frozen once :meth:`freeze` is called.
    """

    def __init__(self, cfg: ModelConfig | None = None):
        super().__init__()
        cfg = cfg or ModelConfig()
        self.cfg = cfg
        self.tokenizer = Tokenizer(cfg.patch, cfg.modalities)
        self.encoder = nn.ModuleList(
            [EncoderLayer(cfg.embed_dim, cfg.num_heads, cfg.mlp_ratio) for _ in range(cfg.depth)]
        )
        self.encoder.apply(_init_weights)
        self.head = CenterHead(cfg.embed_dim)
        if "depth" in cfg.modalities and "tir" in cfg.modalities:
            self.fusion = DepthTIRFusion(
                cfg.embed_dim,
                mode=cfg.fusion_mode,
                eps=cfg.fusion_eps,
                use_projection=cfg.use_projection,
                learn_alpha_beta=cfg.learn_alpha_beta,
            )
        else:
            self.fusion = None
        if cfg.aux_modalities:
            self.prompts = nn.ModuleList(
                [PromptBlock(cfg.embed_dim, cfg.reduction, cfg.fovea_lambda, layer_index=l) for l in range(cfg.depth)]
            )
        else:
            self.prompts = nn.ModuleList()

    # -- parameter bookkeeping -------------------------------------------------

    @property
    def frozen_mask(self) -> dict[str, bool]:
        return {name: not name.startswith(TRAINABLE_PREFIXES) for name, _ in self.named_parameters()}

    def freeze(self) -> "TrackerModel":
        for name, p in self.named_parameters():
            p.requires_grad_(name.startswith(TRAINABLE_PREFIXES))
        return self

    def trainable_parameters(self) -> list[tuple[str, nn.Parameter]]:
        mask = self.frozen_mask
        return [(n, p) for n, p in self.named_parameters() if not mask[n]]

    def backbone_parameters(self) -> list[tuple[str, nn.Parameter]]:
        """RGB-stream parameters (trained only during backbone pretraining)."""
        aux = tuple(f"tokenizer.proj.{m}." for m in ("depth", "tir"))
        return [
            (n, p)
            for n, p in self.named_parameters()
            if not n.startswith(TRAINABLE_PREFIXES) and not n.startswith(aux)
        ]

    def init_aux_embeddings_from_rgb(self) -> None:
        """Copy the RGB patch projection into the depth/TIR projections."""
        src = self.tokenizer.proj["rgb"]
        with torch.no_grad():
            for m in self.cfg.aux_modalities:
                self.tokenizer.proj[m].weight.copy_(src.weight)
                self.tokenizer.proj[m].bias.copy_(src.bias)

    # -- forward ---------------------------------------------------------------

    def embed(self, templates: dict, searches: dict) -> dict[str, TokenSet]:
        return {m: self.tokenizer(templates[m], searches[m], m) for m in self.cfg.modalities}

    def auxiliary_tokens(self, tokens: dict[str, TokenSet]) -> TokenSet | None:
        aux = self.cfg.aux_modalities
        if not aux:
            return None
        if self.fusion is not None:
            return self.fusion(tokens["depth"], tokens["tir"])
        # dual-modal: the single auxiliary stream passes through unchanged
        return tokens[aux[0]]

    def encode(self, t_rgb: TokenSet, t_aux: TokenSet | None, return_prompts: bool = False):
        """Run the encoder; layer l sees ``H^{l-1} + P^l`` with ``P^l = prompt_l(H^{l-1}, P^{l-1})``.

        With ``return_prompts`` the per-layer prompt tokens are returned as well.
        """
        h = t_rgb.tokens
        prompts = []
        if t_aux is None or len(self.prompts) == 0:
            for layer in self.encoder:
                h = layer(h)
        else:
            p = t_aux
            for layer, block in zip(self.encoder, self.prompts):
                p = prompt_block(t_rgb.replace(h), p, block)
                prompts.append(p.tokens)
                h = layer(h + p.tokens)
        return (h, prompts) if return_prompts else h

    def head_forward(self, h: torch.Tensor, n_template: int) -> HeadOutput:
        return self.head(h[:, n_template:])

    def forward(self, tokens: dict[str, TokenSet]) -> HeadOutput:
        t_rgb = tokens["rgb"]
        if t_rgb.embed_dim != self.cfg.embed_dim or t_rgb.n_search != self.cfg.patch.n_search:
            raise ShapeError(
                f"token set ({t_rgb.embed_dim} channels, {t_rgb.n_search} search tokens) does not match "
                f"model ({self.cfg.embed_dim}, {self.cfg.patch.n_search})"
            )
        h = self.encode(t_rgb, self.auxiliary_tokens(tokens))
        return self.head_forward(h, t_rgb.n_template)

    def forward_crops(self, templates: dict, searches: dict) -> HeadOutput:
        return self(self.embed(templates, searches))

    def forward_rgb(self, template: torch.Tensor, search: torch.Tensor) -> HeadOutput:
        """RGB-only path (no prompts), used for backbone pretraining."""
        t = self.tokenizer(template, search, "rgb")
        return self.head_forward(self.encode(t, None), t.n_template)


def _init_weights(m):
    if isinstance(m, nn.Linear):
        nn.init.trunc_normal_(m.weight, std=0.02)
        if m.bias is not None:
            nn.init.zeros_(m.bias)
    elif isinstance(m, nn.LayerNorm):
        nn.init.ones_(m.weight)
        nn.init.zeros_(m.bias)
