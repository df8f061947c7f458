"""Training-pair sampling and the frozen-backbone training loop."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import torch

from ..data_model import Sequence
from ..errors import SampleRejected
from .crop import SEARCH_FACTOR, TEMPLATE_FACTOR, crop_frame, crop_side, to_tensor, window_around
from .loss import LossWeights, compute_loss
from .model import TrackerModel

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 4
    samples_per_epoch: int = 2048
    learning_rate: float = 1e-3
    lr_drop_epoch: int = 3
    lr_drop_factor: float = 0.1
    batch_size: int = 32
    seed: int = 0
    weight_decay: float = 1e-4
    max_gap: int = 30
    center_jitter: float = 3.0
    scale_jitter: float = 0.25
    warmup_steps: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.samples_per_epoch < 1 or self.batch_size < 1:
            raise ValueError("epochs, samples_per_epoch and batch_size must be positive")
        if not self.lr_drop_epoch < self.epochs:
            raise ValueError(f"lr_drop_epoch ({self.lr_drop_epoch}) must be < epochs ({self.epochs})")

    @classmethod
    def full_scale(cls, **overrides) -> "TrainConfig":
        """Full-scale schedule: 60 epochs of 60K samples, lr 4e-5 dropped 10x after epoch 48."""
        base = dict(epochs=60, samples_per_epoch=60_000, learning_rate=4e-5, lr_drop_epoch=48, lr_drop_factor=0.1)
        base.update(overrides)
        return cls(**base)

    def lr_at(self, epoch: int) -> float:
        return self.learning_rate * (self.lr_drop_factor if epoch >= self.lr_drop_epoch else 1.0)

    def lr_at_step(self, epoch: int, step: int, steps_per_epoch: int) -> float:
        """Epoch learning rate with a linear warmup over the first ``warmup_steps`` updates."""
        lr = self.lr_at(epoch)
        done = epoch * steps_per_epoch + step
        if done < self.warmup_steps:
            lr *= (done + 1) / self.warmup_steps
        return lr

    def to_dict(self) -> dict:
        return asdict(self)


class PairSampler:
    """Draws (template frame, search frame) pairs from annotated frames of the training sequences.

    The search window is jittered in centre and scale around the search-frame box
    so the target does not always sit in the middle of the crop.
    """

    def __init__(self, sequences: list[Sequence], model_cfg, rng: np.random.Generator, train_cfg: TrainConfig):
        self.sequences = [s for s in sequences if len(s.annotations) >= 1]
        if not self.sequences:
            raise ValueError("empty training set")
        self.annotated = [np.array(sorted(s.annotations)) for s in self.sequences]
        self.cfg = model_cfg
        self.tcfg = train_cfg
        self.rng = rng
        self.rejected = 0

    def sample(self, modalities):
        rng = self.rng
        k = int(rng.integers(len(self.sequences)))
        seq, idx = self.sequences[k], self.annotated[k]
        i = int(rng.choice(idx))
        near = idx[np.abs(idx - i) <= self.tcfg.max_gap]
        j = int(rng.choice(near))
        zbox, xbox = seq.annotations[i], seq.annotations[j]

        zcx, zcy = zbox.center
        zwin = window_around(zcx, zcy, crop_side(zbox.w, zbox.h, TEMPLATE_FACTOR), self.cfg.template_size)

        jw, jh = np.array([xbox.w, xbox.h]) * np.exp(rng.normal(0, self.tcfg.scale_jitter, 2))
        max_off = math.sqrt(jw * jh) * self.tcfg.center_jitter
        cx, cy = np.array(xbox.center) + max_off * (rng.random(2) - 0.5)
        xwin = window_around(cx, cy, crop_side(jw, jh, SEARCH_FACTOR), self.cfg.search_size)
        gt = xwin.box_to_crop(xbox)
        gcx, gcy = gt.center
        if not (0 <= gcx < self.cfg.search_size and 0 <= gcy < self.cfg.search_size):
            self.rejected += 1
            return None
        return crop_frame(seq.frames[i], zwin, modalities), crop_frame(seq.frames[j], xwin, modalities), gt

    def batch(self, n: int, modalities, dtype=torch.float32):
        zs, xs, gts = [], [], []
        while len(gts) < n:
            s = self.sample(modalities)
            if s is None:
                continue
            zs.append(s[0])
            xs.append(s[1])
            gts.append(s[2].as_array())
        return to_tensor(zs, dtype), to_tensor(xs, dtype), torch.tensor(np.array(gts), dtype=dtype)


@dataclass
class TrainResult:
    model: TrackerModel
    epoch_loss: list[float] = field(default_factory=list)
    epoch_components: list[dict] = field(default_factory=list)
    epoch_lr: list[float] = field(default_factory=list)
    step_log: list[dict] = field(default_factory=list)
    skipped: int = 0
    optimizer: torch.optim.Optimizer | None = None

    def history(self) -> dict:
        return {
            "epoch_loss": self.epoch_loss,
            "epoch_components": self.epoch_components,
            "epoch_lr": self.epoch_lr,
            "skipped": self.skipped,
        }


def _fit(model, named_params, forward, sequences, cfg: TrainConfig, modalities, weights, start_epoch=0, optimizer_state=None):
    if not sequences:
        raise ValueError("empty training set")
    torch.manual_seed(cfg.seed)
    rng = np.random.default_rng(cfg.seed + 7919 * start_epoch)
    dtype = next(model.parameters()).dtype
    sampler = PairSampler(sequences, model.cfg, rng, cfg)
    params = [p for _, p in named_params]
    opt = torch.optim.AdamW(params, lr=cfg.lr_at(start_epoch), weight_decay=cfg.weight_decay)
    if optimizer_state is not None:
        opt.load_state_dict(optimizer_state)
    result = TrainResult(model, optimizer=opt)
    steps_per_epoch = max(1, cfg.samples_per_epoch // cfg.batch_size)
    model.train()
    for epoch in range(start_epoch, cfg.epochs):
        lr = cfg.lr_at(epoch)
        totals = {"total": 0.0, "cls": 0.0, "giou": 0.0, "l1": 0.0}
        for step in range(steps_per_epoch):
            lr = cfg.lr_at_step(epoch, step, steps_per_epoch)
            for g in opt.param_groups:
                g["lr"] = lr
            z, x, gt = sampler.batch(cfg.batch_size, modalities, dtype)
            try:
                losses = compute_loss(forward(z, x), gt, weights, model.cfg.search_size)
            except SampleRejected:
                result.skipped += cfg.batch_size
                continue
            before = [p.detach().clone() for p in params]
            opt.zero_grad(set_to_none=True)
            losses["total"].backward()
            opt.step()
            with torch.no_grad():
                sq = sum(float(((p - b) ** 2).sum()) for p, b in zip(params, before))
                n = sum(p.numel() for p in params)
            result.step_log.append({"epoch": epoch, "step": step, "lr": lr, "update_rms": math.sqrt(sq / max(n, 1))})
            for k in totals:
                totals[k] += float(losses[k].detach())
        comps = {k: v / steps_per_epoch for k, v in totals.items()}
        result.epoch_loss.append(comps["total"])
        result.epoch_components.append(comps)
        result.epoch_lr.append(cfg.lr_at(epoch))
        log.info("epoch %d lr %.2e loss %.4f", epoch, lr, comps["total"])
    result.skipped += sampler.rejected
    model.eval()
    return result


def train(
    model: TrackerModel,
    sequences: list[Sequence],
    cfg: TrainConfig,
    weights: LossWeights | None = None,
    start_epoch: int = 0,
    optimizer_state=None,
) -> TrainResult:
    """Fine-tune the fusion and prompt parameters; everything else stays bit-identical."""
    model.freeze()
    named = model.trainable_parameters()
    if not named:
        raise ValueError("model has no trainable parameters (RGB-only configuration)")
    mods = model.cfg.modalities
    return _fit(model, named, model.forward_crops, sequences, cfg, mods, weights, start_epoch, optimizer_state)


def pretrain_backbone(model: TrackerModel, sequences: list[Sequence], cfg: TrainConfig, weights=None) -> TrainResult:
    """Train the RGB stream alone (stand-in for foundation-tracker weights), then freeze it.

    The depth/TIR patch projections are initialised from the trained RGB projection.
    """
    named = model.backbone_parameters()
    for _, p in model.named_parameters():
        p.requires_grad_(False)
    for _, p in named:
        p.requires_grad_(True)

    def forward(z, x):
        return model.forward_rgb(z["rgb"], x["rgb"])

    result = _fit(model, named, forward, sequences, cfg, ("rgb",), weights)
    model.init_aux_embeddings_from_rgb()
    model.freeze()
    return result

