"""Tracking loss: soft-target focal classification + GIoU + L1 on the decoded box."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch

from ..data_model import BoundingBox
from ..errors import SampleRejected
from .model import HeadOutput


BOX_CELLS = ("center", "gaussian", "argmax")


@dataclass(frozen=True)
class LossWeights:
    giou: float = 2.0
    l1: float = 5.0
    focal_alpha: float = 0.25  # kept for configuration parity; the soft-target variant does not use it
    focal_gamma: float = 2.0
    box_cell: str = "center"  # where the box branches are supervised, see compute_loss

    def __post_init__(self):
        if min(self.giou, self.l1, self.focal_alpha, self.focal_gamma) < 0:
            raise ValueError("loss weights must be non-negative")
        if self.box_cell not in BOX_CELLS:
            raise ValueError(f"box_cell must be one of {BOX_CELLS}")


def gaussian_radius(height: float, width: float, min_overlap: float = 0.7) -> float:
    """Largest corner displacement keeping IoU >= ``min_overlap`` (CenterNet rule)."""
    a1 = 1
    b1 = height + width
    c1 = width * height * (1 - min_overlap) / (1 + min_overlap)
    r1 = (b1 + math.sqrt(b1**2 - 4 * a1 * c1)) / 2
    a2 = 4
    b2 = 2 * (height + width)
    c2 = (1 - min_overlap) * width * height
    r2 = (b2 + math.sqrt(b2**2 - 4 * a2 * c2)) / 2
    a3 = 4 * min_overlap
    b3 = -2 * min_overlap * (height + width)
    c3 = (min_overlap - 1) * width * height
    r3 = (b3 + math.sqrt(b3**2 - 4 * a3 * c3)) / 2
    return min(r1, r2, r3)


def center_cells(gt: torch.Tensor, side: int) -> tuple[torch.Tensor, torch.Tensor]:
    """Grid cell (row, col) containing each normalised box centre; gt is (B, 4) xywh in [0, 1]."""
    cx = gt[:, 0] + gt[:, 2] / 2
    cy = gt[:, 1] + gt[:, 3] / 2
    col = (cx * side).floor().long().clamp(0, side - 1)
    row = (cy * side).floor().long().clamp(0, side - 1)
    return row, col


def center_target(gt: torch.Tensor, side: int) -> torch.Tensor:
    """Gaussian centre heatmaps ``(B, side, side)`` peaking at exactly 1 on the centre cell."""
    row, col = center_cells(gt, side)
    ys = torch.arange(side, dtype=gt.dtype).view(1, side, 1)
    xs = torch.arange(side, dtype=gt.dtype).view(1, 1, side)
    sig = []
    for w, h in (gt[:, 2:] * side).tolist():
        r = max(0.0, gaussian_radius(h, w))
        sig.append((2 * r + 1) / 6)
    sigma = torch.tensor(sig, dtype=gt.dtype).view(-1, 1, 1)
    d2 = (ys - row.view(-1, 1, 1).to(gt.dtype)) ** 2 + (xs - col.view(-1, 1, 1).to(gt.dtype)) ** 2
    return torch.exp(-d2 / (2 * sigma**2))


def soft_focal_loss(pred: torch.Tensor, target: torch.Tensor, gamma: float = 2.0, eps: float = 1e-12) -> torch.Tensor:
    """Focal loss with soft targets: ``|y - p|^gamma * BCE(p, y)``, zero when ``p == y``.

    Summed over each map, averaged over the batch.
    """
    p = pred.clamp(eps, 1 - eps)
    bce = -(target * torch.log(p) + (1 - target) * torch.log(1 - p))
    loss = (target - p).abs().pow(gamma) * bce
    return loss.flatten(1).sum(1).mean()


def xywh_to_xyxy(b: torch.Tensor) -> torch.Tensor:
    return torch.stack([b[:, 0], b[:, 1], b[:, 0] + b[:, 2], b[:, 1] + b[:, 3]], dim=1)


def giou_xyxy(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Pairwise GIoU of (B, 4) xyxy boxes."""
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    iw = (torch.minimum(a[:, 2], b[:, 2]) - torch.maximum(a[:, 0], b[:, 0])).clamp(min=0)
    ih = (torch.minimum(a[:, 3], b[:, 3]) - torch.maximum(a[:, 1], b[:, 1])).clamp(min=0)
    inter = iw * ih
    union = area_a + area_b - inter
    ew = torch.maximum(a[:, 2], b[:, 2]) - torch.minimum(a[:, 0], b[:, 0])
    eh = torch.maximum(a[:, 3], b[:, 3]) - torch.minimum(a[:, 1], b[:, 1])
    enclose = ew * eh
    return inter / union - (enclose - union) / enclose


def decode_at(pred: HeadOutput, row: torch.Tensor, col: torch.Tensor) -> torch.Tensor:
    """Normalised xywh boxes decoded at the given cells."""
    side = pred.score.shape[-1]
    idx = torch.arange(pred.score.shape[0])
    off = pred.offset[idx, :, row, col]
    wh = pred.size[idx, :, row, col]
    cx = (col.to(off.dtype) + off[:, 0]) / side
    cy = (row.to(off.dtype) + off[:, 1]) / side
    return torch.stack([cx - wh[:, 0] / 2, cy - wh[:, 1] / 2, wh[:, 0], wh[:, 1]], dim=1)


def decode_argmax(pred: HeadOutput) -> torch.Tensor:
    side = pred.score.shape[-1]
    flat = pred.score.flatten(1).argmax(dim=1)
    return decode_at(pred, flat // side, flat % side)


def _as_gt_tensor(gt, search_size, dtype) -> torch.Tensor:
    if isinstance(gt, BoundingBox):
        gt = [gt]
    if isinstance(gt, (list, tuple)):
        gt = torch.from_numpy(np.array([b.as_array() for b in gt], dtype=np.float64))
    return gt.to(dtype) / search_size


def _dense_box_losses(pred: HeadOutput, g: torch.Tensor, sigma: float = 1.0):
    # every cell decodes a box; cells are weighted by a unit-sigma Gaussian around the centre cell
    b, side = pred.score.shape[0], pred.score.shape[-1]
    r0, c0 = center_cells(g, side)
    idx = torch.arange(side, dtype=g.dtype)
    col = idx.view(1, 1, side).expand(b, side, side)
    row = idx.view(1, side, 1).expand(b, side, side)
    d2 = (row - r0.view(-1, 1, 1).to(g.dtype)) ** 2 + (col - c0.view(-1, 1, 1).to(g.dtype)) ** 2
    wt = torch.exp(-d2 / (2 * sigma**2))
    wt = (wt / wt.flatten(1).sum(1).view(-1, 1, 1)).reshape(-1)
    cx = (col + pred.offset[:, 0]) / side
    cy = (row + pred.offset[:, 1]) / side
    w, h = pred.size[:, 0], pred.size[:, 1]
    pb = torch.stack([cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2], dim=-1).reshape(-1, 4)
    gb = xywh_to_xyxy(g).repeat_interleave(side * side, dim=0)
    giou_loss = (wt * (1 - giou_xyxy(pb, gb))).sum() / b
    l1 = (wt * (pb - gb).abs().mean(1)).sum() / b
    return giou_loss, l1


def compute_loss(
    pred: HeadOutput, gt, weights: LossWeights | None = None, search_size: int = 64, box_cell: str | None = None
) -> dict:
    """Total loss and its components.

    ``gt`` holds boxes in search-crop pixel coordinates (a BoundingBox, a list of
    them, or a ``(B, 4)`` xywh tensor). The box branches are read at the
    ground-truth centre cell (``box_cell="center"``), at the peak of the
    predicted score map (``"argmax"``, as at inference), or at every cell with
    Gaussian weights around the centre cell (``"gaussian"``). Raises
    :class:`SampleRejected` when a ground-truth centre lies outside the crop.
    """
    weights = weights or LossWeights()
    box_cell = box_cell or weights.box_cell
    g = _as_gt_tensor(gt, search_size, pred.score.dtype)
    cx = g[:, 0] + g[:, 2] / 2
    cy = g[:, 1] + g[:, 3] / 2
    outside = (cx < 0) | (cx >= 1) | (cy < 0) | (cy >= 1)
    if bool(outside.any()):
        raise SampleRejected(f"{int(outside.sum())} ground-truth centre(s) outside the search crop")
    side = pred.score.shape[-1]
    target = center_target(g, side)
    cls = soft_focal_loss(pred.score, target, weights.focal_gamma)
    if box_cell == "gaussian":
        giou_loss, l1 = _dense_box_losses(pred, g)
    else:
        if box_cell == "argmax":
            flat = pred.score.detach().flatten(1).argmax(dim=1)
            row, col = flat // side, flat % side
        else:
            row, col = center_cells(g, side)
        box = decode_at(pred, row, col)
        pb, gb = xywh_to_xyxy(box), xywh_to_xyxy(g)
        giou_loss = (1 - giou_xyxy(pb, gb)).mean()
        l1 = (pb - gb).abs().mean()
    total = cls + weights.giou * giou_loss + weights.l1 * l1
    return {"total": total, "cls": cls, "giou": giou_loss, "l1": l1}
