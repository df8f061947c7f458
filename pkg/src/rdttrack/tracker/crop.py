"""Square crops around a box, resized to the network input size, with mean padding."""

from __future__ import annotations

import math
from dataclasses import dataclass

import cv2
import numpy as np
import torch

from ..data_model import BoundingBox, TriModalFrame
from ..tokenizer import to_three_channel

TEMPLATE_FACTOR = 2.0
SEARCH_FACTOR = 4.0
# crops are standardised before patch embedding
PIXEL_MEAN = 0.5
PIXEL_STD = 0.25


@dataclass(frozen=True)
class CropWindow:
    """Maps between image pixels and crop pixels: ``crop = (img - origin) * scale``."""

    x0: float
    y0: float
    scale: float
    out_size: int

    def box_to_crop(self, box: BoundingBox) -> BoundingBox:
        return BoundingBox((box.x - self.x0) * self.scale, (box.y - self.y0) * self.scale, box.w * self.scale, box.h * self.scale)

    def box_to_image(self, box: BoundingBox) -> BoundingBox:
        return BoundingBox(box.x / self.scale + self.x0, box.y / self.scale + self.y0, box.w / self.scale, box.h / self.scale)


def crop_side(box_w: float, box_h: float, factor: float) -> float:
    return max(1.0, factor * math.sqrt(box_w * box_h))


def window_around(cx: float, cy: float, side: float, out_size: int) -> CropWindow:
    return CropWindow(cx - side / 2, cy - side / 2, out_size / side, out_size)


def crop_image(img: np.ndarray, win: CropWindow) -> np.ndarray:
    """Crop and resize; pixels outside the image take the per-channel image mean."""
    s = win.scale
    m = np.array([[s, 0.0, -win.x0 * s], [0.0, s, -win.y0 * s]], dtype=np.float64)
    means = cv2.mean(img)
    border = tuple(means[: img.shape[2]]) if img.ndim == 3 else means[0]
    interp = cv2.INTER_AREA if s < 1 else cv2.INTER_LINEAR
    out = cv2.warpAffine(
        img, m, (win.out_size, win.out_size), flags=interp, borderMode=cv2.BORDER_CONSTANT, borderValue=border
    )
    if img.ndim == 3 and out.ndim == 2:
        out = out[..., None]
    return out


def crop_frame(
    frame: TriModalFrame, win: CropWindow, modalities=("rgb", "depth", "tir"), normalize: bool = True
) -> dict[str, np.ndarray]:
    """Per-modality 3-channel crops, channel-last float32, standardised unless ``normalize=False``."""
    out = {}
    for m in modalities:
        c = to_three_channel(crop_image(getattr(frame, m), win)).astype(np.float32)
        out[m] = (c - PIXEL_MEAN) / PIXEL_STD if normalize else c
    return out


def to_tensor(crops: list[dict[str, np.ndarray]], dtype=torch.float32) -> dict[str, torch.Tensor]:
    """Stack a list of per-modality HxWx3 crops into (B, 3, H, W) tensors."""
    keys = crops[0].keys()
    return {k: torch.from_numpy(np.stack([c[k] for c in crops])).permute(0, 3, 1, 2).to(dtype).contiguous() for k in keys}
