from __future__ import annotations

import torch

from ..data_model import BoundingBox, Sequence
from .crop import SEARCH_FACTOR, TEMPLATE_FACTOR, crop_frame, crop_side, to_tensor, window_around
from .loss import decode_argmax
from .model import TrackerModel


@torch.no_grad()
def track_sequence(model: TrackerModel, seq: Sequence, modalities=None) -> list[BoundingBox]:
    """One-pass tracking: initialise on frame 0's box, never re-initialise.

    ``modalities`` restricts the streams fed to an RGB-only model (used to run the
    frozen backbone alone); by default the model's own modality set is used.
    """
    model.eval()
    cfg = model.cfg
    mods = tuple(modalities or cfg.modalities)
    dtype = next(model.parameters()).dtype
    init = seq.annotations[0]
    zwin = window_around(*init.center, crop_side(init.w, init.h, TEMPLATE_FACTOR), cfg.template_size)
    z = to_tensor([crop_frame(seq.frames[0], zwin, mods)], dtype)
    H, W = seq.frames[0].shape

    out = [init]
    prev = init
    for frame in seq.frames[1:]:
        xwin = window_around(*prev.center, crop_side(prev.w, prev.h, SEARCH_FACTOR), cfg.search_size)
        x = to_tensor([crop_frame(frame, xwin, mods)], dtype)
        if mods == ("rgb",):
            pred = model.forward_rgb(z["rgb"], x["rgb"])
        else:
            pred = model.forward_crops(z, x)
        bx, by, bw, bh = (decode_argmax(pred)[0] * cfg.search_size).tolist()
        box = xwin.box_to_image(BoundingBox(bx, by, max(bw, 1e-6), max(bh, 1e-6)))
        w, h = max(box.w, 1.0), max(box.h, 1.0)
        cx, cy = box.center
        # keep the centre inside the image so the next search window stays meaningful
        cx = min(max(cx, 0.0), W - 1.0)
        cy = min(max(cy, 0.0), H - 1.0)
        prev = BoundingBox.from_center(cx, cy, w, h)
        out.append(prev)
    return out
