"""
Thermal-to-RGB alignment and keyframe selection
===============================================

Two dataset preparation helpers: fitting a homography from hand-clicked point
pairs, and picking annotation keyframes by clustering frame descriptors.
"""

import numpy as np

from rdttrack.data_model import generate_segmented_sequence
from rdttrack.dataset_tools import apply_alignment, estimate_alignment, select_representative_frames

rng = np.random.default_rng(0)

# 20 clicked pairs (thermal pixel, rgb pixel) under a mild projective map, 0.2 px click noise
H = np.array([[1.02, 0.03, 12.0], [-0.02, 0.98, -7.0], [1e-4, -5e-5, 1.0]])
tir_pts = rng.uniform(0, 640, (20, 2))
hom = np.c_[tir_pts, np.ones(20)] @ H.T
rgb_pts = hom[:, :2] / hom[:, 2:] + rng.normal(0, 0.2, (20, 2))

amap = estimate_alignment(np.stack([tir_pts, rgb_pts], axis=1))
print(f"reprojection RMS {amap.rms_error:.3f} px, condition number {amap.condition_number:.1f}")
print(np.round(amap.matrix, 4))

# warp a 16-bit thermal frame into the RGB grid; the result is float, cast back before saving
tir = (rng.random((48, 64)) * 65535).astype(np.uint16)
warped = apply_alignment(amap, tir, (48, 64))
saved = np.clip(np.rint(warped), 0, 65535).astype(np.uint16)
print("warped", warped.dtype, "->", saved.dtype, saved.shape)

# a clip made of three visually distinct segments: one keyframe lands in each
seq = generate_segmented_sequence([15, 15, 15], seed=1)
picked = select_representative_frames(seq, k=3, seed=0)
print("keyframes", picked, "-> segments", [i // 15 for i in picked])
