"""
Depth/thermal fusion and fovea prompts
======================================

The auxiliary branch removes from each of depth and thermal the part that the
other already explains, then turns the fused tokens into per-layer prompts.
"""

import torch

from rdttrack.fusion import project_pair
from rdttrack.prompt import fovea, fovea_weights

torch.manual_seed(0)

# two 8-channel feature maps on a 4x4 grid that share a common component
shared = torch.randn(1, 8, 4, 4)
f_d = shared + 0.3 * torch.randn(1, 8, 4, 4)
f_t = shared + 0.3 * torch.randn(1, 8, 4, 4)


def mean_cos(a, b):
    return ((a * b).sum(1) / (a.norm(dim=1) * b.norm(dim=1))).mean().item()


print(f"cosine before projection: {mean_cos(f_d, f_t):.3f}")

# exact projection: depth keeps only what is orthogonal to thermal
out_d, out_t = project_pair(f_d, f_t, 1.0, 1.0, 1e-6, mode="strict")
print(f"strict: cos(d', t) = {mean_cos(out_d, f_t):.2e}, cos(t', d) = {mean_cos(out_t, f_d):.2e}")

# the default mode divides by the norm rather than its square
out_d, _ = project_pair(f_d, f_t, 1.0, 1.0, 1e-6)
print(f"norm mode: cos(d', t) = {mean_cos(out_d, f_t):.3f}")

# fovea: a spatial softmax that redistributes a fixed budget lambda over the map
a = torch.zeros(1, 1, 4, 4)
a[0, 0, 1, 2] = 3.0
w = fovea_weights(a, lam=1.0)
print("fovea weights sum to", round(w.sum().item(), 6))
print(w[0, 0].numpy().round(3))

# the enhanced map scales each position by its weight, sharpening the peak
print(fovea(a, lam=1.0)[0, 0].numpy().round(3))
