"""
Pretrain, fine-tune and track
=============================

A frozen RGB tracker is first trained on clean clips. Fusion and prompt blocks
are then fitted on degraded tri-modal data while everything else stays frozen.

The settings below are scaled down to run in about a minute. The desk-scale
settings live in ``rdttrack.experiments`` (``DESK_MODEL``, ``DESK_PRETRAIN``,
``DESK_FINETUNE``) and take a few minutes on one CPU core.
"""

import numpy as np
import torch

from rdttrack.experiments import VARIANTS, build_variant, evaluate_model, make_benchmark, make_pretrain_set, pretrain
from rdttrack.tracker import ModelConfig, TrainConfig, train

torch.set_num_threads(1)

# stage 1: RGB backbone on 40 short clean clips
model_cfg = ModelConfig(embed_dim=32, depth=2, num_heads=4)
pre_cfg = TrainConfig(epochs=3, samples_per_epoch=1024, batch_size=32, lr_drop_epoch=2, warmup_steps=20)
backbone = pretrain(make_pretrain_set(n=40, length=16), model_cfg, pre_cfg)

# stage 2: only fusion.* and prompts.* parameters train
train_set, test_set = make_benchmark(n_train=6, n_test=2, length=30)
model = build_variant(backbone, VARIANTS[0])
n_train = sum(p.numel() for _, p in model.trainable_parameters())
n_all = sum(p.numel() for p in model.parameters())
print(f"trainable {n_train} of {n_all} parameters")

ft_cfg = TrainConfig(epochs=1, samples_per_epoch=256, batch_size=16, lr_drop_epoch=0)
result = train(model, train_set, ft_cfg)
print("fine-tune loss per epoch", np.round(result.epoch_loss, 3))

# one-pass evaluation: distance precision at 20 px and success AUC
report = evaluate_model(model, test_set)
print(f"DP@20 {report.dp_20:.3f}  AUC {report.auc:.3f}")
for name, r in report.per_sequence.items():
    print(f"  {name}: AUC {r.auc:.3f}")
