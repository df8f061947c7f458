from dataclasses import replace

import numpy as np
import pytest
import torch

from rdttrack.experiments import (
    BENCHMARK_MODES,
    VARIANTS,
    Variant,
    benchmark_profile,
    build_variant,
    evaluate_model,
    make_benchmark,
    make_pretrain_set,
    pretrain,
    run_ablation,
)
from rdttrack.tracker import ModelConfig, TrainConfig

TINY = ModelConfig(embed_dim=16, depth=2, num_heads=2, template_size=16, search_size=32)
QUICK = TrainConfig(epochs=1, samples_per_epoch=32, batch_size=16, lr_drop_epoch=0)


@pytest.fixture(scope="module")
def backbone():
    return pretrain(make_pretrain_set(n=3, length=5), TINY, QUICK, seed=0)


def test_profiles_rotate():
    modes = []
    for k in range(4):
        p = benchmark_profile(k, 30)
        modes.append((bool(p.rgb_darken), bool(p.depth_flatten), bool(p.tir_crossover)))
    assert modes == [(True, True, False), (True, False, True), (False, True, False), (False, False, True)]
    assert len(BENCHMARK_MODES) == 4
    assert benchmark_profile(0, 30).depth_flatten == [(10, 30)]


def test_benchmark_split_disjoint():
    tr, te = make_benchmark(n_train=2, n_test=2, length=4)
    assert [s.name for s in tr] == ["train_000", "train_001"]
    assert not np.array_equal(tr[0].frames[0].rgb, te[0].frames[0].rgb)
    tr2, _ = make_benchmark(n_train=2, n_test=2, length=4)
    assert np.array_equal(tr[1].frames[3].tir, tr2[1].frames[3].tir)


def test_build_variant_copies_backbone(backbone):
    ref = dict(backbone.named_parameters())
    for v in VARIANTS:
        m = build_variant(backbone, v, seed=1)
        assert m.cfg.modalities == v.modalities
        for name, p in m.named_parameters():
            if p.requires_grad:
                assert name.startswith(("fusion.", "prompts."))
            else:
                assert torch.equal(p, ref[name]), name


def test_variant_without_projection(backbone):
    m = build_variant(backbone, VARIANTS[3])
    assert not m.cfg.use_projection
    assert not any("alpha" in n or "beta" in n for n, p in m.named_parameters() if p.requires_grad)


def test_frozen_alpha_beta(backbone):
    m = build_variant(backbone, Variant("x", ("rgb", "depth", "tir"), learn_alpha_beta=False))
    assert not any(("alpha" in n or "beta" in n) and p.requires_grad for n, p in m.named_parameters())


def test_build_variant_rejects_incomplete_backbone(backbone, monkeypatch):
    state = backbone.state_dict()
    dropped = next(k for k in state if k.startswith("encoder."))
    monkeypatch.setattr(backbone, "state_dict", lambda: {k: v for k, v in state.items() if k != dropped})
    with pytest.raises(ValueError, match="backbone lacks"):
        build_variant(backbone, VARIANTS[0])


def test_evaluate_model_jobs_agree(backbone):
    _, te = make_benchmark(n_train=0, n_test=2, length=5)
    m = build_variant(backbone, VARIANTS[0])
    a = evaluate_model(m, te, jobs=1)
    b = evaluate_model(m, te, jobs=2)
    assert a.auc == b.auc and a.dp_20 == b.dp_20


def test_run_ablation_shape(backbone):
    tr, te = make_benchmark(n_train=2, n_test=1, length=5)
    res = run_ablation(backbone, tr, te, QUICK, seeds=(0, 1), variants=VARIANTS[:2])
    assert list(res.reports) == ["RGB+D+T", "RGB+D"]
    assert all(len(r) == 2 for r in res.reports.values())
    assert res.seconds > 0
    for label, dp, auc in res.rows():
        assert 0 <= dp <= 1 and 0 <= auc <= 1
        assert auc == pytest.approx(np.mean([r.auc for r in res.reports[label]]))
