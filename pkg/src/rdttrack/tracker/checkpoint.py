"""Checkpoints as ``.npz``: named parameter arrays plus a JSON metadata record.

Keys: ``param/<name>`` for every parameter and buffer, ``optim/<name>/<slot>`` for
optimizer moments, and ``__meta__`` holding format version, model config,
frozen mask and free-form training metadata.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch

from ..errors import LoadError
from .model import ModelConfig, TrackerModel

FORMAT_VERSION = 1


def save_checkpoint(path, model: TrackerModel, meta: dict | None = None, optimizer=None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays = {f"param/{k}": v.detach().cpu().numpy() for k, v in model.state_dict().items()}
    record = {
        "format_version": FORMAT_VERSION,
        "dtype": str(next(model.parameters()).dtype).replace("torch.", ""),
        "model_config": model.cfg.to_dict(),
        "frozen_mask": model.frozen_mask,
        "meta": meta or {},
    }
    if optimizer is not None:
        names = {id(p): n for n, p in model.named_parameters()}
        steps = {}
        for p, st in optimizer.state.items():
            n = names[id(p)]
            for slot in ("exp_avg", "exp_avg_sq"):
                arrays[f"optim/{n}/{slot}"] = st[slot].detach().cpu().numpy()
            steps[n] = float(st["step"])
        record["optimizer_steps"] = steps
        record["optimizer_hparams"] = {
            k: v for k, v in optimizer.param_groups[0].items() if k != "params" and isinstance(v, (int, float, bool, tuple))
        }
    arrays["__meta__"] = np.array(json.dumps(record))
    with open(path, "wb") as f:
        np.savez(f, **arrays)
    return path


def load_checkpoint(path) -> tuple[TrackerModel, dict]:
    """Rebuild the model; returns (model, record). Frozen state is re-applied."""
    path = Path(path)
    if not path.is_file():
        raise LoadError(f"checkpoint {path} not found")
    with np.load(path, allow_pickle=False) as data:
        record = json.loads(str(data["__meta__"]))
        if record.get("format_version") != FORMAT_VERSION:
            raise LoadError(f"unsupported checkpoint format {record.get('format_version')}")
        cfg = ModelConfig.from_dict(record["model_config"])
        model = TrackerModel(cfg).to(getattr(torch, record.get("dtype", "float32")))
        state = {k[len("param/"):]: torch.from_numpy(data[k]) for k in data.files if k.startswith("param/")}
        model.load_state_dict(state)
        optim = {}
        for k in data.files:
            if k.startswith("optim/"):
                _, rest = k.split("/", 1)
                name, slot = rest.rsplit("/", 1)
                optim.setdefault(name, {})[slot] = torch.from_numpy(data[k].copy())
    model.freeze()
    model.eval()
    record["optimizer_moments"] = optim
    return model, record


def optimizer_state_for(model: TrackerModel, record: dict, lr: float, weight_decay: float) -> dict | None:
    """Rebuild an AdamW ``state_dict`` over ``model.trainable_parameters()`` from a loaded record."""
    moments = record.get("optimizer_moments") or {}
    steps = record.get("optimizer_steps") or {}
    named = model.trainable_parameters()
    if not moments or any(n not in moments for n, _ in named):
        return None
    hp = dict(record.get("optimizer_hparams", {}))
    hp.update(lr=lr, weight_decay=weight_decay)
    if "betas" in hp:
        hp["betas"] = tuple(hp["betas"])
    state = {
        i: {"step": torch.tensor(steps[n]), "exp_avg": moments[n]["exp_avg"], "exp_avg_sq": moments[n]["exp_avg_sq"]}
        for i, (n, _) in enumerate(named)
    }
    hp["params"] = list(range(len(named)))
    return {"state": state, "param_groups": [hp]}
