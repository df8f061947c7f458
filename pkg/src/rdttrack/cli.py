"""``rdttrack`` command: synth, train, eval, align, select-frames, plot-data.

Config files are plain ``key = value`` lines (``#`` starts a comment). Every
key is checked against the subcommand's schema. The output directory comes
from ``--out``, else the ``RDTTRACK_OUT`` environment variable, else the
config's ``out`` key. Errors go to stderr as ``ERROR:<code>: message``.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import shutil
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np
import torch

from . import experiments
from .data_model import (
    DegradationProfile,
    format_box,
    generate_synthetic_sequence,
    list_sequences,
    load_dataset,
    load_sequence,
    save_sequence,
)
from .dataset_tools import apply_alignment, estimate_alignment, read_points, select_representative_frames
from .errors import ConfigError, OutputExistsError, RDTError
from .metrics import evaluate_ope, read_curve_csv, read_summary, write_report
from .tracker import ModelConfig, TrackerModel, TrainConfig, load_checkpoint, save_checkpoint, track_sequence, train
from .tracker.checkpoint import optimizer_state_for
from .tracker.loss import BOX_CELLS, LossWeights

OUT_ENV = "RDTTRACK_OUT"
log = logging.getLogger("rdttrack")


# -- config parsing -------------------------------------------------------------


def _bool(v: str) -> bool:
    low = v.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _modalities(v: str) -> tuple[str, ...]:
    mods = tuple(m.strip().lower() for m in v.replace("+", ",").split(",") if m.strip())
    unknown = set(mods) - {"rgb", "depth", "tir"}
    if unknown or "rgb" not in mods:
        raise ValueError("expected a subset of rgb,depth,tir containing rgb")
    return mods


def _spans(v: str, with_factor: bool = False) -> list[tuple]:
    """``"0-10@0.05; 20-30@0.1"`` (or without ``@f``) -> list of intervals."""
    out = []
    for part in filter(None, (p.strip() for p in v.split(";"))):
        rng, _, fac = part.partition("@")
        a, b = (int(x) for x in rng.split("-"))
        if with_factor:
            out.append((a, b, float(fac) if fac else 0.05))
        elif fac:
            raise ValueError(f"unexpected factor in {part!r}")
        else:
            out.append((a, b))
    return out


def _choice(*options):
    def parse(v):
        if v not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return v

    return parse


SYNTH_SCHEMA = {
    "n_sequences": int,
    "length": int,
    "height": int,
    "width": int,
    "n_distractors": int,
    "speed": float,
    "static": _bool,
    "prefix": str,
    "benchmark": _bool,
    "rgb_darken": lambda v: _spans(v, True),
    "depth_flatten": _spans,
    "tir_crossover": _spans,
    "noise_rgb": float,
    "noise_depth": float,
    "noise_tir": float,
    "seed": int,
    "out": str,
}

TRAIN_SCHEMA = {
    "data": str,
    "backbone": str,
    "out": str,
    "seed": int,
    "modalities": _modalities,
    "fusion_mode": _choice("norm", "strict"),
    "disable_orthogonal_projection": _bool,
    "freeze_alpha_beta": _bool,
    "box_cell": _choice(*BOX_CELLS),
    "patch_size": int,
    "embed_dim": int,
    "template_size": int,
    "search_size": int,
    "depth": int,
    "num_heads": int,
    "pretrain_epochs": int,
    "pretrain_samples": int,
    "pretrain_sequences": int,
    "epochs": int,
    "samples_per_epoch": int,
    "learning_rate": float,
    "lr_drop_epoch": int,
    "lr_drop_factor": float,
    "batch_size": int,
    "weight_decay": float,
}


def parse_config(path, schema: dict) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file {p} not found")
    out = {}
    for lineno, raw in enumerate(p.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"{p}:{lineno}: expected 'key = value'")
        if key not in schema:
            raise ConfigError(f"{p}:{lineno}: unknown key '{key}'")
        if key in out:
            raise ConfigError(f"{p}:{lineno}: duplicate key '{key}'")
        try:
            out[key] = schema[key](value)
        except ValueError as e:
            raise ConfigError(f"{p}:{lineno}: bad value for '{key}': {e}") from None
    return out


def resolve_out(args, conf: dict, default: str) -> Path:
    return Path(args.out or os.environ.get(OUT_ENV) or conf.get("out") or default)


def prepare_out(path: Path, force: bool) -> Path:
    if path.exists() and not path.is_dir():
        raise RDTError(f"output path {path} exists and is not a directory")
    if path.is_dir() and any(path.iterdir()):
        if not force:
            raise OutputExistsError(f"output directory {path} is not empty (use --force)")
        shutil.rmtree(path)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_kv(path: Path, d: dict) -> None:
    path.write_text("".join(f"{k} = {v}\n" for k, v in d.items()))


# -- subcommands ------------------------------------------------------------------


def cmd_synth(args) -> int:
    conf = parse_config(args.config, SYNTH_SCHEMA)
    seed = args.seed if args.seed is not None else conf.get("seed", 0)
    n = conf.get("n_sequences", 4)
    length = conf.get("length", 60)
    kwargs = {k: conf[k] for k in ("height", "width", "n_distractors", "speed", "static") if k in conf}
    noise = {"rgb": conf.get("noise_rgb", 0.01), "depth": conf.get("noise_depth", 0.005), "tir": conf.get("noise_tir", 0.01)}
    try:
        base = DegradationProfile(
            rgb_darken=conf.get("rgb_darken", []),
            depth_flatten=conf.get("depth_flatten", []),
            tir_crossover=conf.get("tir_crossover", []),
            noise_sigma=noise,
        )
    except ValueError as e:
        raise ConfigError(str(e)) from None
    out = prepare_out(resolve_out(args, conf, "synthetic"), args.force)
    prefix = conf.get("prefix", "seq")
    for k in range(n):
        prof = experiments.benchmark_profile(k, length) if conf.get("benchmark") else base
        prof = replace(prof, noise_sigma=noise)
        try:
            seq = generate_synthetic_sequence(length, prof, seed=seed * 10_000 + k, name=f"{prefix}_{k:03d}", **kwargs)
        except ValueError as e:
            raise ConfigError(str(e)) from None
        save_sequence(seq, out)
    _write_kv(out / "synth_config.txt", {**conf, "seed": seed})
    print(f"wrote {n} sequences to {out}")
    return 0


def _model_config(conf: dict) -> ModelConfig:
    base = experiments.DESK_MODEL
    fields = {k: conf[k] for k in ("patch_size", "embed_dim", "template_size", "search_size", "depth", "num_heads") if k in conf}
    return replace(
        base,
        **fields,
        modalities=conf.get("modalities", ("rgb", "depth", "tir")),
        fusion_mode=conf.get("fusion_mode", "norm"),
        use_projection=not conf.get("disable_orthogonal_projection", False),
        learn_alpha_beta=not conf.get("freeze_alpha_beta", False),
    )


def _train_config(conf: dict, seed: int) -> TrainConfig:
    keys = ("epochs", "samples_per_epoch", "learning_rate", "lr_drop_epoch", "lr_drop_factor", "batch_size", "weight_decay")
    vals = {k: conf[k] for k in keys if k in conf}
    base = experiments.DESK_FINETUNE
    if "epochs" in vals and "lr_drop_epoch" not in vals:
        vals["lr_drop_epoch"] = max(0, vals["epochs"] - 1)
    try:
        return replace(base, seed=seed, **vals)
    except ValueError as e:
        raise ConfigError(str(e)) from None


def _training_data(conf: dict, seed: int):
    if "data" in conf:
        return load_dataset(conf["data"])
    train_set, _ = experiments.make_benchmark(seed=seed)
    return train_set


def _backbone(conf: dict, mcfg: ModelConfig, weights: LossWeights, seed: int) -> TrackerModel:
    if "backbone" in conf:
        bb, _ = load_checkpoint(conf["backbone"])
        return bb
    epochs = conf.get("pretrain_epochs", experiments.DESK_PRETRAIN.epochs)
    if epochs == 0:  # random frozen backbone
        torch.manual_seed(seed)
        return TrackerModel(replace(mcfg, modalities=("rgb", "depth", "tir"))).freeze()
    pcfg = replace(
        experiments.DESK_PRETRAIN,
        epochs=epochs,
        lr_drop_epoch=max(0, epochs - 2),
        samples_per_epoch=conf.get("pretrain_samples", experiments.DESK_PRETRAIN.samples_per_epoch),
    )
    n = conf.get("pretrain_sequences")
    seqs = experiments.make_pretrain_set(seed=seed) if n is None else experiments.make_pretrain_set(n, seed=seed)
    return experiments.pretrain(seqs, mcfg, pcfg, weights, seed)


def cmd_train(args) -> int:
    conf = parse_config(args.config, TRAIN_SCHEMA)
    seed = args.seed if args.seed is not None else conf.get("seed", 0)
    weights = replace(experiments.DESK_LOSS, box_cell=conf.get("box_cell", experiments.DESK_LOSS.box_cell))
    tcfg = _train_config(conf, seed)
    start_epoch, opt_state, history = 0, None, []
    if args.resume:
        model, record = load_checkpoint(args.resume)
        start_epoch = int(record["meta"].get("epochs_done", 0))
        history = list(record["meta"].get("history", []))
        opt_state = optimizer_state_for(model, record, tcfg.lr_at(start_epoch), tcfg.weight_decay)
        if start_epoch >= tcfg.epochs:
            raise ConfigError(f"checkpoint already trained for {start_epoch} epochs; raise 'epochs'")
    else:
        try:
            mcfg = _model_config(conf)
        except ValueError as e:
            raise ConfigError(str(e)) from None
        backbone = _backbone(conf, mcfg, weights, seed)
        variant = experiments.Variant("custom", mcfg.modalities, mcfg.use_projection, mcfg.learn_alpha_beta)
        model = experiments.build_variant(backbone, variant, seed=seed, fusion_mode=mcfg.fusion_mode)
    out = prepare_out(resolve_out(args, conf, "run"), args.force)
    seqs = _training_data(conf, seed)
    res = train(model, seqs, tcfg, weights, start_epoch=start_epoch, optimizer_state=opt_state)
    for i, comps in enumerate(res.epoch_components):
        history.append({"epoch": start_epoch + i, "lr": res.epoch_lr[i], **comps})
    meta = {"epochs_done": tcfg.epochs, "history": history, "train_config": tcfg.to_dict(), "seed": seed}
    save_checkpoint(out / "checkpoint.npz", model, meta, res.optimizer)
    with open(out / "loss_log.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["epoch", "lr", "total", "cls", "giou", "l1"])
        for h in history:
            w.writerow([h["epoch"], repr(h["lr"]), repr(h["total"]), repr(h["cls"]), repr(h["giou"]), repr(h["l1"])])
    _write_kv(out / "train_config.txt", {**conf, "seed": seed})
    print(f"trained epochs {start_epoch}..{tcfg.epochs - 1}; checkpoint {out / 'checkpoint.npz'}")
    return 0


def _label(model: TrackerModel, path: Path) -> str:
    mods = "+".join({"rgb": "RGB", "depth": "D", "tir": "T"}[m] for m in model.cfg.modalities)
    suffix = "" if model.cfg.use_projection or model.fusion is None else "-noOP"
    return f"{path.stem}_{mods}{suffix}"


def _oracle_predictions(seq):
    preds, last = [], seq.annotations[0]
    for i in range(len(seq)):
        last = seq.annotations.get(i, last)
        preds.append(last)
    return preds


def cmd_eval(args) -> int:
    if not args.oracle and not args.checkpoint:
        raise ConfigError("give --checkpoint (repeatable) or --oracle")
    data = Path(args.data)
    names = list_sequences(data)
    if not names:
        raise ConfigError(f"no sequences under {data}")
    seqs = [load_sequence(data, n) for n in names]
    gt = {s.name: [s.annotations.get(i) for i in range(len(s))] for s in seqs}
    out = prepare_out(resolve_out(args, {}, "eval"), args.force)
    runs = []
    if args.oracle:
        runs.append(("oracle", "oracle", {s.name: _oracle_predictions(s) for s in seqs}))
    for ck in args.checkpoint or []:
        model, _ = load_checkpoint(ck)
        label = _label(model, Path(ck))

        def run(seq, model=model):
            return seq.name, track_sequence(model, seq)

        if args.jobs > 1:
            with ThreadPoolExecutor(args.jobs) as pool:
                rep_preds = dict(pool.map(run, seqs))
        else:
            rep_preds = dict(map(run, seqs))
        mods = "+".join(model.cfg.modalities)
        runs.append((label, mods, rep_preds))
    rows = []
    for label, mods, preds in runs:
        rep = evaluate_ope(preds, gt)
        write_report(rep, out / label)
        pred_dir = out / label / "predictions"
        pred_dir.mkdir(exist_ok=True)
        for name, boxes in preds.items():
            (pred_dir / f"{name}.txt").write_text("".join(format_box(b) + "\n" for b in boxes))
        rows.append((label, mods, rep.dp_20, rep.auc))
        print(f"{label}: DP@20 {rep.dp_20:.4f} AUC {rep.auc:.4f}")
    with open(out / "matrix.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["run", "modalities", "dp20", "auc"])
        for label, mods, dp, auc in rows:
            w.writerow([label, mods, repr(dp), repr(auc)])
    return 0


def _read_image(path: Path) -> np.ndarray:
    import cv2

    img = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if img is None:
        raise RDTError(f"cannot read image {path}")
    return img


def cmd_align(args) -> int:
    import cv2

    amap = estimate_alignment(read_points(args.points), affine=args.affine)
    out = prepare_out(resolve_out(args, {}, "aligned"), args.force)
    (out / "alignment.txt").write_text(amap.to_text() + "\n")
    print(f"RMS reprojection error {amap.rms_error:.4f} px, condition number {amap.condition_number:.3g}")
    if args.images:
        files = sorted(p for p in Path(args.images).iterdir() if p.suffix.lower() in (".png", ".jpg", ".jpeg", ".tif", ".tiff"))
        for p in files:
            img = _read_image(p)
            size = tuple(args.size) if args.size else img.shape[:2]
            warped = apply_alignment(amap, img.astype(np.float32), size)
            cv2.imwrite(str(out / p.name), np.clip(np.rint(warped), 0, np.iinfo(img.dtype).max).astype(img.dtype))
        print(f"warped {len(files)} images into {out}")
    return 0


def cmd_select_frames(args) -> int:
    path = Path(args.sequence)
    seq = load_sequence(path.parent, path.name)
    seed = args.seed if args.seed is not None else 0
    idx = select_representative_frames(seq, args.k, seed)
    out = prepare_out(resolve_out(args, {}, "selected"), args.force)
    (out / "selected_frames.txt").write_text("".join(f"{i}\n" for i in idx))
    print(" ".join(map(str, idx)))
    return 0


def cmd_plot_data(args) -> int:
    """Merge per-run curve CSVs from an eval directory into plot-ready tables."""
    src = Path(args.eval_dir)
    matrix = src / "matrix.csv"
    if not matrix.is_file():
        raise ConfigError(f"{matrix} not found (run 'eval' first)")
    with open(matrix, newline="") as f:
        runs = [r["run"] for r in csv.DictReader(f)]
    out = prepare_out(resolve_out(args, {}, "plots"), args.force)
    for kind in ("precision", "success"):
        curves = {r: read_curve_csv(src / r / f"{kind}.csv") for r in runs}
        thresholds = [t for t, _ in curves[runs[0]]]
        with open(out / f"{kind}_plot.csv", "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["threshold", *runs])
            for i, t in enumerate(thresholds):
                w.writerow([repr(t), *(repr(curves[r][i][1]) for r in runs)])
    with open(out / "legend.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["run", "precision_label", "success_label"])
        for r in runs:
            dp, auc = read_summary(src / r / "summary.csv")["AGGREGATE"]
            w.writerow([r, f"{r} [{dp:.3f}]", f"{r} [{auc:.3f}]"])
    print(f"plot tables for {len(runs)} runs in {out}")
    return 0


# -- entry point ------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        print(f"ERROR:USAGE: {message}", file=sys.stderr)
        sys.exit(2)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value config file")
    common.add_argument("--seed", type=int)
    common.add_argument("--jobs", type=int, default=1)
    common.add_argument("--force", action="store_true", help="replace a non-empty output directory")
    common.add_argument("--out", help=f"output directory (else ${OUT_ENV})")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="rdttrack", description="Tri-modal RGB + depth + thermal tracking toolkit.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", parents=[common], help="generate a synthetic tri-modal dataset")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("train", parents=[common], help="train fusion and prompt parameters")
    s.add_argument("--resume", help="checkpoint to continue from")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", parents=[common], help="one-pass evaluation")
    s.add_argument("--data", required=True, help="dataset root")
    s.add_argument("--checkpoint", action="append", help="repeat for an ablation matrix")
    s.add_argument("--oracle", action="store_true", help="add a ground-truth predictor run")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("align", parents=[common], help="estimate and apply a thermal-to-RGB map")
    s.add_argument("--points", required=True, help="file of 'xt yt xr yr' lines")
    s.add_argument("--images", help="directory of thermal images to warp")
    s.add_argument("--size", type=int, nargs=2, metavar=("H", "W"))
    s.add_argument("--affine", action="store_true")
    s.set_defaults(func=cmd_align)

    s = sub.add_parser("select-frames", parents=[common], help="k-means representative frames")
    s.add_argument("--sequence", required=True, help="sequence directory")
    s.add_argument("--k", type=int, required=True)
    s.set_defaults(func=cmd_select_frames)

    s = sub.add_parser("plot-data", parents=[common], help="plot-ready curve tables from an eval run")
    s.add_argument("--eval-dir", required=True)
    s.set_defaults(func=cmd_plot_data)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    torch.set_num_threads(max(1, args.jobs))
    if args.seed is not None:
        torch.manual_seed(args.seed)
    try:
        return args.func(args)
    except RDTError as e:
        print(f"ERROR:{e.code}: {e}", file=sys.stderr)
        return 1
    except ValueError as e:
        print(f"ERROR:ARGUMENT: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"ERROR:IO: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
