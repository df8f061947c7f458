"""Boxes, tri-modal frames, sequences, on-disk layout and the synthetic sequence generator.

On-disk layout of one sequence::

    <root>/<name>/rgb/000000.png      8-bit BGR
    <root>/<name>/depth/000000.png    16-bit single channel
    <root>/<name>/tir/000000.png      16-bit single channel
    <root>/<name>/groundtruth.txt     "x,y,w,h" per frame (dense) or "index:x,y,w,h" (sparse)

Pixel values are normalised to [0, 1] on load.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import cv2
import numpy as np

from .errors import InvalidBoxError, LoadError, ModalityAlignmentError, ParseError

MODALITY_DIRS = ("rgb", "depth", "tir")
_U16 = 65535.0


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box ``[x, y, w, h]`` with (x, y) the top-left corner in pixels."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        vals = (self.x, self.y, self.w, self.h)
        if not all(math.isfinite(v) for v in vals):
            raise InvalidBoxError(f"non-finite box {vals}")
        if not (self.w > 0 and self.h > 0):
            raise InvalidBoxError(f"box width and height must be positive, got w={self.w}, h={self.h}")

    @property
    def center(self) -> tuple[float, float]:
        return self.x + self.w / 2, self.y + self.h / 2

    @property
    def area(self) -> float:
        return self.w * self.h

    def as_xyxy(self) -> tuple[float, float, float, float]:
        return self.x, self.y, self.x + self.w, self.y + self.h

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.w, self.h], dtype=np.float64)

    def translate(self, dx: float, dy: float) -> "BoundingBox":
        return BoundingBox(self.x + dx, self.y + dy, self.w, self.h)

    @classmethod
    def from_center(cls, cx, cy, w, h) -> "BoundingBox":
        return cls(cx - w / 2, cy - h / 2, w, h)

    @classmethod
    def from_array(cls, a) -> "BoundingBox":
        x, y, w, h = (float(v) for v in a)
        return cls(x, y, w, h)


@dataclass
class TriModalFrame:
    rgb: np.ndarray  # H x W x 3, float32 in [0, 1]
    depth: np.ndarray  # H x W
    tir: np.ndarray  # H x W
    timestamp_index: int = 0

    def __post_init__(self):
        if self.rgb.ndim != 3 or self.rgb.shape[2] != 3:
            raise ModalityAlignmentError(f"rgb must be HxWx3, got {self.rgb.shape}")
        hw = self.rgb.shape[:2]
        for name in ("depth", "tir"):
            img = getattr(self, name)
            if img.shape != hw:
                raise ModalityAlignmentError(f"{name} shape {img.shape} does not match rgb {hw}")

    @property
    def shape(self) -> tuple[int, int]:
        return self.rgb.shape[:2]


@dataclass
class Sequence:
    frames: list[TriModalFrame]
    annotations: dict[int, BoundingBox]
    name: str = "sequence"

    def __post_init__(self):
        n = len(self.frames)
        for idx in self.annotations:
            if not 0 <= idx < n:
                raise ValueError(f"annotation index {idx} outside [0, {n})")
        if n and 0 not in self.annotations:
            raise ValueError("frame 0 must be annotated")
        if n:
            hw = self.frames[0].shape
            for f in self.frames:
                if f.shape != hw:
                    raise ModalityAlignmentError(f"frame {f.timestamp_index} has shape {f.shape}, expected {hw}")

    def __len__(self):
        return len(self.frames)

    def __iter__(self) -> Iterator[TriModalFrame]:
        return iter(self.frames)

    @property
    def is_dense(self) -> bool:
        return len(self.annotations) == len(self.frames)

    def boxes(self) -> list[BoundingBox]:
        """Dense ground truth as a list. Raises if any frame is unannotated."""
        if not self.is_dense:
            raise ValueError(f"sequence {self.name!r} is sparsely annotated")
        return [self.annotations[i] for i in range(len(self.frames))]

    def with_annotations(self, indices) -> "Sequence":
        """Copy keeping only the annotations at ``indices`` (frame 0 is always kept)."""
        keep = set(indices) | {0}
        ann = {i: b for i, b in self.annotations.items() if i in keep}
        return Sequence(self.frames, ann, self.name)


# ---------------------------------------------------------------------------
# groundtruth.txt


def _fmt(v: float) -> str:
    v = float(v)
    return str(int(v)) if v.is_integer() else repr(v)


def format_box(box: BoundingBox) -> str:
    return ",".join(_fmt(v) for v in (box.x, box.y, box.w, box.h))


def parse_box(text: str, line_number=None) -> BoundingBox:
    parts = [p.strip() for p in text.replace("\t", ",").split(",")]
    if len(parts) != 4:
        raise ParseError(f"expected 4 comma-separated values, got {text.strip()!r}", line_number)
    try:
        vals = [float(p) for p in parts]
    except ValueError:
        raise ParseError(f"non-numeric value in {text.strip()!r}", line_number) from None
    try:
        return BoundingBox(*vals)
    except InvalidBoxError as e:
        raise ParseError(str(e), line_number) from None


def write_groundtruth(path, annotations: dict[int, BoundingBox], n_frames: int) -> None:
    dense = len(annotations) == n_frames and set(annotations) == set(range(n_frames))
    with open(path, "w") as f:
        for i in sorted(annotations):
            line = format_box(annotations[i])
            f.write(f"{line}\n" if dense else f"{i}:{line}\n")


def read_groundtruth(path) -> dict[int, BoundingBox]:
    annotations = {}
    with open(path) as f:
        lines = [ln.rstrip("\n") for ln in f]
    sparse = any(":" in ln for ln in lines)
    row = 0
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        if sparse:
            if ":" not in line:
                raise ParseError("missing 'index:' prefix in sparse groundtruth", lineno)
            idx_text, box_text = line.split(":", 1)
            try:
                idx = int(idx_text)
            except ValueError:
                raise ParseError(f"bad frame index {idx_text!r}", lineno) from None
            if idx in annotations:
                raise ParseError(f"duplicate frame index {idx}", lineno)
        else:
            idx, box_text = row, line
        annotations[idx] = parse_box(box_text, lineno)
        row += 1
    return annotations


# ---------------------------------------------------------------------------
# load / save


def _frame_files(folder: Path) -> list[Path]:
    return sorted(p for p in folder.iterdir() if p.suffix.lower() in (".png", ".jpg", ".jpeg", ".bmp"))


def _read_gray(path: Path) -> np.ndarray:
    img = cv2.imread(str(path), cv2.IMREAD_ANYDEPTH | cv2.IMREAD_GRAYSCALE)
    if img is None:
        raise LoadError(f"cannot read image {path}")
    scale = _U16 if img.dtype == np.uint16 else 255.0
    return img.astype(np.float32) / scale


def _read_rgb(path: Path) -> np.ndarray:
    img = cv2.imread(str(path), cv2.IMREAD_COLOR)
    if img is None:
        raise LoadError(f"cannot read image {path}")
    return cv2.cvtColor(img, cv2.COLOR_BGR2RGB).astype(np.float32) / 255.0


def load_sequence(root_path, name: str) -> Sequence:
    seq_dir = Path(root_path) / name
    if not seq_dir.is_dir():
        raise LoadError(f"sequence directory {seq_dir} does not exist")
    files = {}
    for mod in MODALITY_DIRS:
        folder = seq_dir / mod
        if not folder.is_dir():
            raise ModalityAlignmentError(f"sequence {name!r}: missing modality folder '{mod}/'")
        files[mod] = _frame_files(folder)
    counts = {m: len(v) for m, v in files.items()}
    if len(set(counts.values())) != 1:
        raise ModalityAlignmentError(f"sequence {name!r}: frame counts differ across modalities {counts}")
    gt_path = seq_dir / "groundtruth.txt"
    if not gt_path.is_file():
        raise LoadError(f"sequence {name!r}: missing groundtruth.txt")
    annotations = read_groundtruth(gt_path)

    frames = []
    for i, (fr, fd, ft) in enumerate(zip(files["rgb"], files["depth"], files["tir"])):
        frames.append(TriModalFrame(_read_rgb(fr), _read_gray(fd), _read_gray(ft), i))
    n = len(frames)
    bad = [i for i in annotations if i >= n]
    if bad:
        raise ParseError(f"sequence {name!r}: annotations for frames {bad} beyond {n} frames")
    return Sequence(frames, annotations, name)


def save_sequence(seq: Sequence, root_path) -> Path:
    seq_dir = Path(root_path) / seq.name
    for mod in MODALITY_DIRS:
        (seq_dir / mod).mkdir(parents=True, exist_ok=True)
    for i, fr in enumerate(seq.frames):
        rgb8 = np.round(np.clip(fr.rgb, 0, 1) * 255).astype(np.uint8)
        cv2.imwrite(str(seq_dir / "rgb" / f"{i:06d}.png"), cv2.cvtColor(rgb8, cv2.COLOR_RGB2BGR))
        for mod in ("depth", "tir"):
            img16 = np.round(np.clip(getattr(fr, mod), 0, 1) * _U16).astype(np.uint16)
            cv2.imwrite(str(seq_dir / mod / f"{i:06d}.png"), img16)
    write_groundtruth(seq_dir / "groundtruth.txt", seq.annotations, len(seq.frames))
    return seq_dir


def list_sequences(root_path) -> list[str]:
    root = Path(root_path)
    return sorted(p.name for p in root.iterdir() if (p / "groundtruth.txt").is_file())


def load_dataset(root_path) -> list[Sequence]:
    return [load_sequence(root_path, n) for n in list_sequences(root_path)]


# ---------------------------------------------------------------------------
# synthetic generation


def _check_intervals(kind, intervals):
    spans = sorted((int(iv[0]), int(iv[1])) for iv in intervals)
    for a, b in spans:
        if a < 0 or b <= a:
            raise ValueError(f"{kind}: invalid frame interval [{a}, {b})")
    for (a0, b0), (a1, b1) in zip(spans, spans[1:]):
        if a1 < b0:
            raise ValueError(f"{kind}: intervals [{a0}, {b0}) and [{a1}, {b1}) overlap")


@dataclass
class DegradationProfile:
    """Per-frame-interval modality degradations. Intervals are half-open ``[start, stop)``."""

    rgb_darken: list[tuple[int, int, float]] = field(default_factory=list)
    depth_flatten: list[tuple[int, int]] = field(default_factory=list)
    tir_crossover: list[tuple[int, int]] = field(default_factory=list)
    noise_sigma: dict[str, float] = field(default_factory=lambda: {"rgb": 0.01, "depth": 0.005, "tir": 0.01})

    def __post_init__(self):
        _check_intervals("rgb_darken", self.rgb_darken)
        _check_intervals("depth_flatten", self.depth_flatten)
        _check_intervals("tir_crossover", self.tir_crossover)
        for _, _, factor in self.rgb_darken:
            if not 0.0 <= factor <= 1.0:
                raise ValueError(f"rgb_darken factor {factor} outside [0, 1]")
        for mod, s in self.noise_sigma.items():
            if mod not in MODALITY_DIRS:
                raise ValueError(f"unknown modality in noise_sigma: {mod!r}")
            if s < 0:
                raise ValueError(f"noise_sigma[{mod}] must be non-negative")

    def rgb_factor(self, i: int) -> float:
        for a, b, f in self.rgb_darken:
            if a <= i < b:
                return float(f)
        return 1.0

    def depth_flat(self, i: int) -> bool:
        return any(a <= i < b for a, b in self.depth_flatten)

    def tir_cross(self, i: int) -> bool:
        return any(a <= i < b for a, b in self.tir_crossover)

    def max_frame(self) -> int:
        ends = [iv[1] for iv in (*self.rgb_darken, *self.depth_flatten, *self.tir_crossover)]
        return max(ends, default=0)


def _smooth_field(rng, h, w, channels, grid=6):
    coarse = rng.random((grid, grid, channels)).astype(np.float32)
    out = cv2.resize(coarse, (w, h), interpolation=cv2.INTER_CUBIC)
    return out.reshape(h, w, channels)


def _texture(rng, h, w):
    """Two-colour stripe/checker pattern with a saturated palette."""
    c0 = rng.uniform(0.55, 1.0, 3) * rng.permutation([1.0, 0.35, 0.1])
    c1 = rng.uniform(0.0, 0.3, 3)
    yy, xx = np.mgrid[0:h, 0:w]
    period = rng.integers(3, 7)
    kind = rng.integers(3)
    if kind == 0:
        mask = ((xx // period) + (yy // period)) % 2
    elif kind == 1:
        mask = (xx // period) % 2
    else:
        mask = ((xx + yy) // period) % 2
    tex = np.where(mask[..., None] == 1, c0, c1).astype(np.float32)
    return np.clip(tex + rng.normal(0, 0.03, tex.shape).astype(np.float32), 0, 1)


class _Mover:
    def __init__(self, rng, img_h, img_w, w, h, speed, static=False):
        self.img_h, self.img_w = img_h, img_w
        self.w, self.h = w, h
        self.x = rng.uniform(4, img_w - w - 4)
        self.y = rng.uniform(4, img_h - h - 4)
        ang = rng.uniform(0, 2 * np.pi)
        v = 0.0 if static else rng.uniform(0.4, 1.0) * speed
        self.vx, self.vy = v * np.cos(ang), v * np.sin(ang)
        self.rng = rng
        self.static = static

    def step(self):
        if self.static:
            return
        # smooth heading drift, bounce off borders
        ang = self.rng.normal(0, 0.15)
        c, s = np.cos(ang), np.sin(ang)
        self.vx, self.vy = c * self.vx - s * self.vy, s * self.vx + c * self.vy
        self.x += self.vx
        self.y += self.vy
        if self.x < 1 or self.x > self.img_w - self.w - 1:
            self.vx = -self.vx
            self.x = float(np.clip(self.x, 1, self.img_w - self.w - 1))
        if self.y < 1 or self.y > self.img_h - self.h - 1:
            self.vy = -self.vy
            self.y = float(np.clip(self.y, 1, self.img_h - self.h - 1))

    def rect(self) -> tuple[int, int, int, int]:
        return int(round(self.x)), int(round(self.y)), int(self.w), int(self.h)


def generate_synthetic_sequence(
    length: int,
    profile: DegradationProfile | None = None,
    seed: int = 0,
    *,
    height: int = 128,
    width: int = 128,
    target_size: tuple[int, int] = (14, 24),
    n_distractors: int = 2,
    speed: float = 2.0,
    static: bool = False,
    name: str | None = None,
) -> Sequence:
    """Render a moving textured rectangle (the target) plus distractors in three aligned modalities.

    RGB shows texture, depth encodes distance (target nearest), TIR encodes
    temperature (target hottest). Ground-truth boxes are integer-aligned and match
    the rendered target exactly. Degradations from ``profile`` are applied on
    their declared intervals only.
    """
    if length < 2:
        raise ValueError(f"length must be >= 2, got {length}")
    profile = profile or DegradationProfile()
    if profile.max_frame() > length:
        raise ValueError(f"degradation interval ends at {profile.max_frame()} beyond length {length}")
    rng = np.random.default_rng(seed)
    H, W = height, width

    bg_rgb = 0.2 + 0.4 * _smooth_field(rng, H, W, 3)
    yy, xx = np.mgrid[0:H, 0:W].astype(np.float32)
    bg_depth = 0.75 + 0.2 * (yy / H) + 0.05 * _smooth_field(rng, H, W, 1)[..., 0]
    bg_tir = 0.3 + 0.1 * _smooth_field(rng, H, W, 1)[..., 0]
    flat_depth = float(bg_depth.mean())

    tw, th = rng.integers(target_size[0], target_size[1] + 1, size=2)
    target = _Mover(rng, H, W, int(tw), int(th), speed, static)
    target_tex = _texture(rng, int(th), int(tw))
    target_depth = rng.uniform(0.25, 0.35)
    target_temp = rng.uniform(0.8, 0.9)

    distractors = []
    for _ in range(n_distractors):
        dw, dh = rng.integers(target_size[0], target_size[1] + 1, size=2)
        mv = _Mover(rng, H, W, int(dw), int(dh), speed, static)
        distractors.append((mv, _texture(rng, int(dh), int(dw)), rng.uniform(0.5, 0.6), rng.uniform(0.45, 0.55)))

    sig = {m: profile.noise_sigma.get(m, 0.0) for m in MODALITY_DIRS}
    frames, annotations = [], {}
    for i in range(length):
        rgb = bg_rgb.copy()
        depth = bg_depth.copy()
        tir = bg_tir.copy()
        for mv, tex, d, t in distractors:
            x, y, w, h = mv.rect()
            rgb[y:y + h, x:x + w] = tex
            depth[y:y + h, x:x + w] = d
            tir[y:y + h, x:x + w] = t
            mv.step()
        x, y, w, h = target.rect()
        rgb[y:y + h, x:x + w] = target_tex
        depth[y:y + h, x:x + w] = target_depth + 0.02 * (xx[y:y + h, x:x + w] - x) / w
        if profile.tir_cross(i):
            tir[y:y + h, x:x + w] = bg_tir[y:y + h, x:x + w]
        else:
            tir[y:y + h, x:x + w] = target_temp
        annotations[i] = BoundingBox(float(x), float(y), float(w), float(h))
        target.step()

        if sig["rgb"]:
            rgb = rgb + rng.normal(0, sig["rgb"], rgb.shape).astype(np.float32)
        if sig["depth"]:
            depth = depth + rng.normal(0, sig["depth"], depth.shape).astype(np.float32)
        if sig["tir"]:
            tir = tir + rng.normal(0, sig["tir"], tir.shape).astype(np.float32)
        rgb = np.clip(rgb, 0, 1) * profile.rgb_factor(i)
        if profile.depth_flat(i):
            depth = np.full((H, W), flat_depth, dtype=np.float32)
        frames.append(
            TriModalFrame(
                rgb.astype(np.float32),
                np.clip(depth, 0, 1).astype(np.float32),
                np.clip(tir, 0, 1).astype(np.float32),
                i,
            )
        )
    return Sequence(frames, annotations, name or f"synth_{seed:04d}")


def generate_segmented_sequence(segment_lengths, seed: int = 0, name: str | None = None, **kwargs) -> Sequence:
    """Concatenate independently rendered scenes; each segment has its own background and target."""
    frames, annotations = [], {}
    for k, n in enumerate(segment_lengths):
        part = generate_synthetic_sequence(n, seed=seed * 1000 + k, **kwargs)
        for j, fr in enumerate(part.frames):
            idx = len(frames)
            frames.append(TriModalFrame(fr.rgb, fr.depth, fr.tir, idx))
            annotations[idx] = part.annotations[j]
    return Sequence(frames, annotations, name or f"segmented_{seed:04d}")
