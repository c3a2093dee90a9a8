"""Image I/O, labelled folders, train/eval transforms and robustness perturbations.

Images are float32 (C, H, W) arrays in [0, 1]. Resampling is bilinear with
half-pixel centres (align_corners=False) and every transform clamps its
output back into [0, 1].
"""
from __future__ import annotations

import io
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from .validation import check_image

TRAIN_CROP = 224
EVAL_CROP = 256
IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")
LABELS = {"real": 0, "fake": 1}
MAX_ROTATION = 45.0


class DatasetError(ValueError):
    pass


# --- image I/O -------------------------------------------------------------

def _decode_uint8(path) -> np.ndarray:
    with PILImage.open(path) as im:
        im.load()
        return np.asarray(im.convert("RGB"), dtype=np.uint8).transpose(2, 0, 1).copy()


def to_uint8(image) -> np.ndarray:
    """(C, H, W) float in [0, 1] -> (H, W, C) uint8, round-half-up."""
    arr = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    return np.floor(arr * 255.0 + 0.5).astype(np.uint8).transpose(1, 2, 0)


def load_image(path) -> np.ndarray:
    """Decode a PNG/JPEG file to a float32 RGB image in [0, 1]."""
    try:
        return _decode_uint8(path).astype(np.float32) / np.float32(255.0)
    except (OSError, SyntaxError, ValueError) as exc:
        raise DatasetError(f"cannot decode image {path}: {exc}") from exc


def save_png(path, image) -> None:
    """Write an 8-bit PNG; accepts float (C, H, W) in [0, 1] or uint8 (H, W[, C])."""
    arr = np.asarray(image)
    if arr.dtype != np.uint8:
        arr = to_uint8(arr)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    PILImage.fromarray(arr).save(path, format="PNG", compress_level=1)


# --- datasets ---------------------------------------------------------------

class LabeledDataset:
    """(relative path, label) index over ``root/{real,fake}``; real = 0, fake = 1.

    Entries are ordered real before fake, lexicographically within each
    class. Decoded images are cached as uint8.
    """

    def __init__(self, root, entries):
        self.root = Path(root)
        self.entries = list(entries)
        self._cache: dict[int, np.ndarray] = {}

    def __len__(self):
        return len(self.entries)

    def __getitem__(self, i):
        return self.image(i), self.entries[i][1]

    @property
    def labels(self) -> np.ndarray:
        return np.array([lab for _, lab in self.entries], dtype=np.int64)

    def counts(self) -> dict:
        labels = self.labels
        return {"real": int((labels == 0).sum()), "fake": int((labels == 1).sum())}

    def path(self, i) -> Path:
        return self.root / self.entries[i][0]

    def image_uint8(self, i) -> np.ndarray:
        arr = self._cache.get(i)
        if arr is None:
            path = self.path(i)
            try:
                arr = _decode_uint8(path)
            except (OSError, SyntaxError, ValueError) as exc:
                raise DatasetError(f"cannot decode image {path}: {exc}") from exc
            self._cache[i] = arr
        return arr

    def image(self, i) -> np.ndarray:
        return self.image_uint8(i).astype(np.float32) / np.float32(255.0)

    def preload(self):
        for i in range(len(self)):
            self.image_uint8(i)
        return self


class ArrayDataset:
    """In-memory counterpart of `LabeledDataset` over a stack of images."""

    def __init__(self, images: np.ndarray, labels):
        self.images = images
        self._labels = np.asarray(labels, dtype=np.int64)
        if len(self.images) != len(self._labels):
            raise ValueError(f"{len(self.images)} images but {len(self._labels)} labels")

    def __len__(self):
        return len(self._labels)

    def __getitem__(self, i):
        return self.image(i), int(self._labels[i])

    @property
    def labels(self) -> np.ndarray:
        return self._labels

    def image(self, i) -> np.ndarray:
        return self.images[i]


def load_dataset(root, preload: bool = True) -> LabeledDataset:
    """Index ``root/real`` and ``root/fake``; decodes every file when `preload`."""
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"dataset root {root} does not exist")
    entries = []
    for name, label in LABELS.items():
        sub = root / name
        if not sub.is_dir():
            raise DatasetError(f"dataset root {root} has no '{name}/' subdirectory")
        files = sorted(p.name for p in sub.iterdir() if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)
        entries.extend((f"{name}/{f}", label) for f in files)
    if not entries:
        raise DatasetError(f"no PNG or JPEG images under {root}")
    ds = LabeledDataset(root, entries)
    counts = ds.counts()
    if min(counts.values()) == 0:
        empty = "real" if counts["real"] == 0 else "fake"
        raise DatasetError(f"single-class dataset: '{empty}/' under {root} has no images")
    return ds.preload() if preload else ds


# --- resampling -------------------------------------------------------------

def _axis_weights(n_in: int, n_out: int):
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    i0 = np.floor(src).astype(np.int64)
    i1 = np.minimum(i0 + 1, n_in - 1)
    return i0, i1, src - i0


def resize_bilinear(image, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize of (C, H, W) with half-pixel centres and edge clamping."""
    arr = np.asarray(image)
    if out_h < 1 or out_w < 1:
        raise ValueError(f"target size must be positive, got {out_h}x{out_w}")
    h, w = arr.shape[-2:]
    if (h, w) == (out_h, out_w):
        return arr.copy()
    work = arr.astype(np.float64)
    y0, y1, fy = _axis_weights(h, out_h)
    x0, x1, fx = _axis_weights(w, out_w)
    rows = work[..., y0, :] * (1 - fy)[:, None] + work[..., y1, :] * fy[:, None]
    out = rows[..., x0] * (1 - fx) + rows[..., x1] * fx
    return np.clip(out, 0.0, 1.0).astype(arr.dtype if np.issubdtype(arr.dtype, np.floating) else np.float32)


def resize_shorter_side(image, target: int) -> np.ndarray:
    """Scale so the shorter side equals `target`, preserving aspect ratio."""
    h, w = image.shape[-2:]
    if h <= w:
        return resize_bilinear(image, target, max(target, int(round(w * target / h))))
    return resize_bilinear(image, max(target, int(round(h * target / w))), target)


def sample_crop(h: int, w: int, crop: int, rng: np.random.Generator):
    """Uniform (top, left) offsets of a crop x crop window and a fair flip coin."""
    top = int(rng.integers(0, h - crop + 1))
    left = int(rng.integers(0, w - crop + 1))
    return top, left, bool(rng.random() < 0.5)


def train_transform(image, rng: np.random.Generator, crop: int = TRAIN_CROP) -> np.ndarray:
    """Upscale if needed, take a uniformly placed crop x crop window, flip with p = 0.5."""
    img = check_image(image)
    if min(img.shape[-2:]) < crop:
        img = resize_shorter_side(img, crop)
    top, left, flip = sample_crop(*img.shape[-2:], crop, rng)
    out = img[:, top:top + crop, left:left + crop]
    if flip:
        out = out[:, :, ::-1]
    return np.ascontiguousarray(out)


def eval_transform(image, crop: int = EVAL_CROP) -> np.ndarray:
    """Upscale the shorter side to `crop` if needed, then take the central crop."""
    img = check_image(image)
    if min(img.shape[-2:]) < crop:
        img = resize_shorter_side(img, crop)
    h, w = img.shape[-2:]
    top, left = (h - crop) // 2, (w - crop) // 2
    return np.ascontiguousarray(img[:, top:top + crop, left:left + crop])


# --- perturbations ----------------------------------------------------------

@dataclass(frozen=True)
class PerturbationSpec:
    """One post-processing attack.

    kind ``jpeg`` takes a quality in [1, 100], ``resize`` a positive scale,
    ``rotate`` the largest absolute angle in degrees (at most 45); the
    applied angle is drawn uniformly from [-value, value].
    """

    kind: str
    value: float

    def __post_init__(self):
        if self.kind == "jpeg":
            if int(self.value) != self.value or not 1 <= self.value <= 100:
                raise ValueError(f"JPEG quality must be an integer in [1, 100], got {self.value}")
        elif self.kind == "resize":
            if not self.value > 0 or not np.isfinite(self.value):
                raise ValueError(f"resize scale must be positive, got {self.value}")
        elif self.kind == "rotate":
            if not 0 <= self.value <= MAX_ROTATION:
                raise ValueError(f"rotation range must be within [0, {MAX_ROTATION}] degrees, got {self.value}")
        else:
            raise ValueError(f"unknown perturbation {self.kind!r}; expected jpeg, resize or rotate")

    @classmethod
    def parse(cls, text: str) -> "PerturbationSpec":
        m = re.fullmatch(r"\s*(jpeg|resize|rotate)\s*(?::\s*([-+0-9.eE]+))?\s*", text or "")
        if not m:
            raise ValueError(f"cannot parse perturbation {text!r}; use jpeg:Q, resize:S or rotate[:D]")
        kind, arg = m.group(1), m.group(2)
        if arg is None:
            if kind != "rotate":
                raise ValueError(f"perturbation {kind!r} needs a parameter, e.g. {kind}:{75 if kind == 'jpeg' else 0.75}")
            return cls("rotate", MAX_ROTATION)
        try:
            value = float(arg)
        except ValueError:
            raise ValueError(f"bad perturbation parameter {arg!r}") from None
        return cls(kind, value)

    def __str__(self):
        return f"{self.kind}:{self.value:g}"


def jpeg_roundtrip(image, quality: int) -> np.ndarray:
    # 4:4:4 sampling so high qualities stay close to lossless
    buf = io.BytesIO()
    PILImage.fromarray(to_uint8(image)).save(buf, format="JPEG", quality=int(quality), subsampling=0)
    buf.seek(0)
    with PILImage.open(buf) as im:
        out = np.asarray(im.convert("RGB"), dtype=np.float32).transpose(2, 0, 1) / np.float32(255.0)
    return np.ascontiguousarray(out)


def rotate_bilinear(image, degrees: float) -> np.ndarray:
    """Rotate counter-clockwise about the image centre; zero fill outside."""
    arr = np.asarray(image, dtype=np.float64)
    c, h, w = arr.shape
    t = np.deg2rad(degrees)
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    dy, dx = yy - cy, xx - cx
    # inverse map: output pixel -> source location
    sx = np.cos(t) * dx - np.sin(t) * dy + cx
    sy = np.sin(t) * dx + np.cos(t) * dy + cy
    padded = np.zeros((c, h + 2, w + 2))
    padded[:, 1:-1, 1:-1] = arr
    sy, sx = sy + 1, sx + 1
    inside = (sy > -1) & (sy < h + 1) & (sx > -1) & (sx < w + 1)
    sy = np.clip(sy, 0, h + 1)
    sx = np.clip(sx, 0, w + 1)
    y0 = np.minimum(np.floor(sy).astype(np.int64), h)
    x0 = np.minimum(np.floor(sx).astype(np.int64), w)
    fy, fx = sy - y0, sx - x0
    out = (padded[:, y0, x0] * (1 - fy) * (1 - fx) + padded[:, y0, x0 + 1] * (1 - fy) * fx
           + padded[:, y0 + 1, x0] * fy * (1 - fx) + padded[:, y0 + 1, x0 + 1] * fy * fx)
    out *= inside
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def perturb(image, spec: PerturbationSpec, rng: np.random.Generator | None = None) -> np.ndarray:
    """Apply one perturbation; the result stays in [0, 1]."""
    img = check_image(image)
    if spec.kind == "jpeg":
        return jpeg_roundtrip(img, int(spec.value))
    if spec.kind == "resize":
        h, w = img.shape[-2:]
        return resize_bilinear(img, max(1, int(round(h * spec.value))), max(1, int(round(w * spec.value))))
    rng = rng if rng is not None else np.random.default_rng()
    angle = float(rng.uniform(-spec.value, spec.value))
    return rotate_bilinear(img, angle)


def psnr(a, b) -> float:
    mse = float(np.mean((np.asarray(a, np.float64) - np.asarray(b, np.float64)) ** 2))
    return float("inf") if mse == 0 else 10.0 * np.log10(1.0 / mse)
