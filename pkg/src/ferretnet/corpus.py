"""Procedural real/fake corpus for desk-scale experiments.

A "real" image is 1/f^alpha coloured noise with a few flat-coloured shapes
pasted on top. Its "fake" twin is the same picture box-downsampled by 2 and
upsampled back, nearest-neighbour for even indices and bilinear for odd
ones, which strips the finest scale and leaves the blocky or smooth
interpolation signature that generator decoders tend to leave behind.
Both images then receive fresh pixel noise at a level drawn per image.

Spectral slope, contrast and noise level vary per image so that global
intensity statistics do not separate the classes; the defaults are set so
that a small network learns the task in a few epochs from LPD maps but not
reliably from raw pixels.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .data import resize_bilinear, save_png

CORPUS_VERSION = 1


@dataclass(frozen=True)
class CorpusParams:
    """Generator knobs; each (lo, hi) range is sampled uniformly per image."""

    spectral_exponent: tuple = (1.0, 1.5)
    contrast: tuple = (0.7, 1.4)
    shapes_min: int = 3
    shapes_max: int = 8
    shape_opacity: float = 0.85
    sensor_noise: tuple = (0.007, 0.013)
    illumination: tuple = (0.0, 0.0)

    def __post_init__(self):
        for name in ("spectral_exponent", "contrast", "sensor_noise", "illumination"):
            lo, hi = (float(v) for v in getattr(self, name))
            if not 0 <= lo <= hi:
                raise ValueError(f"{name} must be a range 0 <= lo <= hi, got {(lo, hi)}")
            object.__setattr__(self, name, (lo, hi))
        if not 0 <= self.shapes_min <= self.shapes_max:
            raise ValueError("need 0 <= shapes_min <= shapes_max")


def _uniform(rng: np.random.Generator, bounds: tuple) -> float:
    return float(rng.uniform(bounds[0], bounds[1]))


def _pink_noise(rng: np.random.Generator, size: int, exponent: float, contrast: float = 1.0) -> np.ndarray:
    fy = np.fft.fftfreq(size)[:, None]
    fx = np.fft.rfftfreq(size)[None, :]
    f = np.sqrt(fy * fy + fx * fx)
    f[0, 0] = 1.0
    amp = f ** (-exponent)
    amp[0, 0] = 0.0
    chans = []
    for _ in range(3):
        spec = amp * (rng.standard_normal(amp.shape) + 1j * rng.standard_normal(amp.shape))
        chans.append(np.fft.irfft2(spec, s=(size, size)))
    field = np.stack(chans)
    # mix channels so colours are correlated like natural images
    mix = np.eye(3) * 0.5 + rng.uniform(0.2, 0.6, size=(3, 3))
    field = np.einsum("ij,jhw->ihw", mix, field)
    field -= field.mean(axis=(1, 2), keepdims=True)
    field *= contrast / (field.std() * 6 + 1e-12)
    base = rng.uniform(0.3, 0.7, size=(3, 1, 1))
    return field + base


def _illumination(rng: np.random.Generator, size: int, amplitude: float) -> np.ndarray:
    """Smooth grey field with f^-3 spectrum and standard deviation `amplitude`."""
    fy = np.fft.fftfreq(size)[:, None]
    fx = np.fft.rfftfreq(size)[None, :]
    f = np.sqrt(fy * fy + fx * fx)
    f[0, 0] = 1.0
    amp = f ** -3.0
    amp[0, 0] = 0.0
    spec = amp * (rng.standard_normal(amp.shape) + 1j * rng.standard_normal(amp.shape))
    field = np.fft.irfft2(spec, s=(size, size))
    return field * (amplitude / (field.std() + 1e-12))


def _paste_shapes(rng: np.random.Generator, img: np.ndarray, params: CorpusParams) -> None:
    size = img.shape[-1]
    yy, xx = np.mgrid[0:size, 0:size]
    for _ in range(int(rng.integers(params.shapes_min, params.shapes_max + 1))):
        colour = rng.uniform(0.05, 0.95, size=(3, 1))
        cy, cx = rng.uniform(0, size, size=2)
        ry, rx = rng.uniform(size * 0.04, size * 0.25, size=2)
        if rng.random() < 0.5:
            mask = (np.abs(yy - cy) <= ry) & (np.abs(xx - cx) <= rx)
        else:
            mask = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
        img[:, mask] = (1 - params.shape_opacity) * img[:, mask] + params.shape_opacity * colour


def real_image(rng: np.random.Generator, size: int, params: CorpusParams = CorpusParams()) -> np.ndarray:
    img = _pink_noise(rng, size, _uniform(rng, params.spectral_exponent), _uniform(rng, params.contrast))
    _paste_shapes(rng, img, params)
    img += _illumination(rng, size, _uniform(rng, params.illumination))[None]
    return np.clip(img, 0.0, 1.0)


def degrade(image: np.ndarray, nearest: bool) -> np.ndarray:
    """Box-downsample by 2 then upsample by 2 (nearest or bilinear)."""
    c, h, w = image.shape
    small = image[:, : h // 2 * 2, : w // 2 * 2].reshape(c, h // 2, 2, w // 2, 2).mean(axis=(2, 4))
    if nearest:
        up = small.repeat(2, axis=1).repeat(2, axis=2)
    else:
        up = resize_bilinear(small, h // 2 * 2, w // 2 * 2)
    out = np.zeros_like(image)
    out[:, : up.shape[1], : up.shape[2]] = up
    # odd trailing row/column (only for odd sizes) keeps the original pixels
    out[:, up.shape[1]:, :] = image[:, up.shape[1]:, :]
    out[:, :, up.shape[2]:] = image[:, :, up.shape[2]:]
    return out


def _quantise(img: np.ndarray) -> np.ndarray:
    return np.floor(np.clip(img, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8).transpose(1, 2, 0)


def make_pair(seed: int, index: int, size: int, params: CorpusParams = CorpusParams()):
    """Return the (real, fake) uint8 (H, W, 3) images of pair `index`."""
    rng = np.random.default_rng([seed, index])
    base = real_image(rng, size, params)
    fake = degrade(base, nearest=index % 2 == 0)
    noise_r = rng.normal(0.0, _uniform(rng, params.sensor_noise), size=base.shape)
    noise_f = rng.normal(0.0, _uniform(rng, params.sensor_noise), size=base.shape)
    return _quantise(base + noise_r), _quantise(fake + noise_f)


def gen_toy_corpus(root, count_per_class: int, size: int = 256, seed: int = 0,
                   params: CorpusParams | None = None) -> Path:
    """Write ``root/{real,fake}/NNNNN.png`` plus ``manifest.json``; returns `root`."""
    if isinstance(count_per_class, bool) or int(count_per_class) != count_per_class or count_per_class < 1:
        raise ValueError(f"count_per_class must be a positive integer, got {count_per_class!r}")
    if size < 8:
        raise ValueError(f"image size must be at least 8, got {size}")
    params = params or CorpusParams()
    root = Path(root)
    (root / "real").mkdir(parents=True, exist_ok=True)
    (root / "fake").mkdir(parents=True, exist_ok=True)
    width = max(5, len(str(count_per_class - 1)))
    for i in range(int(count_per_class)):
        real, fake = make_pair(seed, i, size, params)
        name = f"{i:0{width}d}.png"
        save_png(root / "real" / name, real)
        save_png(root / "fake" / name, fake)
    manifest = {
        "version": CORPUS_VERSION,
        "count_per_class": int(count_per_class),
        "size": int(size),
        "seed": int(seed),
        "generator": asdict(params),
        "fake_upsampling": "nearest for even indices, bilinear for odd indices",
    }
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return root
