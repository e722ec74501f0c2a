"""Procedural tampered-image synthesis, augmentation, and dataset I/O.

Images are built from simple textures (linear gradients, value noise,
checkerboards); tampering pastes, duplicates, or erases an elliptical
or polygonal region, and the mask records exactly the manipulated
pixels. Every sample is a pure function of (seed, index), so the whole
corpus is reproducible and cheap to regenerate.
"""

from __future__ import annotations

import io
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw, ImageFilter

__all__ = [
    "SynthSpec",
    "AugmentSpec",
    "render_texture",
    "make_region_mask",
    "synthesize_sample",
    "synthesize_dataset",
    "augment",
    "jpeg_roundtrip",
    "load_manifest",
    "read_image",
    "read_mask",
]

TAMPER_TYPES = ("splice", "copy_move", "removal")
TEXTURES = ("gradient", "value_noise", "checker")
SHAPES = ("ellipse", "polygon")


@dataclass
class SynthSpec:
    image_size: int = 64
    n_images: int = 16
    tamper_types: tuple[str, ...] = TAMPER_TYPES
    shapes: tuple[str, ...] = SHAPES
    textures: tuple[str, ...] = TEXTURES
    rng_seed: int = 0
    area_min: float = 0.05
    area_max: float = 0.40

    def __post_init__(self):
        self.tamper_types = tuple(self.tamper_types)
        self.shapes = tuple(self.shapes)
        self.textures = tuple(self.textures)
        bad = set(self.tamper_types) - set(TAMPER_TYPES)
        if bad or not self.tamper_types:
            raise ValueError(f"tamper_types must be a nonempty subset of {TAMPER_TYPES}")
        if not 0.0 < self.area_min < self.area_max <= 1.0:
            raise ValueError("need 0 < area_min < area_max <= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        return cls(**d)


@dataclass
class AugmentSpec:
    flip_prob: float = 0.5
    scale_prob: float = 0.5
    scale_range: tuple[float, float] = (0.75, 1.25)
    blur_prob: float = 0.5
    blur_sigma: tuple[float, float] = (0.3, 1.2)
    jpeg_prob: float = 0.5
    jpeg_quality: tuple[int, int] = (60, 95)

    @classmethod
    def identity(cls) -> "AugmentSpec":
        return cls(flip_prob=0.0, scale_prob=0.0, blur_prob=0.0, jpeg_prob=0.0)

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "AugmentSpec":
        d = dict(d)
        for k in ("scale_range", "blur_sigma", "jpeg_quality"):
            if k in d:
                d[k] = tuple(d[k])
        return cls(**d)


# -- textures --------------------------------------------------------------------


def _value_noise(rng: np.random.Generator, size: int) -> np.ndarray:
    """Smooth random field: bilinear upsampling of coarse noise octaves."""
    out = np.zeros((size, size))
    amp = 1.0
    cells = 4
    while cells <= size:
        coarse = rng.random((cells + 1, cells + 1))
        img = Image.fromarray((coarse * 255).astype(np.uint8))
        img = img.resize((size, size), Image.BILINEAR)
        out += amp * (np.asarray(img) / 255.0)
        amp *= 0.5
        cells *= 2
    return out / out.max()


def render_texture(rng: np.random.Generator, size: int, family: str) -> np.ndarray:
    """One [H,W,3] float image in [0,1]."""
    base = rng.random(3) * 0.6 + 0.2  # mid-range color
    if family == "gradient":
        angle = rng.random() * 2 * np.pi
        yy, xx = np.mgrid[0:size, 0:size] / (size - 1)
        ramp = xx * np.cos(angle) + yy * np.sin(angle)
        ramp = (ramp - ramp.min()) / (ramp.max() - ramp.min() + 1e-12)
        tint = rng.random(3) * 0.5 - 0.25
        img = base[None, None, :] + ramp[:, :, None] * tint[None, None, :]
    elif family == "value_noise":
        fields = np.stack([_value_noise(rng, size) for _ in range(3)], axis=-1)
        img = base[None, None, :] * 0.5 + fields * 0.5
    elif family == "checker":
        cell = int(rng.integers(4, max(size // 4, 5)))
        yy, xx = np.mgrid[0:size, 0:size]
        tile = ((yy // cell + xx // cell) % 2).astype(float)
        other = rng.random(3) * 0.6 + 0.2
        img = tile[:, :, None] * base[None, None, :] + (1 - tile)[:, :, None] * other
    else:
        raise ValueError(f"unknown texture family {family!r}")
    return np.clip(img, 0.0, 1.0)


def make_region_mask(rng: np.random.Generator, size: int, shape: str) -> np.ndarray:
    """Boolean [H,W] mask of one random ellipse or convex-ish polygon."""
    canvas = Image.new("L", (size, size), 0)
    draw = ImageDraw.Draw(canvas)
    cx, cy = rng.uniform(0.25, 0.75, 2) * size
    if shape == "ellipse":
        rx = rng.uniform(0.10, 0.35) * size
        ry = rng.uniform(0.10, 0.35) * size
        draw.ellipse([cx - rx, cy - ry, cx + rx, cy + ry], fill=255)
    elif shape == "polygon":
        k = int(rng.integers(3, 7))
        angles = np.sort(rng.uniform(0, 2 * np.pi, k))
        radii = rng.uniform(0.12, 0.38, k) * size
        pts = [
            (cx + r * np.cos(a), cy + r * np.sin(a)) for r, a in zip(radii, angles)
        ]
        draw.polygon(pts, fill=255)
    else:
        raise ValueError(f"unknown shape family {shape!r}")
    return np.asarray(canvas) > 0


def _region_with_area(rng, size, shape, lo, hi, tries=40):
    for _ in range(tries):
        m = make_region_mask(rng, size, shape)
        frac = m.mean()
        if lo <= frac <= hi:
            return m
    return None


def synthesize_sample(spec: SynthSpec, index: int, return_host: bool = False):
    """Build pair ``index``: (image [H,W,3] in [0,1], mask [H,W] bool, type).

    Deterministic: the RNG stream is derived from (rng_seed, index).
    ``return_host`` appends the untampered source image to the tuple.
    """
    rng = np.random.default_rng([spec.rng_seed, index])
    size = spec.image_size
    ttype = spec.tamper_types[int(rng.integers(len(spec.tamper_types)))]
    host_tex = spec.textures[int(rng.integers(len(spec.textures)))]
    shape = spec.shapes[int(rng.integers(len(spec.shapes)))]
    host = render_texture(rng, size, host_tex)
    region = _region_with_area(rng, size, shape, spec.area_min, spec.area_max)
    if region is None:
        return None

    img = host.copy()
    if ttype == "splice":
        donor_tex = spec.textures[int(rng.integers(len(spec.textures)))]
        donor = render_texture(rng, size, donor_tex)
        img[region] = donor[region]
    elif ttype == "copy_move":
        # shift source content onto the region from a displaced copy
        dy, dx = 0, 0
        while dy == 0 and dx == 0:
            dy = int(rng.integers(-size // 3, size // 3 + 1))
            dx = int(rng.integers(-size // 3, size // 3 + 1))
        rolled = np.roll(host, (dy, dx), axis=(0, 1))
        img[region] = rolled[region]
    else:  # removal: overwrite with a blurred copy of the surroundings
        pil = Image.fromarray((host * 255).astype(np.uint8))
        blurred = pil.filter(ImageFilter.GaussianBlur(radius=size / 12))
        fill = np.asarray(blurred).astype(np.float64) / 255.0
        img[region] = fill[region]
    if return_host:
        return img, region, ttype, host
    return img, region, ttype


def synthesize_dataset(spec: SynthSpec, out_dir: str | Path) -> Path:
    """Write PNG pairs plus a JSON-lines manifest; returns manifest path."""
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    (out_dir / "masks").mkdir(parents=True, exist_ok=True)
    manifest = out_dir / "manifest.jsonl"
    written = 0
    with open(manifest, "w") as fh:
        index = 0
        while written < spec.n_images:
            sample = synthesize_sample(spec, index)
            if sample is None:
                print(f"warning: sample {index} skipped (region placement failed)")
                index += 1
                continue
            img, mask, ttype = sample
            img_rel = f"images/{written:05d}.png"
            mask_rel = f"masks/{written:05d}.png"
            Image.fromarray((img * 255).round().astype(np.uint8)).save(out_dir / img_rel)
            Image.fromarray(np.where(mask, 255, 0).astype(np.uint8)).save(
                out_dir / mask_rel
            )
            fh.write(
                json.dumps(
                    {
                        "image": img_rel,
                        "mask": mask_rel,
                        "type": ttype,
                        "seed": spec.rng_seed,
                        "index": index,
                    }
                )
                + "\n"
            )
            written += 1
            index += 1
    return manifest


# -- augmentation -------------------------------------------------------------------


def jpeg_roundtrip(image: np.ndarray, quality: int) -> np.ndarray:
    """Encode/decode [H,W,3] float image through baseline JPEG (4:2:0)."""
    if not 10 <= quality <= 100:
        raise ValueError(f"JPEG quality must be in [10,100], got {quality}")
    pil = Image.fromarray((np.clip(image, 0, 1) * 255).round().astype(np.uint8))
    buf = io.BytesIO()
    pil.save(buf, format="JPEG", quality=int(quality), subsampling=2)
    buf.seek(0)
    out = np.asarray(Image.open(buf).convert("RGB"))
    return out.astype(np.float64) / 255.0


def augment(
    image: np.ndarray,
    mask: np.ndarray,
    spec: AugmentSpec,
    rng: np.random.Generator,
    out_size: int | None = None,
):
    """Jointly flip/scale image+mask; blur/JPEG the image only.

    The mask moves with nearest-neighbor resampling so it stays binary.
    """
    img = image
    msk = mask.astype(bool)
    if rng.random() < spec.flip_prob:
        if rng.random() < 0.5:
            img, msk = img[:, ::-1].copy(), msk[:, ::-1].copy()
        else:
            img, msk = img[::-1].copy(), msk[::-1].copy()
    if rng.random() < spec.scale_prob:
        h, w = msk.shape
        factor = rng.uniform(*spec.scale_range)
        nh, nw = max(int(round(h * factor)), 8), max(int(round(w * factor)), 8)
        pil_i = Image.fromarray((img * 255).round().astype(np.uint8)).resize(
            (nw, nh), Image.BILINEAR
        )
        pil_m = Image.fromarray(msk.astype(np.uint8) * 255).resize(
            (nw, nh), Image.NEAREST
        )
        img = np.asarray(pil_i).astype(np.float64) / 255.0
        msk = np.asarray(pil_m) > 127
        img, msk = _crop_or_pad(img, msk, h, w)
    if rng.random() < spec.blur_prob:
        sigma = rng.uniform(*spec.blur_sigma)
        pil = Image.fromarray((img * 255).round().astype(np.uint8))
        img = (
            np.asarray(pil.filter(ImageFilter.GaussianBlur(radius=sigma))).astype(
                np.float64
            )
            / 255.0
        )
    if rng.random() < spec.jpeg_prob:
        q = int(rng.integers(spec.jpeg_quality[0], spec.jpeg_quality[1] + 1))
        img = jpeg_roundtrip(img, q)
    if out_size is not None and msk.shape != (out_size, out_size):
        pil_i = Image.fromarray((img * 255).round().astype(np.uint8)).resize(
            (out_size, out_size), Image.BILINEAR
        )
        pil_m = Image.fromarray(msk.astype(np.uint8) * 255).resize(
            (out_size, out_size), Image.NEAREST
        )
        img = np.asarray(pil_i).astype(np.float64) / 255.0
        msk = np.asarray(pil_m) > 127
    return img, msk


def _crop_or_pad(img, msk, h, w):
    """Center-crop or edge-pad back to (h, w) after scaling."""
    ch, cw = msk.shape
    if ch >= h:
        top = (ch - h) // 2
        img = img[top : top + h]
        msk = msk[top : top + h]
    else:
        before = (h - ch) // 2
        img = np.pad(img, ((before, h - ch - before), (0, 0), (0, 0)), mode="edge")
        msk = np.pad(msk, ((before, h - ch - before), (0, 0)), mode="constant")
    ch, cw = msk.shape
    if cw >= w:
        left = (cw - w) // 2
        img = img[:, left : left + w]
        msk = msk[:, left : left + w]
    else:
        before = (w - cw) // 2
        img = np.pad(img, ((0, 0), (before, w - cw - before), (0, 0)), mode="edge")
        msk = np.pad(msk, ((0, 0), (before, w - cw - before)), mode="constant")
    return img, msk


# -- dataset I/O -----------------------------------------------------------------------


def load_manifest(manifest_path: str | Path) -> list[dict]:
    manifest_path = Path(manifest_path)
    records = []
    with open(manifest_path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records


def read_image(path: str | Path) -> np.ndarray:
    """8-bit RGB PNG -> [H,W,3] float in [0,1]."""
    return np.asarray(Image.open(path).convert("RGB")).astype(np.float64) / 255.0


def read_mask(path: str | Path) -> np.ndarray:
    """8-bit grayscale PNG -> [H,W] bool (threshold 128)."""
    return np.asarray(Image.open(path).convert("L")) >= 128
