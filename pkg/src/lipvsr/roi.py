"""Mouth-ROI geometry: landmark alignment, cropping, normalization, augmentation.

Landmarks follow the 68-point convention; indices 48..67 are the mouth ring
and their post-warp mean defines the crop center.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

MOUTH_SLICE = slice(48, 68)
ROI_SIZE = 96
TRAIN_CROP = 88


class DegenerateLandmarksError(ValueError):
    """Source landmarks have zero spread; no similarity can be estimated."""


@dataclass(frozen=True)
class SimilarityTransform:
    """q = scale * R(rotation) @ p + (tx, ty), applied to row vectors of (x, y)."""

    scale: float
    rotation: float
    tx: float
    ty: float

    def apply(self, points: np.ndarray) -> np.ndarray:
        p = np.asarray(points, dtype=np.float64)
        a = self.scale * np.exp(1j * self.rotation)
        z = p[..., 0] + 1j * p[..., 1]
        q = a * z + complex(self.tx, self.ty)
        return np.stack([q.real, q.imag], axis=-1)

    def inverse(self) -> "SimilarityTransform":
        a = self.scale * np.exp(1j * self.rotation)
        b = complex(self.tx, self.ty)
        ia = 1.0 / a
        ib = -ia * b
        return SimilarityTransform(abs(ia), math.atan2(ia.imag, ia.real), ib.real, ib.imag)


def estimate_similarity(src: np.ndarray, ref: np.ndarray) -> SimilarityTransform:
    """Least-squares similarity mapping src landmarks onto ref.

    Closed form over complex coordinates: with centered point sets s, r the
    optimum of sum |a*s_i + b - r_i|^2 is a = <r, s> / <s, s>, which bundles
    scale and rotation without iteration.
    """
    src = np.asarray(src, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if src.shape != ref.shape or src.ndim != 2 or src.shape[1] != 2:
        raise ValueError(f"expected matching (N, 2) landmark arrays, got {src.shape} vs {ref.shape}")
    if not (np.isfinite(src).all() and np.isfinite(ref).all()):
        raise ValueError("landmarks must be finite")
    s = src[:, 0] + 1j * src[:, 1]
    r = ref[:, 0] + 1j * ref[:, 1]
    s_mean = s.mean()
    r_mean = r.mean()
    sc = s - s_mean
    rc = r - r_mean
    denom = np.sum(sc.real**2 + sc.imag**2)
    if denom == 0.0:
        raise DegenerateLandmarksError("source landmarks are coincident")
    a = np.sum(rc * np.conj(sc)) / denom
    b = r_mean - a * s_mean
    return SimilarityTransform(abs(a), math.atan2(a.imag, a.real), b.real, b.imag)


def warp_crop(frame: np.ndarray, transform: SimilarityTransform, mouth_center, size: int = ROI_SIZE) -> np.ndarray:
    """Resample the warped frame into a size x size patch around mouth_center.

    Output pixel (i, j) reads warped coordinates (cx - size/2 + j,
    cy - size/2 + i); samples outside the source image are 0.
    """
    frame = np.asarray(frame, dtype=np.float64)
    h, w = frame.shape
    cx, cy = float(mouth_center[0]), float(mouth_center[1])
    xs = cx - size / 2.0 + np.arange(size, dtype=np.float64)
    ys = cy - size / 2.0 + np.arange(size, dtype=np.float64)
    gx, gy = np.meshgrid(xs, ys)

    inv = transform.inverse()
    a = inv.scale * np.exp(1j * inv.rotation)
    zsrc = a * (gx + 1j * gy) + complex(inv.tx, inv.ty)
    u, v = zsrc.real, zsrc.imag

    u0 = np.floor(u).astype(np.int64)
    v0 = np.floor(v).astype(np.int64)
    fu = u - u0
    fv = v - v0

    def sample(ix, iy):
        valid = (ix >= 0) & (ix < w) & (iy >= 0) & (iy < h)
        vals = np.zeros_like(u)
        vals[valid] = frame[iy[valid], ix[valid]]
        return vals

    i00 = sample(u0, v0)
    i10 = sample(u0 + 1, v0)
    i01 = sample(u0, v0 + 1)
    i11 = sample(u0 + 1, v0 + 1)
    top = i00 * (1.0 - fu) + i10 * fu
    bot = i01 * (1.0 - fu) + i11 * fu
    return top * (1.0 - fv) + bot * fv


def mouth_center_of(transform: SimilarityTransform, landmarks: np.ndarray) -> np.ndarray:
    """Mean of the 20 mouth landmarks after warping."""
    return transform.apply(np.asarray(landmarks)[MOUTH_SLICE]).mean(axis=0)


def fit_norm_stats(clips) -> tuple:
    """Scalar (mean, variance) over every pixel of every training clip."""
    arrays = [np.asarray(c, dtype=np.float64) for c in clips]
    n = sum(a.size for a in arrays)
    if n == 0:
        raise ValueError("no pixels to fit normalization stats")
    mean = sum(float(a.sum()) for a in arrays) / n
    var = sum(float(((a - mean) ** 2).sum()) for a in arrays) / n
    if var <= 0.0:
        raise ValueError("pixel population has zero variance")
    return mean, var


def normalize_clip(clip: np.ndarray, mean: float, var: float) -> np.ndarray:
    return (np.asarray(clip, dtype=np.float64) - mean) / math.sqrt(var)


@dataclass(frozen=True)
class AugmentConfig:
    crop_size: int = TRAIN_CROP
    hflip_prob: float = 0.5
    time_mask: bool = True


@dataclass(frozen=True)
class AugmentPlan:
    crop_y: int
    crop_x: int
    flip: bool
    mask_start: int
    mask_len: int


def augment_plan(shape, rng_seed, cfg: AugmentConfig = AugmentConfig()) -> AugmentPlan:
    """Derive every random draw of `augment` for a clip of the given shape.

    Draw order is fixed (crop y, crop x, flip, mask length, mask start) so a
    seed fully determines the result.
    """
    t, h, w = shape
    if t == 0:
        raise ValueError("cannot augment an empty clip")
    if h < cfg.crop_size or w < cfg.crop_size:
        raise ValueError(f"input {h}x{w} smaller than crop {cfg.crop_size}")
    rng = np.random.default_rng(rng_seed)
    crop_y = int(rng.integers(0, h - cfg.crop_size + 1))
    crop_x = int(rng.integers(0, w - cfg.crop_size + 1))
    flip = bool(rng.random() < cfg.hflip_prob)
    mask_start = 0
    mask_len = 0
    if cfg.time_mask:
        mask_len = int(rng.integers(0, math.ceil(t / 5) + 1))
        if mask_len > 0:
            mask_start = int(rng.integers(0, t - mask_len + 1))
    return AugmentPlan(crop_y, crop_x, flip, mask_start, mask_len)


def apply_augment_plan(clip: np.ndarray, plan: AugmentPlan, cfg: AugmentConfig = AugmentConfig()) -> np.ndarray:
    clip = np.asarray(clip, dtype=np.float64)
    c = cfg.crop_size
    out = clip[:, plan.crop_y : plan.crop_y + c, plan.crop_x : plan.crop_x + c].copy()
    if plan.flip:
        out = out[:, :, ::-1].copy()
    if plan.mask_len > 0:
        mean_frame = out.mean(axis=0)
        out[plan.mask_start : plan.mask_start + plan.mask_len] = mean_frame
    return out


def augment(clip: np.ndarray, rng_seed, cfg: AugmentConfig = AugmentConfig()) -> np.ndarray:
    """Random crop + horizontal flip + one mean-filled temporal mask."""
    clip = np.asarray(clip, dtype=np.float64)
    plan = augment_plan(clip.shape, rng_seed, cfg)
    return apply_augment_plan(clip, plan, cfg)


def hflip(clip: np.ndarray) -> np.ndarray:
    return np.asarray(clip)[:, :, ::-1].copy()


def center_crop(clip: np.ndarray, size: int = TRAIN_CROP) -> np.ndarray:
    """Deterministic evaluation-time companion of the random training crop."""
    clip = np.asarray(clip)
    t, h, w = clip.shape
    if h < size or w < size:
        raise ValueError(f"input {h}x{w} smaller than crop {size}")
    oy = (h - size) // 2
    ox = (w - size) // 2
    return clip[:, oy : oy + size, ox : ox + size].copy()


def _neutral_reference() -> np.ndarray:
    """Canonical 68-point layout on a 96x96 canvas, mouth ring centered at (48, 48)."""
    pts = np.zeros((68, 2), dtype=np.float64)
    # jaw 0..16: lower half ellipse
    ang = np.linspace(math.pi, 2 * math.pi, 17)
    pts[0:17, 0] = 48 + 40 * np.cos(ang)
    pts[0:17, 1] = 14 - 52 * np.sin(ang)
    # brows 17..26
    for k in range(5):
        pts[17 + k] = (16 + 6 * k, 12)
        pts[22 + k] = (56 + 6 * k, 12)
    # nose 27..35
    for k in range(4):
        pts[27 + k] = (48, 18 + 5 * k)
    for k in range(5):
        pts[31 + k] = (40 + 4 * k, 36)
    # eyes 36..47
    eang = np.linspace(0, 2 * math.pi, 7)[:6]
    for k in range(6):
        pts[36 + k] = (28 + 7 * math.cos(eang[k]), 20 + 3 * math.sin(eang[k]))
        pts[42 + k] = (68 + 7 * math.cos(eang[k]), 20 + 3 * math.sin(eang[k]))
    # mouth 48..59 outer ring, 60..67 inner ring
    oang = np.linspace(0, 2 * math.pi, 13)[:12]
    for k in range(12):
        pts[48 + k] = (14 * math.cos(oang[k]), 7 * math.sin(oang[k]))
    iang = np.linspace(0, 2 * math.pi, 9)[:8]
    for k in range(8):
        pts[60 + k] = (8 * math.cos(iang[k]), 4 * math.sin(iang[k]))
    pts[MOUTH_SLICE] -= pts[MOUTH_SLICE].mean(axis=0)
    pts[MOUTH_SLICE] += (48.0, 48.0)
    return pts


NEUTRAL_REFERENCE = _neutral_reference()


@dataclass
class RoiClip:
    """Normalized mouth-region frame sequence."""

    frames: np.ndarray
    fps: float = 25.0


def preprocess_clip(frames: np.ndarray, landmarks: np.ndarray, reference: np.ndarray = NEUTRAL_REFERENCE, size: int = ROI_SIZE) -> np.ndarray:
    """Align each frame to the neutral reference and crop the mouth ROI."""
    frames = np.asarray(frames, dtype=np.float64)
    landmarks = np.asarray(landmarks, dtype=np.float64)
    if frames.shape[0] != landmarks.shape[0]:
        raise ValueError(f"{frames.shape[0]} frames but {landmarks.shape[0]} landmark rows")
    out = np.empty((frames.shape[0], size, size), dtype=np.float64)
    for t in range(frames.shape[0]):
        tr = estimate_similarity(landmarks[t], reference)
        center = mouth_center_of(tr, landmarks[t])
        out[t] = warp_crop(frames[t], tr, center, size)
    return out
