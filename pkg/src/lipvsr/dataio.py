"""File formats: LRV1 frame containers, landmark CSVs, manifests, eval files.

LRV1 layout: magic ``LRV1``, three little-endian u32 (T, H, W), then
T*H*W bytes of 8-bit grayscale, row-major within a frame, frame-major.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

LRV1_MAGIC = b"LRV1"


class DataFormatError(ValueError):
    """Raised for corrupt or inconsistent on-disk data."""


def write_lrv1(path, frames: np.ndarray) -> None:
    """Write a T x H x W uint8 clip."""
    frames = np.asarray(frames)
    if frames.ndim != 3:
        raise DataFormatError(f"expected T x H x W frames, got shape {frames.shape}")
    if frames.dtype != np.uint8:
        frames = np.clip(np.rint(frames), 0, 255).astype(np.uint8)
    t, h, w = frames.shape
    with open(path, "wb") as f:
        f.write(LRV1_MAGIC)
        f.write(struct.pack("<III", t, h, w))
        f.write(frames.tobytes())


def read_lrv1(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < 16 or data[:4] != LRV1_MAGIC:
        raise DataFormatError(f"{path}: bad LRV1 magic")
    t, h, w = struct.unpack("<III", data[4:16])
    body = data[16:]
    if len(body) != t * h * w:
        raise DataFormatError(f"{path}: payload is {len(body)} bytes, header says {t * h * w}")
    return np.frombuffer(body, dtype=np.uint8).reshape(t, h, w).copy()


def write_landmarks_csv(path, landmarks: np.ndarray) -> None:
    """Write per-frame 68-point landmarks: header, then frame_index,x0,y0,...,x67,y67."""
    landmarks = np.asarray(landmarks, dtype=np.float64)
    if landmarks.ndim != 3 or landmarks.shape[1:] != (68, 2):
        raise DataFormatError(f"expected T x 68 x 2 landmarks, got shape {landmarks.shape}")
    header = "frame_index," + ",".join(f"x{i},y{i}" for i in range(68))
    lines = [header]
    for t, frame in enumerate(landmarks):
        lines.append(f"{t}," + ",".join(repr(float(v)) for v in frame.reshape(-1)))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_landmarks_csv(path) -> np.ndarray:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith("frame_index"):
        raise DataFormatError(f"{path}: missing landmark CSV header")
    frames = []
    for ln, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        fields = line.split(",")
        if len(fields) != 1 + 2 * 68:
            raise DataFormatError(f"{path}:{ln}: expected 137 fields, got {len(fields)}")
        frames.append(np.array([float(v) for v in fields[1:]], dtype=np.float64).reshape(68, 2))
    if not frames:
        raise DataFormatError(f"{path}: no landmark rows")
    return np.stack(frames)


def write_manifest(path, entries, header_lines=()) -> None:
    """Manifest TSV: utterance_id, frames_path, landmarks_path, transcript."""
    out = [f"# {line}" for line in header_lines]
    for e in entries:
        out.append("\t".join([e["utterance_id"], e["frames_path"], e["landmarks_path"], e["transcript"]]))
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")


def read_manifest(path) -> list:
    entries = []
    for ln, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 4:
            raise DataFormatError(f"{path}:{ln}: expected 4 tab-separated fields, got {len(fields)}")
        entries.append(
            {
                "utterance_id": fields[0],
                "frames_path": fields[1],
                "landmarks_path": fields[2],
                "transcript": fields[3],
            }
        )
    return entries


def resolve_manifest_path(manifest_path, relpath) -> Path:
    p = Path(relpath)
    return p if p.is_absolute() else Path(manifest_path).parent / p


def write_id_text(path, pairs, header_lines=()) -> None:
    """UTF-8 lines of "utterance_id<TAB>text" (reference/hypothesis files)."""
    out = [f"# {line}" for line in header_lines]
    out += [f"{uid}\t{text}" for uid, text in pairs]
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")


def read_id_text(path) -> list:
    pairs = []
    for ln, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        if "\t" not in line:
            raise DataFormatError(f"{path}:{ln}: expected 'utterance_id<TAB>text'")
        uid, text = line.split("\t", 1)
        pairs.append((uid, text))
    return pairs


def write_norm_stats(path, mean: float, var: float, count: int, header_lines=()) -> None:
    out = [f"# {line}" for line in header_lines]
    out += [f"mean = {mean!r}", f"var = {var!r}", f"count = {count}"]
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")


def read_norm_stats(path):
    mean = var = None
    count = 0
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.startswith("#") or "=" not in line:
            continue
        key, val = [s.strip() for s in line.split("=", 1)]
        if key == "mean":
            mean = float(val)
        elif key == "var":
            var = float(val)
        elif key == "count":
            count = int(val)
    if mean is None or var is None:
        raise DataFormatError(f"{path}: missing mean/var")
    return mean, var, count
