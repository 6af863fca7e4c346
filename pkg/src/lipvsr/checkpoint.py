"""Binary checkpoint files.

Layout: magic "LPCK", version u32, then repeated records of (name length
u32, UTF-8 name, rank u32, dims u32 x rank, float32 little-endian values)
until end of file. Records named "__meta__.*" carry the model configuration
and vocabulary hash; everything else is a parameter array. Records are
written sorted by name, so equal state produces byte-identical files.
"""

from __future__ import annotations

import struct

import numpy as np

from .dataio import DataFormatError
from .model import Model, ModelConfig

MAGIC = b"LPCK"
VERSION = 1
META_PREFIX = "__meta__."


def write_checkpoint(path, arrays: dict) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        for name in sorted(arrays):
            data = np.ascontiguousarray(arrays[name], dtype="<f4")
            raw = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<I", data.ndim))
            fh.write(struct.pack(f"<{data.ndim}I", *data.shape))
            fh.write(data.tobytes())


def read_checkpoint(path) -> dict:
    """Record arrays by name, values widened back to float64."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise DataFormatError(f"{path}: bad magic {blob[:4]!r}")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != VERSION:
        raise DataFormatError(f"{path}: unsupported version {version}")
    arrays: dict = {}
    off = 8
    total = len(blob)
    while off < total:
        if off + 4 > total:
            raise DataFormatError(f"{path}: truncated record header")
        (name_len,) = struct.unpack_from("<I", blob, off)
        off += 4
        name = blob[off : off + name_len].decode("utf-8")
        off += name_len
        (rank,) = struct.unpack_from("<I", blob, off)
        off += 4
        dims = struct.unpack_from(f"<{rank}I", blob, off)
        off += 4 * rank
        count = int(np.prod(dims)) if rank else 1
        nbytes = 4 * count
        if off + nbytes > total:
            raise DataFormatError(f"{path}: truncated values for {name!r}")
        values = np.frombuffer(blob, dtype="<f4", count=count, offset=off)
        off += nbytes
        arrays[name] = values.reshape(dims).astype(np.float64)
    return arrays


def _encode_str(s: str) -> np.ndarray:
    return np.array([ord(c) for c in s], dtype=np.float64)


def _decode_str(arr: np.ndarray) -> str:
    return "".join(chr(int(round(v))) for v in np.asarray(arr).reshape(-1))


def pack_meta(config: ModelConfig, vocab_hash: str) -> dict:
    return {
        META_PREFIX + "feature_dim": np.array([config.feature_dim]),
        META_PREFIX + "encoder_layers": np.array([config.encoder_layers]),
        META_PREFIX + "decoder_layers": np.array([config.decoder_layers]),
        META_PREFIX + "attention_heads": np.array([config.attention_heads]),
        META_PREFIX + "conv_kernel": np.array([config.conv_kernel]),
        META_PREFIX + "spatial_kernel": np.array([config.spatial_kernel]),
        META_PREFIX + "ffn_dim": np.array([config.ffn_dim]),
        META_PREFIX + "vocab_size": np.array([config.vocab_size]),
        META_PREFIX + "conv_module_kernel": np.array([config.conv_module_kernel]),
        META_PREFIX + "frontend_channels": np.array(config.frontend_channels),
        META_PREFIX + "pos_encoding": _encode_str(config.pos_encoding),
        META_PREFIX + "vocab_hash": _encode_str(vocab_hash),
    }


def unpack_meta(records: dict):
    def scalar(key):
        return int(records[META_PREFIX + key][0])

    try:
        config = ModelConfig(
            feature_dim=scalar("feature_dim"),
            encoder_layers=scalar("encoder_layers"),
            decoder_layers=scalar("decoder_layers"),
            attention_heads=scalar("attention_heads"),
            conv_kernel=scalar("conv_kernel"),
            spatial_kernel=scalar("spatial_kernel"),
            ffn_dim=scalar("ffn_dim"),
            vocab_size=scalar("vocab_size"),
            conv_module_kernel=scalar("conv_module_kernel"),
            frontend_channels=tuple(int(c) for c in records[META_PREFIX + "frontend_channels"]),
            pos_encoding=_decode_str(records[META_PREFIX + "pos_encoding"]),
        )
        vocab_hash = _decode_str(records[META_PREFIX + "vocab_hash"])
    except KeyError as exc:
        raise DataFormatError(f"checkpoint missing metadata record {exc}") from exc
    return config, vocab_hash


def save_model(path, model: Model, vocab_hash: str) -> None:
    arrays = dict(model.state_arrays())
    arrays.update(pack_meta(model.config, vocab_hash))
    write_checkpoint(path, arrays)


def load_model(path):
    """Rebuild (model, vocab_hash) from a checkpoint file."""
    records = read_checkpoint(path)
    config, vocab_hash = unpack_meta(records)
    params = {k: v for k, v in records.items() if not k.startswith(META_PREFIX)}
    model = Model(config, seed=0)
    model.load_state(params)
    return model, vocab_hash
