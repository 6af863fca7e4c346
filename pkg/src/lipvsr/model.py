"""Encoder-decoder lipreading model.

Topology: 3D-conv visual frontend, Conformer-style encoder (macaron FFN
pair, self-attention, depthwise conv module), Transformer decoder with
masked self-attention and cross-attention, plus a linear CTC head. Batch
size is 1 throughout, so activations are unbatched (T, d) arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import autodiff as ad
from .autodiff import Tensor

MASK_VALUE = -1e9


@dataclass(frozen=True)
class ModelConfig:
    feature_dim: int = 32
    encoder_layers: int = 2
    decoder_layers: int = 2
    attention_heads: int = 2
    conv_kernel: int = 5
    spatial_kernel: int = 7
    ffn_dim: int = 0
    vocab_size: int = 37
    conv_module_kernel: int = 7
    frontend_channels: tuple = (8, 16, 32)
    pos_encoding: str = "absolute"

    def __post_init__(self):
        if self.ffn_dim == 0:
            object.__setattr__(self, "ffn_dim", 4 * self.feature_dim)
        for name in ("feature_dim", "encoder_layers", "decoder_layers", "attention_heads", "conv_kernel", "spatial_kernel", "ffn_dim", "vocab_size", "conv_module_kernel"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.feature_dim % self.attention_heads != 0:
            raise ValueError(f"attention_heads ({self.attention_heads}) must divide feature_dim ({self.feature_dim})")
        if self.conv_kernel % 2 == 0 or self.conv_module_kernel % 2 == 0:
            raise ValueError("temporal kernels must be odd so padding preserves length")
        if self.pos_encoding not in ("absolute", "relative"):
            raise ValueError(f"unknown pos_encoding {self.pos_encoding!r}")
        object.__setattr__(self, "frontend_channels", tuple(int(c) for c in self.frontend_channels))
        if len(self.frontend_channels) != 3 or any(c <= 0 for c in self.frontend_channels):
            raise ValueError("frontend_channels must be three positive ints")


def sinusoidal_pe(length: int, dim: int, positions=None) -> np.ndarray:
    """Classic sin/cos positional table; `positions` overrides 0..length-1."""
    if dim % 2 != 0:
        raise ValueError("positional encoding needs an even dim")
    pos = np.arange(length, dtype=np.float64) if positions is None else np.asarray(positions, dtype=np.float64)
    half = dim // 2
    freqs = np.exp(-math.log(10000.0) * (2 * np.arange(half, dtype=np.float64)) / dim)
    ang = pos[:, None] * freqs[None, :]
    pe = np.zeros((pos.shape[0], dim), dtype=np.float64)
    pe[:, 0::2] = np.sin(ang)
    pe[:, 1::2] = np.cos(ang)
    return pe


def causal_mask(length: int) -> np.ndarray:
    """Additive mask; the large negative underflows to exact zero attention."""
    return np.triu(np.full((length, length), MASK_VALUE), k=1)


def _conv3d(x: Tensor, w: Tensor, b: Tensor, stride: int, pad_t: int, pad_s: int, chunk: int = 8) -> Tensor:
    """Single-channel 3D convolution over a (T, H, W) clip.

    im2col GEMM in time chunks; the backward pass rebuilds each chunk's
    columns from the padded input instead of retaining them, keeping peak
    memory at one chunk regardless of clip length.
    """
    xd = x.data
    t_in, h_in, w_in = xd.shape
    c_out, kt, kh, kw = w.data.shape
    xp = np.pad(xd, ((pad_t, pad_t), (pad_s, pad_s), (pad_s, pad_s)))
    win = sliding_window_view(xp, (kt, kh, kw))[:, ::stride, ::stride]
    t2, h2, w2 = win.shape[:3]
    k_size = kt * kh * kw
    wm = w.data.reshape(c_out, k_size)
    out = np.empty((t2, c_out, h2, w2))
    for lo in range(0, t2, chunk):
        hi = min(lo + chunk, t2)
        cols = win[lo:hi].reshape(-1, k_size)
        out[lo:hi] = (cols @ wm.T + b.data).reshape(hi - lo, h2, w2, c_out).transpose(0, 3, 1, 2)

    def bw(g):
        if b.requires_grad:
            b._accumulate(g.sum(axis=(0, 2, 3)))
        gw = np.zeros((k_size, c_out)) if w.requires_grad else None
        gxp = np.zeros_like(xp) if x.requires_grad else None
        for lo in range(0, t2, chunk):
            hi = min(lo + chunk, t2)
            gt = g[lo:hi].transpose(0, 2, 3, 1).reshape(-1, c_out)
            if gw is not None:
                gw += win[lo:hi].reshape(-1, k_size).T @ gt
            if gxp is not None:
                gcols = (gt @ wm).reshape(hi - lo, h2, w2, kt, kh, kw)
                for dt in range(kt):
                    for di in range(kh):
                        for dj in range(kw):
                            gxp[lo + dt : hi + dt, di : di + stride * h2 : stride, dj : dj + stride * w2 : stride] += gcols[..., dt, di, dj]
        if gw is not None:
            w._accumulate(gw.T.reshape(w.data.shape))
        if gxp is not None:
            x._accumulate(gxp[pad_t : pad_t + t_in, pad_s : pad_s + h_in, pad_s : pad_s + w_in])

    return ad.custom(out, (x, w, b), bw)


def _conv2d(x: Tensor, w: Tensor, b: Tensor, stride: int, pad: int) -> Tensor:
    """Frame-batched 2D convolution: (T, Ci, H, W) -> (T, Co, H', W')."""
    xd = x.data
    t_in, c_in, h_in, w_in = xd.shape
    c_out, _, kh, kw = w.data.shape
    xp = np.pad(xd, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(xp, (c_in, kh, kw), axis=(1, 2, 3))[:, 0, ::stride, ::stride]
    h2, w2 = win.shape[1:3]
    cols = win.reshape(t_in * h2 * w2, c_in * kh * kw)
    wm = w.data.reshape(c_out, -1)
    out = (cols @ wm.T + b.data).reshape(t_in, h2, w2, c_out).transpose(0, 3, 1, 2)

    def bw(g):
        gt = g.transpose(0, 2, 3, 1).reshape(-1, c_out)
        if w.requires_grad:
            w._accumulate((gt.T @ cols).reshape(w.data.shape))
        if b.requires_grad:
            b._accumulate(gt.sum(axis=0))
        if x.requires_grad:
            gcols = (gt @ wm).reshape(t_in, h2, w2, c_in, kh, kw)
            gxp = np.zeros_like(xp)
            for di in range(kh):
                for dj in range(kw):
                    gxp[:, :, di : di + stride * h2 : stride, dj : dj + stride * w2 : stride] += gcols[..., di, dj].transpose(0, 3, 1, 2)
            x._accumulate(gxp[:, :, pad : pad + h_in, pad : pad + w_in])

    return ad.custom(out, (x, w, b), bw)


def _depthwise1d(x: Tensor, w: Tensor) -> Tensor:
    """Per-channel temporal convolution on (T, d), zero-padded to keep T."""
    xd = x.data
    t_in, dim = xd.shape
    k = w.data.shape[1]
    p = k // 2
    xp = np.pad(xd, ((p, k - 1 - p), (0, 0)))
    win = sliding_window_view(xp, k, axis=0)
    out = (win * w.data[None]).sum(axis=-1)

    def bw(g):
        if w.requires_grad:
            w._accumulate((g[:, :, None] * win).sum(axis=0))
        if x.requires_grad:
            gxp = np.zeros_like(xp)
            for j in range(k):
                gxp[j : j + t_in] += g * w.data[:, j]
            x._accumulate(gxp[p : p + t_in])

    return ad.custom(out, (x, w), bw)


def _rel_shift(t: Tensor) -> Tensor:
    """(h, L, 2L-1) relative scores -> (h, L, L): out[., i, j] = in[., i, L-1-i+j]."""
    heads, length, _ = t.data.shape
    rows = np.arange(length)[:, None]
    idx = length - 1 - rows + np.arange(length)[None, :]
    out = t.data[:, rows, idx]

    def bw(g):
        full = np.zeros_like(t.data)
        np.add.at(full, (np.arange(heads)[:, None, None], rows[None], idx[None]), g)
        t._accumulate(full)

    return ad.custom(out, (t,), bw)


class Model:
    """Parameter container plus the forward passes. Deterministic given (config, seed)."""

    def __init__(self, config: ModelConfig, seed: int = 0):
        self.config = config
        self.eos_id = config.vocab_size - 1
        self.params: dict = {}
        self._init_params(np.random.default_rng(seed))

    # parameter construction

    def _add(self, name: str, array: np.ndarray):
        self.params[name] = Tensor(array, requires_grad=True)

    def _lin(self, rng, name: str, fan_in: int, fan_out: int, bias: bool = True):
        self._add(name + ".w", rng.standard_normal((fan_in, fan_out)) / math.sqrt(fan_in))
        if bias:
            self._add(name + ".b", np.zeros(fan_out))

    def _ln(self, name: str):
        d = self.config.feature_dim
        self._add(name + ".g", np.ones(d))
        self._add(name + ".b", np.zeros(d))

    def _attn_params(self, rng, prefix: str, relative: bool = False):
        d = self.config.feature_dim
        for part in ("q", "k", "v", "o"):
            self._lin(rng, f"{prefix}.{part}", d, d)
        if relative:
            h = self.config.attention_heads
            self._add(f"{prefix}.r.w", rng.standard_normal((d, d)) / math.sqrt(d))
            self._add(f"{prefix}.u", np.zeros((h, 1, d // h)))
            self._add(f"{prefix}.v", np.zeros((h, 1, d // h)))

    def _init_params(self, rng):
        cfg = self.config
        d = cfg.feature_dim
        c1, c2, c3 = cfg.frontend_channels
        kt, ks = cfg.conv_kernel, cfg.spatial_kernel
        self._add("frontend.conv3d.w", rng.standard_normal((c1, kt, ks, ks)) / math.sqrt(kt * ks * ks))
        self._add("frontend.conv3d.b", np.zeros(c1))
        self._add("frontend.conv2a.w", rng.standard_normal((c2, c1, 3, 3)) / math.sqrt(c1 * 9))
        self._add("frontend.conv2a.b", np.zeros(c2))
        self._add("frontend.conv2b.w", rng.standard_normal((c3, c2, 3, 3)) / math.sqrt(c2 * 9))
        self._add("frontend.conv2b.b", np.zeros(c3))
        self._lin(rng, "frontend.proj", c3, d)

        relative = cfg.pos_encoding == "relative"
        for i in range(cfg.encoder_layers):
            p = f"enc.{i}"
            self._ln(f"{p}.ffn1.ln")
            self._lin(rng, f"{p}.ffn1.lin1", d, cfg.ffn_dim)
            self._lin(rng, f"{p}.ffn1.lin2", cfg.ffn_dim, d)
            self._ln(f"{p}.attn.ln")
            self._attn_params(rng, f"{p}.attn", relative=relative)
            self._ln(f"{p}.conv.ln")
            self._lin(rng, f"{p}.conv.pw1", d, 2 * d)
            self._add(f"{p}.conv.dw.w", rng.standard_normal((d, cfg.conv_module_kernel)) / math.sqrt(cfg.conv_module_kernel))
            self._lin(rng, f"{p}.conv.pw2", d, d)
            self._ln(f"{p}.ffn2.ln")
            self._lin(rng, f"{p}.ffn2.lin1", d, cfg.ffn_dim)
            self._lin(rng, f"{p}.ffn2.lin2", cfg.ffn_dim, d)

        self._add("dec.embed", rng.standard_normal((cfg.vocab_size, d)) / math.sqrt(d))
        for i in range(cfg.decoder_layers):
            p = f"dec.{i}"
            self._ln(f"{p}.self.ln")
            self._attn_params(rng, f"{p}.self")
            self._ln(f"{p}.cross.ln")
            self._attn_params(rng, f"{p}.cross")
            self._ln(f"{p}.ffn.ln")
            self._lin(rng, f"{p}.ffn.lin1", d, cfg.ffn_dim)
            self._lin(rng, f"{p}.ffn.lin2", cfg.ffn_dim, d)
        self._ln("dec.final_ln")
        self._lin(rng, "dec.out", d, cfg.vocab_size)
        self._lin(rng, "ctc.out", d, cfg.vocab_size)

    # parameter access

    def named_parameters(self) -> dict:
        return self.params

    def zero_grad(self):
        for t in self.params.values():
            t.grad = None

    def state_arrays(self) -> dict:
        return {name: t.data for name, t in self.params.items()}

    def load_state(self, arrays: dict):
        missing = set(self.params) - set(arrays)
        extra = set(arrays) - set(self.params)
        if missing or extra:
            raise ValueError(f"parameter names mismatch (missing {sorted(missing)[:3]}, extra {sorted(extra)[:3]})")
        for name, t in self.params.items():
            arr = np.asarray(arrays[name], dtype=np.float64)
            if arr.shape != t.data.shape:
                raise ValueError(f"{name}: shape {arr.shape} does not match {t.data.shape}")
            t.data = arr
            t.grad = None

    # building blocks

    def _linear(self, x: Tensor, name: str) -> Tensor:
        return ad.matmul(x, self.params[name + ".w"]) + self.params[name + ".b"]

    def _layer_norm(self, x: Tensor, name: str) -> Tensor:
        return ad.layer_norm(x, self.params[name + ".g"], self.params[name + ".b"])

    def _split_heads(self, x: Tensor, length: int) -> Tensor:
        h = self.config.attention_heads
        dh = self.config.feature_dim // h
        return ad.transpose(ad.reshape(x, (length, h, dh)), (1, 0, 2))

    def _attention(self, x: Tensor, name: str, mask=None, memory: Tensor | None = None, relative: bool = False) -> Tensor:
        d = self.config.feature_dim
        h = self.config.attention_heads
        dh = d // h
        lq = x.shape[0]
        kv = x if memory is None else memory
        lk = kv.shape[0]
        q = self._split_heads(self._linear(x, f"{name}.q"), lq)
        k = self._split_heads(self._linear(kv, f"{name}.k"), lk)
        v = self._split_heads(self._linear(kv, f"{name}.v"), lk)
        kt = ad.transpose(k, (0, 2, 1))
        if relative:
            # Transformer-XL style: content term with a global content bias u,
            # plus a position term against sinusoidal offset embeddings
            rel_pos = np.arange(lq - 1, -lq, -1, dtype=np.float64)
            r = Tensor(sinusoidal_pe(2 * lq - 1, d, positions=rel_pos))
            rproj = self._split_heads(ad.matmul(r, self.params[f"{name}.r.w"]), 2 * lq - 1)
            content = ad.matmul(q + self.params[f"{name}.u"], kt)
            position = _rel_shift(ad.matmul(q + self.params[f"{name}.v"], ad.transpose(rproj, (0, 2, 1))))
            scores = (content + position) * (1.0 / math.sqrt(dh))
        else:
            scores = ad.matmul(q, kt) * (1.0 / math.sqrt(dh))
        if mask is not None:
            scores = scores + Tensor(mask)
        attn = ad.softmax(scores, axis=-1)
        out = ad.reshape(ad.transpose(ad.matmul(attn, v), (1, 0, 2)), (lq, d))
        return self._linear(out, f"{name}.o")

    def _ffn(self, x: Tensor, name: str) -> Tensor:
        return self._linear(ad.swish(self._linear(x, f"{name}.lin1")), f"{name}.lin2")

    def _conv_module(self, x: Tensor, name: str) -> Tensor:
        h = ad.glu(self._linear(x, f"{name}.pw1"), axis=-1)
        h = ad.swish(_depthwise1d(h, self.params[f"{name}.dw.w"]))
        return self._linear(h, f"{name}.pw2")

    # forward passes

    def frontend_forward(self, clip) -> Tensor:
        """(T, H, W) normalized clip -> (T, d) features with positional encoding."""
        data = clip.data if isinstance(clip, Tensor) else np.asarray(clip, dtype=np.float64)
        if data.ndim != 3 or data.shape[0] < 1:
            raise ValueError(f"expected a (T, H, W) clip, got shape {data.shape}")
        if not np.isfinite(data).all():
            raise ValueError("clip contains non-finite values")
        x = clip if isinstance(clip, Tensor) else Tensor(data)
        cfg = self.config
        x = ad.swish(_conv3d(x, self.params["frontend.conv3d.w"], self.params["frontend.conv3d.b"], stride=2, pad_t=cfg.conv_kernel // 2, pad_s=cfg.spatial_kernel // 2))
        x = ad.swish(_conv2d(x, self.params["frontend.conv2a.w"], self.params["frontend.conv2a.b"], stride=2, pad=1))
        x = ad.swish(_conv2d(x, self.params["frontend.conv2b.w"], self.params["frontend.conv2b.b"], stride=2, pad=1))
        x = ad.tmean(x, axis=(2, 3))
        x = self._linear(x, "frontend.proj")
        return x + Tensor(sinusoidal_pe(x.shape[0], cfg.feature_dim))

    def encoder_forward(self, feats) -> Tensor:
        """(T, d) -> (T, d) through the Conformer-style layer stack."""
        x = feats if isinstance(feats, Tensor) else Tensor(np.asarray(feats, dtype=np.float64))
        if not np.isfinite(x.data).all():
            raise ValueError("encoder input contains non-finite values")
        relative = self.config.pos_encoding == "relative"
        for i in range(self.config.encoder_layers):
            p = f"enc.{i}"
            x = x + self._ffn(self._layer_norm(x, f"{p}.ffn1.ln"), f"{p}.ffn1") * 0.5
            x = x + self._attention(self._layer_norm(x, f"{p}.attn.ln"), f"{p}.attn", relative=relative)
            x = x + self._conv_module(self._layer_norm(x, f"{p}.conv.ln"), f"{p}.conv")
            x = x + self._ffn(self._layer_norm(x, f"{p}.ffn2.ln"), f"{p}.ffn2") * 0.5
        if not np.isfinite(x.data).all():
            raise FloatingPointError("encoder produced non-finite values")
        return x

    def ctc_head(self, latents) -> Tensor:
        """(T, d) -> (T, V) per-frame log probabilities."""
        x = latents if isinstance(latents, Tensor) else Tensor(np.asarray(latents, dtype=np.float64))
        return ad.log_softmax(self._linear(x, "ctc.out"), axis=-1)

    def _check_targets(self, targets, what: str):
        targets = [int(c) for c in targets]
        for c in targets:
            if not 0 <= c < self.config.vocab_size:
                raise ValueError(f"{what} id {c} out of range")
            if c == self.eos_id:
                raise ValueError(f"{what} must not contain eos")
        return targets

    def decoder_forward(self, latents, targets) -> Tensor:
        """Teacher-forced log probabilities; row r predicts targets[r], last row predicts eos."""
        mem = latents if isinstance(latents, Tensor) else Tensor(np.asarray(latents, dtype=np.float64))
        if mem.ndim != 2 or mem.shape[0] < 1:
            raise ValueError(f"latents must be a non-empty (T, d) matrix, got {mem.shape}")
        targets = self._check_targets(targets, "targets")
        cfg = self.config
        ids = np.array([self.eos_id] + targets, dtype=np.int64)
        length = ids.shape[0]
        x = ad.embedding(self.params["dec.embed"], ids) * math.sqrt(cfg.feature_dim)
        x = x + Tensor(sinusoidal_pe(length, cfg.feature_dim))
        mask = causal_mask(length)
        for i in range(cfg.decoder_layers):
            p = f"dec.{i}"
            x = x + self._attention(self._layer_norm(x, f"{p}.self.ln"), f"{p}.self", mask=mask)
            x = x + self._attention(self._layer_norm(x, f"{p}.cross.ln"), f"{p}.cross", memory=mem)
            x = x + self._ffn(self._layer_norm(x, f"{p}.ffn.ln"), f"{p}.ffn")
        x = self._layer_norm(x, "dec.final_ln")
        return ad.log_softmax(self._linear(x, "dec.out"), axis=-1)

    def decoder_score_step(self, latents, prefix) -> np.ndarray:
        """Log probabilities of the next symbol given a committed prefix."""
        prefix = self._check_targets(prefix, "prefix")
        with ad.no_grad():
            rows = self.decoder_forward(latents, prefix)
        return rows.data[len(prefix)].copy()

    def forward(self, clip, targets):
        """Full pass: (ctc_logprobs (T, V), decoder_logprobs (L+1, V))."""
        latents = self.encoder_forward(self.frontend_forward(clip))
        return self.ctc_head(latents), self.decoder_forward(latents, targets)
