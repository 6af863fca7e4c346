"""Hybrid CTC/attention training: AdamW updates under a one-cycle schedule.

Batch size is 1; an epoch visits every utterance once in an order drawn
from (seed, epoch), and augmentation randomness derives from
(seed, epoch, utterance index), so runs are bit-reproducible.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import ctc as ctc_mod
from . import roi
from .autodiff import Tensor
from .model import Model

log = logging.getLogger("lipvsr")


def hybrid_loss(ctc_loglik, attn_loglik, alpha: float):
    """-(alpha * log p_ctc + (1 - alpha) * log p_attn); endpoints select one branch."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    return -(ctc_loglik * alpha + attn_loglik * (1.0 - alpha))


def ctc_loglik_op(log_probs: Tensor, targets, blank_id: int = 0) -> Tensor:
    """CTC log-likelihood as a tape node; gradient comes from forward-backward."""
    loss, grad = ctc_mod.ctc_loss(log_probs.data, targets, blank_id)

    def bw(g):
        log_probs._accumulate(-float(g) * grad)

    return ad.custom(np.array(-loss), (log_probs,), bw)


def attention_loglik(dec_logprobs: Tensor, targets, eos_id: int) -> Tensor:
    """Sum of teacher-forced log probabilities of the targets plus eos."""
    ids = np.array([int(c) for c in targets] + [eos_id], dtype=np.int64)
    if ids.shape[0] != dec_logprobs.shape[0]:
        raise ValueError(f"{ids.shape[0]} scoring rows expected, decoder gave {dec_logprobs.shape[0]}")
    return ad.tsum(ad.gather_last(dec_logprobs, ids))


def one_cycle_lr(step: int, total_steps: int, peak_lr: float) -> float:
    """Linear warm-up from peak/25 to peak at 30% of steps, linear decay to 0."""
    if total_steps < 1:
        raise ValueError("total_steps must be >= 1")
    if not 0 <= step < total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps})")
    if total_steps == 1:
        return peak_lr
    start = peak_lr / 25.0
    peak_step = int(round(0.3 * (total_steps - 1)))
    if step <= peak_step:
        if peak_step == 0:
            return peak_lr
        return start + (peak_lr - start) * (step / peak_step)
    return peak_lr * (1.0 - (step - peak_step) / (total_steps - 1 - peak_step))


class AdamW:
    """Decoupled weight decay Adam over a named parameter dict."""

    def __init__(self, params: dict, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8, weight_decay: float = 0.01):
        self.params = params
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self.m = {k: np.zeros_like(t.data) for k, t in params.items()}
        self.v = {k: np.zeros_like(t.data) for k, t in params.items()}

    def step(self, lr: float):
        self.step_count += 1
        b1c = 1.0 - self.beta1**self.step_count
        b2c = 1.0 - self.beta2**self.step_count
        for name, p in self.params.items():
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            update = (m / b1c) / (np.sqrt(v / b2c) + self.eps)
            p.data -= lr * (update + self.weight_decay * p.data)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 5
    lr: float = 3e-4
    alpha: float = 0.1
    seed: int = 0
    weight_decay: float = 0.01
    augment: bool = True

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")


def train(model: Model, dataset, cfg: TrainConfig, stop_fn=None) -> list:
    """Train in place over (normalized 96x96 clip, target id) pairs.

    Returns per-epoch mean losses. `stop_fn(model, epoch, mean_loss)` may end
    training early after any epoch. Utterances whose CTC loss is infinite
    (frames shorter than the target needs) are skipped with a warning;
    a non-finite combined loss aborts.
    """
    dataset = list(dataset)
    if not dataset:
        raise ValueError("empty training set")
    n = len(dataset)
    total_steps = cfg.epochs * n
    opt = AdamW(model.named_parameters(), weight_decay=cfg.weight_decay)
    blank_id = 0
    history = []
    step = 0
    for epoch in range(cfg.epochs):
        order = np.random.default_rng([cfg.seed, epoch]).permutation(n)
        epoch_losses = []
        for idx in order:
            clip, targets = dataset[int(idx)]
            if cfg.augment:
                clip_in = roi.augment(clip, [cfg.seed, epoch, int(idx)])
            else:
                clip_in = roi.center_crop(clip)
            lr = one_cycle_lr(step, total_steps, cfg.lr)
            step += 1
            ctc_lp, dec_lp = model.forward(clip_in, targets)
            ctc_ll = ctc_loglik_op(ctc_lp, targets, blank_id)
            if not np.isfinite(ctc_ll.data):
                log.warning("epoch %d: skipping utterance %d, target needs more frames than available", epoch, int(idx))
                continue
            attn_ll = attention_loglik(dec_lp, targets, model.eos_id)
            loss = hybrid_loss(ctc_ll, attn_ll, cfg.alpha)
            loss_val = float(loss.data)
            if not math.isfinite(loss_val):
                raise FloatingPointError(f"training diverged at epoch {epoch}: loss {loss_val}")
            model.zero_grad()
            loss.backward()
            opt.step(lr)
            epoch_losses.append(loss_val)
        mean_loss = float(np.mean(epoch_losses)) if epoch_losses else float("nan")
        history.append(mean_loss)
        log.info("epoch %d/%d: mean loss %.6f", epoch + 1, cfg.epochs, mean_loss)
        if stop_fn is not None and stop_fn(model, epoch, mean_loss):
            break
    return history
