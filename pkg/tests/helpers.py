"""Shared oracles and generators for the test suite."""

import itertools

import numpy as np

from lipvsr import ctc as ctc_mod


def rand_log_probs(t_len: int, n_vocab: int, seed) -> np.ndarray:
    """Random normalized frame log-posteriors."""
    rng = np.random.default_rng(seed)
    x = rng.normal(scale=2.0, size=(t_len, n_vocab))
    x -= np.log(np.exp(x).sum(axis=1, keepdims=True))
    return x


def brute_force_ctc_logprob(log_probs: np.ndarray, targets, blank_id: int = 0) -> float:
    """Sum path probabilities over every frame-level path that collapses to the target."""
    t_len, n_vocab = log_probs.shape
    want = [int(c) for c in targets]
    total = -np.inf
    for path in itertools.product(range(n_vocab), repeat=t_len):
        if ctc_mod.collapse(path, blank_id) == want:
            total = np.logaddexp(total, sum(log_probs[t, c] for t, c in enumerate(path)))
    return total


def brute_force_prefix_logprob(log_probs: np.ndarray, prefix, blank_id: int = 0) -> float:
    """Probability that the collapsed emission starts with the given labels."""
    t_len, n_vocab = log_probs.shape
    want = [int(c) for c in prefix]
    total = -np.inf
    for path in itertools.product(range(n_vocab), repeat=t_len):
        if ctc_mod.collapse(path, blank_id)[: len(want)] == want:
            total = np.logaddexp(total, sum(log_probs[t, c] for t, c in enumerate(path)))
    return total


def fd_gradient(fn, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of a scalar function of an array."""
    g = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        step = h * max(1.0, abs(orig))
        flat[i] = orig + step
        hi = fn(x)
        flat[i] = orig - step
        lo = fn(x)
        flat[i] = orig
        gf[i] = (hi - lo) / (2.0 * step)
    return g


def rel_err(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.abs(a) + np.abs(b), 1e-8)
    return float(np.max(np.abs(a - b) / denom))


def table_step_scorer(n_vocab: int, max_len: int, seed):
    """Deterministic synthetic chain scorer: one log-dist row per prefix length."""
    from lipvsr.search import StepScorer

    rng = np.random.default_rng(seed)
    rows = rng.normal(scale=1.5, size=(max_len + 1, n_vocab))
    rows -= np.log(np.exp(rows).sum(axis=1, keepdims=True))
    return StepScorer(lambda prefix: rows[len(prefix)])
