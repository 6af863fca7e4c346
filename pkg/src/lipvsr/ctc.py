"""CTC loss, greedy decoding, and label-synchronous prefix scoring.

All routines work on a (T, V) array of per-frame log probabilities in
float64 and stay in log space throughout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

NEG_INF = -np.inf


def collapse(ids, blank_id: int) -> list:
    """Merge adjacent repeats, then drop blanks."""
    out = []
    prev = None
    for i in ids:
        i = int(i)
        if i != prev and i != blank_id:
            out.append(i)
        prev = i
    return out


def min_frames(targets, blank_id: int) -> int:
    """Fewest frames any CTC path needs: one per label plus one separator per adjacent repeat."""
    targets = [int(t) for t in targets]
    repeats = sum(1 for a, b in zip(targets, targets[1:]) if a == b)
    return len(targets) + repeats


def _augmented(targets, blank_id: int) -> np.ndarray:
    labels = np.full(2 * len(targets) + 1, blank_id, dtype=np.int64)
    labels[1::2] = targets
    return labels


def ctc_loss(log_probs: np.ndarray, targets, blank_id: int = 0):
    """Negative log probability of the target under CTC, with its gradient.

    Returns (loss, grad) where grad has the shape of log_probs and is the
    derivative of the loss with respect to the log probabilities. Targets
    that need more frames than available get loss +inf and a zero gradient.
    """
    x = np.asarray(log_probs, dtype=np.float64)
    t_len, n_vocab = x.shape
    targets = [int(t) for t in targets]
    if any(c == blank_id for c in targets):
        raise ValueError("targets must not contain the blank id")
    if any(not 0 <= c < n_vocab for c in targets):
        raise ValueError("target id out of vocabulary range")
    if t_len == 0 or min_frames(targets, blank_id) > t_len:
        return np.inf, np.zeros_like(x)

    labels = _augmented(targets, blank_id)
    s_len = labels.shape[0]
    # skip transition s-2 -> s is legal only into a non-blank that differs
    # from the label two slots back
    can_skip = np.zeros(s_len, dtype=bool)
    can_skip[2:] = (labels[2:] != blank_id) & (labels[2:] != labels[:-2])

    def shifted(arr, k):
        out = np.full(s_len, NEG_INF)
        out[k:] = arr[: s_len - k]
        return out

    alpha = np.full((t_len, s_len), NEG_INF)
    alpha[0, 0] = x[0, labels[0]]
    if s_len > 1:
        alpha[0, 1] = x[0, labels[1]]
    for t in range(1, t_len):
        prev = alpha[t - 1]
        stay = prev
        step = shifted(prev, 1)
        skip = np.where(can_skip, shifted(prev, 2), NEG_INF)
        alpha[t] = np.logaddexp(np.logaddexp(stay, step), skip) + x[t, labels]

    log_p = np.logaddexp(alpha[t_len - 1, s_len - 1], alpha[t_len - 1, s_len - 2] if s_len > 1 else NEG_INF)
    if not np.isfinite(log_p):
        return np.inf, np.zeros_like(x)

    # beta[t, s] excludes the frame-t emission, so alpha[t] + beta[t] sums to log_p at every t
    beta = np.full((t_len, s_len), NEG_INF)
    beta[t_len - 1, s_len - 1] = 0.0
    if s_len > 1:
        beta[t_len - 1, s_len - 2] = 0.0
    for t in range(t_len - 2, -1, -1):
        nxt = beta[t + 1] + x[t + 1, labels]
        stay = nxt
        step = np.full(s_len, NEG_INF)
        step[: s_len - 1] = nxt[1:]
        skip = np.full(s_len, NEG_INF)
        skip[: s_len - 2] = np.where(can_skip[2:], nxt[2:], NEG_INF)
        beta[t] = np.logaddexp(np.logaddexp(stay, step), skip)

    occupancy = alpha + beta
    grad = np.zeros_like(x)
    for k in np.unique(labels):
        mask = labels == k
        with np.errstate(divide="ignore"):
            gathered = occupancy[:, mask]
            m = gathered.max(axis=1)
            safe = np.where(np.isfinite(m), m, 0.0)
            lse = safe + np.log(np.exp(gathered - safe[:, None]).sum(axis=1))
            lse = np.where(np.isfinite(m), lse, NEG_INF)
        grad[:, k] = -np.exp(lse - log_p)
    return -log_p, grad


def ctc_full_logprob(log_probs: np.ndarray, targets, blank_id: int = 0) -> float:
    loss, _ = ctc_loss(log_probs, targets, blank_id)
    return -loss


def ctc_greedy(log_probs: np.ndarray, blank_id: int = 0) -> list:
    """Best label per frame (ties to the lowest id), collapsed."""
    x = np.asarray(log_probs, dtype=np.float64)
    return collapse(np.argmax(x, axis=1), blank_id)


@dataclass
class PrefixState:
    """Forward variables of one prefix: gamma_n ends in the last label, gamma_b ends in blank."""

    gamma_n: np.ndarray
    gamma_b: np.ndarray
    last: int
    score: float


def prefix_init(log_probs: np.ndarray, blank_id: int = 0) -> PrefixState:
    """State of the empty prefix: only all-blank paths, score log 1."""
    x = np.asarray(log_probs, dtype=np.float64)
    t_len = x.shape[0]
    gamma_n = np.full(t_len, NEG_INF)
    gamma_b = np.cumsum(x[:, blank_id])
    return PrefixState(gamma_n=gamma_n, gamma_b=gamma_b, last=-1, score=0.0)


def prefix_full_logprob(state: PrefixState) -> float:
    """Log probability that the frames emit exactly this prefix."""
    return float(np.logaddexp(state.gamma_n[-1], state.gamma_b[-1]))


def prefix_scores(log_probs: np.ndarray, state: PrefixState, blank_id: int = 0, eos_id: int | None = None):
    """Score every one-label extension of the prefix at once.

    Returns (scores, gamma_n, gamma_b): scores[c] is the log prefix
    probability of the current prefix followed by c, the gamma arrays are
    (T, V) forward variables from which `extend_state` slices the survivor
    columns. scores[blank_id] is -inf; scores[eos_id], when given, is the
    full-sequence log probability of the prefix itself.
    """
    x = np.asarray(log_probs, dtype=np.float64)
    t_len, n_vocab = x.shape
    gamma_n = np.full((t_len, n_vocab), NEG_INF)
    gamma_b = np.full((t_len, n_vocab), NEG_INF)

    if state.last < 0:
        gamma_n[0] = x[0]
    psi = gamma_n[0].copy()
    for t in range(1, t_len):
        phi = np.full(n_vocab, np.logaddexp(state.gamma_b[t - 1], state.gamma_n[t - 1]))
        if state.last >= 0:
            phi[state.last] = state.gamma_b[t - 1]
        gamma_n[t] = np.logaddexp(gamma_n[t - 1], phi) + x[t]
        gamma_b[t] = np.logaddexp(gamma_b[t - 1], gamma_n[t - 1]) + x[t, blank_id]
        psi = np.logaddexp(psi, phi + x[t])

    psi[blank_id] = NEG_INF
    if eos_id is not None:
        psi[eos_id] = prefix_full_logprob(state)
        gamma_n[:, eos_id] = NEG_INF
        gamma_b[:, eos_id] = NEG_INF
    return psi, gamma_n, gamma_b


def extend_state(scores_gammas, c: int) -> PrefixState:
    """PrefixState for the extension chosen from a `prefix_scores` result."""
    psi, gamma_n, gamma_b = scores_gammas
    return PrefixState(gamma_n=gamma_n[:, c].copy(), gamma_b=gamma_b[:, c].copy(), last=int(c), score=float(psi[c]))


def prefix_step(log_probs: np.ndarray, state: PrefixState, c: int, blank_id: int = 0, eos_id: int | None = None):
    """Score one extension; returns (score, new_state) with new_state None for eos."""
    if eos_id is not None and c == eos_id:
        return prefix_full_logprob(state), None
    res = prefix_scores(log_probs, state, blank_id, eos_id)
    return float(res[0][c]), extend_state(res, c)
