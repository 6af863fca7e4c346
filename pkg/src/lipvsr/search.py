"""Joint label-synchronous beam search over CTC, attention, and LM scores.

Each step closes every live hypothesis with eos (banking it in the ended
pool, which is never pruned) and extends it with every other non-blank
token; only live hypotheses compete for beam slots. Final ranking is by
combined score without length normalization, ties broken lexicographically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ctc as ctc_mod


@dataclass(frozen=True)
class DecodeConfig:
    lam: float = 0.1
    beta: float = 0.4
    beam: int = 10
    penalty: float = 0.0
    max_len: int = 200

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lam must be in [0, 1], got {self.lam}")
        if self.beta < 0.0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")
        if self.beam < 1:
            raise ValueError(f"beam must be >= 1, got {self.beam}")
        if self.max_len < 1:
            raise ValueError(f"max_len must be >= 1, got {self.max_len}")


def combine(s_ctc: float, s_attn: float, s_lm: float, cfg: DecodeConfig, length: int = 0) -> float:
    return cfg.lam * s_ctc + (1.0 - cfg.lam) * s_attn + cfg.beta * s_lm + cfg.penalty * length


@dataclass
class Hypothesis:
    prefix: tuple
    s_ctc: float
    s_attn: float
    s_lm: float
    combined: float
    ctc_state: object = None
    attn_state: float = 0.0
    lm_state: float = 0.0
    ended: bool = False


class CtcPrefixScorer:
    """Wraps a (T, V) log-probability grid with the prefix-score recursion."""

    def __init__(self, log_probs: np.ndarray, blank_id: int, eos_id: int):
        self.log_probs = np.asarray(log_probs, dtype=np.float64)
        if self.log_probs.shape[0] < 1:
            raise ValueError("empty frame sequence")
        self.blank_id = blank_id
        self.eos_id = eos_id

    def initial(self):
        return ctc_mod.prefix_init(self.log_probs, self.blank_id)

    def extensions(self, prefix, state):
        res = ctc_mod.prefix_scores(self.log_probs, state, self.blank_id, self.eos_id)
        return res[0], lambda c: ctc_mod.extend_state(res, c)


class StepScorer:
    """Adapter for chain-rule scorers: fn(prefix) gives next-symbol log probs.

    State is the cumulative log probability of the prefix; extension scores
    are absolute (cumulative plus increment), matching the CTC scorer.
    """

    def __init__(self, step_fn):
        self.step_fn = step_fn

    def initial(self) -> float:
        return 0.0

    def extensions(self, prefix, state):
        row = np.asarray(self.step_fn(prefix), dtype=np.float64)
        scores = state + row
        return scores, lambda c: float(scores[c])


def lm_step_scorer(lm, eos_id: int) -> StepScorer:
    return StepScorer(lambda prefix: lm.step_scores(lm.context_of(prefix)))


def attention_step_scorer(model, latents) -> StepScorer:
    return StepScorer(lambda prefix: model.decoder_score_step(latents, list(prefix)))


def _rank_key(h: Hypothesis):
    return (-h.combined, h.prefix)


def beam_search(ctc_scorer, attn_scorer, lm_scorer, cfg: DecodeConfig, vocab_size: int, blank_id: int = 0, eos_id: int | None = None) -> list:
    """All eos-closed hypotheses, best first. lm_scorer None drops the LM term."""
    if eos_id is None:
        eos_id = vocab_size - 1
    tokens = [c for c in range(vocab_size) if c not in (blank_id, eos_id)]
    root = Hypothesis(prefix=(), s_ctc=0.0, s_attn=0.0, s_lm=0.0, combined=0.0, ctc_state=ctc_scorer.initial(), attn_state=attn_scorer.initial(), lm_state=lm_scorer.initial() if lm_scorer else 0.0)
    live = [root]
    ended = []
    for step in range(cfg.max_len + 1):
        scored = []
        for hyp in live:
            ctc_scores, ctc_make = ctc_scorer.extensions(hyp.prefix, hyp.ctc_state)
            attn_scores, attn_make = attn_scorer.extensions(hyp.prefix, hyp.attn_state)
            if lm_scorer is not None:
                lm_scores, lm_make = lm_scorer.extensions(hyp.prefix, hyp.lm_state)
            else:
                lm_scores, lm_make = np.zeros(vocab_size), lambda c: 0.0
            closed = Hypothesis(
                prefix=hyp.prefix,
                s_ctc=float(ctc_scores[eos_id]),
                s_attn=float(attn_scores[eos_id]),
                s_lm=float(lm_scores[eos_id]),
                combined=0.0,
                ended=True,
            )
            closed.combined = combine(closed.s_ctc, closed.s_attn, closed.s_lm, cfg, len(closed.prefix))
            ended.append(closed)
            if step == cfg.max_len:
                continue
            scored.append((hyp, ctc_scores, ctc_make, attn_scores, attn_make, lm_scores, lm_make))
        if step == cfg.max_len or not scored:
            break
        candidates = []
        for hyp, ctc_scores, ctc_make, attn_scores, attn_make, lm_scores, lm_make in scored:
            for c in tokens:
                s_ctc = float(ctc_scores[c])
                s_attn = float(attn_scores[c])
                s_lm = float(lm_scores[c])
                prefix = hyp.prefix + (c,)
                comb = combine(s_ctc, s_attn, s_lm, cfg, len(prefix))
                candidates.append((comb, prefix, c, s_ctc, s_attn, s_lm, ctc_make, attn_make, lm_make))
        candidates.sort(key=lambda t: (-t[0], t[1]))
        live = []
        for comb, prefix, c, s_ctc, s_attn, s_lm, ctc_make, attn_make, lm_make in candidates[: cfg.beam]:
            live.append(
                Hypothesis(
                    prefix=prefix,
                    s_ctc=s_ctc,
                    s_attn=s_attn,
                    s_lm=s_lm,
                    combined=comb,
                    ctc_state=ctc_make(c),
                    attn_state=attn_make(c),
                    lm_state=lm_make(c) if lm_scorer is not None else 0.0,
                )
            )
    ended.sort(key=_rank_key)
    return ended


def exhaustive_decode(ctc_scorer, attn_scorer, lm_scorer, cfg: DecodeConfig, vocab_size: int, blank_id: int = 0, eos_id: int | None = None) -> Hypothesis:
    """Exact argmax over every eos-terminated sequence up to max_len tokens.

    Plain depth-first enumeration, sharing nothing with the beam loop, so it
    can serve as an oracle for it.
    """
    if eos_id is None:
        eos_id = vocab_size - 1
    tokens = [c for c in range(vocab_size) if c not in (blank_id, eos_id)]
    space = sum(len(tokens) ** k for k in range(cfg.max_len + 1))
    if space > 200_000:
        raise ValueError(f"search space of {space} sequences is too large to enumerate")

    best: list = [None]

    def visit(prefix, ctc_state, attn_state, lm_state, depth):
        ctc_scores, ctc_make = ctc_scorer.extensions(prefix, ctc_state)
        attn_scores, attn_make = attn_scorer.extensions(prefix, attn_state)
        if lm_scorer is not None:
            lm_scores, lm_make = lm_scorer.extensions(prefix, lm_state)
        else:
            lm_scores, lm_make = np.zeros(vocab_size), lambda c: 0.0
        cand = Hypothesis(
            prefix=prefix,
            s_ctc=float(ctc_scores[eos_id]),
            s_attn=float(attn_scores[eos_id]),
            s_lm=float(lm_scores[eos_id]),
            combined=0.0,
            ended=True,
        )
        cand.combined = combine(cand.s_ctc, cand.s_attn, cand.s_lm, cfg, len(prefix))
        if best[0] is None or _rank_key(cand) < _rank_key(best[0]):
            best[0] = cand
        if depth == cfg.max_len:
            return
        for c in tokens:
            visit(prefix + (c,), ctc_make(c), attn_make(c), lm_make(c) if lm_scorer is not None else 0.0, depth + 1)

    visit((), ctc_scorer.initial(), attn_scorer.initial(), lm_scorer.initial() if lm_scorer else 0.0, 0)
    return best[0]


def write_nbest(path, rows, header_lines=()) -> None:
    """rows: (utterance_id, ranked hypotheses, texts) triples flattened by caller.

    Each output line: id, rank (1-based), combined, s_ctc, s_attn, s_lm, text.
    """
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        for utt_id, rank, hyp, text in rows:
            fh.write(f"{utt_id}\t{rank}\t{hyp.combined:.6f}\t{hyp.s_ctc:.6f}\t{hyp.s_attn:.6f}\t{hyp.s_lm:.6f}\t{text}\n")


def read_nbest(path) -> list:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 7:
                raise ValueError(f"{path}: expected 7 tab-separated fields, got {len(parts)}")
            out.append((parts[0], int(parts[1]), float(parts[2]), float(parts[3]), float(parts[4]), float(parts[5]), parts[6]))
    return out
