"""Character n-gram language model with add-k smoothing.

Contexts are fixed-length windows of symbol ids, left-padded with the BOS
sentinel -1. Every distribution covers the full id range, so unseen symbols
keep the smoothing mass and unseen contexts fall back to uniform.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

BOS = -1


@dataclass
class CharNgramLm:
    order: int
    k: float
    vocab_size: int
    vocab_hash: str
    table: dict = field(default_factory=dict, repr=False)

    def context_of(self, ids) -> tuple:
        """Last order-1 ids, left-padded with BOS."""
        ids = [int(i) for i in ids]
        need = self.order - 1
        padded = [BOS] * max(0, need - len(ids)) + ids[len(ids) - need :] if need else []
        return tuple(padded)

    def step_scores(self, context: tuple) -> np.ndarray:
        """Log probabilities of every next symbol given an exact context tuple."""
        dist = self.table.get(tuple(context))
        if dist is None:
            return np.full(self.vocab_size, -np.log(self.vocab_size))
        return dist

    def logprob(self, ids, symbol: int) -> float:
        """Log p(symbol | ids), conditioning on the trailing context of ids."""
        return float(self.step_scores(self.context_of(ids))[int(symbol)])

    def score_sequence(self, ids, eos_id: int) -> float:
        """Sum of step log probabilities over the ids followed by eos."""
        total = 0.0
        hist = []
        for symbol in list(ids) + [eos_id]:
            total += self.logprob(hist, symbol)
            hist.append(int(symbol))
        return total


def train_char_lm(encoded_texts, order: int, k: float, vocab_size: int, vocab_hash: str, eos_id: int) -> CharNgramLm:
    """Count n-grams over the texts (each closed with eos) and smooth with add-k."""
    if order < 1:
        raise ValueError(f"order must be >= 1, got {order}")
    if k <= 0:
        raise ValueError(f"smoothing constant must be positive, got {k}")
    counts: dict = {}
    need = order - 1
    for ids in encoded_texts:
        seq = [int(i) for i in ids] + [int(eos_id)]
        hist = [BOS] * need
        for symbol in seq:
            ctx = tuple(hist[len(hist) - need :]) if need else ()
            row = counts.setdefault(ctx, np.zeros(vocab_size, dtype=np.float64))
            row[symbol] += 1.0
            hist.append(symbol)
    table = {}
    for ctx, row in counts.items():
        total = row.sum()
        table[ctx] = np.log((row + k) / (total + k * vocab_size))
    return CharNgramLm(order=order, k=k, vocab_size=vocab_size, vocab_hash=vocab_hash, table=table)


def perplexity(lm: CharNgramLm, encoded_texts, eos_id: int) -> float:
    """exp of the mean negative step log probability, eos events included."""
    total = 0.0
    events = 0
    for ids in encoded_texts:
        total += lm.score_sequence(ids, eos_id)
        events += len(list(ids)) + 1
    if events == 0:
        raise ValueError("no symbols to evaluate")
    return float(np.exp(-total / events))


def save_lm(lm: CharNgramLm, path) -> None:
    """One header line, then one line per context: ids then the full distribution."""
    lines = [f"LPLM {lm.order} {lm.k!r} {lm.vocab_hash}"]
    for ctx in sorted(lm.table):
        dist = lm.table[ctx]
        parts = [str(i) for i in ctx] + [repr(float(v)) for v in dist]
        lines.append(" ".join(parts))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_lm(path, vocab_size: int) -> CharNgramLm:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if not lines or not lines[0].startswith("LPLM "):
        raise ValueError(f"{path}: not a language model file")
    header = lines[0].split()
    if len(header) != 4:
        raise ValueError(f"{path}: malformed header {lines[0]!r}")
    order = int(header[1])
    k = float(header[2])
    vocab_hash = header[3]
    table = {}
    for ln in lines[1:]:
        fields = ln.split()
        if len(fields) < vocab_size:
            raise ValueError(f"{path}: context line with {len(fields)} fields, need >= {vocab_size}")
        ctx = tuple(int(i) for i in fields[: len(fields) - vocab_size])
        dist = np.array([float(v) for v in fields[len(fields) - vocab_size :]], dtype=np.float64)
        if len(ctx) != order - 1:
            raise ValueError(f"{path}: context length {len(ctx)} does not match order {order}")
        table[ctx] = dist
    return CharNgramLm(order=order, k=k, vocab_size=vocab_size, vocab_hash=vocab_hash, table=table)
