"""Word-frequency analyses: Zipf rank-frequency curves and train/test coverage."""

from __future__ import annotations

import warnings
from collections import Counter
from dataclasses import dataclass

import numpy as np


@dataclass
class ZipfCurve:
    words: list
    freqs: np.ndarray
    ranks: np.ndarray
    relfreqs: np.ndarray
    slope: float

    def pairs(self) -> list:
        return list(zip(self.ranks.tolist(), self.relfreqs.tolist()))


def _ranked(counts: Counter) -> list:
    """Types sorted by descending frequency, alphabetical among ties."""
    return sorted(counts, key=lambda w: (-counts[w], w))


def zipf_curve_from_counts(counts) -> ZipfCurve:
    counts = Counter(dict(counts))
    if not counts:
        raise ValueError("no word counts")
    words = _ranked(counts)
    freqs = np.array([counts[w] for w in words], dtype=np.float64)
    ranks = np.arange(1, len(words) + 1, dtype=np.float64)
    relfreqs = freqs / freqs[0]
    if len(words) >= 2:
        slope = float(np.polyfit(np.log(ranks), np.log(relfreqs), 1)[0])
    else:
        slope = float("nan")
    return ZipfCurve(words=words, freqs=freqs, ranks=ranks, relfreqs=relfreqs, slope=slope)


def zipf_curve(tokens) -> ZipfCurve:
    """Rank/relative-frequency table of a token stream with its log-log slope."""
    tokens = list(tokens)
    if not tokens:
        raise ValueError("empty token stream")
    return zipf_curve_from_counts(Counter(tokens))


@dataclass(frozen=True)
class CoverageStats:
    train_v: int
    test_v: int
    test_rw: int
    top_n: int
    tv_in_trainv: int
    tv_in_topv: int
    rw_in_trainv: int
    rw_in_topv: int

    @property
    def tv_in_trainv_pct(self) -> float:
        return 100.0 * self.tv_in_trainv / self.test_v

    @property
    def tv_in_topv_pct(self) -> float:
        return 100.0 * self.tv_in_topv / self.test_v

    @property
    def rw_in_trainv_pct(self) -> float:
        return 100.0 * self.rw_in_trainv / self.test_rw

    @property
    def rw_in_topv_pct(self) -> float:
        return 100.0 * self.rw_in_topv / self.test_rw


def coverage_stats(train_tokens, test_tokens, top_n: int) -> CoverageStats:
    """Vocabulary (-v) and running-word (-rw) overlap of a test stream with
    the training vocabulary and its top_n most frequent types."""
    train_tokens = list(train_tokens)
    test_tokens = list(test_tokens)
    if not train_tokens or not test_tokens:
        raise ValueError("both token streams must be non-empty")
    if top_n < 1:
        raise ValueError(f"top_n must be >= 1, got {top_n}")
    counts = Counter(train_tokens)
    train_v = set(counts)
    if top_n > len(train_v):
        warnings.warn(f"top_n {top_n} exceeds training vocabulary size {len(train_v)}; clamped", stacklevel=2)
        top_n = len(train_v)
    top_v = set(_ranked(counts)[:top_n])
    test_v = set(test_tokens)
    return CoverageStats(
        train_v=len(train_v),
        test_v=len(test_v),
        test_rw=len(test_tokens),
        top_n=top_n,
        tv_in_trainv=sum(1 for w in test_v if w in train_v),
        tv_in_topv=sum(1 for w in test_v if w in top_v),
        rw_in_trainv=sum(1 for w in test_tokens if w in train_v),
        rw_in_topv=sum(1 for w in test_tokens if w in top_v),
    )
