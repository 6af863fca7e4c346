"""Error-rate scoring: edit distance, pooled WER/CER, bootstrap CI, histograms.

Corpus rates pool substitution/deletion/insertion counts across utterances
(never averaging per-utterance percentages), so insertion-heavy output can
legitimately score above 100%.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np


def edit_distance(ref, hyp):
    """(substitutions, deletions, insertions) of a minimum-cost alignment.

    Ties prefer substitution over deletion over insertion during backtrace,
    which also minimizes deletions+insertions among optimal alignments.
    """
    ref = list(ref)
    hyp = list(hyp)
    n, m = len(ref), len(hyp)
    dist = np.zeros((n + 1, m + 1), dtype=np.int64)
    dist[:, 0] = np.arange(n + 1)
    dist[0, :] = np.arange(m + 1)
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            sub = dist[i - 1, j - 1] + (ref[i - 1] != hyp[j - 1])
            dele = dist[i - 1, j] + 1
            ins = dist[i, j - 1] + 1
            dist[i, j] = min(sub, dele, ins)
    subs = dels = inss = 0
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and dist[i, j] == dist[i - 1, j - 1] + (ref[i - 1] != hyp[j - 1]):
            if ref[i - 1] != hyp[j - 1]:
                subs += 1
            i, j = i - 1, j - 1
        elif i > 0 and dist[i, j] == dist[i - 1, j] + 1:
            dels += 1
            i -= 1
        else:
            inss += 1
            j -= 1
    return subs, dels, inss


@dataclass(frozen=True)
class UttResult:
    utt_id: str
    ref: str
    hyp: str
    word_sub: int
    word_del: int
    word_ins: int
    ref_words: int
    char_sub: int
    char_del: int
    char_ins: int
    ref_chars: int

    @property
    def word_errors(self) -> int:
        return self.word_sub + self.word_del + self.word_ins

    @property
    def char_errors(self) -> int:
        return self.char_sub + self.char_del + self.char_ins

    @property
    def wer(self) -> float:
        return 100.0 * self.word_errors / self.ref_words

    @property
    def cer(self) -> float:
        return 100.0 * self.char_errors / self.ref_chars


def score_pair(utt_id: str, ref: str, hyp: str) -> UttResult:
    """Word- and character-level alignment counts for one utterance."""
    ref_words = ref.split()
    if not ref_words:
        raise ValueError(f"{utt_id}: empty reference cannot be scored")
    ws, wd, wi = edit_distance(ref_words, hyp.split())
    cs, cd, ci = edit_distance(list(ref), list(hyp))
    return UttResult(
        utt_id=utt_id,
        ref=ref,
        hyp=hyp,
        word_sub=ws,
        word_del=wd,
        word_ins=wi,
        ref_words=len(ref_words),
        char_sub=cs,
        char_del=cd,
        char_ins=ci,
        ref_chars=len(ref),
    )


def wer(results) -> float:
    """Pooled corpus word error rate, percent."""
    errors = sum(r.word_errors for r in results)
    total = sum(r.ref_words for r in results)
    if total == 0:
        raise ValueError("no reference words to score")
    return 100.0 * errors / total


def cer(results) -> float:
    """Pooled corpus character error rate, percent (spaces count)."""
    errors = sum(r.char_errors for r in results)
    total = sum(r.ref_chars for r in results)
    if total == 0:
        raise ValueError("no reference characters to score")
    return 100.0 * errors / total


def bootstrap_ci(results, b: int = 10000, seed: int = 0):
    """(corpus WER, lo, hi): 95% percentile bootstrap over utterance resamples.

    Replicate i draws its own generator from (seed, i), so the result does
    not depend on evaluation order or thread count.
    """
    results = list(results)
    if not results:
        raise ValueError("need at least one utterance")
    if b == 0:
        raise ValueError("replicate count must be positive")
    if b < 100:
        warnings.warn(f"bootstrap with only {b} replicates gives a coarse interval", stacklevel=2)
    errors = np.array([r.word_errors for r in results], dtype=np.float64)
    totals = np.array([r.ref_words for r in results], dtype=np.float64)
    n = len(results)
    point = 100.0 * errors.sum() / totals.sum()
    reps = np.empty(b, dtype=np.float64)
    for i in range(b):
        rng = np.random.default_rng([seed, i])
        idx = rng.integers(0, n, size=n)
        reps[i] = 100.0 * errors[idx].sum() / totals[idx].sum()
    lo, hi = np.percentile(reps, [2.5, 97.5])
    return point, float(lo), float(hi)


def wer_histogram(wers, bin_width: float = 10.0) -> list:
    """Counts per WER bin [0,10), ..., [90,100]; rates above 100 clamp into the top bin."""
    n_bins = max(1, int(math.ceil(100.0 / bin_width)))
    counts = [0] * n_bins
    for w in wers:
        w = float(w)
        if w < 0:
            raise ValueError(f"negative error rate {w}")
        counts[min(int(w // bin_width), n_bins - 1)] += 1
    return counts


@dataclass
class EvalReport:
    results: list
    wer: float
    cer: float
    ci_lo: float
    ci_hi: float
    histogram: list
    replicates: int
    seed: int

    def summary(self) -> str:
        return f"WER {self.wer:.2f}% [{self.ci_lo:.2f}, {self.ci_hi:.2f}] CER {self.cer:.2f}%"


def evaluate_pairs(pairs, b: int = 10000, seed: int = 0) -> EvalReport:
    """pairs: (utterance id, reference, hypothesis) triples."""
    results = [score_pair(u, r, h) for u, r, h in pairs]
    point, lo, hi = bootstrap_ci(results, b=b, seed=seed)
    return EvalReport(
        results=results,
        wer=point,
        cer=cer(results),
        ci_lo=lo,
        ci_hi=hi,
        histogram=wer_histogram([r.wer for r in results]),
        replicates=b,
        seed=seed,
    )


def write_eval_report(path, report: EvalReport, header_lines=()) -> None:
    """Per-utterance TSV plus a header stating the pooling and bootstrap choices."""
    lines = [f"# {h}" for h in header_lines]
    lines += [
        "# corpus rates pool S/D/I counts across utterances (not a mean of per-utterance rates)",
        f"# bootstrap: percentile method, B={report.replicates}, seed={report.seed}",
        "# " + report.summary(),
        "utt_id\tref\thyp\twer\tcer\tword_sub\tword_del\tword_ins\tref_words\tchar_sub\tchar_del\tchar_ins\tref_chars",
    ]
    for r in report.results:
        lines.append(
            f"{r.utt_id}\t{r.ref}\t{r.hyp}\t{r.wer:.2f}\t{r.cer:.2f}\t{r.word_sub}\t{r.word_del}\t{r.word_ins}\t{r.ref_words}\t{r.char_sub}\t{r.char_del}\t{r.char_ins}\t{r.ref_chars}"
        )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
