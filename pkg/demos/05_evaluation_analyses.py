"""Scoring recognizer output: pooled error rates, uncertainty, corpus shape.

Word and character error rates come from minimum-edit-distance alignments
whose counts are pooled across the corpus (never averaging per-utterance
percentages). A percentile bootstrap over utterances quantifies how much the
corpus WER would move under resampling, and two lexical analyses — the Zipf
rank-frequency curve and train/test coverage — explain *why* recognition is
hard before any model runs.
"""

import math

import numpy as np

from lipvsr import metrics, zipf

print("== scoring single utterances ==")
pairs = [
    ("pena con hasta tres años de prision", "pero esta traslados de prision"),
    ("y hasta mañana muy buenas noches", "esta mañana muy buenas noches"),
    ("tu hermano y el mio se encontraron en el metro", "tu hermano y el vino se encontraron en el medio"),
    ("a partir de mañana lunes a las doce de la noche", "a partir de mañana lunes a las doce de la noche"),
]
results = []
for i, (ref, hyp) in enumerate(pairs):
    r = metrics.score_pair(f"u{i}", ref, hyp)
    results.append(r)
    print(f"WER {r.wer:6.2f}%  CER {r.cer:6.2f}%  (S/D/I {r.word_sub}/{r.word_del}/{r.word_ins})  {hyp!r}")

print()
print("== pooled corpus rates and bootstrap uncertainty ==")
report = metrics.evaluate_pairs([(r.utt_id, r.ref, r.hyp) for r in results], b=2000, seed=0)
print(report.summary())
print("pooling counts, not rates: an insertion-heavy hypothesis can exceed 100% —")
heavy = metrics.score_pair("x", "si", "no se lo que dijo")
print(f"  ref 'si' vs 6-word hypothesis: WER {metrics.wer([heavy]):.0f}%")

print()
print("== WER histogram (10-point bins, >100 clamps into the top bin) ==")
counts = metrics.wer_histogram([r.wer for r in results] + [metrics.wer([heavy])])
for i, c in enumerate(counts):
    label = f"[{10 * i:3d},{10 * (i + 1):3d})" if i < 9 else "[ 90,100]+"
    print(f"  {label} {'#' * c}{'' if c else '.'}")

print()
print("== Zipf rank-frequency curve ==")
base = math.lcm(*range(1, 51))
ideal = {f"w{r:02d}": base // r for r in range(1, 51)}
curve = zipf.zipf_curve_from_counts(ideal)
print(f"counts exactly proportional to 1/rank -> log-log slope {curve.slope:.6f}")
rng = np.random.default_rng(0)
ranks = np.arange(1, 101)
probs = (1.0 / ranks) / (1.0 / ranks).sum()
sampled = zipf.zipf_curve(rng.choice([f"w{r}" for r in ranks], size=50_000, p=probs).tolist())
print(f"50k tokens sampled from the same law  -> slope {sampled.slope:.3f}")

print()
print("== train/test lexical coverage ==")
train = "a a a b b c".split()
test = "a b d".split()
stats = zipf.coverage_stats(train, test, top_n=2)
print(f"train vocabulary {stats.train_v} types; top-{stats.top_n} = most frequent types")
print(f"test vocabulary  in train vocab: {stats.tv_in_trainv}/{stats.test_v} = {stats.tv_in_trainv_pct:.1f}%")
print(f"test vocabulary  in top types  : {stats.tv_in_topv}/{stats.test_v} = {stats.tv_in_topv_pct:.1f}%")
print(f"test tokens      in train vocab: {stats.rw_in_trainv}/{stats.test_rw} = {stats.rw_in_trainv_pct:.1f}%")
print(f"test tokens      in top types  : {stats.rw_in_topv}/{stats.test_rw} = {stats.rw_in_topv_pct:.1f}%")
print("out-of-vocabulary words ('d' here) can never be recognized by a closed-vocabulary system")
