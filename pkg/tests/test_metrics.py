"""Error-rate scoring: golden pairs, edit-distance oracle, bootstrap behavior."""

import functools
import re
import warnings

import numpy as np
import pytest

from lipvsr import metrics

# reference transcripts with recognizer output and their published error rates
GOLDEN = [
    ("pena con hasta tres años de prision", "pero esta traslados de prision", 71.4, 28.6),
    ("y hasta mañana muy buenas noches", "esta mañana muy buenas noches", 33.3, 12.5),
    ("tu hermano y el mio se encontraron en el metro", "tu hermano y el vino se encontraron en el medio", 20.0, 8.7),
    ("a partir de mañana lunes a las doce de la noche", "a partir de mañana lunes a las doce de la noche", 0.0, 0.0),
    ("se le aparece en la cabeza una imagen", "parece que dice una imagen", 75.0, 45.9),
    ("estan limpiando tambien el barro y evaluando los destrozos", "se esta inspirando tambien el perro y evaluando seis socios", 66.7, 32.8),
    ("el chino vino a la escuela de intercambio", "sino vino a la escuela de este cambio", 50.0, 19.5),
    ("cumplen un mes en prision", "cumple un mes en prision", 20.0, 4.0),
]


def test_golden_pairs_one_decimal():
    for ref, hyp, want_wer, want_cer in GOLDEN:
        r = metrics.score_pair("u", ref, hyp)
        assert round(r.wer, 1) == want_wer, ref
        assert round(r.cer, 1) == want_cer, ref


def test_golden_alignment_counts():
    r = metrics.score_pair("u", *GOLDEN[0][:2])
    assert (r.word_sub, r.word_del, r.word_ins) == (3, 2, 0)
    r = metrics.score_pair("u", *GOLDEN[5][:2])
    assert (r.word_sub, r.word_del, r.word_ins) == (5, 0, 1)


def _min_cost(ref, hyp):
    """Independent plain-recursion Levenshtein cost."""

    @functools.cache
    def go(i, j):
        if i == 0:
            return j
        if j == 0:
            return i
        return min(
            go(i - 1, j - 1) + (ref[i - 1] != hyp[j - 1]),
            go(i - 1, j) + 1,
            go(i, j - 1) + 1,
        )

    return go(len(ref), len(hyp))


def test_edit_distance_matches_recursive_oracle():
    rng = np.random.default_rng(42)
    for _ in range(60):
        ref = [str(c) for c in rng.integers(0, 3, size=rng.integers(0, 7))]
        hyp = [str(c) for c in rng.integers(0, 3, size=rng.integers(0, 7))]
        s, d, i = metrics.edit_distance(ref, hyp)
        assert s + d + i == _min_cost(tuple(ref), tuple(hyp))


def test_edit_distance_basics():
    assert metrics.edit_distance("abc", "abc") == (0, 0, 0)
    assert metrics.edit_distance("abc", "") == (0, 3, 0)
    assert metrics.edit_distance("", "abc") == (0, 0, 3)
    # ties prefer substitutions over paired delete+insert
    assert metrics.edit_distance("ab", "ba") == (2, 0, 0)


def test_empty_hypothesis_is_all_deletions():
    r = metrics.score_pair("u", "a b c", "")
    assert (r.word_sub, r.word_del, r.word_ins) == (0, 3, 0)
    assert r.wer == 100.0


def test_empty_reference_rejected():
    with pytest.raises(ValueError):
        metrics.score_pair("u", "   ", "hola")


def test_cer_counts_spaces():
    r = metrics.score_pair("u", "a b", "ab")
    assert r.char_errors == 1 and r.ref_chars == 3
    assert round(r.cer, 2) == 33.33


def test_pooled_rates_pool_counts_not_rates():
    a = metrics.score_pair("a", "x", "x")  # 0/1
    b = metrics.score_pair("b", "x y z w", "a b c d")  # 4/4
    # pooling counts: 4 errors over 5 words = 80, not mean(0, 100) = 50
    assert metrics.wer([a, b]) == 80.0


def test_insertion_heavy_output_exceeds_hundred():
    r = metrics.score_pair("u", "a", "b c d e")
    assert metrics.wer([r]) == 400.0


def test_histogram_golden_and_edges():
    assert metrics.wer_histogram([0, 5, 15, 100]) == [2, 1, 0, 0, 0, 0, 0, 0, 0, 1]
    assert metrics.wer_histogram([]) == [0] * 10
    assert metrics.wer_histogram([250.0]) == [0] * 9 + [1]
    with pytest.raises(ValueError):
        metrics.wer_histogram([-1.0])


def test_histogram_against_independent_binning():
    rng = np.random.default_rng(7)
    wers = rng.uniform(0, 150, size=1000)
    got = metrics.wer_histogram(wers)
    clamped = np.minimum(wers, 99.999)
    want, _ = np.histogram(clamped, bins=np.arange(0, 101, 10))
    assert got == list(want)
    assert sum(got) == 1000


def test_bootstrap_zero_width_on_identical_utterances():
    results = [metrics.score_pair(f"u{i}", "a b c d", "a b x d") for i in range(25)]
    point, lo, hi = metrics.bootstrap_ci(results, b=500, seed=3)
    assert point == lo == hi == 25.0


def test_bootstrap_point_ignores_seed_and_replicates():
    results = [metrics.score_pair(f"u{i}", "a b c", h) for i, h in enumerate(["a b c", "a x c", "x x x", "a b"])]
    p1 = metrics.bootstrap_ci(results, b=200, seed=1)[0]
    p2 = metrics.bootstrap_ci(results, b=800, seed=99)[0]
    assert p1 == p2 == metrics.wer(results)


def test_bootstrap_deterministic_per_seed():
    results = [metrics.score_pair(f"u{i}", "a b c", h) for i, h in enumerate(["a b c", "a x c", "x x x", "a b"])]
    assert metrics.bootstrap_ci(results, b=300, seed=5) == metrics.bootstrap_ci(results, b=300, seed=5)
    assert metrics.bootstrap_ci(results, b=300, seed=5) != metrics.bootstrap_ci(results, b=300, seed=6)


def test_bootstrap_replicate_count_guards():
    results = [metrics.score_pair("u", "a b", "a x")]
    with pytest.raises(ValueError):
        metrics.bootstrap_ci(results, b=0)
    with pytest.warns(UserWarning):
        metrics.bootstrap_ci(results, b=50)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        metrics.bootstrap_ci(results, b=100)


def test_evaluate_pairs_and_summary_format():
    pairs = [("u1", "a b c d", "a b x d"), ("u2", "a b", "a b")]
    report = metrics.evaluate_pairs(pairs, b=200, seed=0)
    assert report.wer == metrics.wer(report.results)
    assert report.cer == metrics.cer(report.results)
    assert report.histogram == metrics.wer_histogram([r.wer for r in report.results])
    assert re.fullmatch(r"WER \d+\.\d\d% \[\d+\.\d\d, \d+\.\d\d\] CER \d+\.\d\d%", report.summary())


def test_eval_report_file(tmp_path):
    report = metrics.evaluate_pairs([("u1", "a b", "a x"), ("u2", "c", "c")], b=200, seed=0)
    p = tmp_path / "eval.tsv"
    metrics.write_eval_report(p, report, header_lines=["config b = 200"])
    text = p.read_text(encoding="utf-8")
    lines = text.splitlines()
    assert lines[0] == "# config b = 200"
    assert any(line.startswith("# bootstrap: percentile method, B=200") for line in lines)
    body = [line for line in lines if line and not line.startswith("#")]
    assert body[0].startswith("utt_id\t")
    assert len(body) == 3
    fields = body[1].split("\t")
    assert fields[0] == "u1" and fields[3] == "50.00"
