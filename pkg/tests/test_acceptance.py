"""Acceptance suite: ten release criteria, one visible pass/fail line each.

Each criterion runs at its stated tolerance and wall-clock budget and prints
`criterion NN PASS|FAIL: <name>` so the outcome can be read off the log
without decoding pytest internals.
"""

import contextlib
import itertools
import math
import os
import time

import numpy as np
import pytest

from lipvsr import autodiff as ad
from lipvsr import cli
from lipvsr import ctc as ctc_mod
from lipvsr import lm as lm_mod
from lipvsr import metrics, roi, search, synth, training, zipf
from lipvsr.model import Model, ModelConfig
from lipvsr.vocab import default_vocabulary

from helpers import brute_force_ctc_logprob, fd_gradient, rand_log_probs, rel_err, table_step_scorer


@contextlib.contextmanager
def criterion(capsys, num, name, budget_s=None):
    t0 = time.monotonic()
    try:
        yield
        if budget_s is not None:
            elapsed = time.monotonic() - t0
            assert elapsed < budget_s, f"criterion {num} took {elapsed:.1f}s, budget {budget_s}s"
    except BaseException:
        with capsys.disabled():
            print(f"\ncriterion {num:02d} FAIL: {name}", flush=True)
        raise
    with capsys.disabled():
        print(f"\ncriterion {num:02d} PASS: {name} ({time.monotonic() - t0:.1f}s)", flush=True)


def test_criterion_01_ctc_matches_enumeration(capsys):
    with criterion(capsys, 1, "CTC loss and gradient match path enumeration", budget_s=10):
        tokens = (1, 2, 3)
        all_targets = [list(t) for k in range(4) for t in itertools.product(tokens, repeat=k)]
        for t_len in range(1, 6):
            x = rand_log_probs(t_len, 4, [10, t_len])
            for targets in all_targets:
                loss, _ = ctc_mod.ctc_loss(x, targets, blank_id=0)
                want = brute_force_ctc_logprob(x, targets, blank_id=0)
                if math.isinf(want):
                    assert math.isinf(loss)
                else:
                    assert abs(-loss - want) < 1e-9, (t_len, targets)
        # gradient spot-checks across lengths and a repeated-symbol target
        for t_len, targets in [(3, [1]), (4, [1, 2]), (5, [2, 2]), (5, [1, 2, 3])]:
            x = rand_log_probs(t_len, 4, [11, t_len, len(targets)])
            _, grad = ctc_mod.ctc_loss(x, targets, blank_id=0)
            fd = fd_gradient(lambda a: ctc_mod.ctc_loss(a, targets, 0)[0], x.copy(), h=1e-6)
            assert rel_err(grad, fd) < 1e-5, (t_len, targets)


def test_criterion_02_prefix_scores_conserve_probability(capsys):
    with criterion(capsys, 2, "prefix scores conserve probability mass", budget_s=10):
        labels = (1, 2, 3)
        for inst in range(100):
            x = rand_log_probs(4, 4, [20, inst])
            scorer_init = ctc_mod.prefix_init(x, blank_id=0)
            stack = [((), scorer_init)]
            while stack:
                prefix, state = stack.pop()
                res = ctc_mod.prefix_scores(x, state, blank_id=0, eos_id=None)
                psi = res[0]
                parts = [ctc_mod.prefix_full_logprob(state)] + [psi[c] for c in labels]
                total = np.logaddexp.reduce(parts)
                if math.isinf(state.score):
                    # a prefix the frame budget cannot realize: all mass is zero
                    assert math.isinf(total), (inst, prefix)
                else:
                    assert abs(total - state.score) < 1e-9, (inst, prefix)
                if len(prefix) < 3:
                    for c in labels:
                        stack.append((prefix + (c,), ctc_mod.extend_state(res, c)))


def test_criterion_03_beam_reproduces_exhaustive_oracle(capsys):
    with criterion(capsys, 3, "wide beam equals exhaustive joint decoding", budget_s=60):
        blank, eos = 0, 3
        grid = list(itertools.product((0.0, 0.1, 0.5, 1.0), (0.0, 0.4)))
        for inst in range(100):
            ctc_scorer = search.CtcPrefixScorer(rand_log_probs(4, 4, [30, inst]), blank, eos)
            attn = table_step_scorer(4, 3, [31, inst])
            rng = np.random.default_rng([32, inst])
            texts = [[int(c) for c in rng.choice((1, 2), size=rng.integers(1, 4))] for _ in range(5)]
            lm_model = lm_mod.train_char_lm(texts, order=2, k=0.5, vocab_size=4, vocab_hash="a" * 16, eos_id=eos)
            lm_scorer = search.lm_step_scorer(lm_model, eos)
            for lam, beta in grid:
                cfg = search.DecodeConfig(lam=lam, beta=beta, beam=64, max_len=3)
                ranked = search.beam_search(ctc_scorer, attn, lm_scorer, cfg, vocab_size=4, blank_id=blank, eos_id=eos)
                oracle = search.exhaustive_decode(ctc_scorer, attn, lm_scorer, cfg, vocab_size=4, blank_id=blank, eos_id=eos)
                best = ranked[0]
                assert best.prefix == oracle.prefix, (inst, lam, beta)
                assert abs(best.combined - oracle.combined) < 1e-9
                assert abs(best.s_ctc - oracle.s_ctc) < 1e-9
                assert abs(best.s_attn - oracle.s_attn) < 1e-9
                assert abs(best.s_lm - oracle.s_lm) < 1e-9


def test_criterion_04_error_rates_match_published_goldens(capsys):
    with criterion(capsys, 4, "WER/CER reproduce the published examples", budget_s=1):
        golden = [
            ("pena con hasta tres años de prision", "pero esta traslados de prision", 71.4, 28.6),
            ("y hasta mañana muy buenas noches", "esta mañana muy buenas noches", 33.3, 12.5),
            ("tu hermano y el mio se encontraron en el metro", "tu hermano y el vino se encontraron en el medio", 20.0, 8.7),
            ("a partir de mañana lunes a las doce de la noche", "a partir de mañana lunes a las doce de la noche", 0.0, 0.0),
            ("se le aparece en la cabeza una imagen", "parece que dice una imagen", 75.0, 45.9),
            ("estan limpiando tambien el barro y evaluando los destrozos", "se esta inspirando tambien el perro y evaluando seis socios", 66.7, 32.8),
        ]
        for ref, hyp, want_wer, want_cer in golden:
            r = metrics.score_pair("u", ref, hyp)
            assert round(r.wer, 1) == want_wer, ref
            assert round(r.cer, 1) == want_cer, ref


def test_criterion_05_bootstrap_interval_calibrated(capsys):
    with criterion(capsys, 5, "bootstrap CI: zero width when degenerate, ~95% coverage", budget_s=120):
        identical = [metrics.score_pair(f"u{i}", "a b c d", "a b x d") for i in range(30)]
        point, lo, hi = metrics.bootstrap_ci(identical, b=1000, seed=0)
        assert lo == hi == point == 25.0

        def make_result(i, errors, words):
            return metrics.UttResult(
                utt_id=f"u{i}", ref="x", hyp="x",
                word_sub=int(errors), word_del=0, word_ins=0, ref_words=int(words),
                char_sub=0, char_del=0, char_ins=0, ref_chars=1,
            )

        true_wer = 30.0  # E[errors]/E[words] for Binomial(4, 0.3) errors over 4 words
        hits = 0
        for trial in range(500):
            rng = np.random.default_rng([4242, trial])
            errs = rng.binomial(4, 0.3, size=40)
            results = [make_result(i, e, 4) for i, e in enumerate(errs)]
            _, lo, hi = metrics.bootstrap_ci(results, b=1000, seed=trial)
            hits += lo <= true_wer <= hi
        coverage = 100.0 * hits / 500
        assert 93.0 <= coverage <= 97.0, coverage


def test_criterion_06_model_gradients_match_finite_differences(capsys):
    with criterion(capsys, 6, "frontend/encoder/decoder gradients match finite differences", budget_s=120):
        cfg = ModelConfig(feature_dim=8, encoder_layers=1, decoder_layers=1, attention_heads=2, ffn_dim=16, frontend_channels=(2, 3, 8))
        model = Model(cfg, seed=5)
        rng = np.random.default_rng(6)
        clip = rng.normal(size=(4, 96, 96))
        targets = [2, 3]

        def loss_value():
            ctc_lp, dec_lp = model.forward(clip, targets)
            ctc_ll = training.ctc_loglik_op(ctc_lp, targets, 0)
            attn_ll = training.attention_loglik(dec_lp, targets, model.eos_id)
            return training.hybrid_loss(ctc_ll, attn_ll, 0.5)

        loss = loss_value()
        model.zero_grad()
        loss.backward()
        names = [
            "frontend.conv3d.w", "frontend.conv2a.w", "frontend.proj.w",
            "enc.0.attn.q.w", "enc.0.ffn1.lin1.w", "enc.0.conv.dw.w", "enc.0.conv.pw1.w",
            "dec.embed", "dec.0.cross.q.w", "dec.0.ffn.lin1.w", "dec.out.w", "ctc.out.w",
        ]
        coord_rng = np.random.default_rng(7)
        for name in names:
            p = model.params[name]
            flat = p.data.reshape(-1)
            grad = p.grad.reshape(-1)
            idxs = coord_rng.choice(flat.size, size=min(3, flat.size), replace=False)
            for i in idxs:
                orig = flat[i]
                h = 1e-5 * max(1.0, abs(orig))
                flat[i] = orig + h
                hi = float(loss_value().data)
                flat[i] = orig - h
                lo = float(loss_value().data)
                flat[i] = orig
                fd = (hi - lo) / (2 * h)
                denom = max(abs(fd) + abs(grad[i]), 1e-6)
                assert abs(fd - grad[i]) / denom < 1e-4, (name, int(i), fd, grad[i])


def test_criterion_07_training_reaches_low_error_and_joint_beats_greedy(capsys):
    with criterion(capsys, 7, "training converges; joint decoding beats greedy CTC", budget_s=600):
        vocab = default_vocabulary()
        spec = synth.SynthSpec(seed=0, count=20, min_chars=4, max_chars=10, frames_per_char=2, noise_std=0.0)
        texts = synth.corpus_texts(spec)
        clips = []
        for i, text in enumerate(texts):
            frames, landmarks, _ = synth.render_utterance(text, spec, rng_seed=[spec.seed, i])
            proc = roi.preprocess_clip(frames, landmarks)
            clips.append(np.clip(np.rint(proc), 0, 255).astype(np.uint8))
        mean, var = roi.fit_norm_stats([c.astype(np.float64) for c in clips])
        dataset = [(roi.normalize_clip(c, mean, var), vocab.encode(t)) for c, t in zip(clips, texts)]

        cfg = ModelConfig(feature_dim=16, encoder_layers=1, decoder_layers=1, attention_heads=2, ffn_dim=32, frontend_channels=(4, 8, 16))
        model = Model(cfg, seed=0)

        def ctc_lp_and_latents(clip):
            with ad.no_grad():
                latents = model.encoder_forward(model.frontend_forward(roi.center_crop(clip)))
                lp = model.ctc_head(latents)
            return lp.data, latents.data

        def greedy_rates():
            results = []
            for (clip, _), text in zip(dataset, texts):
                lp, _ = ctc_lp_and_latents(clip)
                hyp = vocab.decode(ctc_mod.ctc_greedy(lp, 0))
                results.append(metrics.score_pair("u", text, hyp))
            return metrics.cer(results), metrics.wer(results)

        def stop(m, epoch, mean_loss):
            if mean_loss > 3.0 and epoch < 30:
                return False
            cer_v, _ = greedy_rates()
            return cer_v <= 5.0

        tc = training.TrainConfig(epochs=200, lr=3e-3, alpha=0.1, seed=0, augment=False)
        training.train(model, dataset, tc, stop_fn=stop)

        greedy_cer, greedy_wer = greedy_rates()
        assert greedy_cer <= 5.0, greedy_cer

        lm_model = lm_mod.train_char_lm(
            [vocab.encode(t) for t in texts], order=5, k=0.1,
            vocab_size=vocab.size, vocab_hash=vocab.content_hash(), eos_id=vocab.eos_id,
        )
        joint_results = []
        for (clip, _), text in zip(dataset, texts):
            lp, latents = ctc_lp_and_latents(clip)
            dcfg = search.DecodeConfig(lam=0.1, beta=0.4, beam=10, max_len=lp.shape[0])
            ranked = search.beam_search(
                search.CtcPrefixScorer(lp, vocab.blank_id, vocab.eos_id),
                search.attention_step_scorer(model, latents),
                search.lm_step_scorer(lm_model, vocab.eos_id),
                dcfg, vocab.size, vocab.blank_id, vocab.eos_id,
            )
            joint_results.append(metrics.score_pair("u", text, vocab.decode(list(ranked[0].prefix))))
        joint_wer = metrics.wer(joint_results)
        assert joint_wer < greedy_wer, (joint_wer, greedy_wer)


def test_criterion_08_ablation_endpoints(capsys):
    with criterion(capsys, 8, "decode ablations: LM-free invariance, pure-CTC and pure-attention runs", budget_s=120):
        vocab = default_vocabulary()
        cfg = ModelConfig(feature_dim=8, encoder_layers=1, decoder_layers=1, attention_heads=2, ffn_dim=16, frontend_channels=(2, 3, 8))
        model = Model(cfg, seed=9)
        rng = np.random.default_rng(10)
        clip = rng.normal(size=(6, 96, 96))
        with ad.no_grad():
            latents = model.encoder_forward(model.frontend_forward(clip))
            lp = model.ctc_head(latents).data
        latents = latents.data

        ids = [vocab.encode(t) for t in ("hola mundo", "agua", "sol y mar", "buenas noches")]
        lm_a = lm_mod.train_char_lm(ids, order=3, k=0.1, vocab_size=vocab.size, vocab_hash="a" * 16, eos_id=vocab.eos_id)
        lm_b = lm_mod.train_char_lm(ids[:2], order=2, k=1.0, vocab_size=vocab.size, vocab_hash="b" * 16, eos_id=vocab.eos_id)

        def decode(lam, beta, lm_model):
            dcfg = search.DecodeConfig(lam=lam, beta=beta, beam=5, max_len=4)
            return search.beam_search(
                search.CtcPrefixScorer(lp, vocab.blank_id, vocab.eos_id),
                search.attention_step_scorer(model, latents),
                search.lm_step_scorer(lm_model, vocab.eos_id) if lm_model else None,
                dcfg, vocab.size, vocab.blank_id, vocab.eos_id,
            )

        # beta = 0: the LM artifact must not change the ranking or the scores
        base = decode(0.1, 0.0, None)
        for other in (decode(0.1, 0.0, lm_a), decode(0.1, 0.0, lm_b)):
            assert [h.prefix for h in other] == [h.prefix for h in base]
            assert [h.combined for h in other] == [h.combined for h in base]

        # both pure endpoints complete and decompose exactly
        for lam in (0.0, 1.0):
            ranked = decode(lam, 0.4, lm_a)
            assert ranked
            dcfg = search.DecodeConfig(lam=lam, beta=0.4, beam=5, max_len=4)
            for h in ranked:
                recombined = search.combine(h.s_ctc, h.s_attn, h.s_lm, dcfg, len(h.prefix))
                if np.isinf(h.combined):
                    assert recombined == h.combined
                else:
                    assert abs(h.combined - recombined) < 1e-12


def test_criterion_09_zipf_and_coverage_analyses(capsys):
    with criterion(capsys, 9, "Zipf slope and lexical coverage analyses", budget_s=60):
        base = math.lcm(*range(1, 101))
        counts = {f"w{r:03d}": base // r for r in range(1, 101)}
        curve = zipf.zipf_curve_from_counts(counts)
        assert abs(curve.slope - (-1.0)) < 1e-6

        rng = np.random.default_rng(90)
        ranks = np.arange(1, 201)
        probs = (1.0 / ranks) / (1.0 / ranks).sum()
        tokens = rng.choice([f"w{r}" for r in ranks], size=100_000, p=probs)
        sampled = zipf.zipf_curve(tokens.tolist())
        assert abs(sampled.slope - (-1.0)) < 0.1

        stats = zipf.coverage_stats("a a a b b c".split(), "a b d".split(), top_n=2)
        for pct in (stats.tv_in_trainv_pct, stats.tv_in_topv_pct, stats.rw_in_trainv_pct, stats.rw_in_topv_pct):
            assert round(pct, 1) == 66.7


def test_criterion_10_pipeline_byte_determinism(capsys, tmp_path):
    with criterion(capsys, 10, "pipeline artifacts byte-identical across reruns and job counts", budget_s=300):
        def run(root, jobs):
            raw = root / "raw"
            pre = root / "pre"
            assert cli.main(["synth-data", "--out-dir", str(raw), "--count", "3", "--seed", "11", "--min-chars", "4", "--max-chars", "8", "--noise-std", "2"]) == 0
            assert cli.main(["preprocess", "--manifest", str(raw / "manifest.tsv"), "--out-dir", str(pre), "--jobs", str(jobs)]) == 0
            ckpt = root / "model.ckpt"
            assert cli.main([
                "train", "--data-dir", str(pre), "--out", str(ckpt), "--epochs", "1", "--seed", "4",
                "--feature-dim", "8", "--encoder-layers", "1", "--decoder-layers", "1",
                "--attention-heads", "2", "--ffn-dim", "16",
            ]) == 0
            lm_path = root / "lm.tsv"
            assert cli.main(["lm-train", "--manifest", str(raw / "manifest.tsv"), "--out", str(lm_path), "--order", "2"]) == 0
            nbest = root / "nbest.tsv"
            hyps = root / "hyps.tsv"
            assert cli.main([
                "decode", "--data-dir", str(pre), "--checkpoint", str(ckpt), "--lm", str(lm_path),
                "--out", str(nbest), "--hyp-out", str(hyps), "--beam", "3", "--max-len", "5",
            ]) == 0
            ev = root / "eval.tsv"
            assert cli.main(["evaluate", "--refs", str(raw / "refs.tsv"), "--hyps", str(hyps), "--out", str(ev), "--bootstrap", "200"]) == 0
            return raw, pre, ckpt, lm_path, nbest, hyps, ev

        raw1, pre1, ckpt1, lm1, nb1, hy1, ev1 = run(tmp_path / "r1", jobs=1)
        raw2, pre2, ckpt2, lm2, nb2, hy2, ev2 = run(tmp_path / "r2", jobs=4)

        for name in sorted(os.listdir(pre1 / "clips")):
            assert (pre1 / "clips" / name).read_bytes() == (pre2 / "clips" / name).read_bytes()
        assert (pre1 / "norm_stats.txt").read_bytes() == (pre2 / "norm_stats.txt").read_bytes()
        assert (pre1 / "processed.tsv").read_bytes() == (pre2 / "processed.tsv").read_bytes()
        assert ckpt1.read_bytes() == ckpt2.read_bytes()
        assert lm1.read_bytes() == lm2.read_bytes()
        assert nb1.read_bytes() == nb2.read_bytes()
        assert hy1.read_bytes() == hy2.read_bytes()
        assert ev1.read_bytes() == ev2.read_bytes()
