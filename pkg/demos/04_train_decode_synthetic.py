"""End-to-end on a synthetic corpus: render, train briefly, decode three ways.

The synthetic corpus draws Zipf-distributed sentences over a 200-word lexicon
and renders each character as a distinct binarized grating pattern. With zero
noise the task is fully learnable, so a small model trained for a couple of
minutes already shows the qualitative picture: greedy CTC makes character
mistakes that the joint CTC/attention/LM beam search repairs.

Runs in roughly two to three minutes on one core.
"""

import time

import numpy as np

from lipvsr import autodiff as ad
from lipvsr import ctc, lm, metrics, roi, search, synth, training
from lipvsr.model import Model, ModelConfig
from lipvsr.vocab import default_vocabulary

t0 = time.time()
vocab = default_vocabulary()

print("== render a zero-noise corpus of 12 utterances ==")
spec = synth.SynthSpec(seed=1, count=12, min_chars=4, max_chars=10, frames_per_char=2, noise_std=0.0)
texts = synth.corpus_texts(spec)
print("transcripts:", ", ".join(repr(t) for t in texts))

clips = []
for i, text in enumerate(texts):
    frames, landmarks, _ = synth.render_utterance(text, spec, rng_seed=[spec.seed, i])
    proc = roi.preprocess_clip(frames, landmarks)
    clips.append(np.clip(np.rint(proc), 0, 255).astype(np.uint8))
mean, var = roi.fit_norm_stats([c.astype(np.float64) for c in clips])
dataset = [(roi.normalize_clip(c, mean, var), vocab.encode(t)) for c, t in zip(clips, texts)]
print(f"rendered and normalized in {time.time() - t0:.0f}s (mean {mean:.1f}, var {var:.0f})")

print()
print("== train a small hybrid model ==")
cfg = ModelConfig(feature_dim=16, encoder_layers=1, decoder_layers=1, attention_heads=2, ffn_dim=32, frontend_channels=(4, 8, 16))
model = Model(cfg, seed=1)
tc = training.TrainConfig(epochs=60, lr=3e-3, alpha=0.1, seed=1, augment=False)


def progress(m, epoch, mean_loss):
    if (epoch + 1) % 10 == 0:
        print(f"  epoch {epoch + 1:3d}: mean loss {mean_loss:.3f} [{time.time() - t0:.0f}s]")
    return False


training.train(model, dataset, tc, stop_fn=progress)


def encode_clip(clip):
    with ad.no_grad():
        latents = model.encoder_forward(model.frontend_forward(roi.center_crop(clip)))
        log_probs = model.ctc_head(latents)
    return log_probs.data, latents.data


print()
print("== decode: greedy CTC vs joint beam search ==")
char_lm = lm.train_char_lm([vocab.encode(t) for t in texts], order=5, k=0.1,
                           vocab_size=vocab.size, vocab_hash=vocab.content_hash(), eos_id=vocab.eos_id)
greedy_results, joint_results = [], []
for (clip, _), text in zip(dataset, texts):
    log_probs, latents = encode_clip(clip)
    greedy = vocab.decode(ctc.ctc_greedy(log_probs, vocab.blank_id))
    dcfg = search.DecodeConfig(lam=0.1, beta=0.4, beam=10, max_len=log_probs.shape[0])
    ranked = search.beam_search(
        search.CtcPrefixScorer(log_probs, vocab.blank_id, vocab.eos_id),
        search.attention_step_scorer(model, latents),
        search.lm_step_scorer(char_lm, vocab.eos_id),
        dcfg, vocab.size, vocab.blank_id, vocab.eos_id,
    )
    joint = vocab.decode(list(ranked[0].prefix))
    marker = " " if joint == text else "!"
    print(f"{marker} ref={text!r:14} greedy={greedy!r:14} joint={joint!r}")
    greedy_results.append(metrics.score_pair("u", text, greedy))
    joint_results.append(metrics.score_pair("u", text, joint))

print()
print(f"greedy CTC : WER {metrics.wer(greedy_results):6.2f}%  CER {metrics.cer(greedy_results):6.2f}%")
print(f"joint beam : WER {metrics.wer(joint_results):6.2f}%  CER {metrics.cer(joint_results):6.2f}%")
print(f"total runtime {time.time() - t0:.0f}s")
