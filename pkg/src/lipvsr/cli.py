"""Command-line workflow: synth-data / preprocess / train / lm-train / decode / evaluate / analyze.

Configuration comes from an optional flat "key = value" file plus flags;
flags win. Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical
failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import checkpoint as ckpt
from . import dataio, metrics, roi, search, synth, training, zipf
from . import lm as lm_mod
from .autodiff import no_grad
from .model import Model, ModelConfig
from .vocab import OovError, Vocabulary, default_vocabulary, normalize_text

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

log = logging.getLogger("lipvsr")


def parse_config_file(path) -> dict:
    """Flat UTF-8 "key = value" lines; '#' starts a comment."""
    cfg = {}
    with open(path, "r", encoding="utf-8") as fh:
        for ln, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise dataio.DataFormatError(f"{path}:{ln}: expected 'key = value', got {line!r}")
            key, val = line.split("=", 1)
            cfg[key.strip()] = val.strip()
    return cfg


_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


class Options:
    """Effective settings: command-line flag if given, else config file, else default."""

    def __init__(self, args, cfg: dict):
        self.args = args
        self.cfg = cfg

    def _raw(self, key):
        flag = getattr(self.args, key, None)
        if flag is not None:
            return flag
        return self.cfg.get(key)

    def get(self, key, default=None):
        raw = self._raw(key)
        return default if raw is None else str(raw)

    def get_int(self, key, default=None):
        raw = self._raw(key)
        return default if raw is None else int(raw)

    def get_float(self, key, default=None):
        raw = self._raw(key)
        return default if raw is None else float(raw)

    def get_bool(self, key, default=False):
        raw = self._raw(key)
        if raw is None:
            return default
        if isinstance(raw, bool):
            return raw
        low = str(raw).strip().lower()
        if low in _TRUE:
            return True
        if low in _FALSE:
            return False
        raise ValueError(f"config key {key}: cannot read {raw!r} as a boolean")

    def require(self, key) -> str:
        raw = self._raw(key)
        if raw is None:
            raise UsageError(f"missing required setting '{key}' (flag --{key.replace('_', '-')} or config key)")
        return str(raw)

    def echo(self, keys) -> list:
        """Header lines recording the effective configuration of a command.

        Callers must pass only value-typed keys: path settings would make
        otherwise identical artifacts differ byte-for-byte between runs in
        different directories.
        """
        lines = []
        for key in keys:
            raw = self._raw(key)
            if raw is not None:
                lines.append(f"config {key} = {raw}")
        return lines


class UsageError(Exception):
    pass


def _load_vocab(opts: Options):
    path = opts.get("vocab")
    return Vocabulary.load(path) if path else default_vocabulary()


def _model_config(opts: Options) -> ModelConfig:
    return ModelConfig(
        feature_dim=opts.get_int("feature_dim", 32),
        encoder_layers=opts.get_int("encoder_layers", 2),
        decoder_layers=opts.get_int("decoder_layers", 2),
        attention_heads=opts.get_int("attention_heads", 2),
        conv_kernel=opts.get_int("conv_kernel", 5),
        spatial_kernel=opts.get_int("spatial_kernel", 7),
        ffn_dim=opts.get_int("ffn_dim", 0),
        conv_module_kernel=opts.get_int("conv_module_kernel", 7),
        pos_encoding=opts.get("pos_encoding", "absolute"),
    )


# synth-data


def cmd_synth_data(opts: Options) -> int:
    out_dir = opts.require("out_dir")
    sentences = None
    sentences_file = opts.get("sentences")
    if sentences_file:
        with open(sentences_file, "r", encoding="utf-8") as fh:
            sentences = [normalize_text(line) for line in fh if line.strip()]
    spec = synth.SynthSpec(
        seed=opts.get_int("seed", 0),
        count=opts.get_int("count", 20),
        min_chars=opts.get_int("min_chars", 4),
        max_chars=opts.get_int("max_chars", 24),
        frames_per_char=opts.get_int("frames_per_char", 3),
        noise_std=opts.get_float("noise_std", 4.0),
        exponent=opts.get_float("exponent", 1.0),
        sentences=sentences,
    )
    manifest = synth.generate_corpus(spec, out_dir)
    print(manifest)
    return EXIT_OK


# preprocess


def _preprocess_one(manifest_path: str, entry: dict, vocab) -> tuple:
    """Returns (utterance_id, roi clip uint8, transcript) or raises with file context."""
    frames = dataio.read_lrv1(dataio.resolve_manifest_path(manifest_path, entry["frames_path"]))
    landmarks = dataio.read_landmarks_csv(dataio.resolve_manifest_path(manifest_path, entry["landmarks_path"]))
    vocab.encode(entry["transcript"])
    clip = roi.preprocess_clip(frames.astype(np.float64), landmarks)
    return entry["utterance_id"], np.clip(np.rint(clip), 0, 255).astype(np.uint8), entry["transcript"]


def _preprocess_worker(packed):
    manifest_path, entry, vocab = packed
    try:
        return _preprocess_one(manifest_path, entry, vocab), None
    except Exception as exc:
        return None, f"{entry['utterance_id']} ({entry['frames_path']}): {exc}"


def cmd_preprocess(opts: Options) -> int:
    manifest_path = opts.require("manifest")
    out_dir = opts.require("out_dir")
    vocab = _load_vocab(opts)
    jobs = max(1, opts.get_int("jobs", 1))
    entries = dataio.read_manifest(manifest_path)
    if not entries:
        raise dataio.DataFormatError(f"{manifest_path}: empty manifest")
    work = [(manifest_path, e, vocab) for e in entries]
    if jobs == 1:
        outcomes = [_preprocess_worker(w) for w in work]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_preprocess_worker, work, chunksize=1))
    errors = [msg for _, msg in outcomes if msg is not None]
    if errors:
        for msg in errors:
            print(f"error: {msg}", file=sys.stderr)
        return EXIT_DATA
    clips_dir = os.path.join(out_dir, "clips")
    os.makedirs(clips_dir, exist_ok=True)
    header = opts.echo(["seed"]) + [f"vocab_hash {vocab.content_hash()}"]
    rows = []
    for (utt_id, clip, transcript), _ in outcomes:
        rel = os.path.join("clips", f"{utt_id}.lrv1")
        dataio.write_lrv1(os.path.join(out_dir, rel), clip)
        rows.append({"utterance_id": utt_id, "frames_path": rel, "landmarks_path": "-", "transcript": transcript})
    mean, var = roi.fit_norm_stats([clip.astype(np.float64) for (_, clip, _), _ in outcomes])
    total = sum(int(np.prod(clip.shape)) for (_, clip, _), _ in outcomes)
    dataio.write_norm_stats(os.path.join(out_dir, "norm_stats.txt"), mean, var, total, header_lines=header)
    dataio.write_manifest(os.path.join(out_dir, "processed.tsv"), rows, header_lines=header)
    log.info("preprocessed %d utterances into %s", len(rows), out_dir)
    return EXIT_OK


def _load_processed(data_dir: str):
    """(utterance_id, normalized float clip, transcript) triples plus the stats."""
    manifest_path = os.path.join(data_dir, "processed.tsv")
    entries = dataio.read_manifest(manifest_path)
    if not entries:
        raise dataio.DataFormatError(f"{manifest_path}: empty manifest")
    mean, var, _ = dataio.read_norm_stats(os.path.join(data_dir, "norm_stats.txt"))
    out = []
    for e in entries:
        pixels = dataio.read_lrv1(dataio.resolve_manifest_path(manifest_path, e["frames_path"]))
        out.append((e["utterance_id"], roi.normalize_clip(pixels, mean, var), e["transcript"]))
    return out


# train


def _resolve_alpha_lam(opts: Options, key: str, default: float) -> float:
    ctc_only = opts.get_bool("ctc_only")
    attn_only = opts.get_bool("attn_only")
    if ctc_only and attn_only:
        raise UsageError("--ctc-only and --attn-only are mutually exclusive")
    if ctc_only:
        return 1.0
    if attn_only:
        return 0.0
    return opts.get_float(key, default)


def cmd_train(opts: Options) -> int:
    data_dir = opts.require("data_dir")
    out_path = opts.require("out")
    vocab = _load_vocab(opts)
    triples = _load_processed(data_dir)
    dataset = [(clip, vocab.encode(text)) for _, clip, text in triples]
    model = Model(_model_config(opts), seed=opts.get_int("seed", 0))
    tcfg = training.TrainConfig(
        epochs=opts.get_int("epochs", 5),
        lr=opts.get_float("lr", 3e-4),
        alpha=_resolve_alpha_lam(opts, "alpha", 0.1),
        seed=opts.get_int("seed", 0),
        weight_decay=opts.get_float("weight_decay", 0.01),
        augment=not opts.get_bool("no_augment"),
    )
    history = training.train(model, dataset, tcfg)
    ckpt.save_model(out_path, model, vocab.content_hash())
    log.info("trained %d epochs, final mean loss %.6f, checkpoint %s", len(history), history[-1], out_path)
    return EXIT_OK


# lm-train


def _read_texts(opts: Options) -> list:
    manifest_path = opts.get("manifest")
    texts_path = opts.get("texts")
    if manifest_path:
        return [e["transcript"] for e in dataio.read_manifest(manifest_path)]
    if texts_path:
        return [text for _, text in dataio.read_id_text(texts_path)]
    raise UsageError("need 'manifest' or 'texts' to locate training transcripts")


def cmd_lm_train(opts: Options) -> int:
    out_path = opts.require("out")
    vocab = _load_vocab(opts)
    texts = _read_texts(opts)
    if not texts:
        raise dataio.DataFormatError("no training texts found")
    encoded = [vocab.encode(t) for t in texts]
    model = lm_mod.train_char_lm(
        encoded,
        order=opts.get_int("order", 5),
        k=opts.get_float("k", 0.1),
        vocab_size=vocab.size,
        vocab_hash=vocab.content_hash(),
        eos_id=vocab.eos_id,
    )
    lm_mod.save_lm(model, out_path)
    ppl = lm_mod.perplexity(model, encoded, vocab.eos_id)
    log.info("trained order-%d LM on %d texts, train perplexity %.3f, wrote %s", model.order, len(texts), ppl, out_path)
    return EXIT_OK


# decode


def cmd_decode(opts: Options) -> int:
    data_dir = opts.require("data_dir")
    ckpt_path = opts.require("checkpoint")
    out_path = opts.require("out")
    hyp_path = opts.get("hyp_out") or os.path.join(os.path.dirname(os.path.abspath(out_path)), "hyps.tsv")
    vocab = _load_vocab(opts)
    model, ck_hash = ckpt.load_model(ckpt_path)
    if ck_hash != vocab.content_hash():
        raise dataio.DataFormatError(f"{ckpt_path}: checkpoint vocabulary hash {ck_hash} does not match active vocabulary {vocab.content_hash()}")
    beta = 0.0 if opts.get_bool("no_lm") else opts.get_float("beta", 0.4)
    lam = _resolve_alpha_lam(opts, "lam", 0.1)
    language_model = None
    if beta > 0.0:
        lm_path = opts.get("lm")
        if not lm_path:
            raise UsageError("beta > 0 needs an LM file ('lm' setting); pass --no-lm to decode without one")
        language_model = lm_mod.load_lm(lm_path, vocab.size)
        if language_model.vocab_hash != vocab.content_hash():
            raise dataio.DataFormatError(f"{lm_path}: LM vocabulary hash {language_model.vocab_hash} does not match active vocabulary")
    max_len_opt = opts.get_int("max_len", 0)
    n_best = opts.get_int("nbest", 0)
    triples = _load_processed(data_dir)
    header = opts.echo(["lam", "beta", "beam", "penalty", "max_len", "ctc_only", "attn_only", "no_lm", "seed"]) + [f"vocab_hash {vocab.content_hash()}"]
    nbest_rows = []
    hyps = []
    for utt_id, clip, _ in triples:
        with no_grad():
            latents = model.encoder_forward(model.frontend_forward(roi.center_crop(clip)))
            log_probs = model.ctc_head(latents).data
        cfg = search.DecodeConfig(
            lam=lam,
            beta=beta,
            beam=opts.get_int("beam", 10),
            penalty=opts.get_float("penalty", 0.0),
            max_len=max_len_opt if max_len_opt > 0 else log_probs.shape[0],
        )
        ranked = search.beam_search(
            search.CtcPrefixScorer(log_probs, vocab.blank_id, vocab.eos_id),
            search.attention_step_scorer(model, latents),
            search.lm_step_scorer(language_model, vocab.eos_id) if language_model else None,
            cfg,
            vocab_size=vocab.size,
            blank_id=vocab.blank_id,
            eos_id=vocab.eos_id,
        )
        keep = ranked[: n_best] if n_best > 0 else ranked[: cfg.beam]
        for rank, hyp in enumerate(keep, start=1):
            nbest_rows.append((utt_id, rank, hyp, vocab.decode(hyp.prefix)))
        hyps.append((utt_id, vocab.decode(ranked[0].prefix)))
        log.info("decoded %s: %s", utt_id, hyps[-1][1] or "(empty)")
    search.write_nbest(out_path, nbest_rows, header_lines=header)
    dataio.write_id_text(hyp_path, hyps, header_lines=header)
    return EXIT_OK


# evaluate


def cmd_evaluate(opts: Options) -> int:
    refs_path = opts.require("refs")
    hyps_path = opts.require("hyps")
    out_path = opts.require("out")
    refs = dataio.read_id_text(refs_path)
    hyps = dict(dataio.read_id_text(hyps_path))
    missing = [uid for uid, _ in refs if uid not in hyps]
    if missing:
        raise dataio.DataFormatError(f"{hyps_path}: no hypothesis for {len(missing)} reference ids (first: {missing[0]})")
    pairs = [(uid, text, hyps[uid]) for uid, text in refs]
    report = metrics.evaluate_pairs(pairs, b=opts.get_int("bootstrap", 10000), seed=opts.get_int("seed", 0))
    metrics.write_eval_report(out_path, report, header_lines=opts.echo(["bootstrap", "seed"]))
    print(report.summary())
    return EXIT_OK


# analyze


def _tokens_of(texts) -> list:
    tokens = []
    for t in texts:
        tokens.extend(t.split())
    return tokens


def cmd_analyze(opts: Options) -> int:
    out_dir = opts.require("out_dir")
    os.makedirs(out_dir, exist_ok=True)
    header = opts.echo(["top_n", "seed"])
    wrote = []

    refs_path = opts.get("refs")
    hyps_path = opts.get("hyps")
    if refs_path and hyps_path:
        refs = dataio.read_id_text(refs_path)
        hyps = dict(dataio.read_id_text(hyps_path))
        missing = [uid for uid, _ in refs if uid not in hyps]
        if missing:
            raise dataio.DataFormatError(f"{hyps_path}: no hypothesis for {len(missing)} reference ids (first: {missing[0]})")
        results = [metrics.score_pair(uid, text, hyps[uid]) for uid, text in refs]
        counts = metrics.wer_histogram([r.wer for r in results])
        path = os.path.join(out_dir, "wer_histogram.tsv")
        lines = [f"# {h}" for h in header] + ["bin_lo\tbin_hi\tcount"]
        for i, c in enumerate(counts):
            lines.append(f"{10 * i}\t{10 * (i + 1)}\t{c}")
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")
        wrote.append(path)

    train_path = opts.get("train_texts")
    test_path = opts.get("test_texts")
    if train_path:
        train_tokens = _tokens_of(text for _, text in dataio.read_id_text(train_path))
        curve = zipf.zipf_curve(train_tokens)
        path = os.path.join(out_dir, "zipf.tsv")
        lines = [f"# {h}" for h in header] + [f"# slope {curve.slope!r}", "rank\tword\tfreq\trelfreq"]
        for word, freq, rank, rel in zip(curve.words, curve.freqs, curve.ranks, curve.relfreqs):
            lines.append(f"{int(rank)}\t{word}\t{int(freq)}\t{rel!r}")
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")
        wrote.append(path)
        if test_path:
            test_tokens = _tokens_of(text for _, text in dataio.read_id_text(test_path))
            stats = zipf.coverage_stats(train_tokens, test_tokens, opts.get_int("top_n", 500))
            path = os.path.join(out_dir, "coverage.tsv")
            lines = [f"# {h}" for h in header] + ["stat\tcount\tpct"]
            lines.append(f"train_v\t{stats.train_v}\t")
            lines.append(f"test_v\t{stats.test_v}\t")
            lines.append(f"test_rw\t{stats.test_rw}\t")
            lines.append(f"top_n\t{stats.top_n}\t")
            lines.append(f"test_v_in_train_v\t{stats.tv_in_trainv}\t{stats.tv_in_trainv_pct:.1f}")
            lines.append(f"test_v_in_top_v\t{stats.tv_in_topv}\t{stats.tv_in_topv_pct:.1f}")
            lines.append(f"test_rw_in_train_v\t{stats.rw_in_trainv}\t{stats.rw_in_trainv_pct:.1f}")
            lines.append(f"test_rw_in_top_v\t{stats.rw_in_topv}\t{stats.rw_in_topv_pct:.1f}")
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                fh.write("\n".join(lines) + "\n")
            wrote.append(path)

    if not wrote:
        raise UsageError("analyze needs refs+hyps (histogram) and/or train_texts[+test_texts] (Zipf, coverage)")
    for path in wrote:
        print(path)
    return EXIT_OK


# parser and dispatch


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="flat key = value configuration file")
    common.add_argument("--seed", type=int, help="master random seed")
    common.add_argument("--jobs", type=int, help="worker processes for per-utterance work")
    common.add_argument("--vocab", help="vocabulary file (default: built-in 37 symbols)")

    parser = _Parser(prog="lipvsr", description="Visual speech recognition toolkit")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("synth-data", parents=[common], help="generate a synthetic corpus")
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--count", type=int)
    p.add_argument("--min-chars", dest="min_chars", type=int)
    p.add_argument("--max-chars", dest="max_chars", type=int)
    p.add_argument("--frames-per-char", dest="frames_per_char", type=int)
    p.add_argument("--noise-std", dest="noise_std", type=float)
    p.add_argument("--exponent", type=float)
    p.add_argument("--sentences", help="file of one transcript per line (overrides sampling)")

    p = sub.add_parser("preprocess", parents=[common], help="align, crop, and quantize mouth ROIs")
    p.add_argument("--manifest")
    p.add_argument("--out-dir", dest="out_dir")

    p = sub.add_parser("train", parents=[common], help="train the hybrid model")
    p.add_argument("--data-dir", dest="data_dir", help="preprocess output directory")
    p.add_argument("--out", help="checkpoint path")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--weight-decay", dest="weight_decay", type=float)
    p.add_argument("--no-augment", dest="no_augment", action="store_true", default=None)
    p.add_argument("--ctc-only", dest="ctc_only", action="store_true", default=None)
    p.add_argument("--attn-only", dest="attn_only", action="store_true", default=None)
    for key in ("feature-dim", "encoder-layers", "decoder-layers", "attention-heads", "conv-kernel", "spatial-kernel", "ffn-dim", "conv-module-kernel"):
        p.add_argument(f"--{key}", dest=key.replace("-", "_"), type=int)
    p.add_argument("--pos-encoding", dest="pos_encoding", choices=("absolute", "relative"))

    p = sub.add_parser("lm-train", parents=[common], help="train the character n-gram LM")
    p.add_argument("--manifest", help="pull transcripts from a corpus manifest")
    p.add_argument("--texts", help="or from an id<TAB>text file")
    p.add_argument("--out")
    p.add_argument("--order", type=int)
    p.add_argument("--k", type=float)

    p = sub.add_parser("decode", parents=[common], help="joint beam-search decoding")
    p.add_argument("--data-dir", dest="data_dir")
    p.add_argument("--checkpoint")
    p.add_argument("--lm")
    p.add_argument("--out", help="n-best TSV path")
    p.add_argument("--hyp-out", dest="hyp_out", help="rank-1 hypotheses path (default: hyps.tsv beside --out)")
    p.add_argument("--lam", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--beam", type=int)
    p.add_argument("--penalty", type=float)
    p.add_argument("--max-len", dest="max_len", type=int)
    p.add_argument("--nbest", type=int)
    p.add_argument("--ctc-only", dest="ctc_only", action="store_true", default=None)
    p.add_argument("--attn-only", dest="attn_only", action="store_true", default=None)
    p.add_argument("--no-lm", dest="no_lm", action="store_true", default=None)

    p = sub.add_parser("evaluate", parents=[common], help="score hypotheses against references")
    p.add_argument("--refs")
    p.add_argument("--hyps")
    p.add_argument("--out", help="evaluation report path")
    p.add_argument("--bootstrap", type=int)

    p = sub.add_parser("analyze", parents=[common], help="WER histogram, Zipf curve, coverage stats")
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--refs")
    p.add_argument("--hyps")
    p.add_argument("--train-texts", dest="train_texts")
    p.add_argument("--test-texts", dest="test_texts")
    p.add_argument("--top-n", dest="top_n", type=int)

    return parser


DISPATCH = {
    "synth-data": cmd_synth_data,
    "preprocess": cmd_preprocess,
    "train": cmd_train,
    "lm-train": cmd_lm_train,
    "decode": cmd_decode,
    "evaluate": cmd_evaluate,
    "analyze": cmd_analyze,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    if not logging.getLogger().handlers:
        logging.basicConfig(level=logging.INFO, format="%(message)s", stream=sys.stderr)
    try:
        cfg = parse_config_file(args.config) if args.config else {}
        return DISPATCH[args.command](Options(args, cfg))
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ArithmeticError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (dataio.DataFormatError, OovError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
