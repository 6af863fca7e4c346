"""Synthetic lipreading corpus: binarized grating videos paired with transcripts.

Each vocabulary symbol owns a distinct binarized sinusoidal grating; an
utterance is its characters' patterns repeated frames_per_char times with
seeded additive noise. Landmarks are the fixed neutral layout, so the
geometry pipeline runs as an identity alignment.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import dataio
from .roi import NEUTRAL_REFERENCE
from .vocab import Vocabulary, default_vocabulary, normalize_text

FRAME_SIZE = 96

# 200 lowercase Spanish-like words; order fixes the Zipf rank of each entry.
LEXICON = [
    "de", "la", "que", "el", "en", "y", "a", "los", "se", "del",
    "las", "un", "por", "con", "no", "una", "su", "para", "es", "al",
    "lo", "como", "más", "pero", "sus", "le", "ya", "o", "fue", "este",
    "ha", "sí", "porque", "esta", "son", "entre", "cuando", "muy", "sin", "sobre",
    "ser", "tiene", "también", "me", "hasta", "hay", "donde", "han", "quien", "están",
    "desde", "todos", "nos", "durante", "todo", "uno", "les", "ni", "contra", "otros",
    "años", "tiempo", "vida", "día", "casa", "mundo", "hombre", "mujer", "parte", "gobierno",
    "país", "momento", "forma", "caso", "nada", "cada", "gente", "año", "dos", "tres",
    "cuatro", "cinco", "seis", "siete", "ocho", "nueve", "diez", "noche", "agua", "ciudad",
    "trabajo", "historia", "manera", "semana", "madre", "padre", "hijo", "hija", "mano", "ojos",
    "hora", "verdad", "nombre", "palabra", "razón", "puerta", "camino", "cabeza", "tierra", "fuerza",
    "guerra", "amor", "muerte", "señor", "señora", "niño", "niña", "mañana", "tarde", "ayer",
    "hoy", "luego", "ahora", "siempre", "nunca", "aquí", "allí", "bien", "mal", "mejor",
    "peor", "grande", "pequeño", "nuevo", "viejo", "bueno", "malo", "alto", "bajo", "blanco",
    "negro", "rojo", "verde", "azul", "luz", "sol", "luna", "mar", "cielo", "fuego",
    "aire", "árbol", "flor", "campo", "montaña", "río", "pueblo", "calle", "plaza", "iglesia",
    "escuela", "hacer", "decir", "poder", "deber", "querer", "saber", "venir", "hablar", "llevar",
    "dejar", "seguir", "encontrar", "llamar", "pensar", "salir", "volver", "tomar", "conocer", "vivir",
    "sentir", "mirar", "contar", "empezar", "esperar", "buscar", "existir", "entrar", "trabajar", "escribir",
    "perder", "producir", "ocurrir", "recibir", "recordar", "terminar", "permitir", "aparecer", "conseguir", "comenzar",
]


@dataclass(frozen=True)
class SynthSpec:
    seed: int = 0
    count: int = 20
    min_chars: int = 4
    max_chars: int = 24
    frames_per_char: int = 3
    size: int = FRAME_SIZE
    noise_std: float = 4.0
    exponent: float = 1.0
    sentences: tuple = field(default=None)

    def __post_init__(self):
        if self.count < 1 or self.frames_per_char < 1:
            raise ValueError("counts must be positive")
        if self.size != FRAME_SIZE:
            raise ValueError(f"frame size is fixed at {FRAME_SIZE}")
        if not 1 <= self.min_chars <= self.max_chars:
            raise ValueError(f"bad length range [{self.min_chars}, {self.max_chars}]")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")
        if self.sentences is not None:
            object.__setattr__(self, "sentences", tuple(self.sentences))


def glyph_patterns(vocab_size: int = 37, size: int = FRAME_SIZE) -> np.ndarray:
    """One binarized grating per symbol id, shaped (V, size, size), values 0/255.

    Frequency/orientation pairs are chosen so every pair of patterns has
    normalized correlation below 0.5.
    """
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64)
    patterns = np.empty((vocab_size, size, size), dtype=np.uint8)
    freqs = (2, 3, 4, 5, 6, 7, 8)
    angles = (0.0, 30.0, 60.0, 90.0, 120.0, 150.0)
    idx = 0
    for f in freqs:
        for a_deg in angles:
            if idx >= vocab_size:
                break
            theta = math.radians(a_deg)
            phase = 2.0 * math.pi * idx / vocab_size
            wave = np.sin(2.0 * math.pi * f * (xs * math.cos(theta) + ys * math.sin(theta)) / size + phase)
            patterns[idx] = np.where(wave >= 0.0, 255, 0).astype(np.uint8)
            idx += 1
    if idx < vocab_size:
        raise ValueError(f"only {idx} glyph patterns available for {vocab_size} symbols")
    return patterns


def render_utterance(text: str, spec: SynthSpec, rng_seed=None, vocab: Vocabulary = None):
    """(frames uint8 (T, 96, 96), landmarks (T, 68, 2), transcript)."""
    vocab = vocab or default_vocabulary()
    ids = vocab.encode(text)
    if not ids:
        raise ValueError("cannot render an empty transcript")
    patterns = glyph_patterns(vocab.size, spec.size)
    base = np.repeat(patterns[np.asarray(ids)], spec.frames_per_char, axis=0).astype(np.float64)
    rng = np.random.default_rng(spec.seed if rng_seed is None else rng_seed)
    if spec.noise_std > 0:
        base = base + rng.standard_normal(base.shape) * spec.noise_std
    frames = np.clip(np.rint(base), 0, 255).astype(np.uint8)
    landmarks = np.tile(NEUTRAL_REFERENCE[None], (frames.shape[0], 1, 1))
    return frames, landmarks, text


def sample_text(spec: SynthSpec, rng) -> str:
    """Zipfian word sampling until the length budget drawn from [min, max] is spent."""
    ranks = np.arange(1, len(LEXICON) + 1, dtype=np.float64)
    probs = ranks**-spec.exponent
    probs /= probs.sum()
    budget = int(rng.integers(spec.min_chars, spec.max_chars + 1))
    words = []
    for _ in range(1000):
        word = LEXICON[int(rng.choice(len(LEXICON), p=probs))]
        cand_len = len(word) if not words else len(" ".join(words)) + 1 + len(word)
        if cand_len > spec.max_chars:
            if words and len(" ".join(words)) >= spec.min_chars:
                break
            continue
        words.append(word)
        if cand_len >= budget:
            break
    text = " ".join(words)
    if not spec.min_chars <= len(text) <= spec.max_chars:
        raise ValueError(f"could not sample a text within [{spec.min_chars}, {spec.max_chars}] chars")
    return text


def corpus_texts(spec: SynthSpec, vocab: Vocabulary = None) -> list:
    """The corpus transcripts: explicit sentences if given, Zipfian samples otherwise."""
    vocab = vocab or default_vocabulary()
    if spec.sentences is not None:
        texts = [normalize_text(s) for s in spec.sentences]
    else:
        texts = [sample_text(spec, np.random.default_rng([spec.seed, i])) for i in range(spec.count)]
    for t in texts:
        vocab.encode(t)
    return texts


def generate_corpus(spec: SynthSpec, out_dir, vocab: Vocabulary = None) -> str:
    """Write LRV1 clips, landmark CSVs, references, and the manifest; returns the manifest path."""
    vocab = vocab or default_vocabulary()
    texts = corpus_texts(spec, vocab)
    frames_dir = os.path.join(out_dir, "frames")
    lm_dir = os.path.join(out_dir, "landmarks")
    os.makedirs(frames_dir, exist_ok=True)
    os.makedirs(lm_dir, exist_ok=True)
    rows = []
    refs = []
    for i, text in enumerate(texts):
        utt_id = f"utt{i:04d}"
        frames, landmarks, _ = render_utterance(text, spec, rng_seed=[spec.seed, i], vocab=vocab)
        frames_path = os.path.join("frames", f"{utt_id}.lrv1")
        lm_path = os.path.join("landmarks", f"{utt_id}.csv")
        dataio.write_lrv1(os.path.join(out_dir, frames_path), frames)
        dataio.write_landmarks_csv(os.path.join(out_dir, lm_path), landmarks)
        rows.append({"utterance_id": utt_id, "frames_path": frames_path, "landmarks_path": lm_path, "transcript": text})
        refs.append((utt_id, text))
    manifest_path = os.path.join(out_dir, "manifest.tsv")
    dataio.write_manifest(manifest_path, rows)
    dataio.write_id_text(os.path.join(out_dir, "refs.tsv"), refs)
    return manifest_path
