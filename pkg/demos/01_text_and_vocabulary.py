"""Text normalization and the 37-symbol character inventory.

The toolkit transcribes Spanish speech as a flat character stream: lowercase
letters, accented vowels, ñ, a word separator, plus the two sentinels the
models need (CTC blank, attention eos). This walk-through shows how raw text
is canonicalized, how it maps to ids and back, and how vocabularies are
fingerprinted so artifacts can refuse mismatched pairings.
"""

from lipvsr.vocab import OovError, default_vocabulary, normalize_text

vocab = default_vocabulary()

print("== inventory ==")
print(f"{vocab.size} symbols; blank={vocab.blank_id}, space={vocab.space_id}, eos={vocab.eos_id}")
print("symbols:", " ".join(vocab.symbols))

print()
print("== normalization ==")
for raw in ["¡Hola, Mundo!", "¿Qué  pasa?", "AÑOS   después…", "El Niño (1997)"]:
    print(f"{raw!r:28} -> {normalize_text(raw)!r}")
# accent stripping is optional; ñ is never stripped because it is a distinct letter
print(f"{'más allá':28} -> {normalize_text('más allá', strip_accents=True)!r}  (accents stripped)")
print(f"{'mañana':28} -> {normalize_text('mañana', strip_accents=True)!r}  (ñ preserved)")

print()
print("== encoding ==")
text = normalize_text("¡Hola, Mundo!")
ids = vocab.encode(text)
print(f"{text!r} -> {ids}")
print(f"decode back: {vocab.decode(ids)!r}")

print()
print("== out-of-vocabulary reporting ==")
try:
    vocab.encode("año 2024")
except OovError as e:
    print(f"rejected: {e} (char {e.char!r} at position {e.position})")
print("oov_chars('año 2024') ->", vocab.oov_chars("año 2024"))

print()
print("== content fingerprint ==")
print("hash of the default vocabulary:", vocab.content_hash())
print("checkpoints and LM files store this hash; decode refuses to mix inventories")
