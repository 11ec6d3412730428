"""Byte-pair encoding over a combined bilingual corpus.

Merges are learned greedily from word frequencies (most frequent adjacent
symbol pair first) and replayed in order at encode time. Reserved tokens
(domain tags, specials) pass through unsplit. Decoding strips the joiner and
re-assembles words; the "unspaced" policy additionally removes all spaces
between words.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field, replace

from .corpus import DEFAULT_TAGS, SIDE_PARALLEL, UNK_TOKEN, Sentence, TaggedDataset
from .util import DataError

DEFAULT_JOINER = "##"
DEFAULT_RESERVED = frozenset(DEFAULT_TAGS) | {UNK_TOKEN}

POLICY_SPACED = "space-joined"
POLICY_UNSPACED = "unspaced"


@dataclass(frozen=True)
class BpeModel:
    merges: tuple[tuple[str, str], ...]
    vocab_size_target: int
    joiner: str = DEFAULT_JOINER
    reserved: frozenset[str] = DEFAULT_RESERVED
    # initial character inventory plus one entry per merge, in learned order
    symbols: tuple[str, ...] = field(default=(), compare=False)

    def inventory_size(self) -> int:
        return len(self.symbols)


def _merge_pass(pieces: list[str], left: str, right: str) -> list[str]:
    """One leftmost-first, non-overlapping replacement pass for a single merge."""
    out = []
    i = 0
    while i < len(pieces):
        if i + 1 < len(pieces) and pieces[i] == left and pieces[i + 1] == right:
            out.append(left + right)
            i += 2
        else:
            out.append(pieces[i])
            i += 1
    return out


def _word_pieces(word: str, merges: tuple[tuple[str, str], ...]) -> list[str]:
    pieces = list(word)
    for left, right in merges:
        if len(pieces) > 1:
            pieces = _merge_pass(pieces, left, right)
    return pieces


def learn_bpe(corpus: list[Sentence], vocab_size: int, *,
              joiner: str = DEFAULT_JOINER,
              reserved: frozenset[str] = DEFAULT_RESERVED) -> BpeModel:
    """Learn merges until the symbol inventory reaches vocab_size or no pair repeats.

    The inventory is the initial character set plus one symbol per merge. Ties
    in pair frequency break toward the lexicographically smallest (left,
    right) pair, so learning is deterministic and independent of corpus order.
    """
    if not corpus:
        raise DataError("cannot learn BPE from an empty corpus")
    word_freq = Counter(tok for sent in corpus for tok in sent if tok not in reserved)
    chars = sorted({ch for word in word_freq for ch in word})
    if vocab_size < len(chars):
        raise DataError(
            f"vocab_size {vocab_size} is smaller than the character inventory ({len(chars)})")

    words = {w: list(w) for w in word_freq}
    merges: list[tuple[str, str]] = []
    symbols = list(chars)
    while len(symbols) < vocab_size:
        pair_freq: Counter[tuple[str, str]] = Counter()
        for word, pieces in words.items():
            freq = word_freq[word]
            for i in range(len(pieces) - 1):
                pair_freq[(pieces[i], pieces[i + 1])] += freq
        if not pair_freq:
            break
        best = min(pair_freq, key=lambda p: (-pair_freq[p], p))
        if pair_freq[best] < 2:
            break
        merges.append(best)
        symbols.append(best[0] + best[1])
        for word, pieces in words.items():
            if len(pieces) > 1:
                words[word] = _merge_pass(pieces, *best)
    return BpeModel(merges=tuple(merges), vocab_size_target=vocab_size,
                    joiner=joiner, reserved=reserved, symbols=tuple(symbols))


def encode(sentence: Sentence, model: BpeModel) -> Sentence:
    """Segment each token into subword pieces; continuation pieces carry the joiner."""
    out: list[str] = []
    for token in sentence:
        if token in model.reserved:
            out.append(token)
            continue
        pieces = _word_pieces(token, model.merges)
        out.append(pieces[0])
        out.extend(model.joiner + p for p in pieces[1:])
    return tuple(out)


def decode(sentence: Sentence, model: BpeModel, policy: str = POLICY_SPACED) -> str:
    """Invert segmentation to a surface string; "unspaced" also removes word breaks."""
    if policy not in (POLICY_SPACED, POLICY_UNSPACED):
        raise DataError(f"unknown detokenization policy {policy!r}")
    words: list[str] = []
    for piece in sentence:
        if piece.startswith(model.joiner) and words and piece not in model.reserved:
            words[-1] += piece[len(model.joiner):]
        else:
            words.append(piece)
    sep = " " if policy == POLICY_SPACED else ""
    return sep.join(words)


def encode_dataset(ds: TaggedDataset, model: BpeModel) -> TaggedDataset:
    """Encode every sentence of a TaggedDataset (both sides of parallel data)."""
    if ds.side == SIDE_PARALLEL:
        pairs = tuple((encode(s, model), encode(t, model)) for s, t in ds.pairs)
        return replace(ds, pairs=pairs)
    return replace(ds, sentences=tuple(encode(s, model) for s in ds.sentences))


FORMAT_VERSION = 1


def save_bpe(model: BpeModel, path: str) -> None:
    """Write merges as text: two header lines, then one "left right" pair per line."""
    n_chars = len(model.symbols) - len(model.merges)
    with open(path, "w", encoding="utf-8") as fh:
        reserved = " ".join(sorted(model.reserved))
        fh.write(f"#bpe v{FORMAT_VERSION} vocab={model.vocab_size_target} "
                 f"joiner={model.joiner} reserved={reserved}\n")
        fh.write("#chars " + " ".join(model.symbols[:n_chars]) + "\n")
        for left, right in model.merges:
            fh.write(f"{left} {right}\n")


def load_bpe(path: str) -> BpeModel:
    try:
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().rstrip("\n")
            if not header.startswith(f"#bpe v{FORMAT_VERSION}"):
                raise DataError(f"{path}: unsupported BPE file header")
            parts = header.split()
            fields = {}
            for part in parts[2:]:
                key, _, value = part.partition("=")
                if key == "reserved":
                    fields["reserved"] = header.split("reserved=", 1)[1]
                    break
                fields[key] = value
            chars_line = fh.readline().rstrip("\n")
            if not chars_line.startswith("#chars"):
                raise DataError(f"{path}: missing character inventory line")
            chars = tuple(chars_line.split()[1:])
            merges = []
            for line in fh:
                left, right = line.rstrip("\n").split(" ")
                merges.append((left, right))
    except OSError as e:
        raise DataError(f"cannot read BPE model {path}: {e}") from e
    reserved = frozenset(fields.get("reserved", "").split())
    symbols = chars + tuple(l + r for l, r in merges)
    return BpeModel(merges=tuple(merges), vocab_size_target=int(fields["vocab"]),
                    joiner=fields["joiner"], reserved=reserved, symbols=symbols)
