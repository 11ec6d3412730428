"""Weak-supervision bitext mining from comparable document collections.

Documents are matched by the product of URL Levenshtein similarity and a
lexicon-augmented token Jaccard similarity, then reduced to a one-to-one
matching greedily. Within matched documents, sentence pairs are scored by the
length-normalized lexical channel score and greedily selected above a floor.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

from .corpus import Sentence
from .tm import LexModel, channel_score
from .util import DataError


@dataclass(frozen=True)
class WebDoc:
    url: str
    sentences: tuple[Sentence, ...]
    lang: str = ""

    def __post_init__(self) -> None:
        if not self.url:
            raise DataError("a web document needs a URL")
        seen = []
        known = set()
        for sent in self.sentences:
            if sent not in known:
                known.add(sent)
                seen.append(sent)
        object.__setattr__(self, "sentences", tuple(seen))

    def token_set(self) -> frozenset[str]:
        return frozenset(tok for sent in self.sentences for tok in sent)


@dataclass(frozen=True)
class DocMatch:
    doc_a: int
    doc_b: int
    sim: float


def lev_sim(a: str, b: str) -> float:
    """1 - editdistance/max(len); two empty strings are perfectly similar."""
    if not a and not b:
        return 1.0
    if not a or not b:
        return 0.0
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1,
                           prev[j - 1] + (ca != cb)))
        prev = cur
    return 1.0 - prev[-1] / max(len(a), len(b))


def jaccard(a: WebDoc, b: WebDoc, lexicon: dict[str, str]) -> float:
    """Token-set Jaccard with each side augmented by its own tokens' translations."""
    set_a = set(a.token_set())
    set_b = set(b.token_set())
    set_a |= {lexicon[t] for t in a.token_set() if t in lexicon}
    set_b |= {lexicon[t] for t in b.token_set() if t in lexicon}
    union = set_a | set_b
    if not union:
        return 1.0
    return len(set_a & set_b) / len(union)


def doc_sim(a: WebDoc, b: WebDoc, lexicon: dict[str, str]) -> float:
    return lev_sim(a.url, b.url) * jaccard(a, b, lexicon)


def build_lexicon(model: LexModel, min_prob: float = 0.1) -> dict[str, str]:
    """Unigram translation dictionary: argmax of each lexical row above min_prob."""
    import numpy as np
    lexicon = {}
    for i, sym in enumerate(model.src_vocab[1:], start=1):
        row = model.t[i]
        j = int(np.argmax(row))
        if row[j] >= min_prob:
            lexicon[sym] = model.tgt_vocab[j]
    return lexicon


def greedy_match(sims: list[list[float]], threshold: float) -> list[tuple[int, int]]:
    """Greedy one-to-one bipartite matching over a similarity matrix.

    Pairs are visited by similarity descending (ties: lower row, then lower
    column) and accepted when both endpoints are unused and the similarity
    reaches the threshold.
    """
    candidates = []
    for i, row in enumerate(sims):
        for j, sim in enumerate(row):
            if sim != sim or sim in (float("inf"), float("-inf")):
                raise DataError("similarity matrix must contain finite scores")
            candidates.append((-sim, i, j))
    candidates.sort()
    used_a: set[int] = set()
    used_b: set[int] = set()
    matches = []
    for neg_sim, i, j in candidates:
        if -neg_sim < threshold:
            break
        if i in used_a or j in used_b:
            continue
        used_a.add(i)
        used_b.add(j)
        matches.append((i, j))
    return matches


def match_documents(docs_a: list[WebDoc], docs_b: list[WebDoc],
                    lexicon: dict[str, str], threshold: float) -> list[DocMatch]:
    sims = [[doc_sim(a, b, lexicon) for b in docs_b] for a in docs_a]
    return [DocMatch(i, j, sims[i][j]) for i, j in greedy_match(sims, threshold)]


def align_sentences(doc_a: WebDoc, doc_b: WebDoc, model: LexModel,
                    floor: float) -> list[tuple[Sentence, Sentence, float]]:
    """Greedy one-to-one sentence pairs scored by the per-token channel score.

    The model scores doc_a sentences given doc_b sentences (its source side is
    doc_b's language); pairs below the floor are discarded.
    """
    scores = []
    for i, sa in enumerate(doc_a.sentences):
        row = []
        for sb in doc_b.sentences:
            row.append(channel_score(model, sa, sb) / len(sa))
        scores.append(row)
    selected = greedy_match(scores, floor) if scores else []
    return [(doc_a.sentences[i], doc_b.sentences[j], scores[i][j])
            for i, j in selected]


def mine_bitext(docs_a: list[WebDoc], docs_b: list[WebDoc], model: LexModel, *,
                doc_threshold: float, floor: float,
                lexicon: dict[str, str] | None = None):
    """Full mining pass: match documents, then align sentences within matches.

    Returns (pairs, per-pair scores, doc matches).
    """
    if lexicon is None:
        lexicon = build_lexicon(model)
    matches = match_documents(docs_a, docs_b, lexicon, doc_threshold)
    pairs = []
    for match in matches:
        aligned = align_sentences(docs_a[match.doc_a], docs_b[match.doc_b],
                                  model, floor)
        pairs.extend(aligned)
    return pairs, matches


def load_doc_dir(path: str, url_index: dict[str, str], lang: str = "") -> list[WebDoc]:
    """One WebDoc per *.txt file (one sentence per line); URLs from the index."""
    docs = []
    try:
        names = sorted(n for n in os.listdir(path) if n.endswith(".txt"))
    except OSError as e:
        raise DataError(f"cannot list document directory {path}: {e}") from e
    for name in names:
        if name not in url_index:
            raise DataError(f"no URL recorded for document {name}")
        with open(os.path.join(path, name), encoding="utf-8") as fh:
            sentences = tuple(tuple(line.split()) for line in fh
                              if line.strip())
        docs.append(WebDoc(url=url_index[name], sentences=sentences, lang=lang))
    return docs


def load_url_index(path: str) -> dict[str, dict[str, str]]:
    """URL index file: lines of "side<TAB>filename<TAB>url", side in {src, tgt}."""
    index: dict[str, dict[str, str]] = {"src": {}, "tgt": {}}
    try:
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.rstrip("\n")
                if not line.strip():
                    continue
                parts = line.split("\t")
                if len(parts) != 3 or parts[0] not in index:
                    raise DataError(f"{path}:{lineno}: expected 'src|tgt<TAB>file<TAB>url'")
                index[parts[0]][parts[1]] = parts[2]
    except OSError as e:
        raise DataError(f"cannot read URL index {path}: {e}") from e
    return index
