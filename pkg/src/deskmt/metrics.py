"""Corpus BLEU and system evaluation reports.

BLEU-4 with clipped modified n-gram precisions aggregated over the corpus,
geometric mean, and the standard brevity penalty. Smoothing: a precision with
zero matches becomes 1/(2 * corpus n-gram count); an order with no n-grams at
all (every hypothesis shorter than n) contributes a factor of 1.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

from .corpus import Sentence, strip_tag
from .subword import POLICY_SPACED, BpeModel, decode as bpe_decode
from .util import DataError

BLEU_ORDER = 4


@dataclass
class EvalContext:
    """How decoder output is turned back into scoreable surface tokens.

    `bpe` inverts subword segmentation (None scores raw tokens), `policy`
    picks the detokenization rule, and `tag` is prepended to sources before
    decoding so tagged-training models see the expected domain marker.
    """

    bpe: BpeModel | None = None
    policy: str = POLICY_SPACED
    tag: str | None = None

    def detok_tokens(self, sentence: Sentence) -> tuple[str, ...]:
        """Detokenize then re-tokenize by whitespace (the evaluation tokenization)."""
        if self.bpe is None:
            return tuple(strip_tag(sentence))
        return tuple(bpe_decode(strip_tag(sentence), self.bpe, self.policy).split())


def _ngrams(sentence: Sentence, n: int) -> Counter:
    return Counter(tuple(sentence[i:i + n]) for i in range(len(sentence) - n + 1))


def bleu(hyps: list[Sentence], refs: list[Sentence]) -> float:
    """Corpus-level BLEU-4 in [0, 100] against single references."""
    if not hyps:
        raise DataError("BLEU needs a non-empty corpus")
    if len(hyps) != len(refs):
        raise DataError(f"hypothesis/reference count mismatch: {len(hyps)} vs {len(refs)}")

    matches = [0] * BLEU_ORDER
    totals = [0] * BLEU_ORDER
    hyp_len = 0
    ref_len = 0
    for hyp, ref in zip(hyps, refs):
        hyp = tuple(hyp)
        ref = tuple(ref)
        hyp_len += len(hyp)
        ref_len += len(ref)
        for n in range(1, BLEU_ORDER + 1):
            hyp_counts = _ngrams(hyp, n)
            if not hyp_counts:
                continue
            ref_counts = _ngrams(ref, n)
            totals[n - 1] += sum(hyp_counts.values())
            matches[n - 1] += sum(min(c, ref_counts[g]) for g, c in hyp_counts.items())

    if hyp_len == 0:
        return 0.0
    log_sum = 0.0
    for n in range(BLEU_ORDER):
        if totals[n] == 0:
            continue  # order absent from the corpus: neutral factor
        p = matches[n] / totals[n] if matches[n] > 0 else 1.0 / (2.0 * totals[n])
        log_sum += math.log(p) / BLEU_ORDER
    bp = 1.0 if hyp_len >= ref_len else math.exp(1.0 - ref_len / hyp_len)
    return 100.0 * bp * math.exp(log_sum)


@dataclass
class EvalReport:
    """Machine-readable evaluation record plus a human-readable rendering."""

    bleu: float
    sentence_count: int
    decode: str
    lambdas: tuple[float, float] | None
    model_hash: str
    per_sentence: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "bleu": self.bleu,
            "sentence_count": self.sentence_count,
            "decode": self.decode,
            "lambdas": list(self.lambdas) if self.lambdas else None,
            "model_hash": self.model_hash,
            "per_sentence": self.per_sentence,
        }

    def format_text(self) -> str:
        lines = [
            f"BLEU          {self.bleu:.2f}",
            f"sentences     {self.sentence_count}",
            f"decode        {self.decode}",
            f"lambdas       {self.lambdas if self.lambdas else '-'}",
            f"model         {self.model_hash[:12]}",
        ]
        return "\n".join(lines)


def evaluate_system(model, test, decode: str = "beam", *, rerank_ctx=None,
                    eval_ctx=None, nbest: int = 50) -> EvalReport:
    """Decode every test source and score BLEU against the references.

    `model` is a LexModel or Ensemble; `decode` is "beam" or "rerank" (the
    latter needs a RerankContext). An EvalContext controls subword inversion
    and the tag prepended to sources before decoding.
    """
    from .augment import translate_corpus
    from .tm import model_hash as hash_of

    pairs = list(test.pairs)
    if not pairs:
        raise DataError("evaluation needs a non-empty test set")
    sources = [src for src, _ in pairs]
    hyps = translate_corpus(model, sources, decode=decode, rerank_ctx=rerank_ctx,
                            eval_ctx=eval_ctx, nbest=nbest)

    if eval_ctx is not None and eval_ctx.bpe is not None:
        hyp_tokens = [eval_ctx.detok_tokens(h) for h in hyps]
        ref_tokens = [eval_ctx.detok_tokens(r) for _, r in pairs]
    else:
        hyp_tokens = [tuple(h) for h in hyps]
        ref_tokens = [tuple(r) for _, r in pairs]

    score = bleu(hyp_tokens, ref_tokens)
    per_sentence = [
        {"source": " ".join(strip_tag(src)), "hypothesis": " ".join(h),
         "reference": " ".join(r)}
        for (src, _), h, r in zip(pairs, hyp_tokens, ref_tokens)
    ]
    lambdas = None
    if rerank_ctx is not None and decode == "rerank":
        lambdas = (rerank_ctx.weights.lambda1, rerank_ctx.weights.lambda2)
    return EvalReport(bleu=score, sentence_count=len(pairs), decode=decode,
                      lambdas=lambdas, model_hash=hash_of(model),
                      per_sentence=per_sentence)
