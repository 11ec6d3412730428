"""Random hyperparameter search with perplexity early stopping, top-k model
selection, and in-domain fine-tuning.

The searchable knobs are the lexical model's (EM iterations, LM order,
smoothing, LM weight, reordering window, beam) plus the data upsampling
ratios and trial seed. Each dimension is a finite value list; configurations
are sampled uniformly and independently per dimension.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import asdict, dataclass, field, replace

from .corpus import DataMix, TaggedDataset, build_mix
from .ensemble import Ensemble
from .lm import finetune_lm, logprob, train_lm
from .metrics import EvalContext, bleu
from .tm import EMTrainer, LexModel, forward_marginal, model_hash, _weighted_pairs, _target_sentences
from .util import DataError, ordered_map

DEFAULT_TRIALS = 30
DEFAULT_PATIENCE = 2


@dataclass(frozen=True)
class TrialConfig:
    em_iterations: int = 5
    lm_order: int = 3
    smoothing_k: float = 0.5
    lm_weight: float = 0.5
    window: int = 1
    beam: int = 5
    up_bitext: int = 3
    up_fwd: int = 1
    up_bt: int = 1
    seed: int = 1

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "TrialConfig":
        return cls(**doc)


DEFAULT_CONFIG = TrialConfig()

# Data upsampling ratios and seeds are the published search ranges; the model
# knobs translate the architecture grid onto this model family.
DEFAULT_SEARCH_SPACE_DIMS = {
    "em_iterations": [2, 3, 5],
    "lm_order": [2, 3],
    "smoothing_k": [0.1, 0.3, 1.0],
    "lm_weight": [0.1, 0.3, 0.5, 1.0],
    "window": [0, 1],
    "beam": [2, 5],
    "up_bitext": [1, 2, 3, 4, 6, 8, 12, 16, 20, 32, 40, 64],
    "up_fwd": [1, 2, 3, 4, 6, 8, 9],
    "up_bt": [1, 2, 3, 4, 6, 8, 9],
    "seed": list(range(1, 31)),
}


@dataclass(frozen=True)
class SearchSpace:
    dims: dict

    def __post_init__(self) -> None:
        unknown = set(self.dims) - set(DEFAULT_SEARCH_SPACE_DIMS)
        if unknown:
            raise DataError(f"unknown search dimensions: {sorted(unknown)}")
        for name, values in self.dims.items():
            if not values:
                raise DataError(f"search dimension {name!r} is empty")

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump({"version": 1, "dims": self.dims}, fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path: str) -> "SearchSpace":
        try:
            with open(path, encoding="utf-8") as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as e:
            raise DataError(f"cannot read search space {path}: {e}") from e
        return cls(dims=doc["dims"])


def default_search_space() -> SearchSpace:
    return SearchSpace(dims={k: list(v) for k, v in DEFAULT_SEARCH_SPACE_DIMS.items()})


def sample_configs(space: SearchSpace, n: int, seed: int) -> list[TrialConfig]:
    """n configurations sampled uniformly per dimension; duplicates allowed."""
    if n < 1:
        raise DataError("need at least one configuration")
    rng = random.Random(seed)
    configs = []
    for _ in range(n):
        values = {}
        for name in sorted(space.dims):
            values[name] = rng.choice(space.dims[name])
        configs.append(TrialConfig(**values))
    return configs


@dataclass
class TrialResult:
    config: TrialConfig
    model: LexModel
    dev_ppl_trace: tuple[float, ...]
    dev_bleu: float

    def record(self) -> dict:
        """Machine-readable run-log record (model referenced by hash)."""
        return {"config": self.config.to_dict(), "model_hash": model_hash(self.model),
                "dev_ppl_trace": list(self.dev_ppl_trace), "dev_bleu": self.dev_bleu}


class TrialError(RuntimeError):
    """Training failure with the offending configuration attached."""

    def __init__(self, config: TrialConfig, cause: Exception):
        super().__init__(f"trial failed for {config}: {cause}")
        self.config = config


def dev_perplexity(model: LexModel, dev: TaggedDataset) -> float:
    """Early-stopping signal: perplexity of the composed model score on dev.

    The composed score of a pair is the length-agnostic lexical marginal of
    the target given the source plus lm_weight times the LM score; tokens are
    counted including end-of-sentence.
    """
    total = 0.0
    n_tokens = 0
    for src, tgt in dev.pairs:
        total += forward_marginal(model, src, tgt)
        total += model.lm_weight * logprob(model.lm, tgt)
        n_tokens += len(tgt) + 1
    return math.exp(-total / n_tokens)


def dev_bleu(model, dev: TaggedDataset, *, eval_ctx: EvalContext | None = None,
             decode: str = "beam", rerank_ctx=None, nbest: int = 1) -> float:
    """Dev BLEU of decoded outputs (detokenized surfaces when a context is given)."""
    from .augment import translate_corpus
    sources = [src for src, _ in dev.pairs]
    hyps = translate_corpus(model, sources, decode=decode, rerank_ctx=rerank_ctx,
                            eval_ctx=eval_ctx, nbest=nbest)
    if eval_ctx is not None and eval_ctx.bpe is not None:
        return bleu([eval_ctx.detok_tokens(h) for h in hyps],
                    [eval_ctx.detok_tokens(r) for _, r in dev.pairs])
    return bleu(hyps, [tuple(r) for _, r in dev.pairs])


def run_trial(config: TrialConfig, mix: DataMix, dev: TaggedDataset, *,
              eval_ctx: EvalContext | None = None,
              patience: int | None = DEFAULT_PATIENCE,
              src_lang: str = "src", tgt_lang: str = "tgt") -> TrialResult:
    """Train one model per the config, early-stopping on dev perplexity.

    After each EM iteration the dev perplexity of the composed model is
    recorded; training stops once it fails to improve for `patience`
    consecutive checks (None disables stopping). The returned model is the
    best-perplexity checkpoint; its dev BLEU comes from beam decoding.
    """
    try:
        pairs = _weighted_pairs(mix)
        sents, weights = zip(*_target_sentences(pairs))
        lm = train_lm(list(sents), config.lm_order, config.smoothing_k,
                      weights=list(weights))
        settings = dict(beam=config.beam, window=config.window,
                        lm_weight=config.lm_weight, src_lang=src_lang,
                        tgt_lang=tgt_lang)
        trainer = EMTrainer(mix)
        trace: list[float] = []
        best_ppl = math.inf
        best_model: LexModel | None = None
        bad = 0
        for _ in range(config.em_iterations):
            trainer.step()
            model = trainer.snapshot(lm, **settings)
            ppl = dev_perplexity(model, dev)
            trace.append(ppl)
            if ppl < best_ppl:
                best_ppl = ppl
                best_model = model
                bad = 0
            else:
                bad += 1
                if patience is not None and bad >= patience:
                    break
        score = dev_bleu(best_model, dev, eval_ctx=eval_ctx)
        return TrialResult(config=config, model=best_model,
                           dev_ppl_trace=tuple(trace), dev_bleu=score)
    except DataError as e:
        raise TrialError(config, e) from e


def _run_one(args):
    config, mix_builder, dev, eval_ctx, patience, src_lang, tgt_lang = args
    mix = mix_builder(config)
    return run_trial(config, mix, dev, eval_ctx=eval_ctx, patience=patience,
                     src_lang=src_lang, tgt_lang=tgt_lang)


def run_search(space: SearchSpace, n: int, seed: int, mix_builder, dev: TaggedDataset,
               *, eval_ctx: EvalContext | None = None,
               patience: int | None = DEFAULT_PATIENCE, workers: int = 1,
               src_lang: str = "src", tgt_lang: str = "tgt") -> list[TrialResult]:
    """Sample n configs and run every trial; results are schedule-independent.

    `mix_builder(config)` assembles the training mix for a configuration
    (upsampling ratios are config knobs, so the mix depends on the trial).
    """
    configs = sample_configs(space, n, seed)
    args = [(c, mix_builder, dev, eval_ctx, patience, src_lang, tgt_lang)
            for c in configs]
    return ordered_map(_run_one, args, workers=workers)


def append_trial_log(results: list[TrialResult], path: str) -> None:
    """Append one JSON record per trial to a run log."""
    with open(path, "a", encoding="utf-8") as fh:
        for r in results:
            fh.write(json.dumps(r.record(), sort_keys=True) + "\n")


def select_top_k(results: list[TrialResult], k: int) -> Ensemble:
    """Ensemble of the k highest dev-BLEU models; ties keep the lower trial index."""
    if k < 1:
        raise DataError("k must be at least 1")
    if k > len(results):
        raise DataError(f"cannot select top {k} from {len(results)} trials")
    order = sorted(range(len(results)), key=lambda i: (-results[i].dev_bleu, i))
    return Ensemble([results[i].model for i in order[:k]])


def finetune(model: LexModel, in_domain: TaggedDataset, dev: TaggedDataset,
             max_steps: int, *, lm_alpha: float = 0.5,
             eval_ctx: EvalContext | None = None) -> LexModel:
    """Continue EM on in-domain data, returning the best dev-BLEU checkpoint.

    Step 0 is the input model, so fine-tuning can never reduce tuning-set
    BLEU. The LM is interpolated toward in-domain counts with weight
    `lm_alpha`; ties between checkpoints keep the earliest.
    """
    if not in_domain.pairs:
        raise DataError("fine-tuning needs non-empty in-domain data")
    base_bleu = dev_bleu(model, dev, eval_ctx=eval_ctx)
    best = (base_bleu, 0, model)
    if max_steps <= 0:
        return model
    targets = [tgt for _, tgt in in_domain.pairs]
    ft_lm = finetune_lm(model.lm, targets, lm_alpha)
    settings = dict(beam=model.beam, window=model.window, lm_weight=model.lm_weight,
                    src_lang=model.src_lang, tgt_lang=model.tgt_lang,
                    unk_floor=model.unk_floor)
    trainer = EMTrainer(build_mix([in_domain]), warm_start=model)
    for step in range(1, max_steps + 1):
        trainer.step()
        candidate = trainer.snapshot(ft_lm, **settings)
        candidate.tag_bias = model.tag_bias
        score = dev_bleu(candidate, dev, eval_ctx=eval_ctx)
        if score > best[0]:
            best = (score, step, candidate)
    return best[2]
