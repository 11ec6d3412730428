"""End-to-end iterative augmentation loop with persistent artifacts.

Each round: the current forward/backward systems translate the monolingual
pools with noisy-channel reranking; random search retrains both directions on
bitext + forward-translated + back-translated data; models are fine-tuned on
the in-domain bitext at the last round; the top-k models per direction become
the next round's systems. Every stage writes content-addressed artifacts
under a run directory and records them in a byte-stable manifest, so reruns
skip completed stages and two runs with one seed produce identical bytes.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace

from .augment import assemble_training_mix, back_translate, self_train
from .corpus import (
    SIDE_MONO_SOURCE,
    SIDE_MONO_TARGET,
    SIDE_PARALLEL,
    TAG_BACK_TRANSLATED,
    TAG_IN_DOMAIN,
    TAG_SELF_TRAINED,
    TaggedDataset,
    build_mix,
    save_corpus,
    strip_tag,
)
from .ensemble import Ensemble, ensemble_to_dict
from .lm import finetune_lm, lm_from_dict, lm_to_dict, train_lm
from .metrics import EvalContext
from .rerank import NoisyChannelWeights, RerankContext, tune_lambdas
from .search import (
    DEFAULT_CONFIG,
    SearchSpace,
    TrialConfig,
    TrialResult,
    default_search_space,
    dev_bleu,
    finetune,
    run_search,
    select_top_k,
)
from .subword import encode_dataset, learn_bpe, load_bpe, save_bpe
from .tm import LexModel, em_train, model_from_dict, model_hash, model_to_dict
from .util import DataError, content_hash, derive_seed, sha256_bytes, stable_json_dumps

MANIFEST_NAME = "manifest.json"
MANIFEST_VERSION = 1


@dataclass
class PipelineConfig:
    iterations: int = 1
    trials: int = 4
    topk: int = 1
    seed: int = 0
    bpe_vocab: int = 400
    nbest: int = 50
    tune_trials: int = 30
    patience: int | None = 2
    finetune_steps: int = 3
    finetune_every_iteration: bool = False
    lm_alpha: float = 0.5
    init_config: TrialConfig = DEFAULT_CONFIG
    search_space: SearchSpace = field(default_factory=default_search_space)
    workers: int = 1

    def params_dict(self) -> dict:
        return {
            "iterations": self.iterations, "trials": self.trials, "topk": self.topk,
            "seed": self.seed, "bpe_vocab": self.bpe_vocab, "nbest": self.nbest,
            "tune_trials": self.tune_trials, "patience": self.patience,
            "finetune_steps": self.finetune_steps,
            "finetune_every_iteration": self.finetune_every_iteration,
            "lm_alpha": self.lm_alpha, "init_config": self.init_config.to_dict(),
            "search_space": self.search_space.dims,
        }


class PipelineManifest:
    """Persistent record of one run; every referenced artifact is hash-checked."""

    def __init__(self, run_dir: str, data: dict):
        self.run_dir = run_dir
        self.data = data

    @property
    def path(self) -> str:
        return os.path.join(self.run_dir, MANIFEST_NAME)

    def save(self) -> None:
        text = stable_json_dumps(self.data)
        with open(self.path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")

    @classmethod
    def load(cls, run_dir: str) -> "PipelineManifest":
        path = os.path.join(run_dir, MANIFEST_NAME)
        try:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as e:
            raise DataError(f"cannot read manifest {path}: {e}") from e
        if data.get("version") != MANIFEST_VERSION:
            raise DataError(f"unsupported manifest version in {path}")
        return cls(run_dir, data)

    def completed(self, stage: str) -> bool:
        return stage in self.data["stages_completed"]

    def mark_completed(self, stage: str) -> None:
        if stage not in self.data["stages_completed"]:
            self.data["stages_completed"].append(stage)
        self.save()

    def artifact_path(self, ref: dict) -> str:
        return os.path.join(self.run_dir, ref["path"])

    def verify(self, ref: dict) -> str:
        path = self.artifact_path(ref)
        try:
            with open(path, "rb") as fh:
                digest = sha256_bytes(fh.read())
        except OSError as e:
            raise DataError(f"missing artifact {ref['path']}: {e}") from e
        if digest != ref["hash"]:
            raise DataError(f"artifact {ref['path']} does not match its recorded hash")
        return path


def _write_text_artifact(run_dir: str, relpath: str, text: str) -> dict:
    path = os.path.join(run_dir, relpath)
    os.makedirs(os.path.dirname(path), exist_ok=True)
    data = text if text.endswith("\n") else text + "\n"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(data)
    return {"path": relpath, "hash": sha256_bytes(data.encode("utf-8"))}


def _save_model(run_dir: str, model) -> dict:
    if isinstance(model, Ensemble):
        doc = ensemble_to_dict(model)
    else:
        doc = model_to_dict(model)
    digest = content_hash(doc)
    ref = _write_text_artifact(run_dir, f"artifacts/models/{digest}.json",
                               stable_json_dumps(doc))
    ref["model_hash"] = digest
    return ref


def _load_model(manifest: PipelineManifest, ref: dict):
    with open(manifest.verify(ref), encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("kind") == "ensemble":
        members = []
        for member_hash in doc["members"]:
            path = os.path.join(manifest.run_dir,
                                f"artifacts/models/{member_hash}.json")
            try:
                with open(path, encoding="utf-8") as mfh:
                    member_doc = json.load(mfh)
            except OSError as e:
                raise DataError(f"missing ensemble member {member_hash}: {e}") from e
            if content_hash(member_doc) != member_hash:
                raise DataError(f"ensemble member {member_hash} fails its hash check")
            members.append(model_from_dict(member_doc))
        return Ensemble(members)
    return model_from_dict(doc)


def _save_dataset(run_dir: str, ds: TaggedDataset, relpath: str,
                  provenance: dict | None = None) -> dict:
    path = os.path.join(run_dir, relpath)
    os.makedirs(os.path.dirname(path), exist_ok=True)
    save_corpus(ds, path)
    with open(path, "rb") as fh:
        digest = sha256_bytes(fh.read())
    ref = {"path": relpath, "hash": digest, "name": ds.name, "tag": ds.tag,
           "dropped": ds.dropped}
    if provenance is not None:
        prov_ref = _write_text_artifact(run_dir, relpath + ".prov.json",
                                        stable_json_dumps(provenance))
        ref["provenance"] = provenance
        ref["provenance_path"] = prov_ref["path"]
    return ref


def _swap_pairs(ds: TaggedDataset, tag: str, name: str) -> TaggedDataset:
    pairs = tuple((tgt, strip_tag(src)) for src, tgt in ds.pairs)
    return TaggedDataset(name=name, side=SIDE_PARALLEL, tag=tag, pairs=pairs,
                         upsample=ds.upsample, dropped=ds.dropped)


def _mix_for_config(config: TrialConfig, bitext: TaggedDataset,
                    st: TaggedDataset | None, bt: TaggedDataset | None):
    return assemble_training_mix(
        bitext, st if st is not None and st.pairs else None,
        bt if bt is not None and bt.pairs else None,
        upsample_bitext=config.up_bitext, upsample_st=config.up_fwd,
        upsample_bt=config.up_bt)


class _MixBuilder:
    """Picklable mix factory for parallel trial execution."""

    def __init__(self, bitext, st, bt):
        self.bitext = bitext
        self.st = st
        self.bt = bt

    def __call__(self, config: TrialConfig):
        return _mix_for_config(config, self.bitext, self.st, self.bt)


def run_pipeline(parallel: TaggedDataset, mono_src: TaggedDataset | None,
                 mono_tgt: TaggedDataset | None, dev: TaggedDataset,
                 run_dir: str, config: PipelineConfig) -> PipelineManifest:
    """Run the iterative algorithm for config.iterations rounds.

    Empty monolingual pools degenerate to the parallel-only regime: synthetic
    data is generated from the bitext's own sides and the reranking LMs are
    trained on the bitext alone. A failed stage leaves the manifest recording
    everything completed so far; rerunning skips completed stages.
    """
    if config.iterations < 1 or config.trials < 1:
        raise DataError("iterations and trials must be >= 1")
    if not 1 <= config.topk <= config.trials:
        raise DataError("need trials >= topk >= 1")
    if not parallel.pairs:
        raise DataError("the pipeline needs non-empty parallel data")
    if not dev.pairs:
        raise DataError("the pipeline needs a non-empty dev set")

    parallel_only = not (mono_src and mono_src.sentences) and \
        not (mono_tgt and mono_tgt.sentences)
    if mono_src is None or not mono_src.sentences:
        mono_src = TaggedDataset("mono-from-bitext-src", SIDE_MONO_SOURCE, "<mono>",
                                 sentences=tuple(strip_tag(s) for s, _ in parallel.pairs))
    if mono_tgt is None or not mono_tgt.sentences:
        mono_tgt = TaggedDataset("mono-from-bitext-tgt", SIDE_MONO_TARGET, "<mono>",
                                 sentences=tuple(t for _, t in parallel.pairs))

    os.makedirs(os.path.join(run_dir, "artifacts"), exist_ok=True)
    os.makedirs(os.path.join(run_dir, "logs"), exist_ok=True)

    params = config.params_dict()
    inputs = {
        "parallel": content_hash([[list(s), list(t)] for s, t in parallel.pairs]),
        "mono_src": content_hash([list(s) for s in mono_src.sentences]),
        "mono_tgt": content_hash([list(s) for s in mono_tgt.sentences]),
        "dev": content_hash([[list(s), list(t)] for s, t in dev.pairs]),
        "parallel_only": parallel_only,
    }
    run_id = content_hash({"params": params, "inputs": inputs})[:12]

    manifest_path = os.path.join(run_dir, MANIFEST_NAME)
    if os.path.exists(manifest_path):
        manifest = PipelineManifest.load(run_dir)
        if manifest.data["run_id"] != run_id:
            raise DataError(
                f"{run_dir} holds a manifest for a different run "
                f"({manifest.data['run_id']} != {run_id})")
    else:
        manifest = PipelineManifest(run_dir, {
            "version": MANIFEST_VERSION, "run_id": run_id, "seed": config.seed,
            "params": params, "inputs": inputs, "stages_completed": [],
            "iterations": [],
        })
        manifest.save()

    state = _PipelineState(manifest, config, parallel, mono_src, mono_tgt, dev,
                           parallel_only)
    try:
        state.stage_setup()
        state.stage_init()
        for t in range(1, config.iterations + 1):
            state.stage_iteration(t)
    except Exception:
        manifest.save()
        raise
    manifest.save()
    return manifest


def run_parallel_only(parallel: TaggedDataset, dev: TaggedDataset, run_dir: str,
                      config: PipelineConfig | None = None) -> PipelineManifest:
    """Parallel-only regime: monolingual pools are the bitext's own sides.

    Defaults to a single round.
    """
    config = config or PipelineConfig()
    return run_pipeline(parallel, None, None, dev, run_dir, config)


class _PipelineState:
    def __init__(self, manifest, config, parallel, mono_src, mono_tgt, dev,
                 parallel_only):
        self.manifest = manifest
        self.config = config
        self.raw_parallel = parallel
        self.raw_mono_src = mono_src
        self.raw_mono_tgt = mono_tgt
        self.raw_dev = dev
        self.parallel_only = parallel_only
        # populated by stages
        self.bpe = None
        self.eval_ctx_fwd = None
        self.eval_ctx_bwd = None
        self.lm_tgt = None  # reranking LM over the target language (fwd decode)
        self.lm_src = None  # reranking LM over the source language (bwd decode)
        self.fwd = None     # current forward system (Ensemble)
        self.bwd = None     # current backward system (Ensemble)
        self.lambdas_fwd = None
        self.lambdas_bwd = None

    def _seed(self, label: str) -> int:
        return derive_seed(self.config.seed, label)

    # -- setup: BPE + encoded corpora + reranking LMs ------------------------

    def stage_setup(self) -> None:
        cfg = self.config
        manifest = self.manifest
        if manifest.completed("setup"):
            self.bpe = load_bpe(manifest.verify(manifest.data["bpe"]))
            self._encode_all()
            self.lm_tgt = lm_from_dict(self._read_json(manifest.data["rerank_lms"]["fwd"]))
            self.lm_src = lm_from_dict(self._read_json(manifest.data["rerank_lms"]["bwd"]))
            return
        corpus = [strip_tag(s) for s, _ in self.raw_parallel.pairs]
        corpus += [t for _, t in self.raw_parallel.pairs]
        self.bpe = learn_bpe(corpus, cfg.bpe_vocab)
        bpe_path = os.path.join(manifest.run_dir, "artifacts/bpe.txt")
        os.makedirs(os.path.dirname(bpe_path), exist_ok=True)
        save_bpe(self.bpe, bpe_path)
        with open(bpe_path, "rb") as fh:
            manifest.data["bpe"] = {"path": "artifacts/bpe.txt",
                                    "hash": sha256_bytes(fh.read())}
        self._encode_all()

        init = cfg.init_config
        tgt_sents = [t for _, t in self.parallel.pairs]
        src_sents = [strip_tag(s) for s, _ in self.parallel.pairs]
        if self.parallel_only:
            self.lm_tgt = train_lm(tgt_sents, init.lm_order, init.smoothing_k)
            self.lm_src = train_lm(src_sents, init.lm_order, init.smoothing_k)
        else:
            base_tgt = train_lm(list(self.mono_tgt.sentences), init.lm_order,
                                init.smoothing_k)
            base_src = train_lm(list(self.mono_src.sentences), init.lm_order,
                                init.smoothing_k)
            self.lm_tgt = finetune_lm(base_tgt, tgt_sents, cfg.lm_alpha)
            self.lm_src = finetune_lm(base_src, src_sents, cfg.lm_alpha)
        manifest.data["rerank_lms"] = {
            "fwd": self._write_json("artifacts/lm_fwd.json", lm_to_dict(self.lm_tgt)),
            "bwd": self._write_json("artifacts/lm_bwd.json", lm_to_dict(self.lm_src)),
        }
        manifest.mark_completed("setup")

    def _encode_all(self) -> None:
        self.parallel = encode_dataset(self.raw_parallel, self.bpe)
        self.mono_src = encode_dataset(self.raw_mono_src, self.bpe)
        self.mono_tgt = encode_dataset(self.raw_mono_tgt, self.bpe)
        self.dev = encode_dataset(self.raw_dev, self.bpe)
        self.dev_swapped = _swap_pairs(self.dev, self.dev.tag, "dev-swapped")
        self.parallel_swapped = _swap_pairs(self.parallel, self.parallel.tag,
                                            self.parallel.name + "-swapped")
        self.eval_ctx_fwd = EvalContext(bpe=self.bpe, tag=TAG_IN_DOMAIN)
        self.eval_ctx_bwd = EvalContext(bpe=self.bpe, tag=TAG_IN_DOMAIN)

    def _write_json(self, relpath: str, doc: dict) -> dict:
        return _write_text_artifact(self.manifest.run_dir, relpath,
                                    stable_json_dumps(doc))

    def _read_json(self, ref: dict) -> dict:
        with open(self.manifest.verify(ref), encoding="utf-8") as fh:
            return json.load(fh)

    # -- init: line-2 models + their tuned lambdas ---------------------------

    def stage_init(self) -> None:
        cfg = self.config
        manifest = self.manifest
        if manifest.completed("init"):
            record = manifest.data["init"]
            self.fwd = _load_model(manifest, record["fwd"]["model"])
            self.bwd = _load_model(manifest, record["bwd"]["model"])
            self.lambdas_fwd = NoisyChannelWeights(*record["fwd"]["lambdas"])
            self.lambdas_bwd = NoisyChannelWeights(*record["bwd"]["lambdas"])
            return
        init = cfg.init_config
        fwd_mix = build_mix([replace(self.parallel, upsample=init.up_bitext)])
        bwd_mix = build_mix([replace(self.parallel_swapped, upsample=init.up_bitext)])
        kwargs = dict(lm_order=init.lm_order, lm_k=init.smoothing_k, beam=init.beam,
                      window=init.window, lm_weight=init.lm_weight)
        f0 = em_train(fwd_mix, init.em_iterations, seed=self._seed("init/fwd"),
                      src_lang="src", tgt_lang="tgt", **kwargs)
        g0 = em_train(bwd_mix, init.em_iterations, seed=self._seed("init/bwd"),
                      src_lang="tgt", tgt_lang="src", **kwargs)
        self.fwd = Ensemble([f0])
        self.bwd = Ensemble([g0])
        self.lambdas_fwd, self.lambdas_bwd = self._tune_both("init")
        manifest.data["init"] = {
            "fwd": {"model": _save_model(manifest.run_dir, self.fwd),
                    "lambdas": [self.lambdas_fwd.lambda1, self.lambdas_fwd.lambda2]},
            "bwd": {"model": _save_model(manifest.run_dir, self.bwd),
                    "lambdas": [self.lambdas_bwd.lambda1, self.lambdas_bwd.lambda2]},
        }
        for member in self.fwd.members + self.bwd.members:
            _save_model(manifest.run_dir, member)
        manifest.mark_completed("init")

    def _tune_both(self, label: str):
        cfg = self.config
        lf = tune_lambdas(self.dev, self.fwd, self.bwd, self.lm_tgt,
                          trials=cfg.tune_trials, seed=self._seed(f"{label}/lambda/fwd"),
                          nbest=cfg.nbest, eval_ctx=self.eval_ctx_fwd)
        lb = tune_lambdas(self.dev_swapped, self.bwd, self.fwd, self.lm_src,
                          trials=cfg.tune_trials, seed=self._seed(f"{label}/lambda/bwd"),
                          nbest=cfg.nbest, eval_ctx=self.eval_ctx_bwd)
        return lf, lb

    # -- one round of the iterative algorithm --------------------------------

    def stage_iteration(self, t: int) -> None:
        cfg = self.config
        manifest = self.manifest
        stage = f"iter{t}"
        if manifest.completed(stage):
            record = manifest.data["iterations"][t - 1]
            self.fwd = _load_model(manifest, record["ensembles"]["fwd"])
            self.bwd = _load_model(manifest, record["ensembles"]["bwd"])
            self.lambdas_fwd = NoisyChannelWeights(*record["lambdas"]["fwd"])
            self.lambdas_bwd = NoisyChannelWeights(*record["lambdas"]["bwd"])
            return

        gen_lambdas = {"fwd": [self.lambdas_fwd.lambda1, self.lambdas_fwd.lambda2],
                       "bwd": [self.lambdas_bwd.lambda1, self.lambdas_bwd.lambda2]}
        fwd_gen_hash = model_hash(self.fwd)
        bwd_gen_hash = model_hash(self.bwd)

        # lines 6-7: translate the monolingual pools with reranking
        st_ctx = RerankContext(self.bwd, self.lm_tgt, self.lambdas_fwd, cfg.nbest)
        f_data = self_train(self.fwd, self.mono_src, decode="rerank",
                            rerank_ctx=st_ctx, workers=cfg.workers)
        bt_ctx = RerankContext(self.fwd, self.lm_src, self.lambdas_bwd, cfg.nbest)
        b_data = back_translate(self.bwd, self.mono_tgt, decode="rerank",
                                rerank_ctx=bt_ctx, workers=cfg.workers)

        f_ref = _save_dataset(
            manifest.run_dir, f_data, f"artifacts/datasets/iter{t}_F.tsv",
            provenance={"generator": fwd_gen_hash, "decode": "rerank",
                        "lambdas": gen_lambdas["fwd"], "seed": cfg.seed,
                        "dropped": f_data.dropped})
        b_ref = _save_dataset(
            manifest.run_dir, b_data, f"artifacts/datasets/iter{t}_B.tsv",
            provenance={"generator": bwd_gen_hash, "decode": "rerank",
                        "lambdas": gen_lambdas["bwd"], "seed": cfg.seed,
                        "dropped": b_data.dropped})

        # lines 8-9: random search, both directions
        fwd_results = run_search(
            cfg.search_space, cfg.trials, self._seed(f"iter{t}/search/fwd"),
            _MixBuilder(self.parallel, f_data, b_data), self.dev,
            eval_ctx=self.eval_ctx_fwd, patience=cfg.patience, workers=cfg.workers,
            src_lang="src", tgt_lang="tgt")
        bwd_st = _swap_pairs(b_data, TAG_SELF_TRAINED, f"st-{b_data.name}")
        bwd_bt = _swap_pairs(f_data, TAG_BACK_TRANSLATED, f"bt-{f_data.name}")
        bwd_results = run_search(
            cfg.search_space, cfg.trials, self._seed(f"iter{t}/search/bwd"),
            _MixBuilder(self.parallel_swapped, bwd_st, bwd_bt), self.dev_swapped,
            eval_ctx=self.eval_ctx_bwd, patience=cfg.patience, workers=cfg.workers,
            src_lang="tgt", tgt_lang="src")

        # lines 10-12: fine-tune on the in-domain bitext at the last round
        finetuned = (t == cfg.iterations) or cfg.finetune_every_iteration
        if finetuned:
            fwd_results = [self._finetune_result(r, self.parallel, self.dev,
                                                 self.eval_ctx_fwd)
                           for r in fwd_results]
            bwd_results = [self._finetune_result(r, self.parallel_swapped,
                                                 self.dev_swapped, self.eval_ctx_bwd)
                           for r in bwd_results]

        # lines 13-14: ensemble the top-k models
        self.fwd = select_top_k(fwd_results, cfg.topk)
        self.bwd = select_top_k(bwd_results, cfg.topk)
        self.lambdas_fwd, self.lambdas_bwd = self._tune_both(f"iter{t}")

        eval_fwd = dev_bleu(self.fwd, self.dev, eval_ctx=self.eval_ctx_fwd,
                            decode="rerank", nbest=cfg.nbest,
                            rerank_ctx=RerankContext(self.bwd, self.lm_tgt,
                                                     self.lambdas_fwd, cfg.nbest))
        eval_bwd = dev_bleu(self.bwd, self.dev_swapped, eval_ctx=self.eval_ctx_bwd,
                            decode="rerank", nbest=cfg.nbest,
                            rerank_ctx=RerankContext(self.fwd, self.lm_src,
                                                     self.lambdas_bwd, cfg.nbest))

        for r in fwd_results + bwd_results:
            _save_model(manifest.run_dir, r.model)
        record = {
            "t": t,
            "gen_lambdas": gen_lambdas,
            "synthetic": {"F": f_ref, "B": b_ref},
            "trials": {
                "fwd": [r.record() for r in fwd_results],
                "bwd": [r.record() for r in bwd_results],
            },
            "finetuned": finetuned,
            "ensembles": {"fwd": _save_model(manifest.run_dir, self.fwd),
                          "bwd": _save_model(manifest.run_dir, self.bwd)},
            "lambdas": {"fwd": [self.lambdas_fwd.lambda1, self.lambdas_fwd.lambda2],
                        "bwd": [self.lambdas_bwd.lambda1, self.lambdas_bwd.lambda2]},
            "dev_bleu": {"fwd": eval_fwd, "bwd": eval_bwd},
        }
        manifest.data["iterations"].append(record)
        manifest.mark_completed(stage)

    def _finetune_result(self, result: TrialResult, in_domain, dev, eval_ctx):
        model = finetune(result.model, in_domain, dev, self.config.finetune_steps,
                         lm_alpha=self.config.lm_alpha, eval_ctx=eval_ctx)
        score = dev_bleu(model, dev, eval_ctx=eval_ctx)
        return TrialResult(config=result.config, model=model,
                           dev_ppl_trace=result.dev_ppl_trace, dev_bleu=score)
