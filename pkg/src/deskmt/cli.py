"""Command-line entry points for every pipeline stage.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error. All
randomness flows from --seed flags; stage-local seeds are derived by labeled
hashing, so identical invocations reproduce identical outputs.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import augment, corpus, metrics, mine, pipeline, rerank, search, subword, synth, tm
from .corpus import (
    SIDE_MONO_SOURCE,
    SIDE_MONO_TARGET,
    SIDE_PARALLEL,
    TAG_IN_DOMAIN,
    load_corpus,
    save_corpus,
    save_manifest,
)
from .ensemble import Ensemble
from .lm import lm_from_dict, lm_to_dict, train_lm
from .metrics import EvalContext
from .rerank import NoisyChannelWeights, RerankContext
from .search import SearchSpace, TrialConfig, default_search_space
from .util import DataError, stable_json_dumps

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INTERNAL = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _load_models(paths: list[str]):
    """One path gives a LexModel; several give a probability-averaged ensemble."""
    models = []
    for path in paths:
        try:
            with open(path, encoding="utf-8") as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as e:
            raise DataError(f"cannot read model {path}: {e}") from e
        models.append(tm.model_from_dict(doc))
    return models[0] if len(models) == 1 else Ensemble(models)


def _save_model(model, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(stable_json_dumps(tm.model_to_dict(model)) + "\n")


def _load_lm(path: str):
    try:
        with open(path, encoding="utf-8") as fh:
            return lm_from_dict(json.load(fh))
    except (OSError, json.JSONDecodeError) as e:
        raise DataError(f"cannot read language model {path}: {e}") from e


def _maybe_bpe(args):
    return subword.load_bpe(args.bpe) if getattr(args, "bpe", None) else None


def _eval_ctx(args, bpe):
    tag = getattr(args, "tag", None)
    policy = getattr(args, "policy", subword.POLICY_SPACED)
    if bpe is None and tag is None:
        return None
    return EvalContext(bpe=bpe, policy=policy, tag=tag)


def _rerank_ctx(args):
    if getattr(args, "mode", "beam") != "rerank":
        return None
    if not args.channel_model or not args.lm:
        raise DataError("rerank mode needs --channel-model and --lm")
    weights = NoisyChannelWeights(args.lambda1, args.lambda2)
    return RerankContext(_load_models(args.channel_model), _load_lm(args.lm),
                         weights, args.nbest)


def _add_rerank_flags(p, with_mode=True):
    if with_mode:
        p.add_argument("--mode", choices=["beam", "rerank"], default="beam")
    p.add_argument("--channel-model", nargs="+", default=None,
                   help="backward model file(s); several form an ensemble")
    p.add_argument("--lm", default=None, help="language model file for reranking")
    p.add_argument("--lambda1", type=float, default=0.0)
    p.add_argument("--lambda2", type=float, default=0.0)
    p.add_argument("--nbest", type=int, default=rerank.DEFAULT_NBEST)


def _add_config_flags(p):
    d = TrialConfig()
    p.add_argument("--em-iterations", type=int, default=d.em_iterations)
    p.add_argument("--lm-order", type=int, default=d.lm_order)
    p.add_argument("--smoothing-k", type=float, default=d.smoothing_k)
    p.add_argument("--lm-weight", type=float, default=d.lm_weight)
    p.add_argument("--window", type=int, default=d.window)
    p.add_argument("--beam", type=int, default=d.beam)
    p.add_argument("--up-bitext", type=int, default=d.up_bitext)
    p.add_argument("--up-fwd", type=int, default=d.up_fwd)
    p.add_argument("--up-bt", type=int, default=d.up_bt)
    p.add_argument("--trial-seed", type=int, default=d.seed)


def _config_from(args) -> TrialConfig:
    return TrialConfig(
        em_iterations=args.em_iterations, lm_order=args.lm_order,
        smoothing_k=args.smoothing_k, lm_weight=args.lm_weight,
        window=args.window, beam=args.beam, up_bitext=args.up_bitext,
        up_fwd=args.up_fwd, up_bt=args.up_bt, seed=args.trial_seed)


def _load_training_sets(args, bpe):
    bitext = load_corpus(args.parallel, SIDE_PARALLEL, tag=TAG_IN_DOMAIN)
    st = load_corpus(args.st, SIDE_PARALLEL, tag=corpus.TAG_SELF_TRAINED) \
        if args.st else None
    bt = load_corpus(args.bt, SIDE_PARALLEL, tag=corpus.TAG_BACK_TRANSLATED) \
        if args.bt else None
    dev = load_corpus(args.dev, SIDE_PARALLEL, tag=TAG_IN_DOMAIN)
    if bpe is not None:
        bitext = subword.encode_dataset(bitext, bpe)
        dev = subword.encode_dataset(dev, bpe)
        st = subword.encode_dataset(st, bpe) if st else None
        bt = subword.encode_dataset(bt, bpe) if bt else None
    if args.swap:
        bitext = pipeline._swap_pairs(bitext, bitext.tag, bitext.name)
        dev = pipeline._swap_pairs(dev, dev.tag, dev.name)
        st = pipeline._swap_pairs(st, st.tag, st.name) if st else None
        bt = pipeline._swap_pairs(bt, bt.tag, bt.name) if bt else None
    return bitext, st, bt, dev


# -- subcommands -------------------------------------------------------------


def cmd_synth_gen(args) -> int:
    spec = synth.make_spec(args.vocab, noise_rate=args.noise, seed=args.seed,
                           min_len=args.min_len, max_len=args.max_len)
    sizes = {"parallel": args.parallel, "mono_src": args.mono_src,
             "mono_tgt": args.mono_tgt, "dev": args.dev, "test": args.test}
    bundle = synth.gen_corpora(spec, sizes)
    import os
    os.makedirs(args.out, exist_ok=True)
    synth.save_spec(spec, os.path.join(args.out, "spec.json"))
    entries = []
    files = {"parallel": ("parallel.tsv", SIDE_PARALLEL),
             "mono_src": ("mono_src.txt", SIDE_MONO_SOURCE),
             "mono_tgt": ("mono_tgt.txt", SIDE_MONO_TARGET),
             "dev": ("dev.tsv", SIDE_PARALLEL), "test": ("test.tsv", SIDE_PARALLEL)}
    for name, (fname, side) in files.items():
        ds = getattr(bundle, name)
        save_corpus(ds, os.path.join(args.out, fname))
        entries.append({"name": name, "path": fname, "side": side,
                        "tag": ds.tag, "upsample": 1})
    save_manifest(entries, os.path.join(args.out, "manifest.json"))
    print(f"wrote benchmark bundle to {args.out} "
          f"(vocab {spec.vocab_size}, noise {spec.noise_rate})")
    return EXIT_OK


def cmd_learn_bpe(args) -> int:
    sentences = []
    for path in args.parallel or []:
        ds = load_corpus(path, SIDE_PARALLEL)
        sentences += [s for s, _ in ds.pairs] + [t for _, t in ds.pairs]
    for path in args.mono or []:
        ds = load_corpus(path, SIDE_MONO_SOURCE, tag="<mono>")
        sentences += list(ds.sentences)
    model = subword.learn_bpe(sentences, args.vocab_size)
    subword.save_bpe(model, args.out)
    print(f"learned {len(model.merges)} merges "
          f"(inventory {model.inventory_size()}) -> {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    bpe = _maybe_bpe(args)
    bitext, st, bt, dev = _load_training_sets(args, bpe)
    config = _config_from(args)
    mix = pipeline._mix_for_config(config, bitext, st, bt)
    langs = ("tgt", "src") if args.swap else ("src", "tgt")
    result = search.run_trial(config, mix, dev,
                              eval_ctx=_eval_ctx(args, bpe),
                              patience=args.patience,
                              src_lang=langs[0], tgt_lang=langs[1])
    _save_model(result.model, args.out)
    print(f"dev perplexity trace: {[round(p, 3) for p in result.dev_ppl_trace]}")
    print(f"dev BLEU {result.dev_bleu:.2f} -> {args.out}")
    return EXIT_OK


def cmd_search(args) -> int:
    import os
    bpe = _maybe_bpe(args)
    bitext, st, bt, dev = _load_training_sets(args, bpe)
    space = SearchSpace.load(args.space) if args.space else default_search_space()
    langs = ("tgt", "src") if args.swap else ("src", "tgt")
    results = search.run_search(
        space, args.trials, args.seed,
        pipeline._MixBuilder(bitext, st, bt), dev,
        eval_ctx=_eval_ctx(args, bpe), patience=args.patience,
        workers=args.workers, src_lang=langs[0], tgt_lang=langs[1])
    os.makedirs(args.out_dir, exist_ok=True)
    search.append_trial_log(results, os.path.join(args.out_dir, "runlog.jsonl"))
    for i, r in enumerate(results):
        _save_model(r.model, os.path.join(args.out_dir, f"trial{i:03d}.json"))
    best = max(range(len(results)), key=lambda i: (results[i].dev_bleu, -i))
    print(f"{len(results)} trials -> {args.out_dir}; "
          f"best trial {best} dev BLEU {results[best].dev_bleu:.2f}")
    if args.topk:
        ens = search.select_top_k(results, args.topk)
        order = sorted(range(len(results)),
                       key=lambda i: (-results[i].dev_bleu, i))[:args.topk]
        print("ensemble members: " + " ".join(f"trial{i:03d}" for i in order))
        for rank, i in enumerate(order):
            _save_model(results[i].model,
                        os.path.join(args.out_dir, f"ensemble{rank}.json"))
    return EXIT_OK


def cmd_translate(args) -> int:
    bpe = _maybe_bpe(args)
    model = _load_models(args.model)
    ds = load_corpus(args.input, SIDE_MONO_SOURCE, tag="<mono>")
    sources = list(ds.sentences)
    if bpe is not None:
        sources = [subword.encode(s, bpe) for s in sources]
    rr = _rerank_ctx(args)
    eval_ctx = _eval_ctx(args, bpe)
    if args.dump_nbest:
        lists = augment.decode_nbest_lists(model, sources, nbest=args.nbest,
                                           eval_ctx=eval_ctx, rerank_ctx=rr,
                                           workers=args.workers)
        rerank.write_nbest_file(lists, args.dump_nbest)
        hyps = [nb.top().hyp for nb in lists]
    else:
        hyps = augment.translate_corpus(model, sources, decode=args.mode,
                                        rerank_ctx=rr, eval_ctx=eval_ctx,
                                        nbest=args.nbest, workers=args.workers)
    with open(args.output, "w", encoding="utf-8") as fh:
        for hyp in hyps:
            if bpe is not None:
                fh.write(subword.decode(hyp, bpe, args.policy) + "\n")
            else:
                fh.write(" ".join(hyp) + "\n")
    print(f"translated {len(hyps)} sentences -> {args.output}")
    return EXIT_OK


def cmd_rerank(args) -> int:
    lists = rerank.read_nbest_file(args.nbest_file)
    channel = _load_models(args.channel_model)
    lm = _load_lm(args.lm)
    weights = NoisyChannelWeights(args.lambda1, args.lambda2)
    out = [rerank.rerank(nb, channel, lm, weights) for nb in lists]
    rerank.write_nbest_file(out, args.out)
    print(f"reranked {len(out)} lists -> {args.out}")
    return EXIT_OK


def cmd_tune_lambdas(args) -> int:
    bpe = _maybe_bpe(args)
    dev = load_corpus(args.dev, SIDE_PARALLEL, tag=TAG_IN_DOMAIN)
    if bpe is not None:
        dev = subword.encode_dataset(dev, bpe)
    weights = rerank.tune_lambdas(
        dev, _load_models(args.model), _load_models(args.channel_model),
        _load_lm(args.lm), trials=args.tune_trials, seed=args.seed,
        nbest=args.nbest, eval_ctx=_eval_ctx(args, bpe))
    doc = {"lambda1": weights.lambda1, "lambda2": weights.lambda2}
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(stable_json_dumps(doc) + "\n")
    print(stable_json_dumps(doc))
    return EXIT_OK


def _cmd_augment(args, kind: str) -> int:
    bpe = _maybe_bpe(args)
    model = _load_models(args.model)
    rr = _rerank_ctx(args)
    if kind == "bt":
        ds = load_corpus(args.mono, SIDE_MONO_TARGET, tag="<mono>")
        if bpe is not None:
            ds = subword.encode_dataset(ds, bpe)
        out = augment.back_translate(model, ds, decode=args.mode, rerank_ctx=rr,
                                     target_lang=args.mono_lang,
                                     workers=args.workers)
    else:
        ds = load_corpus(args.mono, SIDE_MONO_SOURCE, tag="<mono>")
        if bpe is not None:
            ds = subword.encode_dataset(ds, bpe)
        out = augment.self_train(model, ds, decode=args.mode, rerank_ctx=rr,
                                 source_lang=args.mono_lang,
                                 workers=args.workers)
    save_corpus(out, args.out)
    provenance = {"generator": tm.model_hash(model), "decode": args.mode,
                  "lambdas": [args.lambda1, args.lambda2], "seed": args.seed,
                  "dropped": out.dropped, "tag": out.tag}
    with open(args.out + ".prov.json", "w", encoding="utf-8") as fh:
        fh.write(stable_json_dumps(provenance) + "\n")
    print(f"wrote {len(out.pairs)} pairs ({out.dropped} dropped) -> {args.out}")
    return EXIT_OK


def cmd_pipeline(args) -> int:
    parallel = load_corpus(args.parallel, SIDE_PARALLEL, tag=TAG_IN_DOMAIN)
    dev = load_corpus(args.dev, SIDE_PARALLEL, tag=TAG_IN_DOMAIN)
    mono_src = mono_tgt = None
    if not args.parallel_only:
        if args.mono_source:
            mono_src = load_corpus(args.mono_source, SIDE_MONO_SOURCE, tag="<mono>")
        if args.mono_target:
            mono_tgt = load_corpus(args.mono_target, SIDE_MONO_TARGET, tag="<mono>")
    space = SearchSpace.load(args.space) if args.space else default_search_space()
    config = pipeline.PipelineConfig(
        iterations=args.iterations, trials=args.trials, topk=args.topk,
        seed=args.seed, bpe_vocab=args.bpe_vocab, nbest=args.nbest,
        tune_trials=args.tune_trials, patience=args.patience,
        finetune_steps=args.finetune_steps, search_space=space,
        workers=args.workers)
    manifest = pipeline.run_pipeline(parallel, mono_src, mono_tgt, dev,
                                     args.run_dir, config)
    final = manifest.data["iterations"][-1]
    print(f"run {manifest.data['run_id']} complete: "
          f"dev BLEU fwd {final['dev_bleu']['fwd']:.2f} "
          f"bwd {final['dev_bleu']['bwd']:.2f}")
    print(f"manifest: {manifest.path}")
    return EXIT_OK


def cmd_mine(args) -> int:
    index = mine.load_url_index(args.url_index)
    docs_src = mine.load_doc_dir(args.docs_src, index["src"], lang="src")
    docs_tgt = mine.load_doc_dir(args.docs_tgt, index["tgt"], lang="tgt")
    model = _load_models(args.model)
    if isinstance(model, Ensemble):
        model = model.fused()
    pairs, matches = mine.mine_bitext(docs_src, docs_tgt, model,
                                      doc_threshold=args.threshold,
                                      floor=args.floor)
    with open(args.out, "w", encoding="utf-8") as fh, \
            open(args.out + ".scores.tsv", "w", encoding="utf-8") as sfh:
        for sa, sb, score in pairs:
            fh.write(" ".join(sa) + "\t" + " ".join(sb) + "\n")
            sfh.write(f"{score!r}\n")
    print(f"matched {len(matches)} document pairs, "
          f"mined {len(pairs)} sentence pairs -> {args.out}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    bpe = _maybe_bpe(args)
    model = _load_models(args.model)
    test = load_corpus(args.test, SIDE_PARALLEL, tag=TAG_IN_DOMAIN)
    if bpe is not None:
        test = subword.encode_dataset(test, bpe)
    report = metrics.evaluate_system(model, test, decode=args.mode,
                                     rerank_ctx=_rerank_ctx(args),
                                     eval_ctx=_eval_ctx(args, bpe),
                                     nbest=args.nbest)
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            fh.write(stable_json_dumps(report.to_dict()) + "\n")
    print(report.format_text())
    return EXIT_OK


def cmd_finetune(args) -> int:
    bpe = _maybe_bpe(args)
    model = _load_models([args.model])
    in_domain = load_corpus(args.in_domain, SIDE_PARALLEL, tag=TAG_IN_DOMAIN)
    dev = load_corpus(args.dev, SIDE_PARALLEL, tag=TAG_IN_DOMAIN)
    if bpe is not None:
        in_domain = subword.encode_dataset(in_domain, bpe)
        dev = subword.encode_dataset(dev, bpe)
    tuned = search.finetune(model, in_domain, dev, args.max_steps,
                            lm_alpha=args.lm_alpha, eval_ctx=_eval_ctx(args, bpe))
    _save_model(tuned, args.out)
    before = search.dev_bleu(model, dev, eval_ctx=_eval_ctx(args, bpe))
    after = search.dev_bleu(tuned, dev, eval_ctx=_eval_ctx(args, bpe))
    print(f"dev BLEU {before:.2f} -> {after:.2f}; wrote {args.out}")
    return EXIT_OK


# -- parser ------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="deskmt",
                     description="Desk-scale low-resource MT experimentation toolkit")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth-gen", help="generate a synthetic benchmark bundle")
    p.add_argument("--out", required=True)
    p.add_argument("--vocab", type=int, default=synth.DEFAULT_VOCAB)
    p.add_argument("--noise", type=float, default=synth.DEFAULT_NOISE)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--min-len", type=int, default=3)
    p.add_argument("--max-len", type=int, default=9)
    for name, value in synth.DEFAULT_SIZES.items():
        p.add_argument(f"--{name.replace('_', '-')}", type=int, default=value)
    p.set_defaults(handler=cmd_synth_gen)

    p = sub.add_parser("learn-bpe", help="learn a BPE vocabulary")
    p.add_argument("--parallel", nargs="*", default=[])
    p.add_argument("--mono", nargs="*", default=[])
    p.add_argument("--vocab-size", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_learn_bpe)

    def add_training_io(p):
        p.add_argument("--parallel", required=True)
        p.add_argument("--st", default=None, help="self-trained synthetic TSV")
        p.add_argument("--bt", default=None, help="back-translated synthetic TSV")
        p.add_argument("--dev", required=True)
        p.add_argument("--bpe", default=None)
        p.add_argument("--tag", default=TAG_IN_DOMAIN)
        p.add_argument("--swap", action="store_true",
                       help="train the reverse (target-to-source) direction")
        p.add_argument("--patience", type=int, default=search.DEFAULT_PATIENCE)

    p = sub.add_parser("train", help="train one model configuration")
    add_training_io(p)
    _add_config_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("search", help="random hyperparameter search")
    add_training_io(p)
    p.add_argument("--trials", type=int, default=search.DEFAULT_TRIALS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--space", default=None, help="search space JSON file")
    p.add_argument("--topk", type=int, default=0,
                   help="also export the top-k ensemble members")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(handler=cmd_search)

    p = sub.add_parser("translate", help="translate a text file")
    p.add_argument("--model", nargs="+", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--bpe", default=None)
    p.add_argument("--tag", default=None)
    p.add_argument("--policy", choices=[subword.POLICY_SPACED, subword.POLICY_UNSPACED],
                   default=subword.POLICY_SPACED)
    p.add_argument("--dump-nbest", default=None)
    p.add_argument("--workers", type=int, default=1)
    _add_rerank_flags(p)
    p.set_defaults(handler=cmd_translate)

    p = sub.add_parser("rerank", help="rerank an n-best interchange file")
    p.add_argument("--nbest-file", required=True)
    p.add_argument("--channel-model", nargs="+", required=True)
    p.add_argument("--lm", required=True)
    p.add_argument("--lambda1", type=float, required=True)
    p.add_argument("--lambda2", type=float, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_rerank)

    p = sub.add_parser("tune-lambdas", help="random-search reranking weights")
    p.add_argument("--dev", required=True)
    p.add_argument("--model", nargs="+", required=True)
    p.add_argument("--channel-model", nargs="+", required=True)
    p.add_argument("--lm", required=True)
    p.add_argument("--bpe", default=None)
    p.add_argument("--tag", default=None)
    p.add_argument("--tune-trials", type=int, default=rerank.DEFAULT_TUNE_TRIALS)
    p.add_argument("--nbest", type=int, default=rerank.DEFAULT_NBEST)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(handler=cmd_tune_lambdas)

    for kind, help_text in (("bt", "back-translate a target-side monolingual file"),
                            ("st", "self-train on a source-side monolingual file")):
        p = sub.add_parser(f"augment-{kind}", help=help_text)
        p.add_argument("--model", nargs="+", required=True)
        p.add_argument("--mono", required=True)
        p.add_argument("--mono-lang", default="tgt" if kind == "bt" else "src",
                       help="language label of the monolingual file")
        p.add_argument("--bpe", default=None)
        p.add_argument("--out", required=True)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--workers", type=int, default=1)
        _add_rerank_flags(p)
        p.set_defaults(handler=lambda a, k=kind: _cmd_augment(a, k))

    p = sub.add_parser("pipeline", help="run the full iterative algorithm")
    p.add_argument("--parallel", required=True)
    p.add_argument("--mono-source", default=None)
    p.add_argument("--mono-target", default=None)
    p.add_argument("--dev", required=True)
    p.add_argument("--run-dir", required=True)
    p.add_argument("--iterations", type=int, default=3)
    p.add_argument("--trials", type=int, default=search.DEFAULT_TRIALS)
    p.add_argument("--topk", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--parallel-only", action="store_true")
    p.add_argument("--bpe-vocab", type=int, default=400)
    p.add_argument("--nbest", type=int, default=rerank.DEFAULT_NBEST)
    p.add_argument("--tune-trials", type=int, default=rerank.DEFAULT_TUNE_TRIALS)
    p.add_argument("--patience", type=int, default=search.DEFAULT_PATIENCE)
    p.add_argument("--finetune-steps", type=int, default=3)
    p.add_argument("--space", default=None)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(handler=cmd_pipeline)

    p = sub.add_parser("mine", help="mine bitext from comparable documents")
    p.add_argument("--docs-src", required=True)
    p.add_argument("--docs-tgt", required=True)
    p.add_argument("--url-index", required=True)
    p.add_argument("--model", nargs="+", required=True,
                   help="channel model scoring source text given target text")
    p.add_argument("--threshold", type=float, default=0.1,
                   help="document similarity acceptance threshold")
    p.add_argument("--floor", type=float, default=-6.0,
                   help="per-token sentence-pair score floor (log space)")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_mine)

    p = sub.add_parser("evaluate", help="decode a test set and report BLEU")
    p.add_argument("--model", nargs="+", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--bpe", default=None)
    p.add_argument("--tag", default=None)
    p.add_argument("--policy", choices=[subword.POLICY_SPACED, subword.POLICY_UNSPACED],
                   default=subword.POLICY_SPACED)
    p.add_argument("--report", default=None)
    _add_rerank_flags(p)
    p.set_defaults(handler=cmd_evaluate)

    p = sub.add_parser("finetune", help="fine-tune a model on in-domain data")
    p.add_argument("--model", required=True)
    p.add_argument("--in-domain", required=True)
    p.add_argument("--dev", required=True)
    p.add_argument("--bpe", default=None)
    p.add_argument("--tag", default=None)
    p.add_argument("--max-steps", type=int, default=3)
    p.add_argument("--lm-alpha", type=float, default=0.5)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_finetune)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.handler(args)
    except SystemExit as e:
        return int(e.code or 0)
    except DataError as e:
        print(f"deskmt: data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except Exception as e:  # internal failure
        print(f"deskmt: internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
