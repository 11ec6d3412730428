import math
import random

import pytest

from deskmt.corpus import SIDE_PARALLEL, TaggedDataset, build_mix
from deskmt.search import (
    DataError,
    SearchSpace,
    TrialConfig,
    TrialResult,
    default_search_space,
    dev_bleu,
    dev_perplexity,
    finetune,
    run_search,
    run_trial,
    sample_configs,
    select_top_k,
)
from deskmt.tm import em_train


def parallel(seed, n_pairs=16, vocab=4):
    rng = random.Random(seed)
    src_vocab = [f"s{i}" for i in range(vocab)]
    lex = {s: f"t{i}" for i, s in enumerate(src_vocab)}
    pairs = []
    for _ in range(n_pairs):
        length = rng.randint(1, 4)
        src = tuple(rng.choice(src_vocab) for _ in range(length))
        pairs.append((src, tuple(lex[s] for s in src)))
    return TaggedDataset("p", SIDE_PARALLEL, "<d:in>", pairs=tuple(pairs))


def tiny_space():
    return SearchSpace(dims={
        "em_iterations": [2, 3],
        "lm_order": [2],
        "smoothing_k": [0.3],
        "lm_weight": [0.3],
        "window": [0, 1],
        "beam": [2],
        "up_bitext": [1, 2],
        "up_fwd": [1],
        "up_bt": [1],
        "seed": [1, 2, 3],
    })


class TestSampleConfigs:
    def test_singleton_dimensions_give_unique_config(self):
        space = SearchSpace(dims={k: [v[0]] for k, v in tiny_space().dims.items()})
        configs = sample_configs(space, 1, seed=0)
        assert configs == [TrialConfig(em_iterations=2, lm_order=2, smoothing_k=0.3,
                                       lm_weight=0.3, window=0, beam=2, up_bitext=1,
                                       up_fwd=1, up_bt=1, seed=1)]

    def test_same_seed_same_list(self):
        space = tiny_space()
        assert sample_configs(space, 10, seed=4) == sample_configs(space, 10, seed=4)

    def test_values_come_from_dimensions(self):
        space = tiny_space()
        for cfg in sample_configs(space, 30, seed=1):
            for name, values in space.dims.items():
                assert getattr(cfg, name) in values

    def test_default_space_matches_published_ranges(self):
        dims = default_search_space().dims
        assert dims["up_bitext"] == [1, 2, 3, 4, 6, 8, 12, 16, 20, 32, 40, 64]
        assert dims["up_fwd"] == [1, 2, 3, 4, 6, 8, 9]
        assert dims["up_bt"] == [1, 2, 3, 4, 6, 8, 9]
        assert dims["seed"] == list(range(1, 31))

    def test_empty_dimension_rejected(self):
        with pytest.raises(DataError):
            SearchSpace(dims={"em_iterations": []})

    def test_space_file_round_trip(self, tmp_path):
        space = tiny_space()
        path = str(tmp_path / "space.json")
        space.save(path)
        assert SearchSpace.load(path) == space


class TestRunTrial:
    def test_infinite_patience_runs_all_iterations(self):
        ds = parallel(1)
        mix = build_mix([ds])
        cfg = TrialConfig(em_iterations=4, lm_order=2, beam=2)
        result = run_trial(cfg, mix, ds, patience=None)
        assert len(result.dev_ppl_trace) == 4

    def test_stops_after_patience_exhausted(self, monkeypatch):
        # scripted signal: improves once, then strictly worsens from step 2
        scripted = iter([5.0, 6.0, 7.0, 8.0, 9.0])
        monkeypatch.setattr("deskmt.search.dev_perplexity",
                            lambda model, dev: next(scripted))
        ds = parallel(2)
        mix = build_mix([ds])
        cfg = TrialConfig(em_iterations=5, lm_order=2, beam=2)
        result = run_trial(cfg, mix, ds, patience=1)
        assert result.dev_ppl_trace == (5.0, 6.0)

    def test_patience_two_tolerates_one_bad_check(self, monkeypatch):
        scripted = iter([5.0, 6.0, 4.0, 4.5, 4.6, 4.7])
        monkeypatch.setattr("deskmt.search.dev_perplexity",
                            lambda model, dev: next(scripted))
        ds = parallel(2)
        mix = build_mix([ds])
        cfg = TrialConfig(em_iterations=6, lm_order=2, beam=2)
        result = run_trial(cfg, mix, ds, patience=2)
        assert result.dev_ppl_trace == (5.0, 6.0, 4.0, 4.5, 4.6)

    def test_bleu_matches_metric_on_decode(self):
        ds = parallel(3)
        mix = build_mix([ds])
        cfg = TrialConfig(em_iterations=2, lm_order=2, beam=2)
        result = run_trial(cfg, mix, ds, patience=None)
        assert result.dev_bleu == pytest.approx(dev_bleu(result.model, ds))

    def test_perplexity_definition(self):
        ds = parallel(4, n_pairs=6)
        model = em_train(build_mix([ds]), 2, lm_weight=0.5)
        from deskmt.lm import logprob
        from deskmt.tm import forward_marginal
        total = sum(forward_marginal(model, s, t) + 0.5 * logprob(model.lm, t)
                    for s, t in ds.pairs)
        tokens = sum(len(t) + 1 for _, t in ds.pairs)
        assert dev_perplexity(model, ds) == pytest.approx(math.exp(-total / tokens))


class TestSelectTopK:
    def fake_results(self, bleus):
        ds = parallel(5, n_pairs=4)
        mix = build_mix([ds])
        model = em_train(mix, 1)
        return [TrialResult(TrialConfig(), model, (1.0,), b) for b in bleus]

    def test_k1_selects_best(self):
        results = self.fake_results([10.0, 30.0, 20.0])
        ens = select_top_k(results, 1)
        assert ens.members[0] is results[1].model

    def test_ties_keep_lower_index(self):
        results = self.fake_results([10.0, 10.0, 10.0])
        ens = select_top_k(results, 2)
        assert ens.members[0] is results[0].model
        assert ens.members[1] is results[1].model

    def test_k_equals_all(self):
        results = self.fake_results([1.0, 2.0])
        assert select_top_k(results, 2).k == 2

    def test_k_too_large_rejected(self):
        with pytest.raises(DataError):
            select_top_k(self.fake_results([1.0]), 2)

    def test_strictly_better_trial_changes_top1(self):
        results = self.fake_results([10.0, 20.0])
        better = self.fake_results([99.0])
        ens = select_top_k(results + better, 1)
        assert ens.members[0] is better[0].model


class TestRunSearch:
    def test_deterministic_and_schedule_independent(self):
        ds = parallel(6)

        def builder(config):
            from dataclasses import replace
            return build_mix([replace(ds, upsample=config.up_bitext)])

        space = tiny_space()
        a = run_search(space, 4, seed=1, mix_builder=builder, dev=ds, patience=None)
        b = run_search(space, 4, seed=1, mix_builder=builder, dev=ds, patience=None)
        assert [r.dev_bleu for r in a] == [r.dev_bleu for r in b]
        assert [r.dev_ppl_trace for r in a] == [r.dev_ppl_trace for r in b]
        assert [r.config for r in a] == [r.config for r in b]


class TestFinetune:
    def setup_models(self):
        # out-of-domain bitext: noisy mapping; in-domain: clean mapping
        rng = random.Random(7)
        noisy = []
        for _ in range(12):
            length = rng.randint(1, 3)
            src = tuple(rng.choice(["s0", "s1"]) for _ in range(length))
            tgt = tuple(rng.choice(["t0", "t1"]) for _ in range(length))
            noisy.append((src, tgt))
        base_ds = TaggedDataset("noisy", SIDE_PARALLEL, "<d:out>", pairs=tuple(noisy))
        in_ds = parallel(8, n_pairs=10, vocab=2)
        model = em_train(build_mix([base_ds]), 2, lm_weight=0.2, beam=2)
        return model, in_ds

    def test_zero_steps_returns_input(self):
        model, in_ds = self.setup_models()
        assert finetune(model, in_ds, in_ds, max_steps=0) is model

    def test_never_reduces_dev_bleu(self):
        model, in_ds = self.setup_models()
        before = dev_bleu(model, in_ds)
        tuned = finetune(model, in_ds, in_ds, max_steps=3)
        assert dev_bleu(tuned, in_ds) >= before

    def test_improves_on_in_domain(self):
        model, in_ds = self.setup_models()
        tuned = finetune(model, in_ds, in_ds, max_steps=3)
        assert dev_bleu(tuned, in_ds) > dev_bleu(model, in_ds)

    def test_deterministic(self):
        model, in_ds = self.setup_models()
        a = finetune(model, in_ds, in_ds, max_steps=2)
        b = finetune(model, in_ds, in_ds, max_steps=2)
        assert (a.t == b.t).all()

    def test_empty_in_domain_rejected(self):
        model, in_ds = self.setup_models()
        empty = TaggedDataset("e", SIDE_PARALLEL, "<t>", pairs=())
        with pytest.raises(DataError):
            finetune(model, empty, in_ds, max_steps=1)
