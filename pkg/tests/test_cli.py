import json
import os

import pytest

from deskmt.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, build_parser, main


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """A small bundle plus BPE and two trained models, built through the CLI."""
    root = tmp_path_factory.mktemp("cli")
    old = os.getcwd()
    os.chdir(root)
    try:
        assert main(["synth-gen", "--out", "bundle", "--vocab", "24", "--seed", "3",
                     "--parallel", "60", "--mono-src", "30", "--mono-tgt", "30",
                     "--dev", "15", "--test", "15", "--min-len", "2",
                     "--max-len", "5"]) == EXIT_OK
        assert main(["learn-bpe", "--parallel", "bundle/parallel.tsv",
                     "--vocab-size", "80", "--out", "bpe.txt"]) == EXIT_OK
        common = ["--parallel", "bundle/parallel.tsv", "--dev", "bundle/dev.tsv",
                  "--bpe", "bpe.txt", "--em-iterations", "2", "--lm-order", "2",
                  "--beam", "2", "--tag", "<d:in>"]
        assert main(["train", *common, "--out", "fwd.json"]) == EXIT_OK
        assert main(["train", *common, "--swap", "--out", "bwd.json"]) == EXIT_OK

        from deskmt.corpus import load_corpus
        from deskmt.lm import lm_to_dict, train_lm
        from deskmt.subword import encode, load_bpe
        ds = load_corpus("bundle/parallel.tsv", "parallel")
        bpe = load_bpe("bpe.txt")
        lm = train_lm([encode(t, bpe) for _, t in ds.pairs], 2, 0.3)
        with open("lm_tgt.json", "w", encoding="utf-8") as fh:
            json.dump(lm_to_dict(lm), fh)
        yield str(root)
    finally:
        os.chdir(old)


class TestExitCodes:
    def test_usage_error_is_1(self, capsys):
        assert main(["no-such-command"]) == EXIT_USAGE

    def test_missing_required_flag_is_1(self):
        assert main(["train"]) == EXIT_USAGE

    def test_data_error_is_2(self, workspace):
        assert main(["train", "--parallel", "/nonexistent.tsv",
                     "--dev", "bundle/dev.tsv", "--out", "x.json"]) == EXIT_DATA

    def test_help_is_0(self):
        with pytest.raises(SystemExit) as exc:
            build_parser().parse_args(["--help"])
        assert exc.value.code == 0


class TestHelpSurface:
    def test_all_subcommands_present(self, capsys):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["--help"])
        text = capsys.readouterr().out
        for name in ["synth-gen", "learn-bpe", "train", "search", "translate",
                     "rerank", "tune-lambdas", "augment-bt", "augment-st",
                     "pipeline", "mine", "evaluate", "finetune"]:
            assert name in text

    def test_pipeline_flags_documented(self, capsys):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["pipeline", "--help"])
        text = capsys.readouterr().out
        for flag in ["--iterations", "--trials", "--topk", "--seed",
                     "--parallel-only"]:
            assert flag in text

    def test_published_defaults(self):
        parser = build_parser()
        args = parser.parse_args(["translate", "--model", "m", "--input", "i",
                                  "--output", "o"])
        assert args.nbest == 50
        args = parser.parse_args(["search", "--parallel", "p", "--dev", "d",
                                  "--out-dir", "o"])
        assert args.trials == 30
        args = parser.parse_args(["pipeline", "--parallel", "p", "--dev", "d",
                                  "--run-dir", "r"])
        assert args.iterations == 3
        assert args.tune_trials == 30


class TestWorkflows:
    def test_translate_round_trip(self, workspace):
        assert main(["translate", "--model", "fwd.json", "--input",
                     "bundle/mono_src.txt", "--output", "out.txt", "--bpe",
                     "bpe.txt", "--nbest", "2"]) == EXIT_OK
        lines = open("out.txt", encoding="utf-8").read().splitlines()
        src_lines = open("bundle/mono_src.txt", encoding="utf-8").read().splitlines()
        assert len(lines) == len(src_lines)
        assert all(line.strip() for line in lines)

    def test_nbest_dump_and_standalone_rerank(self, workspace):
        assert main(["translate", "--model", "fwd.json", "--input",
                     "bundle/mono_src.txt", "--output", "o.txt", "--bpe", "bpe.txt",
                     "--nbest", "3", "--dump-nbest", "nb.txt"]) == EXIT_OK
        assert main(["rerank", "--nbest-file", "nb.txt", "--channel-model",
                     "bwd.json", "--lm", "lm_tgt.json", "--lambda1", "1.0",
                     "--lambda2", "0.5", "--out", "nb2.txt"]) == EXIT_OK
        from deskmt.rerank import read_nbest_file
        lists = read_nbest_file("nb2.txt")
        assert all(e.combined is not None for nb in lists for e in nb.entries)

    def test_tune_lambdas_writes_weights(self, workspace):
        assert main(["tune-lambdas", "--dev", "bundle/dev.tsv", "--model",
                     "fwd.json", "--channel-model", "bwd.json", "--lm",
                     "lm_tgt.json", "--bpe", "bpe.txt", "--tag", "<d:in>",
                     "--tune-trials", "2", "--nbest", "2", "--seed", "1",
                     "--out", "lambdas.json"]) == EXIT_OK
        doc = json.load(open("lambdas.json", encoding="utf-8"))
        assert 0.0 <= doc["lambda1"] <= 3.0 and 0.0 <= doc["lambda2"] <= 3.0

    def test_augment_writes_provenance(self, workspace):
        assert main(["augment-st", "--model", "fwd.json", "--mono",
                     "bundle/mono_src.txt", "--bpe", "bpe.txt", "--out",
                     "st.tsv"]) == EXIT_OK
        prov = json.load(open("st.tsv.prov.json", encoding="utf-8"))
        assert set(prov) >= {"generator", "decode", "lambdas", "seed", "dropped"}
        assert prov["decode"] == "beam"

    def test_evaluate_report(self, workspace):
        assert main(["evaluate", "--model", "fwd.json", "--test",
                     "bundle/test.tsv", "--bpe", "bpe.txt", "--tag", "<d:in>",
                     "--report", "report.json"]) == EXIT_OK
        doc = json.load(open("report.json", encoding="utf-8"))
        assert 0.0 <= doc["bleu"] <= 100.0
        assert doc["sentence_count"] == 15
        assert doc["decode"] == "beam"

    def test_search_writes_runlog(self, workspace):
        space = {"version": 1, "dims": {
            "em_iterations": [2], "lm_order": [2], "smoothing_k": [0.3],
            "lm_weight": [0.3], "window": [0], "beam": [2], "up_bitext": [1],
            "up_fwd": [1], "up_bt": [1], "seed": [1, 2]}}
        with open("space.json", "w", encoding="utf-8") as fh:
            json.dump(space, fh)
        assert main(["search", "--parallel", "bundle/parallel.tsv", "--dev",
                     "bundle/dev.tsv", "--bpe", "bpe.txt", "--tag", "<d:in>",
                     "--trials", "2", "--seed", "4", "--space", "space.json",
                     "--topk", "1", "--out-dir", "searchrun"]) == EXIT_OK
        records = [json.loads(line) for line in
                   open("searchrun/runlog.jsonl", encoding="utf-8")]
        assert len(records) == 2
        assert all("dev_bleu" in r and "config" in r for r in records)
        assert os.path.exists("searchrun/trial000.json")
        assert os.path.exists("searchrun/ensemble0.json")
