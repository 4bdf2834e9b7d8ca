import csv
import json

import pytest

from authorclust.cli import main, resolve_leak, corpus_scale, default_ensemble
from authorclust.metrics import load_clustering, load_ranking
from authorclust.synthdata import write_synthetic_collection


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("synth")
    paths = write_synthetic_collection(root, n_authors=3, docs_per_author=3,
                                       doc_chars=400, n_controls=3, seed=1)
    return paths


def run(*argv):
    return main([str(a) for a in argv])


class TestHelpers:
    def test_resolve_leak_fractions(self):
        assert resolve_leak("1/(2N)", 64) == pytest.approx(1 / 128)
        assert resolve_leak("1/(3N)", 10) == pytest.approx(1 / 30)
        assert resolve_leak(0.25, 99) == 0.25
        with pytest.raises(ValueError):
            resolve_leak("half", 10)

    def test_corpus_scale_clamps(self):
        assert corpus_scale(4_000_000) == 1.0
        assert corpus_scale(40_000_000) == 1.0
        assert corpus_scale(0) == 0.05
        assert corpus_scale(2_000_000) == 0.5

    def test_default_ensemble_patterns(self):
        members = default_ensemble("gr", 5, 1.0)
        assert [m["hidden_size"] for m in members] == [299, 279, 159, 159, 139]
        assert members[0]["df_threshold"] == 0.005
        assert members[2]["direction"] == "reverse"
        assert default_ensemble("xx", 2, 1.0)[0]["hidden_size"] == 299


class TestSynthCommand:
    def test_writes_collection(self, tmp_path):
        assert run("synth", "--out", tmp_path / "data", "--authors", 2,
                   "--docs-per-author", 2, "--chars", 200,
                   "--control-count", 2) == 0
        assert (tmp_path / "data/corpus/problem001").is_dir()
        assert len(list((tmp_path / "data/corpus/problem001").glob("*.txt"))) == 4
        assert (tmp_path / "data/truth/problem001/clustering.json").is_file()
        assert (tmp_path / "data/corpus/collection.json").is_file()


class TestPrepCommand:
    def test_writes_alphabet(self, corpus, tmp_path):
        assert run("prep", "--corpus", corpus["corpus"], "--controls",
                   corpus["controls"], "--out", tmp_path) == 0
        alphabet = json.loads((tmp_path / "alphabet.json").read_text())
        assert 0 < len(alphabet["symbols"]) <= 21
        assert " " in alphabet["symbols"]

    def test_mask_token_flag(self, corpus, tmp_path):
        assert run("prep", "--corpus", corpus["corpus"], "--out", tmp_path,
                   "--mask-token") == 0
        alphabet = json.loads((tmp_path / "alphabet.json").read_text())
        assert "°" in alphabet["symbols"]


@pytest.fixture(scope="module")
def run_dir(corpus, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    code = run("pipeline", "--corpus", corpus["corpus"],
               "--controls", corpus["controls"], "--out", out,
               "--members", 1, "--scale", 0.08,
               "--truth", corpus["truth"], "--seed", 17)
    assert code == 0
    return out


class TestPipelineCommand:
    def test_outputs_exist(self, run_dir):
        for name in ("alphabet.json", "matrix.json", "manifest.json",
                     "member00.mhrnn", "member00-matrix.json",
                     "member00-log.json", "eval.csv", "report.csv",
                     "problem001/clustering.json", "problem001/ranking.json"):
            assert (run_dir / name).exists(), name

    def test_clustering_is_valid_partition(self, corpus, run_dir):
        part = load_clustering(run_dir / "problem001/clustering.json")
        expected = {n for c in corpus["clusters"] for n in c}
        assert set(part.doc_ids) == expected

    def test_ranking_covers_all_pairs(self, corpus, run_dir):
        links = load_ranking(run_dir / "problem001/ranking.json")
        n = sum(len(c) for c in corpus["clusters"])
        assert len(links.links) == n * (n - 1) // 2
        weights = [w for _, _, w in links.links]
        assert max(weights) == 1.0 and min(weights) == 0.0

    def test_manifest_records_run(self, run_dir):
        manifest = json.loads((run_dir / "manifest.json").read_text())
        assert manifest["seed"] == 17
        assert manifest["alphabet_sha256"]
        assert len(manifest["members"]) == 1
        assert manifest["members"][0]["val_log"]

    def test_eval_csv_columns(self, run_dir):
        with open(run_dir / "eval.csv", newline="") as f:
            rows = list(csv.reader(f))
        assert rows[0] == ["problem", "F(BCubed)", "R-BCubed", "P-BCubed",
                           "MAP"]
        assert rows[1][0] == "problem001"
        assert 0.0 <= float(rows[1][4]) <= 1.0

    def test_report_csv_columns(self, run_dir):
        with open(run_dir / "report.csv", newline="") as f:
            rows = list(csv.reader(f))
        assert rows[0] == ["Lang/genre", "problem", "MAP", "coward", "best",
                           "c_b", "diff", "fixed", "c_f", "diff"]
        row = rows[1]
        coward, best, fixed = float(row[3]), float(row[4]), float(row[7])
        assert best >= coward - 1e-9
        assert best >= fixed - 1e-9

    def test_parallel_jobs_identical_output(self, corpus, tmp_path):
        seq = tmp_path / "seq"
        par = tmp_path / "par"
        for out, jobs in ((seq, 1), (par, 2)):
            assert run("pipeline", "--corpus", corpus["corpus"],
                       "--controls", corpus["controls"], "--out", out,
                       "--members", 2, "--scale", 0.05, "--jobs", jobs,
                       "--seed", 3) == 0
        for name in ("matrix.json", "problem001/clustering.json",
                     "problem001/ranking.json"):
            assert (seq / name).read_bytes() == (par / name).read_bytes()


class TestStageComposition:
    def test_train_score_combine_cluster(self, corpus, tmp_path):
        out = tmp_path / "stages"
        assert run("prep", "--corpus", corpus["corpus"], "--controls",
                   corpus["controls"], "--out", out) == 0
        assert run("train", "--corpus", corpus["corpus"], "--controls",
                   corpus["controls"], "--out", out, "--member", 0,
                   "--hidden", 12, "--max-epochs", 3, "--overfit", 3,
                   "--seed", 5) == 0
        assert run("score", "--corpus", corpus["corpus"], "--controls",
                   corpus["controls"], "--model", out / "member00.mhrnn",
                   "--alphabet", out / "alphabet.json",
                   "--out", out / "rescored.json", "--seed", 5) == 0
        # score run standalone reproduces the matrix the worker wrote
        assert (out / "rescored.json").read_bytes() == \
            (out / "member00-matrix.json").read_bytes()
        assert run("combine", "--matrices", out / "member00-matrix.json",
                   out / "rescored.json", "--out", out / "combined.json") == 0
        assert run("cluster", "--corpus", corpus["corpus"], "--matrix",
                   out / "combined.json", "--out", out / "clustered") == 0
        part = load_clustering(out / "clustered/problem001/clustering.json")
        assert len(part.doc_ids) == 9
        assert run("eval", "--corpus", corpus["corpus"], "--out",
                   out / "clustered", "--truth", corpus["truth"]) == 0
        assert (out / "clustered/eval.csv").is_file()

    def test_cluster_strategy_override(self, corpus, tmp_path):
        out = tmp_path / "ovr"
        assert run("prep", "--corpus", corpus["corpus"], "--controls",
                   corpus["controls"], "--out", out) == 0
        assert run("train", "--corpus", corpus["corpus"], "--controls",
                   corpus["controls"], "--out", out, "--hidden", 10,
                   "--max-epochs", 2, "--overfit", 2) == 0
        assert run("cluster", "--corpus", corpus["corpus"], "--matrix",
                   out / "member00-matrix.json", "--out", out / "sl",
                   "--strategy", "single_link", "--c", 0.3) == 0
        assert (out / "sl/problem001/clustering.json").is_file()


class TestBaselineCommand:
    def test_baseline_outputs(self, corpus, tmp_path):
        out = tmp_path / "base"
        assert run("baseline", "--corpus", corpus["corpus"], "--out", out,
                   "--truth", corpus["truth"], "--shuffles", 200,
                   "--seed", 9) == 0
        part = load_clustering(out / "problem001/clustering.json")
        assert all(len(c) == 1 for c in part.clusters)
        links = load_ranking(out / "problem001/ranking.json")
        assert len(links.links) == 9 * 8 // 2
        with open(out / "baseline.csv", newline="") as f:
            rows = list(csv.reader(f))
        assert rows[0] == ["problem", "coward", "random MAP"]
        assert 0.0 < float(rows[1][2]) < 1.0


class TestRunConfig:
    def test_pipeline_from_config_file(self, corpus, tmp_path):
        cfg = {
            "seed": 23,
            "ensemble": [{"hidden_size": 10, "psn": 0.0, "leak": 0.0,
                          "overfit_epochs": 2, "direction": "forward",
                          "max_epochs": 3}],
        }
        cfg_path = tmp_path / "run.json"
        cfg_path.write_text(json.dumps(cfg), encoding="utf-8")
        out = tmp_path / "out"
        assert run("pipeline", "--corpus", corpus["corpus"], "--controls",
                   corpus["controls"], "--out", out, "--config",
                   cfg_path) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["seed"] == 23
        assert manifest["members"][0]["hyper"]["hidden_size"] == 10
        assert manifest["clusteriness"]["entries"]

    def test_rerun_from_manifest_reproduces_outputs(self, corpus, tmp_path):
        first = tmp_path / "first"
        assert run("pipeline", "--corpus", corpus["corpus"], "--controls",
                   corpus["controls"], "--out", first, "--members", 1,
                   "--scale", 0.06, "--seed", 31) == 0
        replay = tmp_path / "replay"
        assert run("pipeline", "--corpus", corpus["corpus"], "--controls",
                   corpus["controls"], "--out", replay, "--config",
                   first / "manifest.json") == 0
        for rel in ("matrix.json", "problem001/clustering.json",
                    "problem001/ranking.json"):
            assert (first / rel).read_bytes() == (replay / rel).read_bytes()

    def test_equivalences_flag(self, corpus, tmp_path):
        equiv = [{"tokens": ["a", "b"], "representative": "a"}]
        path = tmp_path / "equiv.json"
        path.write_text(json.dumps(equiv), encoding="utf-8")
        out = tmp_path / "prep"
        assert run("prep", "--corpus", corpus["corpus"], "--out", out,
                   "--equivalences", path) == 0
        alphabet = json.loads((out / "alphabet.json").read_text())
        assert "b" not in alphabet["symbols"]
        assert "a" in alphabet["symbols"]


class TestErrorReporting:
    def test_machine_readable_error(self, tmp_path, capsys):
        code = run("prep", "--corpus", tmp_path / "missing", "--out",
                   tmp_path / "out")
        assert code == 1
        err = json.loads(capsys.readouterr().err)
        assert err["error"] == "MissingDirectoryError"
        assert "missing" in err["message"]
