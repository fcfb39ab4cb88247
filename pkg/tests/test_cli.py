import json
import math

import numpy as np
import pytest

import dirmc
from dirmc.cli import main
from dirmc.instances import save_corpus, save_topic_matrix


def run(args):
    return main([str(a) for a in args])


@pytest.fixture(scope="module")
def instance_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "inst.json"
    code = run(["gen-instance", "--K", 5, "--V", 120, "--m", 1, "--seed", 7,
                "--out", path])
    assert code == 0
    return path


class TestGenInstance:
    def test_planted_active_set_in_file(self, instance_file):
        data = json.loads(instance_file.read_text())
        assert data["active_set"] == [0]
        assert data["m"] == 1
        assert "manifest" in data

    def test_interior_instance(self, tmp_path):
        out = tmp_path / "interior.json"
        assert run(["gen-instance", "--K", 4, "--V", 80, "--m", 0, "--seed", 3,
                    "--out", out]) == 0
        data = json.loads(out.read_text())
        assert data["m"] == 0 and data["active_set"] == []

    def test_m_out_of_range_exits_2(self, tmp_path):
        code = run(["gen-instance", "--K", 2, "--V", 50, "--m", 2, "--seed", 1,
                    "--out", tmp_path / "x.json"])
        assert code == 2

    def test_generation_failure_exits_3(self, tmp_path):
        code = run(["gen-instance", "--K", 2, "--V", 40, "--m", 1,
                    "--lambda-min", 0.95, "--phi-prior", 5.0, "--max-retries", 3,
                    "--seed", 0, "--out", tmp_path / "x.json"])
        assert code == 3


class TestCheckKkt:
    def test_recovers_planted_set(self, instance_file, tmp_path, capsys):
        out = tmp_path / "report.json"
        assert run(["check-kkt", "--instance", instance_file, "--json", out]) == 0
        report = json.loads(out.read_text())
        assert report["active_set"] == [0]
        assert report["planted_recovered"] is True
        assert report["kkt_residual"] < 1e-6
        assert all(lam > 0 for lam in report["lambda"])


class TestEstimate:
    def test_gamma_one_rejected_without_override(self, instance_file, tmp_path):
        code = run(["estimate", "--instance", instance_file, "--method", "is",
                    "--n", 100, "--N", 1000, "--gamma", 1.0, "--seed", 1,
                    "--out", tmp_path / "r.json"])
        assert code == 2

    def test_gamma_one_allowed_with_override(self, instance_file, tmp_path):
        code = run(["estimate", "--instance", instance_file, "--method", "is",
                    "--n", 100, "--N", 1000, "--gamma", 1.0, "--allow-unstable-gamma",
                    "--seed", 1, "--out", tmp_path / "r.json"])
        assert code == 0

    def test_mc_n_zero_gives_log_one(self, instance_file, tmp_path):
        out = tmp_path / "r.json"
        assert run(["estimate", "--instance", instance_file, "--method", "mc",
                    "--n", 0, "--N", 2000, "--seed", 1, "--out", out]) == 0
        data = json.loads(out.read_text())
        assert data["estimate"]["log_mean"] == 0.0

    def test_byte_identical_reruns(self, instance_file, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        args = ["estimate", "--instance", instance_file, "--method", "is",
                "--n", 500, "--N", 4000, "--gamma", 0.9, "--seed", 11]
        assert run(args + ["--out", a]) == 0
        assert run(args + ["--out", b]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_cv_reports_coefficient(self, instance_file, tmp_path):
        out = tmp_path / "cv.json"
        assert run(["estimate", "--instance", instance_file, "--method", "cv",
                    "--n", 200, "--N", 4000, "--seed", 2, "--out", out]) == 0
        data = json.loads(out.read_text())
        assert "c_star" in data["cv"] and "rho_sq" in data["cv"]
        assert 0.0 <= data["cv"]["rho_sq"] <= 1.0

    def test_config_file_defaults(self, instance_file, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({"N": 1500, "seed": 9}))
        out = tmp_path / "r.json"
        assert run(["--config", cfg_path, "estimate", "--instance", instance_file,
                    "--method", "mc", "--n", 10, "--out", out]) == 0
        data = json.loads(out.read_text())
        assert data["estimate"]["num_samples"] == 1500
        assert data["estimate"]["seed"] == 9


class TestExperimentCommand:
    def test_mse_ratio_summary(self, tmp_path):
        csv_path, summary_path = tmp_path / "g.csv", tmp_path / "s.json"
        code = run(["experiment", "--kind", "mse-ratio", "--K", 4, "--V", 80,
                    "--m", 0, "--instances", 2, "--N", 2000,
                    "--n-grid", "300,800,1500,3000,6000", "--gamma", 0.9,
                    "--seed", 5, "--out-csv", csv_path, "--out-summary", summary_path])
        assert code == 0
        summary = json.loads(summary_path.read_text())
        assert summary["theoretical_slope"] == pytest.approx(-0.9 * 1.5)
        assert len(summary["per_n"]) == 5
        lines = csv_path.read_text().splitlines()
        assert lines[0] == "instance_id,n,quantity,value,reference_policy"
        assert len(lines) == 1 + 2 * 5

    def test_grid_too_small_exits_2(self, tmp_path):
        code = run(["experiment", "--kind", "mse-ratio", "--K", 3, "--V", 60,
                    "--instances", 1, "--N", 500, "--n-grid", "100,200",
                    "--seed", 1, "--out-csv", tmp_path / "g.csv",
                    "--out-summary", tmp_path / "s.json"])
        assert code == 2

    def test_byte_identical_across_threads(self, tmp_path):
        outs = {}
        for threads in (1, 4):
            csv_path = tmp_path / f"g{threads}.csv"
            summary_path = tmp_path / f"s{threads}.json"
            code = run(["experiment", "--kind", "bias", "--K", 3, "--V", 60,
                        "--instances", 2, "--N", 1500, "--n-grid", "100,400",
                        "--gamma", 0.9, "--threads", threads, "--seed", 3,
                        "--out-csv", csv_path, "--out-summary", summary_path])
            assert code == 0
            outs[threads] = (csv_path.read_bytes(), summary_path.read_bytes())
        assert outs[1] == outs[4]

    def test_sparsity_kind(self, tmp_path):
        csv_path, summary_path = tmp_path / "sp.csv", tmp_path / "sp.json"
        code = run(["experiment", "--kind", "sparsity", "--K", 4, "--V", 60,
                    "--epsilon-grid", "1e-4,0.5", "--runs-per-epsilon", 2,
                    "--n", 300, "--N", 2000, "--seed", 2,
                    "--out-csv", csv_path, "--out-summary", summary_path])
        assert code == 0
        summary = json.loads(summary_path.read_text())
        assert {entry["epsilon"] for entry in summary["per_epsilon"]} <= {1e-4, 0.5}

    def test_emit_plot_files(self, tmp_path):
        csv_path, summary_path = tmp_path / "g.csv", tmp_path / "s.json"
        gp = tmp_path / "plot.gp"
        svg = tmp_path / "plot.svg"
        code = run(["experiment", "--kind", "bias", "--K", 3, "--V", 60,
                    "--instances", 1, "--N", 800, "--n-grid", "100,300",
                    "--gamma", 0.9, "--seed", 4, "--out-csv", csv_path,
                    "--out-summary", summary_path, "--emit-gnuplot", gp,
                    "--emit-svg", svg])
        assert code == 0
        assert gp.read_text().startswith("set datafile separator")
        assert svg.stat().st_size > 0


class TestEvalCorpus:
    @pytest.fixture(scope="class")
    def corpus_setup(self, tmp_path_factory):
        base = tmp_path_factory.mktemp("corpus")
        stream = dirmc.RandomStream(31)
        phi = dirmc.gen_sparsity_controlled_phi(3, 50, 0.3, stream)
        topics = base / "topics.json"
        save_topic_matrix(topics, phi)
        rng = np.random.default_rng(1)
        docs = [dirmc.sample_document(phi, dirmc.SimplexPoint(rng.dirichlet(np.ones(3))),
                                      200 * (i + 1), dirmc.RandomStream(40 + i))
                for i in range(3)]
        corpus = base / "docs.jsonl"
        save_corpus(corpus, docs)
        return topics, corpus

    def test_csv_columns_and_determinism(self, corpus_setup, tmp_path):
        topics, corpus = corpus_setup
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        args = ["eval-corpus", "--topics", topics, "--corpus", corpus,
                "--method", "is", "--gamma", 0.9, "--N", 3000, "--seed", 6]
        assert run(args + ["--out-csv", a]) == 0
        assert run(args + ["--out-csv", b]) == 0
        assert a.read_bytes() == b.read_bytes()
        lines = a.read_text().splitlines()
        assert lines[0].startswith("doc_id,n,m,min_lambda,log_mean")
        assert len(lines) == 4

    def test_single_topic_document(self, tmp_path):
        # p equal to one topic row: the maximizer concentrates on that topic
        # and the value is the negative entropy of the row
        phi = dirmc.gen_sparsity_controlled_phi(3, 40, 0.0, dirmc.RandomStream(50))
        topics = tmp_path / "topics.json"
        save_topic_matrix(topics, phi)
        counts = {v: int(round(1000 * phi[1, v])) for v in range(40) if phi[1, v] > 0}
        doc = dirmc.CorpusDocument(term_frequencies=counts,
                                   n=sum(counts.values()))
        corpus = tmp_path / "docs.jsonl"
        save_corpus(corpus, [doc])
        out = tmp_path / "eval.csv"
        assert run(["eval-corpus", "--topics", topics, "--corpus", corpus,
                    "--method", "cv", "--N", 2000, "--seed", 7,
                    "--out-csv", out]) == 0
        inst = dirmc.to_lda_instance(phi, doc)
        rep = dirmc.kkt_report(inst, dirmc.cover_maximize(inst).theta)
        assert rep.theta_star.coords[1] > 0.99
        obj = dirmc.LdaObjective(inst)
        p = inst.p[inst.p > 0]
        entropy = -float(np.sum(p * np.log(p)))
        assert obj.value(rep.theta_star) >= -entropy - 0.01
