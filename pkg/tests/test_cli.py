import csv
import json

import numpy as np
import pytest

from policydelta import (
    ABExperiment,
    SyntheticConfig,
    ab_to_ope,
    bessel_factor,
    estimate_beta_star,
    gen_ab_experiment,
)
from policydelta.cli import main
from policydelta.equivalence import treatment_policies
from policydelta.io import read_dataset, write_dataset
from policydelta.report import RunReport


def write_json(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


@pytest.fixture
def ab_config(tmp_path):
    return write_json(tmp_path / "ab.json", {"framing": "AB", "n": 1000, "seed": 3, "p": 0.5,
                                             "ate": 0.5, "rho": 0.7})


@pytest.fixture
def ab_file(tmp_path, ab_config):
    out = tmp_path / "ab.jsonl"
    assert main(["simulate", "--config", ab_config, "--out", str(out)]) == 0
    return out


def run_json(capsys, argv):
    code = main(argv)
    return code, capsys.readouterr()


class TestSimulate:
    def test_writes_records(self, ab_file, capsys):
        assert len(ab_file.read_text().splitlines()) == 1000

    def test_summary(self, tmp_path, ab_config, capsys):
        code, out = run_json(capsys, ["simulate", "--config", ab_config, "--out", str(tmp_path / "x.jsonl")])
        summary = json.loads(out.out)
        assert code == 0
        assert summary["n"] == 1000 and summary["framing"] == "AB"
        assert 0.4 < summary["realised_p"] < 0.6

    def test_deterministic(self, tmp_path, ab_config):
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        main(["simulate", "--config", ab_config, "--out", str(a)])
        main(["simulate", "--config", ab_config, "--out", str(b)])
        assert a.read_bytes() == b.read_bytes()

    def test_malformed_config_names_key(self, tmp_path, capsys):
        cfg = write_json(tmp_path / "bad.json", {"n": 100, "p": "half"})
        code, out = run_json(capsys, ["simulate", "--config", cfg, "--out", str(tmp_path / "o.jsonl")])
        assert code == 2
        assert "'p'" in out.err

    def test_broken_json(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text('{"n": 100,, }')
        code, out = run_json(capsys, ["simulate", "--config", str(bad), "--out", str(tmp_path / "o.jsonl")])
        assert code == 2
        assert "line 1" in out.err

    def test_key_value_config(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("# AB experiment\nframing = \"AB\"\nn = 50\nseed = 1\np = 0.4\n")
        assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o.csv")]) == 0
        assert len(read_dataset(tmp_path / "o.csv")) == 50

    def test_unwritable_output(self, tmp_path, ab_config):
        assert main(["simulate", "--config", ab_config, "--out", str(tmp_path / "no" / "such" / "x.jsonl")]) == 3

    def test_ope_with_policy(self, tmp_path):
        cfg = write_json(tmp_path / "ope.json", {"framing": "OPE", "n": 200, "context_count": 2, "action_count": 3})
        out, pol = tmp_path / "ope.jsonl", tmp_path / "pi0.json"
        assert main(["simulate", "--config", cfg, "--out", str(out), "--policy-out", str(pol)]) == 0
        assert read_dataset(out).framing.value == "OPE"
        assert np.allclose(np.sum(json.loads(pol.read_text())["probabilities"], axis=1), 1.0)


class TestFileFormats:
    def test_csv_jsonl_equivalent(self, tmp_path):
        exp, _ = gen_ab_experiment(SyntheticConfig(n=30, seed=1))
        write_dataset(exp.d, tmp_path / "d.csv")
        write_dataset(exp.d, tmp_path / "d.jsonl")
        assert read_dataset(tmp_path / "d.csv") == read_dataset(tmp_path / "d.jsonl") == exp.d

    def test_csv_covariates_semicolon(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("context_id,covariates,action,reward,propensity\n0,1.5;2.5,0,1.0,0.5\n1,0;1,1,2.0,0.5\n")
        d = read_dataset(p)
        assert d.covariates.tolist() == [[1.5, 2.5], [0.0, 1.0]]

    def test_zero_propensity_exit_4(self, tmp_path):
        p = tmp_path / "d.jsonl"
        p.write_text('{"context_id":0,"covariates":[],"action":0,"reward":1,"propensity":0}\n'
                     '{"context_id":0,"covariates":[],"action":1,"reward":1,"propensity":0.5}\n')
        pol = write_json(tmp_path / "pi.json", [[1.0, 0.0]])
        pol2 = write_json(tmp_path / "pi2.json", [[0.0, 1.0]])
        assert main(["estimate", "--data", str(p), "--estimator", "dips", "--policy", pol,
                     "--policy-prime", pol2]) == 4


class TestEstimate:
    def test_dim(self, ab_file, capsys):
        code, out = run_json(capsys, ["estimate", "--data", str(ab_file), "--estimator", "dim"])
        assert code == 0
        rep = RunReport.from_json(out.out)
        assert rep.results[0].result.dof_loss == 2
        assert rep.results[0].name == "dim"
        assert RunReport.from_json(rep.to_json()) == rep

    def test_dips_needs_as_ope(self, ab_file, capsys):
        code, out = run_json(capsys, ["estimate", "--data", str(ab_file), "--estimator", "dips"])
        assert code == 2
        assert "--as-ope" in out.err

    def test_dim_on_ope_file(self, tmp_path, capsys):
        cfg = write_json(tmp_path / "ope.json", {"framing": "OPE", "n": 50})
        main(["simulate", "--config", cfg, "--out", str(tmp_path / "o.jsonl")])
        capsys.readouterr()
        assert main(["estimate", "--data", str(tmp_path / "o.jsonl"), "--estimator", "dim"]) == 2

    def test_dbips_auto_beta_echoed(self, ab_file, capsys):
        code, out = run_json(capsys, ["estimate", "--data", str(ab_file), "--estimator", "dbips",
                                      "--as-ope", "--beta", "auto", "--dof-loss", "2"])
        assert code == 0
        rep = RunReport.from_json(out.out)
        exp = ABExperiment.from_dataset(read_dataset(ab_file))
        expected = estimate_beta_star(ab_to_ope(exp, "empirical"), *treatment_policies())
        assert rep.config_echo["beta"] == pytest.approx(expected, abs=1e-12)
        assert rep.results[0].result.dof_loss == 2

    def test_dbips_matches_dim_point(self, ab_file, capsys):
        _, out_dim = run_json(capsys, ["estimate", "--data", str(ab_file), "--estimator", "dim"])
        _, out_ips = run_json(capsys, ["estimate", "--data", str(ab_file), "--estimator", "dbips", "--as-ope"])
        a = RunReport.from_json(out_dim.out).results[0].result.point
        b = RunReport.from_json(out_ips.out).results[0].result.point
        assert abs(a - b) < 1e-12

    def test_radim_and_ddr_with_model(self, ab_file, tmp_path, capsys):
        model = write_json(tmp_path / "f.json", {"kind": "action_agnostic", "coef": [0.7], "intercept": 0.0})
        code, out = run_json(capsys, ["estimate", "--data", str(ab_file), "--estimator", "radim", "--model", model])
        assert code == 0
        radim = RunReport.from_json(out.out).results[0].result
        code, out = run_json(capsys, ["estimate", "--data", str(ab_file), "--estimator", "ddr", "--as-ope",
                                      "--model", model])
        assert code == 0
        assert abs(RunReport.from_json(out.out).results[0].result.point - radim.point) < 1e-12

    def test_radim_needs_model(self, ab_file, capsys):
        assert main(["estimate", "--data", str(ab_file), "--estimator", "radim"]) == 2

    def test_ope_estimators_with_policy_files(self, tmp_path, capsys):
        cfg = write_json(tmp_path / "ope.json", {"framing": "OPE", "n": 400, "context_count": 2, "action_count": 2,
                                                 "noise_sd": 1.0, "seed": 4})
        data = tmp_path / "o.jsonl"
        main(["simulate", "--config", cfg, "--out", str(data)])
        pol = write_json(tmp_path / "pi.json", {"probabilities": [[0.9, 0.1], [0.2, 0.8]]})
        pol2 = write_json(tmp_path / "pi2.json", [[0.5, 0.5], [0.5, 0.5]])
        table = write_json(tmp_path / "f.json", {"kind": "action_aware", "table": [[0.1, 0.2], [0.3, 0.4]]})
        for est, extra in (("dips", []), ("dbips", ["--beta", "0.3"]), ("ddr", ["--model", table]),
                           ("dr", ["--model", table])):
            code = main(["estimate", "--data", str(data), "--estimator", est, "--policy", pol,
                         "--policy-prime", pol2, *extra])
            assert code == 0, est
        capsys.readouterr()

    def test_max_weight_flags_bias(self, ab_file, capsys):
        code, out = run_json(capsys, ["estimate", "--data", str(ab_file), "--estimator", "dips", "--as-ope",
                                      "--max-weight", "1.5"])
        assert code == 0
        assert RunReport.from_json(out.out).biased is True
        assert "biases" in out.err


class TestVerify:
    def balanced_file(self, tmp_path):
        exp, _ = gen_ab_experiment(SyntheticConfig(n=400, seed=9, p=0.5, rho=0.5))
        idx_t = np.flatnonzero(exp.d.action == 0)[:150]
        idx_c = np.flatnonzero(exp.d.action == 1)[:150]
        d = exp.d.subset(np.sort(np.concatenate([idx_t, idx_c])))
        path = tmp_path / "bal.jsonl"
        write_dataset(d, path)
        return path

    def test_balanced_exact(self, tmp_path, capsys):
        path = self.balanced_file(tmp_path)
        code, out = run_json(capsys, ["verify", "--data", str(path), "--mode", "empirical", "--dof-loss", "2",
                                      "--expect", "exact"])
        assert code == 0
        rep = RunReport.from_json(out.out).results[0].result
        assert rep.verdict.value == "ExactMatch"

    def test_dof_one_ratio(self, tmp_path, capsys):
        path = self.balanced_file(tmp_path)
        code, out = run_json(capsys, ["verify", "--data", str(path), "--dof-loss", "1"])
        rep = RunReport.from_json(out.out).results[0].result
        assert code == 0
        assert rep.variance_ratio == pytest.approx(bessel_factor(300), rel=1e-12)

    def test_unbalanced_approx(self, tmp_path, capsys):
        cfg = write_json(tmp_path / "c.json", {"n": 5000, "seed": 2, "p": 0.2, "rho": 0.5})
        code, out = run_json(capsys, ["verify", "--config", cfg, "--which", "radim"])
        rep = RunReport.from_json(out.out).results[0].result
        assert code == 0
        assert rep.verdict.value == "ApproxMatch"
        assert rep.variance_ratio != 1.0
        assert main(["verify", "--config", cfg, "--expect", "exact"]) == 1

    def test_bad_input(self, tmp_path, capsys):
        assert main(["verify", "--data", str(tmp_path / "missing.jsonl")]) == 3
        assert main(["verify"]) == 2


class TestSweep:
    def test_single_replication_flagged(self, tmp_path, ab_config, capsys):
        out = tmp_path / "s.csv"
        code, res = run_json(capsys, ["sweep", "--config", ab_config, "--sweep", "rho=0,0.5",
                                      "--replications", "1", "--out", str(out)])
        assert code == 0
        rows = list(csv.DictReader(out.open()))
        assert len(rows) == 2
        assert rows[0]["empirical_variance_available"] == "0"
        assert not any(k.endswith("_empirical_variance") for k in rows[0])
        assert "note" in json.loads(res.out)

    def test_two_axes(self, tmp_path, ab_config, capsys):
        out = tmp_path / "s.csv"
        code = main(["sweep", "--config", ab_config, "--sweep", "p=0.3,0.5", "--sweep", "n=100,200",
                     "--replications", "5", "--out", str(out)])
        assert code == 0
        rows = list(csv.DictReader(out.open()))
        assert [(r["p"], r["n"]) for r in rows] == [("0.3", "100"), ("0.3", "200"), ("0.5", "100"), ("0.5", "200")]
        assert "dim_coverage" in rows[0] and "ddr_empirical_variance" in rows[0]

    def test_bad_axis(self, tmp_path, ab_config, capsys):
        assert main(["sweep", "--config", ab_config, "--sweep", "ate=1,2", "--out", str(tmp_path / "s.csv")]) == 2

    def test_deterministic(self, tmp_path, ab_config, capsys):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        for out in (a, b):
            main(["sweep", "--config", ab_config, "--sweep", "rho=0.5", "--replications", "4", "--out", str(out)])
        assert a.read_text() == b.read_text()
