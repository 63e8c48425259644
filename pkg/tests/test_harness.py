import csv
import json
import math

import numpy as np
import pytest

from adascale import cli
from adascale.exceptions import ConfigError, MismatchedTraces
from adascale.harness import (
    load_config,
    load_trace,
    parse_config,
    run_experiment,
    summarize,
    verify_propositions,
)
from adascale.trust_region import RunRecord

SMALL = """
[experiment]
name = "smoke"
output_dir = "out"
base_seed = 4
n_replicates = 2
budget = 20
n_init = 5
variants = ["AdaScaleTuRBO", "TuRBOMLE"]

[benchmark]
name = "Sphere"
dim = 2

[optimizer]
fit_restarts = 2
"""


def base_data(**experiment):
    data = {
        "experiment": {"output_dir": "o", "budget": 20, "variants": ["AdaScaleTuRBO"]},
        "benchmark": {"name": "Rastrigin", "dim": 3},
    }
    data["experiment"].update(experiment)
    return data


def record(values, variant="A", valid=True):
    y = np.asarray(values, dtype=float)
    n = y.size
    return RunRecord(0, variant, np.zeros((n, 1)), y, np.minimum.accumulate(y), np.ones(n), np.zeros(n, bool), valid)


@pytest.fixture
def small_config(tmp_path):
    path = tmp_path / "exp.toml"
    path.write_text(SMALL)
    return path


class TestConfig:
    def test_defaults(self):
        cfg = parse_config(base_data(), "/base")
        assert (cfg.n_init, cfg.refit_every, cfg.n_replicates, cfg.base_seed, cfg.L0) == (10, 10, 10, 0, 0.8)
        assert str(cfg.output_dir) == "/base/o"

    def test_load_file(self, small_config):
        cfg = load_config(small_config)
        assert cfg.variants == ("AdaScaleTuRBO", "TuRBOMLE")
        assert cfg.output_dir == small_config.parent / "out"
        assert cfg.fit_restarts == 2

    @pytest.mark.parametrize(
        "change,key",
        [
            ({"budget": 10}, "experiment.budget"),
            ({"budget": "300"}, "experiment.budget"),
            ({"n_replicates": 0}, "experiment.n_replicates"),
            ({"variants": ["BestBO"]}, "experiment.variants"),
            ({"variants": []}, "experiment.variants"),
            ({"L0": 0.001}, "experiment.L0"),
            ({"typo": 1}, "experiment.typo"),
            ({"n_init": True}, "experiment.n_init"),
        ],
    )
    def test_errors_name_the_key(self, change, key):
        with pytest.raises(ConfigError, match=key.replace(".", r"\.")):
            parse_config(base_data(**change))

    def test_missing_sections(self):
        with pytest.raises(ConfigError, match="benchmark"):
            parse_config({"experiment": base_data()["experiment"]})
        with pytest.raises(ConfigError, match="benchmark.name"):
            parse_config({**base_data(), "benchmark": {"name": "Nope", "dim": 2}})

    def test_ablation_side_lengths(self):
        for L0 in (0.8, 0.4, 0.2):
            assert parse_config(base_data(L0=L0)).optimizer_config().L_init == L0

    def test_bad_toml(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text("[experiment\n")
        with pytest.raises(ConfigError):
            load_config(path)


class TestSummarize:
    def test_odd_median(self):
        table = summarize([record([v]) for v in (1.0, 2.0, 3.0)])
        assert table.final["A"].median == 2.0

    def test_even_median_and_stderr(self):
        table = summarize([record([v]) for v in (1.0, 2.0, 3.0, 4.0)])
        s = table.final["A"]
        assert s.median == 2.5
        assert s.stderr == pytest.approx(0.6454972243679028, rel=1e-14)
        assert (s.q25, s.q75, s.mean) == (1.75, 3.25, 2.5)

    def test_single_replicate_warns(self):
        table = summarize([record([3.0, 1.0])])
        assert table.final["A"].stderr == 0.0
        assert table.warnings

    def test_curves_follow_best_so_far(self):
        table = summarize([record([3.0, 1.0, 2.0]), record([2.0, 2.0, 0.5])])
        np.testing.assert_array_equal(table.curves["A"]["median"], [2.5, 1.5, 0.75])

    def test_mismatched_lengths(self):
        with pytest.raises(MismatchedTraces):
            summarize([record([1.0, 2.0]), record([1.0])])

    def test_invalid_records_skipped(self):
        table = summarize([record([1.0, 2.0]), record([5.0], valid=False)])
        assert len(table.final["A"].values) == 1


class TestRunExperiment:
    def test_artifacts_and_determinism(self, small_config, tmp_path):
        cfg = load_config(small_config)
        result = run_experiment(cfg)
        paths = sorted(p.name for p in cfg.output_dir.glob("trace_*.csv"))
        assert paths == [
            "trace_AdaScaleTuRBO_r000.csv",
            "trace_AdaScaleTuRBO_r001.csv",
            "trace_TuRBOMLE_r000.csv",
            "trace_TuRBOMLE_r001.csv",
        ]
        for p in cfg.output_dir.glob("trace_*.csv"):
            rows = list(csv.reader(p.open()))
            assert rows[0] == ["iter", "y", "best_so_far", "L_at_proposal", "restart_flag", "x_0", "x_1"]
            assert len(rows) == 21
        first = {p.name: p.read_bytes() for p in cfg.output_dir.iterdir()}
        run_experiment(cfg)
        second = {p.name: p.read_bytes() for p in cfg.output_dir.iterdir()}
        assert first == second
        assert set(first) >= {"summary.csv", "final_best.csv", "summary.json"}
        assert result.summary.variants == ("AdaScaleTuRBO", "TuRBOMLE")

    def test_shared_initial_design(self, small_config):
        cfg = load_config(small_config)
        run_experiment(cfg)
        for r in range(2):
            _, _, a = load_trace(cfg.output_dir / f"trace_AdaScaleTuRBO_r{r:03d}.csv")
            _, _, b = load_trace(cfg.output_dir / f"trace_TuRBOMLE_r{r:03d}.csv")
            np.testing.assert_array_equal(a.x[:5], b.x[:5])
            np.testing.assert_array_equal(a.y[:5], b.y[:5])

    def test_traces_round_trip_and_summaries_recompute(self, small_config, tmp_path):
        cfg = load_config(small_config)
        result = run_experiment(cfg)
        rec = result.records[("TuRBOMLE", 1)]
        variant, rep, loaded = load_trace(cfg.output_dir / "trace_TuRBOMLE_r001.csv")
        assert (variant, rep) == ("TuRBOMLE", 1)
        assert loaded.y.tobytes() == rec.y.tobytes()
        assert loaded.x.tobytes() == rec.x.tobytes()
        out = tmp_path / "re.csv"
        code = cli.main(["summarize", "--traces", str(cfg.output_dir / "trace_*.csv"), "--out", str(out)])
        assert code == 0
        # glob order is alphabetical, run order follows the config; both match here
        assert out.read_bytes() == (cfg.output_dir / "summary.csv").read_bytes()
        assert (tmp_path / "re_final.csv").read_bytes() == (cfg.output_dir / "final_best.csv").read_bytes()

    def test_jobs_do_not_change_outputs(self, small_config, tmp_path):
        cfg = load_config(small_config)
        run_experiment(cfg, jobs=1)
        serial = {p.name: p.read_bytes() for p in cfg.output_dir.iterdir()}
        run_experiment(cfg, jobs=2)
        parallel = {p.name: p.read_bytes() for p in cfg.output_dir.iterdir()}
        assert serial == parallel

    def test_summary_json(self, small_config):
        cfg = load_config(small_config)
        run_experiment(cfg)
        data = json.loads((cfg.output_dir / "summary.json").read_text())
        assert data["final_best"]["AdaScaleTuRBO"]["n_replicates"] == 2
        assert data["invalid_runs"] == []
        assert data["base_seed"] == 4


class TestVerifyPropositions:
    def test_all_cells_pass(self):
        rows = verify_propositions(n_pairs=20_000)
        assert len(rows) == 12 + 2 * 6
        assert all(r[-1] for r in rows)


class TestCli:
    def test_bench_eval(self, capsys):
        assert cli.main(["bench", "eval", "--name", "Rastrigin", "--dim", "3", "--point", "0.5,0.5,0.5"]) == 0
        assert capsys.readouterr().out.strip() == "0"

    def test_bench_eval_broadcast(self, capsys):
        assert cli.main(["bench", "eval", "--name", "Schwefel", "--dim", "2", "--point", "0.5"]) == 0
        assert float(capsys.readouterr().out) == 418.9829 * 2

    def test_bench_out_of_domain(self, capsys):
        assert cli.main(["bench", "eval", "--name", "Sphere", "--dim", "1", "--point", "2"]) == 1
        assert "outside" in capsys.readouterr().err

    def test_bench_wrong_length(self):
        assert cli.main(["bench", "eval", "--name", "Sphere", "--dim", "3", "--point", "0.1,0.2"]) == 1

    def test_mig(self, tmp_path):
        out = tmp_path / "mig.csv"
        args = ["mig", "--dims", "20,40", "--sides", "0.8,0.1", "--nmax", "30", "--out", str(out)]
        assert cli.main(args) == 0
        rows = list(csv.reader(out.open()))
        assert rows[0] == ["D", "L", "lengthscale", "noise_variance", "N", "ig_nats", "ig_independent_nats"]
        assert len(rows) == 1 + 2 * 2 * 30
        assert float(rows[1][6]) == pytest.approx(0.5 * math.log(101))

    def test_verify(self, tmp_path, capsys):
        out = tmp_path / "v.csv"
        assert cli.main(["verify", "props", "--out", str(out), "--pairs", "20000"]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert len(lines) == 24 and all(line.startswith("PASS") for line in lines)

    def test_run(self, small_config, capsys):
        assert cli.main(["run", "--config", str(small_config)]) == 0
        assert "AdaScaleTuRBO" in capsys.readouterr().out

    def test_run_config_error(self, tmp_path, capsys):
        path = tmp_path / "bad.toml"
        path.write_text('[experiment]\noutput_dir = "o"\nbudget = 5\nvariants = ["TuRBOMLE"]\n'
                        '[benchmark]\nname = "Sphere"\ndim = 2\n')
        assert cli.main(["run", "--config", str(path)]) == 1
        assert "experiment.budget" in capsys.readouterr().err

    def test_summarize_no_match(self, tmp_path):
        assert cli.main(["summarize", "--traces", str(tmp_path / "none*.csv"), "--out", str(tmp_path / "s.csv")]) == 1
