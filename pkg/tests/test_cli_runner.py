import json

import numpy as np
import pytest

from ctbench.cli import main
from ctbench.config import load_config
from ctbench.errors import EmptyYear
from ctbench.runner import (
    aggregate_yearly,
    chain_curves,
    derive_seed,
    fee_label,
    run_benchmark,
)
from ctbench.strategies import simulate
from ctbench.tasks import run_stat_arb
from ctbench.tsg import PcaReconstructor
from conftest import FIXTURE5, planted_stat_arb_market


def small_config(out_dir=None, models=("passthrough", "gaussian")):
    return load_config({
        "data_dir": str(FIXTURE5),
        "out_dir": out_dir,
        "window_hours": 720,
        "seed": 0,
        "fees": [0.0, 0.0003],
        "tasks": {
            "predictive_utility": {
                "step_hours": 480,
                "models": list(models),
                "strategies": ["half_ls", "pw"],
                "forecaster": {"algorithm": "ridge"},
            },
            "stat_arb": {"step_hours": 240, "models": ["pca:1"]},
        },
    })


class TestHelpers:
    def test_derive_seed_stable(self):
        assert derive_seed(0, "a", 1) == derive_seed(0, "a", 1)
        assert derive_seed(0, "a", 1) != derive_seed(1, "a", 1)

    def test_fee_label(self):
        assert fee_label(0.0) == "fee0bp"
        assert fee_label(0.0003) == "fee3bp"
        assert fee_label(0.00025) == "fee2.5bp"

    def test_chaining_matches_seeded_simulation(self):
        rng = np.random.default_rng(1)
        returns = rng.normal(0, 0.01, (3, 40))
        weights = rng.normal(size=(3, 40)) / 3.0
        first = simulate(weights[:, :20], returns[:, :20], 0.0003)
        second = simulate(weights[:, 20:], returns[:, 20:], 0.0003)
        chained = chain_curves([first, second], 10_000.0, 0.0003)
        # chaining growth factors == reinvesting the first window's final equity
        reinvested = simulate(weights[:, 20:], returns[:, 20:], 0.0003,
                              initial=first.final)
        np.testing.assert_allclose(chained.equity[20:], reinvested.equity, rtol=1e-12)


class TestAggregateYearly:
    def make_results(self):
        results = []
        for seed in range(3):
            split = planted_stat_arb_market(seed, n=10, train=2000, test=240)
            results.append(run_stat_arb(split, PcaReconstructor(1), fees=(0.0,)))
        return results

    def test_year_groups_and_all(self):
        results = self.make_results()
        reports = aggregate_yearly(results, [("stat_arb", 0.0)], 10_000.0)
        years = {r.year for r in reports}
        assert "all" in years and "2021" in years
        all_report = next(r for r in reports if r.year == "all")
        assert all_report.splits == 3

    def test_year_filter_and_empty_year(self):
        results = self.make_results()
        reports = aggregate_yearly(results, [("stat_arb", 0.0)], 10_000.0, year="2021")
        assert {r.year for r in reports} == {"2021"}
        with pytest.raises(EmptyYear):
            aggregate_yearly(results, [("stat_arb", 0.0)], 10_000.0, year="1999")

    def test_boundary_split_assigned_to_start_year(self):
        # planted market starts 2021-01-01; all test windows start in 2021
        results = self.make_results()
        reports = aggregate_yearly(results, [("stat_arb", 0.0)], 10_000.0)
        assert not any(r.year == "2022" for r in reports)


class TestRunBenchmark:
    def test_report_cardinality_and_outputs(self, tmp_path):
        config = small_config()
        summary = run_benchmark(config, tmp_path / "out")
        assert summary.all_ok
        # predictive: 2 models x 2 strategies x 2 fees x (2021 + all)
        # stat-arb:   1 model  x 1 rule       x 2 fees x (2021 + all)
        predictive = [r for r in summary.reports if r.task == "predictive_utility"]
        stat_arb = [r for r in summary.reports if r.task == "stat_arb"]
        assert len(predictive) == 2 * 2 * 2 * 2
        assert len(stat_arb) == 1 * 1 * 2 * 2
        out = tmp_path / "out"
        assert (out / "manifest.json").is_file()
        assert (out / "timings.json").is_file()
        assert (out / "metrics" / "all.csv").is_file()
        assert len(list((out / "metrics").glob("*.json"))) == len(summary.reports)
        assert len(list((out / "equity").glob("*.csv"))) == 2 * 2 * 2 + 1 * 2
        assert len(list((out / "ranks").glob("*.csv"))) == 2  # predictive 2021 + all

    def test_manifest_contents(self, tmp_path):
        config = small_config()
        run_benchmark(config, tmp_path / "out")
        manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
        assert manifest["config_hash"] == config.config_hash()
        assert manifest["data"]["assets"] == ["ADAUSDT", "BTCUSDT", "ETHUSDT",
                                              "SOLUSDT", "XRPUSDT"]
        assert manifest["cells"]["failed"] == []
        assert manifest["task_plans"]["predictive_utility"]["offsets"] == [720, 1200]

    def test_missing_bundle_isolated(self, tmp_path):
        bundles = tmp_path / "external"
        bundles.mkdir()
        config = small_config(models=("passthrough", str(bundles)))
        summary = run_benchmark(config, tmp_path / "out")
        assert not summary.all_ok
        assert all(f["model"] == "external" for f in summary.failed)
        ok_models = {r.model for r in summary.reports}
        assert "passthrough" in ok_models and "pca_1" in ok_models

    def test_capability_skips_are_not_failures(self, tmp_path):
        config = load_config({
            "data_dir": str(FIXTURE5),
            "window_hours": 720,
            "fees": [0.0],
            "tasks": {
                "stat_arb": {"step_hours": 480, "models": ["block_bootstrap", "pca:1"]},
            },
        })
        summary = run_benchmark(config, tmp_path / "out")
        assert summary.all_ok
        assert all(s["model"] == "block_bootstrap" for s in summary.skipped)
        assert len(summary.skipped) == 2  # one per split

    def test_jobs_parallel_matches_serial(self, tmp_path):
        config = small_config()
        run_benchmark(config, tmp_path / "serial", jobs=1)
        run_benchmark(config, tmp_path / "parallel", jobs=4)
        serial = (tmp_path / "serial" / "metrics" / "all.csv").read_bytes()
        parallel = (tmp_path / "parallel" / "metrics" / "all.csv").read_bytes()
        assert serial == parallel


class TestCli:
    def write_cli_config(self, tmp_path):
        payload = {
            "data_dir": str(FIXTURE5),
            "window_hours": 720,
            "fees": [0.0],
            "tasks": {"stat_arb": {"step_hours": 480, "models": ["pca:1"]}},
        }
        path = tmp_path / "bench.json"
        path.write_text(json.dumps(payload))
        return path

    def test_run_rank_stats(self, tmp_path, capsys):
        config_path = self.write_cli_config(tmp_path)
        out = tmp_path / "out"
        assert main(["run", "--config", str(config_path), "--out", str(out)]) == 0
        assert (out / "manifest.json").is_file()
        capsys.readouterr()

        assert main(["rank", "--in", str(out)]) == 0
        capsys.readouterr()

        assert main(["stats", "--data", str(FIXTURE5),
                     "--json", str(tmp_path / "stats.json")]) == 0
        printed = capsys.readouterr().out
        assert "BTCUSDT" in printed
        stats = json.loads((tmp_path / "stats.json").read_text())
        assert set(stats["hour_counts"]) == {str(h) for h in range(24)}

    def test_exit_code_on_failed_cell(self, tmp_path):
        bundles = tmp_path / "ext"
        bundles.mkdir()
        payload = {
            "data_dir": str(FIXTURE5),
            "window_hours": 720,
            "fees": [0.0],
            "tasks": {"stat_arb": {"step_hours": 480, "models": [str(bundles)]}},
        }
        config_path = tmp_path / "bench.json"
        config_path.write_text(json.dumps(payload))
        assert main(["run", "--config", str(config_path),
                     "--out", str(tmp_path / "out")]) == 1

    def test_seed_override_changes_hash(self, tmp_path):
        config_path = self.write_cli_config(tmp_path)
        main(["run", "--config", str(config_path), "--out", str(tmp_path / "a")])
        main(["run", "--config", str(config_path), "--out", str(tmp_path / "b"),
              "--seed", "7"])
        hash_a = json.loads((tmp_path / "a" / "manifest.json").read_text())["config_hash"]
        hash_b = json.loads((tmp_path / "b" / "manifest.json").read_text())["config_hash"]
        assert hash_a != hash_b

    def test_config_error_exit_code(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"data_dir": str(FIXTURE5), "models": ["gaussian"],
                                   "slippage": 1}))
        assert main(["run", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
