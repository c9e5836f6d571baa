import json
import math

import numpy as np
import pandas as pd
import pytest

from src.config import ExperimentKind
from src.distributions.families import asset_theta
from src.errors import ConfigError, DataFormatError, DecompositionError, HypothesisViolationError
from src.harness import io
from src.harness.backtest import run_backtest
from src.harness.experiments import (
    TRUTH_RUN,
    build_set,
    run_portfolio_experiment,
    run_queue_experiment,
    run_set_geometry,
    summarize,
)
from src.harness.guarantee_lab import binomial_interval, run_guarantee_lab
from src.copulas.copula import CopulaKind
from src.bayes.credible import SplitRule
from src.copulas.regimes import RegimeTag
from src.harness.repeats import regime_from_name, repeat_jobs

ASSETS = {"kind": "two_point_assets", "dimension": 4}


def write_lines(path, *lines):
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_manifest(out_dir):
    return json.loads((out_dir / "manifest.json").read_text(encoding="utf-8"))


class TestReturnsCsv:
    """Ingestion of return histories and correlation matrices."""

    def test_reads_header_and_rows(self, returns_csv):
        """Test asset names and the period count of a well-formed file."""
        data = io.ingest_returns_csv(returns_csv)
        assert data.names == ("a", "b", "c")
        assert data.matrix.shape == (40, 3)
        assert data.n_periods == 40

    @pytest.mark.parametrize(
        "lines",
        [
            ("",),
            ("a,b",),
            ("a,b", "0.01,x"),
            ("a,b", "0.01,"),
            ("a,b", "0.01,0.02", "0.01,0.02,0.03,0.04"),
            ("a,b", "0.01,inf"),
        ],
        ids=["empty", "header-only", "non-numeric", "missing", "ragged", "non-finite"],
    )
    def test_malformed_files(self, tmp_path, lines):
        """Test that each malformed layout is a data format error."""
        path = write_lines(tmp_path / "bad.csv", *lines)
        with pytest.raises(DataFormatError):
            io.ingest_returns_csv(path)

    def test_missing_file(self, tmp_path):
        """Test that an absent path is a data format error."""
        with pytest.raises(DataFormatError):
            io.ingest_returns_csv(tmp_path / "absent.csv")

    def test_correlation_with_label_column(self, tmp_path):
        """Test that a leading label column is dropped."""
        path = write_lines(tmp_path / "corr.csv", "asset,a,b", "a,1.0,0.3", "b,0.3,1.0")
        matrix = io.ingest_correlation_csv(path, ["a", "b"])
        assert matrix == pytest.approx(np.array([[1.0, 0.3], [0.3, 1.0]]))

    def test_correlation_header_mismatch(self, tmp_path):
        """Test that the header must name the return columns in order."""
        path = write_lines(tmp_path / "corr.csv", "b,a", "1.0,0.3", "0.3,1.0")
        with pytest.raises(DataFormatError):
            io.ingest_correlation_csv(path, ["a", "b"])

    def test_correlation_must_be_square(self, tmp_path):
        """Test that a non-square matrix is a data format error."""
        path = write_lines(tmp_path / "corr.csv", "a,b", "1.0,0.3")
        with pytest.raises(DataFormatError):
            io.ingest_correlation_csv(path)

    def test_correlation_must_be_positive_definite(self, tmp_path):
        """Test that an indefinite matrix is rejected."""
        path = write_lines(tmp_path / "corr.csv", "a,b", "1.0,1.5", "1.5,1.0")
        with pytest.raises(DecompositionError):
            io.ingest_correlation_csv(path)


class TestManifest:
    """Content hashes and the manifest written next to every result."""

    def test_git_blob_hashes(self):
        """Test the hashes git assigns to the empty blob and to 'hello\\n'."""
        assert io.content_hash(b"") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391"
        assert io.content_hash(b"hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a"

    def test_manifest_fields(self, tmp_path, returns_csv):
        """Test config echo, config hash, input hashes and sorted output names."""
        config = {"seed": 3, "experiment": "backtest"}
        out = tmp_path / "out"
        outputs = [io.write_csv([{"x": 1}], out / "b.csv"), io.write_csv([{"x": 2}], out / "a.csv")]
        manifest = json.loads(io.write_manifest(out, config, outputs, [returns_csv]).read_text(encoding="utf-8"))
        assert manifest["config"] == config
        assert manifest["seed"] == 3
        assert manifest["config_hash"] == io.content_hash(io.canonical_json(config).encode("utf-8"))
        assert manifest["inputs"] == [{"path": str(returns_csv), "hash": io.content_hash(returns_csv.read_bytes())}]
        assert manifest["outputs"] == ["a.csv", "b.csv"]


class TestSummaries:
    """Aggregation helpers shared by the experiment tables."""

    def test_summarize(self):
        """Test the mean, sample SD and coefficient of variation."""
        stats = summarize([1.0, 2.0, 3.0, 4.0])
        assert stats["mean"] == pytest.approx(2.5)
        assert stats["sd"] == pytest.approx(math.sqrt(5.0 / 3.0))
        assert stats["cv"] == pytest.approx(math.sqrt(5.0 / 3.0) / 2.5)
        assert stats["q10"] <= stats["mean"] <= stats["q90"]

    def test_single_value_has_zero_spread(self):
        """Test that one run gives SD 0."""
        assert summarize([2.0])["sd"] == 0.0

    def test_binomial_interval_brackets_the_frequency(self):
        """Test that the exact interval contains the observed frequency."""
        low, high = binomial_interval(18, 20)
        assert low < 0.9 < high
        assert binomial_interval(20, 20)[1] == 1.0

    def test_backtest_runs_once_per_alpha(self, make_config):
        """Test that backtest jobs enumerate the credibility levels."""
        config = make_config(ExperimentKind.BACKTEST, sizes=[20, 30], alphas=[0.1, 0.5, 1.0])
        assert repeat_jobs(config) == [(20, 0), (20, 1), (20, 2), (30, 0), (30, 1), (30, 2)]


class TestGuaranteeLab:
    """Coverage and implication frequencies of the discrete model."""

    def test_small_run(self, make_config, three_point_model, local_backend):
        """Test the summary shape, frequency ranges and written files."""
        config = make_config(ExperimentKind.GUARANTEE_LAB, sizes=[20, 100], repeats=5, model=three_point_model, seed=4)
        report = run_guarantee_lab(config, local_backend)
        assert [row["N"] for row in report.summary] == [20, 100]
        assert len(report.runs) == 10
        for row in report.summary:
            assert 0.0 <= row["coverage"] <= 1.0
            assert row["coverage_low"] <= row["coverage"] <= row["coverage_high"]
            assert row["implication"] >= row["coverage"]
        names = {path.name for path in report.output.files}
        assert names == {"guarantee_runs.csv", "guarantee_summary.csv", "manifest.json"}
        assert read_manifest(report.output.out_dir)["seed"] == 4

    def test_asset_model_run(self, make_config, local_backend):
        """Test the two-point asset variant with Monte Carlo implication."""
        config = make_config(
            ExperimentKind.GUARANTEE_LAB, sizes=[200], repeats=3, model=ASSETS, monte_carlo_draws=5000
        )
        report = run_guarantee_lab(config, local_backend)
        assert {run["model"] for run in report.runs} == {"two_point_assets"}
        assert all(0.0 <= run["probability"] <= 1.0 for run in report.runs)

    def test_rejects_other_configuration(self, make_config, local_backend):
        """Test that a queue configuration cannot drive the lab."""
        with pytest.raises(ConfigError):
            run_guarantee_lab(make_config(ExperimentKind.QUEUE), local_backend)

    @pytest.mark.slow
    @pytest.mark.parametrize("alpha", [0.05, 0.1])
    def test_guarantees_hold(self, make_config, three_point_model, local_backend, alpha):
        """Test coverage and implication of at least (1 - alpha) - 0.05 over 500 sample sets at N = 2000."""
        config = make_config(
            ExperimentKind.GUARANTEE_LAB, sizes=[2000], repeats=500, alpha=alpha, model=three_point_model, threads=4
        )
        report = run_guarantee_lab(config, local_backend)
        assert report.coverage(2000) >= 1.0 - alpha - 0.05
        assert report.implication(2000) >= 1.0 - alpha - 0.05

    @pytest.mark.slow
    def test_hausdorff_shrinks_with_sample_size(self, make_config, three_point_model, local_backend):
        """Test that the median Hausdorff distance to the true set is smaller at N = 10^4 than at N = 10^2."""
        config = make_config(
            ExperimentKind.GUARANTEE_LAB, sizes=[100, 10000], repeats=50, model=three_point_model, threads=4
        )
        report = run_guarantee_lab(config, local_backend)
        assert report.hausdorff_median(10000) < report.hausdorff_median(100)


class TestSetGeometry:
    """Per-coordinate box endpoints against the true-parameter boxes."""

    def test_truth_and_runs(self, make_config, local_backend):
        """Test the truth rows, the run rows and the convergence table."""
        config = make_config(
            ExperimentKind.GEOMETRY,
            sizes=[50],
            repeats=2,
            regimes=["independent", "no_assumption"],
            model={"kind": "two_point_assets", "dimension": 3, "coordinates": [1, 3]},
        )
        output = run_set_geometry(config, local_backend)
        intervals = output.tables["geometry_intervals"]
        assert len(intervals) == 4 + 8
        truth = intervals[(intervals["run"] == TRUTH_RUN) & (intervals["regime"] == "independent")]
        first = truth[truth["coordinate"] == 1].iloc[0]
        theta = asset_theta(1, 3)
        assert first["upper"] == pytest.approx(math.sqrt((1.0 - theta) / theta))
        assert (intervals["lower"] <= intervals["upper"]).all()
        convergence = output.tables["geometry_convergence"]
        assert set(convergence["regime"]) == {"independent", "no_assumption"}
        assert (convergence["hausdorff_median"] >= 0.0).all()


class TestPortfolioExperiment:
    """In-sample and out-of-sample returns of the robust portfolio."""

    def test_regime_ordering_and_out_of_sample(self, make_config, local_backend):
        """Test v_in(independent) >= v_in(no_assumption) and v_out at the chosen asset's down value."""
        config = make_config(ExperimentKind.PORTFOLIO, sizes=[100], repeats=2, model=ASSETS)
        output = run_portfolio_experiment(config, local_backend)
        runs = output.tables["portfolio_runs"]
        pivot = runs.pivot(index="run", columns="regime", values="v_in")
        assert (pivot["independent"] >= pivot["no_assumption"] - 1e-12).all()
        for _, row in runs.iterrows():
            theta = asset_theta(int(row["asset"]), ASSETS["dimension"])
            assert row["v_out"] == pytest.approx(-math.sqrt(theta / (1.0 - theta)))
        table = output.tables["portfolio_table"]
        assert list(table["method"]) == ["independent", "no_assumption"]
        assert (table["runs"] == 2).all()

    def test_thread_count_does_not_change_rows(self, make_config, local_backend, tmp_path):
        """Test that one and two local threads produce identical rows."""
        fields = {"sizes": [50], "repeats": 3, "model": ASSETS}
        single = run_portfolio_experiment(
            make_config(ExperimentKind.PORTFOLIO, out_dir=str(tmp_path / "one"), threads=1, **fields), local_backend
        )
        pooled = run_portfolio_experiment(
            make_config(ExperimentKind.PORTFOLIO, out_dir=str(tmp_path / "two"), threads=2, **fields), local_backend
        )
        pd.testing.assert_frame_equal(single.tables["portfolio_runs"], pooled.tables["portfolio_runs"])

    @pytest.mark.slow
    def test_reference_out_of_sample_returns(self, make_config, local_backend):
        """Test mean v_out near -0.9803 (independent, N = 2000) and -1.0090 (no_assumption, N = 500)."""
        config = make_config(
            ExperimentKind.PORTFOLIO,
            sizes=[500, 2000],
            repeats=100,
            regimes=["independent", "no_assumption"],
            model={"kind": "two_point_assets", "dimension": 20},
            threads=4,
        )
        table = run_portfolio_experiment(config, local_backend).tables["portfolio_table"].set_index(["method", "N"])
        assert table.loc[("independent", 2000), "v_out"] == pytest.approx(-0.9803, abs=0.08)
        assert table.loc[("no_assumption", 500), "v_out"] == pytest.approx(-1.0090, abs=0.08)
        assert (table["runs"] == 100).all()


class TestQueueExperiment:
    """Bayes and Kingman bound tables."""

    def test_tables(self, make_config, local_backend):
        """Test both methods, the table columns and Bayes validity."""
        config = make_config(ExperimentKind.QUEUE, sizes=[200], repeats=3, monte_carlo_draws=2000)
        output = run_queue_experiment(config, local_backend)
        table = output.tables["queue_table"]
        assert list(table.columns) == ["seed", "method", "N", "q10", "mean", "q90", "sd", "cv"]
        assert set(table["method"]) == {"bayes_box", "kingman"}
        validity = output.tables["queue_validity"].set_index("method")
        assert validity.loc["bayes_box", "coverage"] == 1.0
        assert validity.loc["bayes_box", "true_quantile"] >= 0.0
        assert len(output.tables["queue_runs"]) == 6

    @pytest.mark.slow
    def test_kingman_reference_at_large_samples(self, make_config, local_backend):
        """Test the Kingman mean in [9.8, 10.5] at N = 10^4 and a steadier Bayes bound."""
        config = make_config(ExperimentKind.QUEUE, sizes=[10000], repeats=100, threads=4)
        table = run_queue_experiment(config, local_backend).tables["queue_table"].set_index("method")
        assert 9.8 <= table.loc["kingman", "mean"] <= 10.5
        assert table.loc["bayes_box", "sd"] < table.loc["kingman", "sd"]


class TestBuildSet:
    """Single-set construction written as JSON."""

    def test_asset_boxes(self, make_config):
        """Test one JSON file per regime plus the interval table."""
        config = make_config(ExperimentKind.BUILD_SET, sizes=[100], model={"kind": "two_point_assets", "dimension": 3})
        output = build_set(config)
        names = {path.name for path in output.files}
        assert {"set_independent.json", "set_no_assumption.json", "set_intervals.csv", "manifest.json"} <= names
        box = json.loads((output.out_dir / "set_independent.json").read_text(encoding="utf-8"))
        assert box["kind"] == "coordinate_box"
        assert len(box["lower"]) == 3
        assert len(output.tables["set_intervals"]) == 6

    def test_discrete_polytope(self, make_config, three_point_model):
        """Test the discrete polytope output."""
        output = build_set(make_config(ExperimentKind.BUILD_SET, sizes=[100], model=three_point_model))
        assert (output.out_dir / "set_discrete.json").exists()

    def test_returns_input_is_hashed(self, make_config, returns_csv):
        """Test that a returns CSV is fitted and recorded in the manifest."""
        config = make_config(ExperimentKind.BUILD_SET, sizes=[30], regimes=["no_assumption"], returns_csv=str(returns_csv))
        output = build_set(config)
        manifest = read_manifest(output.out_dir)
        assert manifest["inputs"][0]["hash"] == io.content_hash(returns_csv.read_bytes())
        assert len(output.tables["set_intervals"]) == 3


class TestBacktest:
    """Deviation and holdout tables on a returns file."""

    def test_deviation_and_holdout(self, make_config, local_backend, returns_csv):
        """Test one row per credibility level and a tighter bound at alpha = 1."""
        config = make_config(
            ExperimentKind.BACKTEST,
            sizes=[20],
            alphas=[0.1, 1.0],
            holdout=12,
            percentile_draws=20_000,
            returns_csv=str(returns_csv),
        )
        output = run_backtest(config, local_backend)
        deviation = output.tables["backtest_deviation"]
        assert list(deviation["alpha"]) == [0.1, 1.0]
        assert deviation["r_in"].iloc[1] >= deviation["r_in"].iloc[0] - 1e-12
        assert deviation["d"].to_numpy() == pytest.approx((deviation["r_star"] - deviation["r_in"]).to_numpy())
        assert len(output.tables["backtest_returns"]) == 2
        assert {"backtest_runs.csv", "backtest_deviation.csv", "backtest_returns.csv", "manifest.json"} == {
            path.name for path in output.files
        }

    def test_needs_returns_file(self, make_config, local_backend):
        """Test that a backtest without data is a configuration error."""
        with pytest.raises(ConfigError):
            run_backtest(make_config(ExperimentKind.BACKTEST, sizes=[20]), local_backend)

    def test_window_longer_than_training(self, make_config, local_backend, returns_csv):
        """Test that N above the training length is a configuration error."""
        config = make_config(ExperimentKind.BACKTEST, sizes=[35], holdout=12, returns_csv=str(returns_csv))
        with pytest.raises(ConfigError):
            run_backtest(config, local_backend)


class TestRegimeFromConfig:
    """Tail-positive regimes built from the model's tail_copula and tail_beta keys."""

    def test_defaults_to_independence_lower_copula(self):
        """Test the lower copula and threshold used when the model names neither."""
        regime = regime_from_name("tail_positive", 4)
        assert regime.tag is RegimeTag.TAIL_POSITIVE
        assert regime.lower_copula.kind is CopulaKind.INDEPENDENCE
        assert regime.beta == 0.0

    def test_beta_and_comonotone_lower_copula(self):
        """Test that an upper Frechet lower copula gives each coordinate the full level."""
        model = {"tail_copula": {"kind": "upper_frechet"}, "tail_beta": 0.5}
        regime = regime_from_name("tail_positive", 4, model)
        assert regime.beta == 0.5
        assert regime.per_coordinate_level(0.1, 4) == pytest.approx(0.1, abs=1e-9)

    def test_beta_above_level_is_rejected(self):
        """Test that beta > 1 - eps violates the tail-dependence hypothesis."""
        regime = regime_from_name("tail_positive", 4, {"tail_beta": 0.95})
        with pytest.raises(HypothesisViolationError):
            regime.per_coordinate_level(0.1, 4)

    def test_block_product_lower_copula(self):
        """Test a comonotone pair times an independent pair: diagonal u^3."""
        model = {
            "tail_copula": {
                "kind": "block_product",
                "blocks": [
                    {"indices": [0, 1], "kind": "upper_frechet"},
                    {"indices": [2, 3], "kind": "independence"},
                ],
            }
        }
        regime = regime_from_name("tail_positive", 4, model)
        assert regime.split_rule() is SplitRule.BLOCK_PRODUCT
        assert regime.per_coordinate_level(0.1, 4) == pytest.approx(1.0 - 0.9 ** (1.0 / 3.0), abs=1e-9)

    @pytest.mark.parametrize(
        "tail_copula",
        [
            {"kind": "clayton"},
            {"kind": "gaussian"},
            {"kind": "gaussian", "correlation": [[1.0, 0.3], [0.3, 1.0]]},
        ],
    )
    def test_invalid_tail_copula(self, tail_copula):
        """Test unknown kinds, missing correlation and dimension mismatches."""
        with pytest.raises(ConfigError):
            regime_from_name("tail_positive", 4, {"tail_copula": tail_copula})

    def test_geometry_uses_configured_lower_copula(self, make_config, local_backend):
        """Test that the geometry run applies the level implied by the configured lower copula."""
        fields = {"sizes": [100], "repeats": 1, "regimes": ["independent", "tail_positive"]}
        independent_lower = run_set_geometry(
            make_config(ExperimentKind.GEOMETRY, model={**ASSETS, "coordinates": [1]}, **fields), local_backend
        )
        frechet_lower = run_set_geometry(
            make_config(
                ExperimentKind.GEOMETRY,
                out_dir=str(independent_lower.out_dir.parent / "lower_bound"),
                model={**ASSETS, "coordinates": [1], "tail_copula": {"kind": "lower_bound"}},
                **fields,
            ),
            local_backend,
        )

        def tail_row(output):
            rows = output.tables["geometry_intervals"]
            return rows[(rows["run"] == 0) & (rows["regime"] == "tail_positive")].iloc[0]

        assert tail_row(independent_lower)["level"] == pytest.approx(1.0 - 0.9**0.25, abs=1e-9)
        assert tail_row(frechet_lower)["level"] == pytest.approx(0.025, abs=1e-9)
