import csv

import numpy as np
import pytest

from robust_domains import (
    ConfigurationError,
    InvalidInputError,
    MLPClassifier,
    ModelParameters,
    ParameterLayout,
    ProblemConstants,
    RegularizerSpec,
    SimplexDistribution,
    SoftmaxClassifier,
    TrainerConfig,
    TrainingTrace,
    UnsupportedModelError,
    build_report,
    dataset_from_arrays,
    duality_gap,
    empirical_loss_vector,
    make_noisy_blob_domains,
    realized_regret,
    resolve_schedule,
    train,
    worst_case_metrics,
    write_series_csv,
    write_summary_csv,
    write_timing_csv,
    write_trace_csv,
)

from oracles import grid_maximize_quadratic


class MeanFeatureModel:
    """Loss oracle whose per-example loss is the first feature value."""

    kind = "mean-feature"

    def __init__(self):
        self.layout = ParameterLayout((("w", (1,)),))

    def init_params(self, rng=None):
        return ModelParameters(self.layout, np.zeros(1))

    def batch_loss(self, params, X, y):
        return float(np.mean(np.asarray(X)[:, 0]))

    def loss_and_gradient(self, params, X, y):
        return self.batch_loss(params, X, y), np.zeros(1)

    def predict(self, params, X):
        return np.zeros(np.asarray(X).shape[0], dtype=np.int64)


def constant_loss_dataset(levels):
    features = [np.full((4, 1), value) for value in levels]
    labels = [np.zeros(4, dtype=np.int64) for _ in levels]
    return dataset_from_arrays(features, labels, num_classes=2)


def manual_trace(p_rows, iterates, layout):
    p_rows = np.asarray(p_rows, dtype=float)
    n = p_rows.shape[0]
    return TrainingTrace(
        steps=np.arange(1, n + 1),
        domain_weights=p_rows,
        batch_losses=np.zeros_like(p_rows),
        grad_norms=np.zeros(n),
        eta_p=np.zeros(n),
        elapsed=np.zeros(n),
        final_params=ModelParameters(layout, iterates[-1]),
        final_distribution=SimplexDistribution(p_rows[-1]),
        averaged_params=ModelParameters(layout, iterates[-1]),
        averaged_distribution=SimplexDistribution(p_rows.mean(axis=0)),
        iterates=np.asarray(iterates, dtype=float),
    )


class TestWorstCase:
    def test_single_domain(self):
        data = constant_loss_dataset([0.4])
        f_w, acc_w = worst_case_metrics(data, MeanFeatureModel(), None)
        assert f_w == pytest.approx(0.4)
        assert acc_w == 1.0  # constant predictor, constant labels

    def test_identical_domains_share_the_worst_value(self):
        data = constant_loss_dataset([0.3, 0.3, 0.3])
        f_w, _ = worst_case_metrics(data, MeanFeatureModel(), None)
        assert f_w == pytest.approx(0.3)

    def test_max_selection(self):
        data = constant_loss_dataset([0.2, 0.7])
        f_w, _ = worst_case_metrics(data, MeanFeatureModel(), None)
        assert f_w == pytest.approx(0.7)

    def test_permutation_invariance(self):
        data = constant_loss_dataset([0.2, 0.9, 0.5])
        flipped = constant_loss_dataset([0.5, 0.2, 0.9])
        model = MeanFeatureModel()
        assert worst_case_metrics(data, model, None) == worst_case_metrics(flipped, model, None)


class TestRealizedRegret:
    def test_single_step_uniform_play(self):
        model = MeanFeatureModel()
        data = constant_loss_dataset([1.0, 0.0])
        trace = manual_trace([[0.5, 0.5]], [np.zeros(1)], model.layout)
        assert realized_regret(trace, data, model) == pytest.approx(0.5, abs=1e-12)

    def test_optimal_play_has_zero_regret(self):
        model = MeanFeatureModel()
        data = constant_loss_dataset([1.0, 0.0])
        trace = manual_trace([[1.0, 0.0], [1.0, 0.0]], [np.zeros(1)] * 2, model.layout)
        assert realized_regret(trace, data, model) == pytest.approx(0.0, abs=1e-12)

    def test_matches_grid_search_for_l2(self):
        data = make_noisy_blob_domains(60, 4, 3, [0, 2, 5], seed=20, class_separation=2.0)
        model = SoftmaxClassifier(4, 3)
        lam = 1.3
        reg = RegularizerSpec(kind="l2", lam=lam, prior=SimplexDistribution.uniform(3))
        schedule = resolve_schedule("regularized", 5, ProblemConstants(lam=lam), 3)
        config = TrainerConfig(
            schedule=schedule, horizon=5, minibatch=10, variant="alg2",
            regularizer=reg, record_iterates=True,
        )
        trace = train(data, model, config)
        got = realized_regret(trace, data, model, reg)

        loss_rows = np.stack([
            empirical_loss_vector(data, model, ModelParameters(model.layout, values))
            for values in trace.iterates
        ])
        summed = loss_rows.sum(axis=0)
        q = np.full(3, 1 / 3)
        best_grid = grid_maximize_quadratic(summed, q, lam * 5, stages=(32, 256, 2048, 16384))
        value = float(best_grid @ summed - 0.5 * lam * 5 * np.sum((best_grid - q) ** 2))
        played = sum(
            float(trace.domain_weights[i] @ loss_rows[i])
            - 0.5 * lam * np.sum((trace.domain_weights[i] - q) ** 2)
            for i in range(5)
        )
        assert got == pytest.approx(value - played, abs=1e-3)

    def test_nonnegative_on_trainer_traces(self):
        data = make_noisy_blob_domains(50, 3, 2, [0, 3], seed=21, class_separation=2.0)
        model = SoftmaxClassifier(3, 2)
        for seed in range(3):
            schedule = resolve_schedule("convex", 40, ProblemConstants(), 2)
            config = TrainerConfig(
                schedule=schedule, horizon=40, minibatch=10, seed=seed, record_iterates=True
            )
            trace = train(data, model, config)
            assert realized_regret(trace, data, model) >= -1e-9

    def test_requires_recorded_iterates(self):
        data = constant_loss_dataset([0.5, 0.5])
        model = MeanFeatureModel()
        trace = manual_trace([[0.5, 0.5]], [np.zeros(1)], model.layout)
        object.__setattr__(trace, "iterates", None)
        with pytest.raises(InvalidInputError):
            realized_regret(trace, data, model)

    def test_unsupported_regularizer_kind(self):
        model = MeanFeatureModel()
        data = constant_loss_dataset([1.0, 0.0])
        trace = manual_trace([[0.5, 0.5]], [np.zeros(1)], model.layout)
        reg = RegularizerSpec(kind="kl", lam=1.0, prior=SimplexDistribution.uniform(2))
        with pytest.raises(ConfigurationError):
            realized_regret(trace, data, model, reg)


class TestDualityGap:
    def overlapping_data(self, seed=22):
        return make_noisy_blob_domains(
            150, 4, 3, [0, 0.5], seed=seed, class_separation=0.8
        )

    def test_near_saddle_gap_is_small(self):
        data = self.overlapping_data()
        model = SoftmaxClassifier(4, 3)
        # identical domains make every p optimal; descend to a near-minimizer
        twin = dataset_from_arrays(
            [data.features[0]] * 2, [data.labels[0]] * 2, num_classes=3
        )
        values = model.init_params().values.copy()
        for _ in range(1500):
            _, grad = model.loss_and_gradient(
                ModelParameters(model.layout, values), twin.features[0], twin.labels[0]
            )
            values = values - 0.1 * grad
        params = ModelParameters(model.layout, values)
        gap = duality_gap(
            twin, model, params, SimplexDistribution.uniform(2), descent_steps=1500
        )
        assert -1e-6 <= gap <= 1e-3

    def test_gap_nonnegative_on_random_points(self):
        data = self.overlapping_data(seed=23)
        model = SoftmaxClassifier(4, 3)
        rng = np.random.default_rng(24)
        for _ in range(3):
            params = ModelParameters(
                model.layout, rng.normal(scale=0.5, size=model.layout.size)
            )
            p = SimplexDistribution(rng.dirichlet(np.ones(2)))
            gap = duality_gap(data, model, params, p, descent_steps=300)
            assert gap >= -1e-6

    def test_l2_regularized_gap_uses_closed_form(self):
        data = self.overlapping_data(seed=25)
        model = SoftmaxClassifier(4, 3)
        reg = RegularizerSpec(kind="l2", lam=2.0, prior=SimplexDistribution.uniform(2))
        params = model.init_params()
        gap = duality_gap(data, model, params, SimplexDistribution.uniform(2),
                          regularizer=reg, descent_steps=200)
        assert gap >= -1e-6

    def test_rejects_nonconvex_model(self):
        data = self.overlapping_data(seed=26)
        model = MLPClassifier(4, 3, 3)
        with pytest.raises(UnsupportedModelError):
            duality_gap(data, model, model.init_params(), SimplexDistribution.uniform(2))


class TestCsvOutput:
    def run_small(self):
        data = make_noisy_blob_domains(40, 3, 2, [0, 2], seed=27, class_separation=2.0)
        model = SoftmaxClassifier(3, 2)
        schedule = resolve_schedule("convex", 12, ProblemConstants(), 2)
        config = TrainerConfig(schedule=schedule, horizon=12, minibatch=8, seed=1)
        trace = train(data, model, config)
        return data, model, trace

    def test_trace_csv_round_trips_floats_exactly(self, tmp_path):
        data, model, trace = self.run_small()
        path = write_trace_csv(trace, tmp_path / "trace.csv")
        with open(path) as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = list(reader)
        assert header == [
            "t", "loss_d0", "loss_d1", "p_0", "p_1", "grad_norm", "eta_p",
        ]
        assert len(rows) == trace.num_logged
        parsed = np.array([[float(cell) for cell in row] for row in rows])
        assert np.array_equal(parsed[:, 1:3], trace.batch_losses)
        assert np.array_equal(parsed[:, 3:5], trace.domain_weights)
        assert np.array_equal(parsed[:, 5], trace.grad_norms)

    def test_timing_is_separate(self, tmp_path):
        _, _, trace = self.run_small()
        trace_path = write_trace_csv(trace, tmp_path / "trace.csv")
        timing_path = write_timing_csv(trace, tmp_path / "timing.csv")
        assert "elapsed" not in trace_path.read_text()
        header = timing_path.read_text().splitlines()[0]
        assert header == "t,elapsed_s"

    def test_summary_and_series(self, tmp_path):
        data, model, trace = self.run_small()
        report = build_report(data, model, trace.final_params, trace=trace)
        summary = write_summary_csv(report, tmp_path / "summary.csv")
        text = summary.read_text()
        assert "worst_case_loss" in text
        assert "worst_case_accuracy" in text
        series = write_series_csv(trace, report, tmp_path / "series.csv")
        header = series.read_text().splitlines()[0]
        assert header == "t,discrepancy_0_1,drift_0_1"

    def test_report_series_match_trace_columns(self):
        data, model, trace = self.run_small()
        report = build_report(data, model, trace.final_params, trace=trace)
        expected = trace.batch_losses[:, 0] - trace.batch_losses[:, 1]
        assert np.array_equal(report.discrepancy[(0, 1)], expected)
        drift = trace.domain_weights[:, 0] - trace.domain_weights[:, 1]
        assert np.array_equal(report.drift[(0, 1)], drift)
