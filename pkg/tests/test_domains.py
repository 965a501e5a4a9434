import numpy as np
import pytest

from robust_domains import (
    DomainSampler,
    InvalidInputError,
    SoftmaxClassifier,
    batch_loss_vector,
    dataset_from_arrays,
    empirical_loss_vector,
    load_manifest,
    make_noisy_blob_domains,
    sample_batch,
    write_dataset,
)


def small_dataset(seed=0, sizes=(30, 50), d=4, classes=3):
    rng = np.random.default_rng(seed)
    features = [rng.normal(size=(n, d)) for n in sizes]
    labels = [rng.integers(0, classes, size=n) for n in sizes]
    return dataset_from_arrays(features, labels, num_classes=classes)


class TestDataset:
    def test_validation(self):
        with pytest.raises(InvalidInputError):
            dataset_from_arrays([np.zeros((0, 3))], [np.zeros(0, dtype=int)], num_classes=2)
        with pytest.raises(InvalidInputError):
            dataset_from_arrays(
                [np.zeros((3, 2)), np.zeros((3, 5))],
                [np.zeros(3, dtype=int)] * 2,
                num_classes=2,
            )
        with pytest.raises(InvalidInputError):
            dataset_from_arrays([np.zeros((2, 2))], [np.array([0, 5])], num_classes=2)

    def test_subset_keeps_one_domain(self):
        data = small_dataset()
        sub = data.subset(1)
        assert sub.num_domains == 1
        assert np.array_equal(sub.features[0], data.features[1])
        with pytest.raises(InvalidInputError):
            data.subset(5)


class TestSampler:
    def test_fixed_seed_replays_batches(self):
        data = small_dataset()
        batches_a = [DomainSampler(data, seed=42).sample(8) for _ in range(1)]
        sampler_a = DomainSampler(data, seed=42)
        sampler_b = DomainSampler(data, seed=42)
        for _ in range(5):
            a = sampler_a.sample(8)
            b = sampler_b.sample(8)
            for k in range(data.num_domains):
                assert np.array_equal(a.features[k], b.features[k])
                assert np.array_equal(a.labels[k], b.labels[k])
        assert batches_a  # first sampler unused further; draws are per-instance

    def test_streams_are_independent_across_domains(self):
        # changing domain 0's size must not change the indices drawn for domain 1
        rng = np.random.default_rng(1)
        shared_x = rng.normal(size=(40, 3))
        shared_y = rng.integers(0, 2, size=40)
        data_a = dataset_from_arrays(
            [rng.normal(size=(10, 3)), shared_x], [rng.integers(0, 2, 10), shared_y],
            num_classes=2,
        )
        data_b = dataset_from_arrays(
            [rng.normal(size=(25, 3)), shared_x], [rng.integers(0, 2, 25), shared_y],
            num_classes=2,
        )
        sampler_a = DomainSampler(data_a, seed=9)
        sampler_b = DomainSampler(data_b, seed=9)
        for _ in range(4):
            a = sampler_a.sample(6)
            b = sampler_b.sample(6)
            assert np.array_equal(a.features[1], b.features[1])

    def test_without_replacement_full_draw_is_permutation(self):
        data = small_dataset(sizes=(12,))
        sampler = DomainSampler(data, seed=3, replacement=False)
        batch = sampler.sample(12)
        order = np.lexsort(batch.features[0].T)
        original = np.lexsort(data.features[0].T)
        assert np.array_equal(batch.features[0][order], data.features[0][original])

    def test_oversized_batch_falls_back_to_replacement(self):
        data = small_dataset(sizes=(5,))
        sampler = DomainSampler(data, seed=3, replacement=False)
        batch = sampler.sample(12)
        assert batch.features[0].shape[0] == 12

    def test_joint_batch_size_splits_evenly(self):
        data = small_dataset(sizes=(300, 300))
        m = 200 // data.num_domains
        batch = sample_batch(data, m, DomainSampler(data, seed=0))
        assert batch.per_domain_size == 100
        assert sum(x.shape[0] for x in batch.features) == 200

    def test_sampler_dataset_mismatch(self):
        data = small_dataset()
        other = small_dataset(seed=5)
        with pytest.raises(InvalidInputError):
            sample_batch(other, 4, DomainSampler(data, seed=0))


class TestLossVectors:
    def test_empirical_matches_per_example_average(self):
        data = small_dataset()
        model = SoftmaxClassifier(data.num_features, data.num_classes)
        rng = np.random.default_rng(2)
        params = model.init_params()
        params.values[:] = rng.normal(scale=0.3, size=params.values.size)
        losses = empirical_loss_vector(data, model, params)
        for k in range(data.num_domains):
            per_example = [
                model.loss(params, data.features[k][i], data.labels[k][i])
                for i in range(data.sizes[k])
            ]
            assert losses[k] == pytest.approx(np.mean(per_example), abs=1e-12)

    def test_exhaustive_batch_equals_empirical_entry(self):
        data = small_dataset(sizes=(15, 15))
        model = SoftmaxClassifier(data.num_features, data.num_classes)
        params = model.init_params()
        params.values[:] = 0.1
        sampler = DomainSampler(data, seed=1, replacement=False)
        batch = sampler.sample(15)
        batch_losses = batch_loss_vector(batch, model, params)
        exact = empirical_loss_vector(data, model, params)
        assert np.allclose(batch_losses, exact, atol=1e-12)

    def test_minibatch_mean_is_unbiased(self):
        data = small_dataset(sizes=(40,), d=3)
        model = SoftmaxClassifier(data.num_features, data.num_classes)
        rng = np.random.default_rng(4)
        params = model.init_params()
        params.values[:] = rng.normal(scale=0.5, size=params.values.size)
        # per-example losses once; a batch loss is a mean over sampled entries
        per_example = np.array([
            model.loss(params, data.features[0][i], data.labels[0][i])
            for i in range(40)
        ])
        exact = per_example.mean()
        draws = rng.integers(0, 40, size=(10_000, 10))
        means = per_example[draws].mean(axis=1)
        standard_error = per_example.std() / np.sqrt(10) / np.sqrt(10_000)
        assert abs(means.mean() - exact) <= 3 * standard_error

    def test_losses_nonnegative_and_finite(self):
        data = small_dataset()
        model = SoftmaxClassifier(data.num_features, data.num_classes)
        params = model.init_params()
        sampler = DomainSampler(data, seed=0)
        for _ in range(5):
            values = batch_loss_vector(sampler.sample(7), model, params)
            assert np.all(np.isfinite(values))
            assert np.all(values >= 0)

    def test_thread_count_does_not_change_bits(self, monkeypatch):
        data = small_dataset(sizes=(64, 64, 64))
        model = SoftmaxClassifier(data.num_features, data.num_classes)
        params = model.init_params()
        params.values[:] = 0.05
        serial = empirical_loss_vector(data, model, params, max_threads=1)
        threaded = empirical_loss_vector(data, model, params, max_threads=4)
        assert np.array_equal(serial, threaded)
        monkeypatch.setenv("ROBUST_DOMAINS_THREADS", "3")
        from_env = empirical_loss_vector(data, model, params)
        assert np.array_equal(serial, from_env)


class TestManifestRoundTrip:
    def test_write_then_load_is_exact(self, tmp_path):
        data = small_dataset()
        manifest = write_dataset(data, tmp_path)
        loaded = load_manifest(manifest)
        assert loaded.num_classes == data.num_classes
        assert loaded.names == data.names
        for k in range(data.num_domains):
            assert np.array_equal(loaded.features[k], data.features[k])
            assert np.array_equal(loaded.labels[k], data.labels[k])

    def test_header_is_optional(self, tmp_path):
        path = tmp_path / "plain.csv"
        path.write_text("1,0.5,2.5\n0,-1.0,3.0\n")
        manifest = tmp_path / "manifest.json"
        manifest.write_text('{"num_classes": 2, "domains": [{"name": "a", "file": "plain.csv"}]}')
        loaded = load_manifest(manifest)
        assert loaded.sizes == (2,)
        assert loaded.labels[0].tolist() == [1, 0]

    def test_bad_inputs(self, tmp_path):
        with pytest.raises(InvalidInputError):
            load_manifest(tmp_path / "missing.json")
        bad = tmp_path / "bad.csv"
        bad.write_text("label,f0\n0.5,1.0\n")
        manifest = tmp_path / "manifest.json"
        manifest.write_text('{"num_classes": 2, "domains": [{"name": "a", "file": "bad.csv"}]}')
        with pytest.raises(InvalidInputError):
            load_manifest(manifest)


class TestBlobGenerator:
    def test_deterministic_per_seed(self):
        a = make_noisy_blob_domains(30, 4, 3, [0, 2.5], seed=7)
        b = make_noisy_blob_domains(30, 4, 3, [0, 2.5], seed=7)
        for k in range(2):
            assert np.array_equal(a.features[k], b.features[k])
            assert np.array_equal(a.labels[k], b.labels[k])

    def test_zero_noise_domains_are_identical(self):
        data = make_noisy_blob_domains(25, 3, 2, [0, 0, 0], seed=1)
        for k in (1, 2):
            assert np.array_equal(data.features[0], data.features[k])

    def test_noise_levels_set_domain_count_and_names(self):
        data = make_noisy_blob_domains(10, 2, 2, [0, 4, 8, 12], seed=0)
        assert data.num_domains == 4
        assert data.names == ("noise0", "noise4", "noise8", "noise12")
