import numpy as np
import pytest

from mate.datagen import (
    FactorModelSpec,
    FeatureBlocks,
    GammaDiagonal,
    Homogeneous,
    IncompleteMatrix,
    SampleBlocks,
    apply_mcar,
    equal_block_sizes,
    estimate_rates,
    feature_rates,
    generate_complete,
    ingest_csv,
    population_variances,
    standardize,
    write_csv,
)
from mate.errors import DegenerateFeatureError, DimensionError, IngestionError, ParameterError
from mate.spectra import sample_cov_eigs


class TestSpecs:
    def test_spikes_nonincreasing(self):
        with pytest.raises(ParameterError):
            FactorModelSpec(10, 20, (1.0, 2.0))

    def test_too_many_spikes(self):
        with pytest.raises(DimensionError):
            FactorModelSpec(2, 20, (3.0, 2.0))

    def test_gamma_params(self):
        with pytest.raises(ParameterError):
            GammaDiagonal(0.0)
        with pytest.raises(ParameterError):
            GammaDiagonal(3.0, t1=2.0, t2=1.0)

    def test_rates_in_unit_interval(self):
        with pytest.raises(ParameterError):
            apply_mcar(np.ones((4, 4)), FeatureBlocks((1.2, 0.5), (2, 2)), 0)

    def test_equal_block_sizes(self):
        assert equal_block_sizes(10, 3) == (3, 3, 4)
        assert sum(equal_block_sizes(250, 3)) == 250


class TestGeneration:
    def test_deterministic(self):
        spec = FactorModelSpec(30, 40, (3.0, 2.0), GammaDiagonal(3.0), spike_mode="loading")
        a = generate_complete(spec, 5)
        b = generate_complete(spec, 5)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, generate_complete(spec, 6))

    def test_mask_deterministic(self):
        x = np.ones((20, 30))
        m = FeatureBlocks((0.4, 0.9), (10, 10))
        assert apply_mcar(x, m, 1).equals(apply_mcar(x, m, 1))

    def test_unobserved_are_zero(self):
        x = generate_complete(FactorModelSpec(50, 60, (2.0,)), 0)
        xo = apply_mcar(x, Homogeneous(0.6), 0)
        assert np.all(xo.values[~xo.mask] == 0)
        assert np.array_equal(xo.values[xo.mask], x[xo.mask])

    def test_loading_spikes_add_noise_variance(self):
        spec = FactorModelSpec(5, 10, (3.0, 2.0), spike_mode="loading")
        np.testing.assert_allclose(population_variances(spec, 0), [4, 3, 1, 1, 1])

    def test_eigenvalue_spikes(self):
        spec = FactorModelSpec(5, 10, (5.0, 4.0, 2.4))
        np.testing.assert_allclose(population_variances(spec, 0), [5, 4, 2.4, 1, 1])

    def test_gamma_variance_moments(self):
        v = GammaDiagonal(3.0, 2.0).sample(200000, np.random.default_rng(0))
        assert v.mean() == pytest.approx(2.0, rel=0.01)
        assert v.var() == pytest.approx(4.0 / 3.0, rel=0.03)

    def test_truncated_gamma_range(self):
        v = GammaDiagonal(3.0, 1.0, t1=0.5, t2=2.0).sample(5000, np.random.default_rng(0))
        assert v.min() >= 0.5 and v.max() <= 2.0

    def test_rotation_preserves_spectrum(self):
        kw = dict(d=40, n=80, spikes=(4.0, 2.0))
        a = sample_cov_eigs(generate_complete(FactorModelSpec(**kw), 9)).eigenvalues
        b = sample_cov_eigs(generate_complete(FactorModelSpec(**kw, rotate=True), 9)).eigenvalues
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-9)

    def test_sample_block_masks(self):
        m = SampleBlocks((1.0, 0.0001), (50, 50))
        xo = apply_mcar(np.ones((40, 100)), m, 2)
        assert xo.mask[:, :50].all()
        assert xo.mask[:, 50:].mean() < 0.01


class TestEstimateRates:
    def test_full_mask(self):
        x = IncompleteMatrix.complete(np.ones((5, 6)))
        assert estimate_rates(x, Homogeneous()).p == 1.0

    def test_exact_counting(self):
        mask = np.zeros((4, 100), dtype=bool)
        mask[:, :70] = True
        x = IncompleteMatrix(mask.astype(float), mask)
        np.testing.assert_array_equal(feature_rates(x), 0.7)

    def test_block_concentration(self):
        d, n = 200, 2000
        xo = apply_mcar(np.ones((d, n)), FeatureBlocks((0.4, 0.9), (100, 100)), 4)
        est = estimate_rates(xo, FeatureBlocks(None, (100, 100)))
        np.testing.assert_allclose(est.rates, (0.4, 0.9), atol=0.03)

    def test_sample_blocks(self):
        xo = apply_mcar(np.ones((300, 200)), SampleBlocks((0.5, 0.8), (100, 100)), 4)
        est = estimate_rates(xo, SampleBlocks(None, (100, 100)))
        np.testing.assert_allclose(est.rates, (0.5, 0.8), atol=0.03)

    def test_zero_rate_passes_through(self):
        mask = np.zeros((4, 10), dtype=bool)
        mask[:2] = True
        x = IncompleteMatrix(mask.astype(float), mask)
        assert estimate_rates(x, FeatureBlocks(None, (2, 2))).rates == (1.0, 0.0)

    def test_size_mismatch(self):
        with pytest.raises(DimensionError):
            estimate_rates(IncompleteMatrix.complete(np.ones((4, 4))), FeatureBlocks(None, (2, 3)))


class TestCsv:
    def test_plain(self, tmp_path):
        p = tmp_path / "a.csv"
        p.write_text("1,2\n3,4\n")
        x = ingest_csv(p)
        assert x.mask.all()
        np.testing.assert_array_equal(x.values, [[1, 2], [3, 4]])

    def test_missing_token(self, tmp_path):
        p = tmp_path / "a.csv"
        p.write_text("1,NA\n3,4\n")
        x = ingest_csv(p, missing_token="NA")
        assert not x.mask[0, 1] and x.values[0, 1] == 0

    def test_empty_and_custom_tokens(self, tmp_path):
        p = tmp_path / "a.csv"
        p.write_text("1,,?\nNaN,4,5\n")
        x = ingest_csv(p, missing_token="?")
        np.testing.assert_array_equal(x.mask, [[True, False, False], [False, True, True]])

    def test_ragged(self, tmp_path):
        p = tmp_path / "a.csv"
        p.write_text("1,2\n3\n")
        with pytest.raises(IngestionError) as err:
            ingest_csv(p)
        assert err.value.row == 2

    def test_unparseable(self, tmp_path):
        p = tmp_path / "a.csv"
        p.write_text("1,2\n3,x\n")
        with pytest.raises(IngestionError) as err:
            ingest_csv(p)
        assert (err.value.row, err.value.column) == (2, 2)

    def test_header_and_transpose(self, tmp_path):
        p = tmp_path / "a.csv"
        p.write_text("a,b,c\n1,2,3\n4,5,6\n")
        x = ingest_csv(p, skip_header=True, transpose=True)
        assert x.shape == (3, 2)
        np.testing.assert_array_equal(x.values[:, 0], [1, 2, 3])

    def test_round_trip(self, tmp_path):
        x = generate_complete(FactorModelSpec(12, 15, (3.0,)), 1)
        xo = apply_mcar(x, FeatureBlocks((0.5, 0.8), (6, 6)), 1)
        path = write_csv(xo, tmp_path / "m.csv")
        assert ingest_csv(path).equals(xo)


class TestStandardize:
    def test_three_points(self):
        x = standardize(IncompleteMatrix.complete([[1.0, 2.0, 3.0]]))
        np.testing.assert_allclose(x.values, [[-1, 0, 1]])

    def test_constant_row(self):
        with pytest.raises(DegenerateFeatureError) as err:
            standardize(IncompleteMatrix.complete([[1.0, 2.0], [5.0, 5.0]]))
        assert err.value.row == 1

    def test_masked_entry(self):
        x = IncompleteMatrix(np.array([[1.0, 0.0, 3.0]]), np.array([[True, False, True]]))
        z = standardize(x)
        np.testing.assert_allclose(z.values, [[-1 / np.sqrt(2), 0, 1 / np.sqrt(2)]])
        assert np.array_equal(z.mask, x.mask)

    def test_idempotent(self):
        rng = np.random.default_rng(0)
        x = IncompleteMatrix.complete(rng.normal(3, 2, (20, 50)))
        once = standardize(x)
        np.testing.assert_allclose(standardize(once).values, once.values, atol=1e-12)
        np.testing.assert_allclose(once.values.mean(axis=1), 0, atol=1e-12)
        np.testing.assert_allclose(once.values.std(axis=1, ddof=1), 1, atol=1e-12)
