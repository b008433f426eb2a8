"""Tests for the synthetic data generator."""
import numpy as np
import pytest
from scipy.stats import kurtosis, skew

from lvorder import CalibrationError
from lvorder.simulate import (
    BUILTIN_SPECS,
    DOUBLE_EXPONENTIAL,
    GAUSS_MIXTURE_ASYMMETRIC,
    GAUSS_MIXTURE_SYMMETRIC,
    ModelSpec,
    NoiseSpec,
    all_confounded_spec,
    analytic_covariance,
    benchmark_network_spec,
    calibrate_snr,
    chain_spec,
    generate,
    ground_truth,
    sample_noise,
    sample_sources,
)
from spec_files import spec_from_json_file


def _unit_noise(p: int):
    return [NoiseSpec.of(DOUBLE_EXPONENTIAL) for _ in range(p)]


def test_laplace_kurtosis():
    """Test double exponential draws have excess kurtosis near 3."""
    draws = sample_noise(NoiseSpec.of(DOUBLE_EXPONENTIAL), 100_000, 1)
    assert 2.5 <= kurtosis(draws) <= 3.5
    assert np.std(draws) == pytest.approx(1.0, abs=0.02)


def test_symmetric_mixture_skew():
    """Test the symmetric mixture is not skewed."""
    draws = sample_noise(NoiseSpec.of(GAUSS_MIXTURE_SYMMETRIC), 100_000, 2)
    assert -0.1 <= skew(draws) <= 0.1


def test_asymmetric_mixture_skew():
    """Test the asymmetric mixture is skewed and standardized."""
    spec = NoiseSpec.of(GAUSS_MIXTURE_ASYMMETRIC, 2.0)
    draws = sample_noise(spec, 100_000, 3)
    assert abs(skew(draws)) > 0.3
    assert np.mean(draws) == pytest.approx(0.0, abs=0.03)
    assert np.std(draws) == pytest.approx(2.0, abs=0.04)


def test_sample_noise_deterministic():
    """Test draws depend only on the seed."""
    spec = NoiseSpec.of(GAUSS_MIXTURE_ASYMMETRIC)
    np.testing.assert_array_equal(sample_noise(spec, 10, 5), sample_noise(spec, 10, 5))
    assert not np.array_equal(sample_noise(spec, 10, 5), sample_noise(spec, 10, 6))


@pytest.mark.parametrize(
    "spec",
    [
        NoiseSpec.of(GAUSS_MIXTURE_SYMMETRIC)._replace(weights=(0.6, 0.6)),
        NoiseSpec.of(GAUSS_MIXTURE_SYMMETRIC)._replace(weights=(1.2, -0.2)),
        NoiseSpec.of(GAUSS_MIXTURE_SYMMETRIC)._replace(sds=(0.5,)),
        NoiseSpec.of(DOUBLE_EXPONENTIAL, 0.0),
        NoiseSpec("cauchy"),
    ],
)
def test_sample_noise_invalid(spec):
    """Test invalid noise specs are rejected."""
    with pytest.raises(ValueError):
        sample_noise(spec, 10, 0)


def test_noise_from_kind_name():
    """Test a bare kind name loads the default parameters."""
    assert NoiseSpec.from_json("gauss_mixture_symmetric") == NoiseSpec.of(
        GAUSS_MIXTURE_SYMMETRIC
    )
    assert NoiseSpec.from_json({"kind": "double_exponential", "target_sd": 2}) == (
        NoiseSpec.of(DOUBLE_EXPONENTIAL, 2.0)
    )


def test_model_spec_create_orders():
    """Test a causal order is derived from B."""
    B = np.zeros((3, 3))
    B[0, 2] = 0.5
    B[1, 0] = 0.5
    spec = ModelSpec.create(B, None, _unit_noise(3))
    assert spec.causal_order == ("x3", "x1", "x2")
    assert spec.q == 0


def test_model_spec_cycle():
    """Test a cyclic B is rejected."""
    B = np.array([[0.0, 0.5], [0.5, 0.0]])
    with pytest.raises(ValueError):
        ModelSpec.create(B, None, _unit_noise(2))


def test_model_spec_wrong_order():
    """Test a causal order that disagrees with B."""
    B = np.array([[0.0, 0.0], [0.5, 0.0]])
    with pytest.raises(ValueError):
        ModelSpec.create(B, None, _unit_noise(2), causal_order=["x2", "x1"])


def test_model_spec_single_loading():
    """Test a confounder must load on at least two variables."""
    with pytest.raises(ValueError):
        ModelSpec.create(
            np.zeros((2, 2)),
            [[1.0], [0.0]],
            _unit_noise(2),
            [NoiseSpec.of(DOUBLE_EXPONENTIAL)],
        )


def test_model_spec_noise_count():
    """Test one noise spec per variable is required."""
    with pytest.raises(ValueError):
        ModelSpec.create(np.zeros((3, 3)), None, _unit_noise(2))


def test_model_spec_json():
    """Test loading saved specs."""
    spec = spec_from_json_file("chain2.json")
    assert spec.variable_ids == ("cause", "effect")
    assert spec.causal_order == ("cause", "effect")
    assert spec.noise[1] == NoiseSpec.of(GAUSS_MIXTURE_ASYMMETRIC)
    assert ModelSpec.from_json(spec.to_json()).to_json() == spec.to_json()

    with pytest.raises(ValueError):
        spec_from_json_file("malformed.json")


def test_generate_independent():
    """Test rows without edges or confounders are uncorrelated."""
    spec = ModelSpec.create(np.zeros((3, 3)), None, _unit_noise(3))
    X, truth = generate(spec, 10_000, 1)
    corr = np.corrcoef(X.values)
    assert np.all(np.abs(corr[np.triu_indices(3, 1)]) < 0.05)
    assert not truth.ancestor
    assert not truth.shares_confounder


def test_generate_edge():
    """Test the regression slope of a single edge."""
    spec = ModelSpec.create([[0.0, 0.0], [0.8, 0.0]], None, _unit_noise(2))
    X, truth = generate(spec, 10_000, 2)
    cov = np.cov(X.values)
    assert cov[0, 1] / cov[0, 0] == pytest.approx(0.8, abs=0.05)
    assert truth.is_ancestor("x1", "x2")
    assert not truth.is_ancestor("x2", "x1")
    assert truth.strength("x2", "x1") == 0.8


def test_generate_confounded():
    """Test a shared confounder correlates variables without an edge."""
    spec = spec_from_json_file("confounded_pair.json")
    X, truth = generate(spec, 10_000, 3)
    assert abs(np.corrcoef(X.values)[0, 1]) > 0.1
    assert truth.confounded("x1", "x2")
    assert truth.confounded("x2", "x1")
    # x3 is reached through its parent x2
    assert truth.confounded("x1", "x3")
    assert truth.is_ancestor("x2", "x3")
    assert not truth.is_ancestor("x1", "x3")


def test_generate_deterministic():
    """Test generated data depend only on the seed."""
    spec = benchmark_network_spec()
    first, _ = generate(spec, 100, 9)
    second, _ = generate(spec, 100, 9)
    assert first == second
    third, _ = generate(spec, 100, 10)
    assert first != third


def test_sample_sources_shapes():
    """Test source draws have one row per source."""
    e, f = sample_sources(benchmark_network_spec(), 50, 1)
    assert e.shape == (6, 50)
    assert f.shape == (2, 50)
    e, f = sample_sources(chain_spec(3), 50, 1)
    assert f.shape == (0, 50)


def test_analytic_covariance():
    """Test the population covariance against a large sample."""
    spec = spec_from_json_file("confounded_pair.json")
    X, _ = generate(spec, 50_000, 4)
    np.testing.assert_allclose(np.cov(X.values), analytic_covariance(spec), atol=0.08)


def test_calibrate_unit_chain():
    """Test a unit edge from a unit source needs unit noise."""
    spec = ModelSpec.create([[0.0, 0.0], [1.0, 0.0]], None, _unit_noise(2))
    calibrated = calibrate_snr(spec, 1.0)
    assert calibrated.noise[0].target_sd == 1.0
    assert calibrated.noise[1].target_sd == pytest.approx(1.0)


def test_calibrate_ratio():
    """Test other ratios scale the noise."""
    spec = ModelSpec.create([[0.0, 0.0], [2.0, 0.0]], None, _unit_noise(2))
    calibrated = calibrate_snr(spec, 4.0)
    assert calibrated.noise[1].target_sd == pytest.approx(1.0)


def test_calibrate_zero_ratio():
    """Test a zero ratio cannot be reached on a variable with parents."""
    spec = ModelSpec.create([[0.0, 0.0], [1.0, 0.0]], None, _unit_noise(2))
    with pytest.raises(CalibrationError) as info:
        calibrate_snr(spec, 0.0)
    assert info.value.variable_id == "x2"


def test_calibrated_benchmark_ratio():
    """Test the benchmark network reaches a ratio of one in simulation."""
    spec = benchmark_network_spec()
    n, seed = 10_000, 5
    X, _ = generate(spec, n, seed)
    e, _ = sample_sources(spec, n, seed)
    for i, variable_id in enumerate(spec.variable_ids):
        has_input = np.any(spec.B[i]) or np.any(spec.Lambda[i])
        if not has_input:
            continue
        ratio = np.var(X.row(variable_id)) / np.var(e[i])
        assert 1.8 <= ratio <= 2.2, variable_id


def test_benchmark_network_shape():
    """Test the benchmark network layout."""
    spec = benchmark_network_spec()
    spec.validate()
    assert (spec.p, spec.q) == (6, 2)
    kinds = [s.kind for s in spec.noise]
    assert kinds[0] == kinds[3] == GAUSS_MIXTURE_ASYMMETRIC
    assert kinds[1] == kinds[4] == DOUBLE_EXPONENTIAL
    assert kinds[2] == kinds[5] == GAUSS_MIXTURE_SYMMETRIC
    assert [s.kind for s in spec.confounder_noise] == [
        GAUSS_MIXTURE_ASYMMETRIC,
        DOUBLE_EXPONENTIAL,
    ]
    truth = ground_truth(spec)
    assert not truth.confounded("x1", "x2")
    assert not truth.confounded("x1", "x6")
    for parent, child in [("x2", "x3"), ("x4", "x5")]:
        assert truth.is_ancestor(parent, child)
        assert truth.confounded(parent, child)
    assert not np.any(spec.Lambda[0]) and not np.any(spec.Lambda[5])


def test_benchmark_network_cancellation():
    """Test x4 and x5 are uncorrelated and x2 and x3 nearly so given x1."""
    sigma = analytic_covariance(benchmark_network_spec())
    partial = sigma - np.outer(sigma[:, 0], sigma[0, :]) / sigma[0, 0]
    assert partial[3, 4] == pytest.approx(0.0, abs=1e-12)
    assert 0.0 < partial[1, 2] < 0.2 * np.sqrt(partial[1, 1] * partial[2, 2])


def test_builtin_specs_valid():
    """Test every built-in spec is valid."""
    for factory in BUILTIN_SPECS.values():
        factory().validate()
    spec = all_confounded_spec()
    truth = ground_truth(spec)
    assert len(truth.shares_confounder) == spec.p * (spec.p - 1)
    sigma = analytic_covariance(spec)
    np.testing.assert_allclose(sigma - np.diag(np.diag(sigma)), 0.0, atol=1e-12)
