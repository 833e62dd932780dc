import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from simalign.evaluation import cv_fit, joint_fit, leave_one_domain_out
from simalign.exceptions import DimensionError, ValidationError
from simalign.similarity import WeightVector, weighted_similarity
from simalign.synth import SynthSpec, generate, recovery_score

GRID = [0.01, 0.1, 1.0, 10.0, 100.0, 1000.0]


def test_spec_validation():
    with pytest.raises(ValidationError):
        SynthSpec(n_items=0)
    with pytest.raises(ValidationError):
        SynthSpec(weight_sparsity=1.5)
    with pytest.raises(ValidationError):
        SynthSpec(noise_sd=-1)
    assert SynthSpec(n_features=512, weight_sparsity=0.9375).n_informative == 32


@given(st.integers(2, 15), st.integers(1, 10), st.floats(0, 1), st.integers(0, 1000))
def test_generated_properties(n, d, sparsity, seed):
    spec = SynthSpec(n_items=n, n_features=d, weight_sparsity=sparsity, noise_sd=0.0, seed=seed)
    res = generate(spec)
    ds, w = res.datasets[0], res.weights[0]
    S = ds.similarities.values
    np.testing.assert_array_equal(S, S.T)
    assert ds.similarities.diagonal_defined
    assert np.all(w.values >= 0) and np.count_nonzero(w.values) == spec.n_informative
    np.testing.assert_allclose(S, weighted_similarity(ds.features, w).values, atol=1e-10)
    np.testing.assert_allclose(ds.features.values.mean(axis=0), 0, atol=1e-12)


def test_generation_is_pure():
    spec = SynthSpec(n_items=20, n_features=10, n_domains=2, seed=4)
    a, b = generate(spec), generate(spec)
    for x, y in zip(a.datasets, b.datasets):
        np.testing.assert_array_equal(x.similarities.values, y.similarities.values)
        np.testing.assert_array_equal(x.features.values, y.features.values)


def test_noise_free_recovery():
    d = generate(SynthSpec(n_items=40, n_features=20, weight_sparsity=0.5, noise_sd=0.0)).datasets[0]
    _, rep = cv_fit(d.features, d.similarities, GRID)
    assert rep.pearson2_heldout >= 0.999


def test_pure_noise_null_model():
    d = generate(SynthSpec(n_items=40, n_features=20, weight_sparsity=1.0, noise_sd=1.0,
                           noise_relative=False)).datasets[0]
    _, rep = cv_fit(d.features, d.similarities, GRID)
    assert rep.r2_transformed < 0.05


def test_shared_weights_lodo_comparable():
    res = generate(SynthSpec(n_items=30, n_features=16, weight_sparsity=0.5, noise_sd=0.3,
                             n_domains=6, seed=2))
    _, rep = joint_fit(res.datasets, GRID)
    for d in res.datasets:
        assert abs(leave_one_domain_out(res.datasets, d.name, GRID) - rep.pooled_heldout) < 0.1


def test_non_shared_supports_are_disjoint():
    res = generate(SynthSpec(n_items=10, n_features=40, weight_sparsity=0.75, n_domains=4,
                             shared_weights=False))
    supports = [set(np.flatnonzero(w.values)) for w in res.weights]
    for a in range(4):
        for b in range(a + 1, 4):
            assert not supports[a] & supports[b]


def test_ceiling_reflects_noise():
    clean = generate(SynthSpec(n_items=30, n_features=10, noise_sd=0.0, weight_sparsity=0.5))
    noisy = generate(SynthSpec(n_items=30, n_features=10, noise_sd=1.0, weight_sparsity=0.5))
    assert clean.ceiling_r2() == pytest.approx(1.0)
    assert 0.3 < noisy.ceiling_r2() < 0.7


def test_recovery_score_examples():
    w = WeightVector([0.0, 1.0, 0.5, 2.0])
    assert recovery_score(w, w) == pytest.approx(1.0)
    assert recovery_score(WeightVector(3 * w.values), w) == pytest.approx(1.0)
    with pytest.raises(ValidationError):
        recovery_score(WeightVector([1.0, 1.0]), WeightVector([1.0, 1.0]))
    with pytest.raises(DimensionError):
        recovery_score(WeightVector([1.0, 2.0]), w)


@pytest.mark.slow
def test_full_scale_recovery():
    res = generate(SynthSpec(n_items=120, n_features=4096, weight_sparsity=1 - 50 / 4096, seed=0))
    d = res.datasets[0]
    w, rep = cv_fit(d.features, d.similarities)
    assert recovery_score(w, res.weights[0]) >= 0.8
