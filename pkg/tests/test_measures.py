import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from supermix import (
    DiscreteMeasure,
    MixingKernelSpec,
    Sample,
    jordan_decompose,
    merge_close,
    min_separation,
    sample_mixture,
    total_variation,
)
from supermix.errors import DimensionMismatchError, InvalidMeasureError, UndefinedSeparationError


def test_total_variation_examples(fig1_truth):
    assert total_variation(DiscreteMeasure.empty(1)) == 0
    assert total_variation(fig1_truth) == pytest.approx(1.0)
    assert total_variation(DiscreteMeasure([-0.5, 0.5], [0.0, 1.0])) == pytest.approx(1.0)


def test_jordan_examples():
    plus, minus = jordan_decompose(DiscreteMeasure([1.0], [0.0]))
    assert plus == DiscreteMeasure([1.0], [0.0]) and len(minus) == 0
    plus, minus = jordan_decompose(DiscreteMeasure([-2.0], [3.0]))
    assert len(plus) == 0 and minus == DiscreteMeasure([2.0], [3.0])
    plus, minus = jordan_decompose(DiscreteMeasure([0.5, -0.5], [0.0, 1.0]))
    assert plus == DiscreteMeasure([0.5], [0.0])
    assert minus == DiscreteMeasure([0.5], [1.0])


def test_min_separation_examples(fig1_truth):
    assert min_separation(fig1_truth) == pytest.approx(12.2)
    assert min_separation(DiscreteMeasure([1, 1], [0.0, 1.0])) == 1.0
    assert min_separation(DiscreteMeasure([1, 1], [[0, 0], [3, 4]])) == 5.0
    with pytest.raises(UndefinedSeparationError):
        min_separation(DiscreteMeasure([1.0], [0.0]))


def test_merge_close_examples():
    out = merge_close(DiscreteMeasure([0.5, 0.5], [0.0, 0.001]), 0.01)
    assert len(out) == 1
    assert out.weights[0] == pytest.approx(1.0)
    assert out.locations[0, 0] == pytest.approx(0.0005)
    mu = DiscreteMeasure([1.0, 2.0, -1.0], [0.0, 0.3, 5.0])
    assert merge_close(mu, 0) == mu
    far = DiscreteMeasure([1.0, 1.0], [0.0, 10.0])
    assert merge_close(far, 1.0) == far


def test_construction_merges_and_drops():
    mu = DiscreteMeasure([1.0, 2.0, 0.0], [0.5, 0.5, 3.0])
    assert len(mu) == 1 and mu.weights[0] == 3.0
    with pytest.raises(DimensionMismatchError):
        DiscreteMeasure([1.0, 2.0], [[0.0, 1.0]])


def test_serialization_roundtrip(fig1_truth):
    assert DiscreteMeasure.from_json_dict(fig1_truth.to_json_dict()) == fig1_truth
    assert DiscreteMeasure.from_csv(fig1_truth.to_csv()) == fig1_truth
    s = Sample(np.arange(6.0).reshape(3, 2))
    assert np.array_equal(Sample.from_csv(s.to_csv()).points, s.points)
    assert fig1_truth.to_csv().splitlines()[0] == "weight,x1"


def test_sample_mixture_examples(fig1_truth):
    gauss = MixingKernelSpec.gaussian(1)
    assert sample_mixture(fig1_truth, gauss, 0, 1).n == 0
    big = sample_mixture(DiscreteMeasure([1.0], [0.0]), gauss, 20000, 3)
    tol = 4 / np.sqrt(big.n)
    assert abs(big.points.mean()) < tol
    assert abs(big.points.var() - 1) < 4 * np.sqrt(2 / big.n)
    s = sample_mixture(fig1_truth, gauss, 200, 0)
    assert s.n == 200
    spread = np.sqrt(np.sum(fig1_truth.weights * (fig1_truth.locations[:, 0] + 3.506) ** 2) + 1)
    assert abs(s.points.mean() + 3.506) < 3 * spread / np.sqrt(200)


def test_sample_mixture_reproducible_and_validated(fig1_truth):
    k = MixingKernelSpec.tensor_laplace(1)
    a = sample_mixture(fig1_truth, k, 50, 7)
    b = sample_mixture(fig1_truth, k, 50, 7)
    assert np.array_equal(a.points, b.points)
    assert not np.array_equal(a.points, sample_mixture(fig1_truth, k, 50, 8).points)
    with pytest.raises(InvalidMeasureError):
        sample_mixture(DiscreteMeasure([0.5, 0.2], [0.0, 1.0]), k, 10, 0)
    with pytest.raises(InvalidMeasureError):
        sample_mixture(DiscreteMeasure([1.5, -0.5], [0.0, 1.0]), k, 10, 0)


measures_1d = st.lists(
    st.tuples(st.floats(-5, 5).filter(lambda w: w != 0), st.floats(-20, 20)), min_size=1, max_size=8
)


@settings(max_examples=60, deadline=None)
@given(measures_1d)
def test_jordan_properties(atoms):
    mu = DiscreteMeasure.from_atoms(atoms, dim=1)
    plus, minus = jordan_decompose(mu)
    assert total_variation(mu) == pytest.approx(total_variation(plus) + total_variation(minus))
    assert not set(map(tuple, plus.locations)) & set(map(tuple, minus.locations))
    assert (plus - minus) == mu


@settings(max_examples=60, deadline=None)
@given(measures_1d.filter(lambda a: len({t for _, t in a}) >= 2), st.randoms())
def test_min_separation_permutation_invariant(atoms, rnd):
    mu = DiscreteMeasure.from_atoms(atoms, dim=1)
    shuffled = list(mu.atoms)
    rnd.shuffle(shuffled)
    assert min_separation(DiscreteMeasure.from_atoms(shuffled, dim=1)) == min_separation(mu)


@settings(max_examples=40, deadline=None)
@given(measures_1d, st.floats(0, 3))
def test_merge_close_preserves_positive_mass(atoms, radius):
    mu = DiscreteMeasure.from_atoms([(abs(w), t) for w, t in atoms], dim=1)
    merged = merge_close(mu, radius)
    assert total_variation(merged) == pytest.approx(total_variation(mu))
    assert len(merged) <= len(mu)
