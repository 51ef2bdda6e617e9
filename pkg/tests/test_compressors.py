import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import RefSplitMix64, best_topk_error, permk_worker_means, randk_moments, ref_permutation, ref_randk_subset
from subgradfed.compressors import (
    CompressorError,
    CompressorKind,
    CompressorSpec,
    compress_batch,
    compress_permk_batch,
    compress_randk,
    compress_randk_contractive,
    compress_topk,
    expected_density,
    permk_from_permutation,
    randk_indices,
    random_permutation,
)
from subgradfed.rng import SplitMix64, worker_seed

seeds = st.integers(min_value=0, max_value=2**64 - 1)


def _vec(seed, d):
    return np.random.default_rng(seed).normal(size=d)


# -- TopK ---------------------------------------------------------------------

def test_topk_examples():
    c = compress_topk([1, -3, 2, 0], 2)
    assert c.indices.tolist() == [1, 2] and c.values.tolist() == [-3.0, 2.0]
    assert compress_topk([1, -3, 2, 0], 4).to_dense().tolist() == [1, -3, 2, 0]
    z = compress_topk([0, 0, 0], 1)
    assert z.indices.tolist() == [0] and z.values.tolist() == [0.0] and z.nnz == 1


def test_topk_ties_go_to_lowest_index():
    assert compress_topk([1, 1, -1, 1], 2).indices.tolist() == [0, 1]
    assert compress_topk([0.5, 2, -2, 2], 2).indices.tolist() == [1, 2]


@given(st.integers(1, 7), st.data())
def test_topk_is_the_best_support(d, data):
    k = data.draw(st.integers(1, d))
    x = np.array(data.draw(st.lists(st.integers(-3, 3), min_size=d, max_size=d)), dtype=float)
    c = compress_topk(x, k)
    r = c.to_dense() - x
    assert r @ r == best_topk_error(x, k)
    assert np.all(np.diff(c.indices) > 0)


def test_topk_contraction_pointwise():
    rng = np.random.default_rng(0)
    for d in (4, 16, 64):
        for k in sorted({1, d // 2, d}):
            for _ in range(1000):
                x = rng.normal(size=d)
                r = compress_topk(x, k).to_dense() - x
                assert r @ r <= (1 - k / d) * (x @ x) + 1e-12


def test_k_out_of_range():
    with pytest.raises(CompressorError):
        compress_topk([1.0, 2.0], 0)
    with pytest.raises(CompressorError):
        compress_topk([1.0, 2.0], 3)
    with pytest.raises(CompressorError):
        compress_randk([1.0, 2.0], 3, SplitMix64(0))


# -- RandK --------------------------------------------------------------------

def test_randk_full_is_identity():
    for seed in range(5):
        assert compress_randk([1, 2, 3, 4], 4, SplitMix64(seed)).to_dense().tolist() == [1, 2, 3, 4]


def test_randk_scaling_on_drawn_subset():
    x = np.array([1.0, 2.0, 3.0, 4.0])
    for seed in range(200):
        c = compress_randk(x, 2, SplitMix64(seed))
        if c.indices.tolist() == [0, 2]:
            assert c.values.tolist() == [2.0, 6.0]
            break
    else:
        pytest.fail("subset {0, 2} never drawn")


def test_randk_enumeration_d3_k1():
    mean, _ = randk_moments([1.0, 1.0, 1.0], 1)
    np.testing.assert_allclose(mean, [1, 1, 1], atol=1e-12)


def test_randk_exact_moments_by_enumeration():
    rng = np.random.default_rng(4)
    for d in range(1, 7):
        for k in range(1, d + 1):
            x = rng.normal(size=d)
            mean, mse = randk_moments(x, k)
            np.testing.assert_allclose(mean, x, atol=1e-12)
            assert abs(mse - (d / k - 1) * (x @ x)) <= 1e-12


@given(seeds, st.integers(1, 30), st.data())
def test_randk_matches_reference_sampler(seed, d, data):
    k = data.draw(st.integers(1, d))
    assert randk_indices(d, k, SplitMix64(seed)).tolist() == ref_randk_subset(d, k, RefSplitMix64(seed))


def test_randk_subsets_are_uniform():
    d, k, draws = 5, 2, 20000
    g = SplitMix64(99)
    counts = {}
    for _ in range(draws):
        key = tuple(randk_indices(d, k, g).tolist())
        counts[key] = counts.get(key, 0) + 1
    assert set(counts) == set(itertools.combinations(range(d), k))
    expected = draws / 10
    chi2 = sum((c - expected) ** 2 / expected for c in counts.values())
    assert chi2 < 27.9  # 9 dof, p = 0.001


def test_unscaled_randk_contractive():
    x = _vec(1, 8)
    c = compress_randk_contractive(x, 3, SplitMix64(2))
    assert np.array_equal(c.values, x[c.indices])


# -- PermK --------------------------------------------------------------------

def test_permk_spec_example():
    x = np.array([10.0, 20.0, 30.0, 40.0])
    # 1-based pi = (3, 1, 4, 2) -> worker 1 gets {1, 3}, worker 2 gets {2, 4}
    outs = permk_from_permutation(x, 2, np.array([2, 0, 3, 1]))
    assert outs[0].indices.tolist() == [0, 2] and outs[0].values.tolist() == [20.0, 60.0]
    assert outs[1].indices.tolist() == [1, 3] and outs[1].values.tolist() == [40.0, 80.0]
    assert np.array_equal((outs[0].to_dense() + outs[1].to_dense()) / 2, x)


def test_permk_trivial_cases():
    (only,) = compress_permk_batch([1.5, -2.0], 1, SplitMix64(0))
    assert only.to_dense().tolist() == [1.5, -2.0]
    outs = compress_permk_batch(np.zeros(6), 3, SplitMix64(0))
    assert len(outs) == 3 and all(not o.values.any() for o in outs)


@given(seeds, st.sampled_from([(4, 2), (6, 3), (12, 4), (10, 10), (9, 1), (100, 10)]))
def test_permk_reconstruction_every_draw(seed, dn):
    d, n = dn
    x = _vec(seed % 2**32, d)
    outs = compress_permk_batch(x, n, SplitMix64(seed))
    mean = sum(o.to_dense() for o in outs) / n
    assert np.max(np.abs(mean - x)) <= 1e-12
    covered = np.sort(np.concatenate([o.indices for o in outs]))
    assert covered.tolist() == list(range(d))
    assert all(o.nnz == d // n for o in outs)


def test_permk_worker_unbiased_over_all_permutations():
    rng = np.random.default_rng(5)
    for d, n in ((2, 2), (4, 2), (4, 4), (5, 5), (3, 3), (5, 1)):
        x = rng.normal(size=d)
        means = permk_worker_means(x, n)
        assert np.max(np.abs(means - x)) <= 1e-12


@given(seeds, st.integers(1, 30))
def test_permutation_matches_reference(seed, d):
    assert random_permutation(d, SplitMix64(seed)).tolist() == ref_permutation(d, RefSplitMix64(seed))


def test_permk_needs_divisibility():
    with pytest.raises(CompressorError):
        compress_permk_batch(np.ones(5), 2, SplitMix64(0))
    with pytest.raises(CompressorError):
        CompressorSpec(CompressorKind.PERMK, 2, 5, 2)
    with pytest.raises(CompressorError):
        CompressorSpec(CompressorKind.PERMK, 3, 6, 3)


# -- deployment modes ---------------------------------------------------------

def _workers(n, seed=0):
    return [SplitMix64(worker_seed(seed, i)) for i in range(n)]


def test_same_randk_shares_the_draw():
    spec = CompressorSpec("SameRandK", 3, 10, 4)
    outs = compress_batch(spec, _vec(0, 10), _workers(4), shared_rng=SplitMix64(1))
    assert all(np.array_equal(o.indices, outs[0].indices) for o in outs)


def test_ind_randk_regression():
    # frozen index sets for d=4, k=2, n=2 with the worker streams of run seeds 0 and 1
    spec = CompressorSpec("IndRandK", 2, 4, 2)
    x = [1.0, 2.0, 3.0, 4.0]
    assert [o.indices.tolist() for o in compress_batch(spec, x, _workers(2, 0))] == [[1, 2], [1, 2]]
    assert [o.indices.tolist() for o in compress_batch(spec, x, _workers(2, 1))] == [[0, 3], [0, 1]]


def test_identity_and_topk_broadcast():
    x = _vec(3, 6)
    outs = compress_batch(CompressorSpec.identity(6, 3), x, _workers(3))
    assert all(o.nnz == 6 and np.array_equal(o.to_dense(), x) for o in outs)
    outs = compress_batch(CompressorSpec("TopK", 2, 6, 3), x, _workers(3))
    assert all(np.array_equal(o.indices, outs[0].indices) for o in outs)


def test_batch_determinism():
    spec = CompressorSpec("IndRandK", 5, 20, 4)
    x = _vec(8, 20)
    a = compress_batch(spec, x, _workers(4, 17))
    b = compress_batch(spec, x, _workers(4, 17))
    assert all(np.array_equal(p.indices, q.indices) and np.array_equal(p.values, q.values) for p, q in zip(a, b))


def test_batch_dimension_check():
    with pytest.raises(CompressorError):
        compress_batch(CompressorSpec("TopK", 2, 6, 1), np.ones(5), _workers(1))


# -- parameters ---------------------------------------------------------------

def test_alpha_omega():
    assert CompressorSpec("TopK", 10, 1000, 1).alpha == 0.01
    assert CompressorSpec("SameRandK", 10, 1000, 1).omega == 99.0
    assert CompressorSpec("PermK", 100, 1000, 10).omega == 9.0
    ident = CompressorSpec.identity(7)
    assert (ident.alpha, ident.omega, ident.k) == (1.0, 0.0, 7)
    with pytest.raises(CompressorError):
        CompressorSpec("TopK", 1, 4).omega
    with pytest.raises(CompressorError):
        CompressorSpec("IndRandK", 1, 4).alpha


def test_expected_density():
    assert expected_density(CompressorSpec("SameRandK", 10, 1000), 0.0) == 10
    assert expected_density(CompressorSpec("PermK", 10, 1000, 100), 0.01) == pytest.approx(19.9, abs=1e-12)
    assert expected_density(CompressorSpec.identity(50), 0.3) == 50
    with pytest.raises(CompressorError):
        expected_density(CompressorSpec("TopK", 1, 5), 1.5)
