import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from genrank.errors import ContractError, UndefinedCorrelationError
from genrank.uncertainty import (entropy, eos_is_lowest, fractional_ranks, nucleus, position_csv,
                                 position_stats, query_aggregates, relevance_csv, spearman,
                                 spearman_test, step_uncertainties, term_uncertainty)

from oracles import brute_entropy


def _dist(rng, n, conc=1.0):
    return rng.dirichlet(np.full(n, conc))


class TestNucleus:
    def test_hand_example(self):
        nd = nucleus([0.5, 0.3, 0.15, 0.04, 0.01], 0.95)
        assert list(nd.support) == [0, 1, 2]
        np.testing.assert_allclose(nd.probs, [0.5263, 0.3158, 0.1579], atol=1e-4)
        assert term_uncertainty(nd) == pytest.approx(0.9932, abs=1e-4)

    def test_one_hot(self):
        nd = nucleus([0.0, 1.0, 0.0])
        assert list(nd.support) == [1] and list(nd.probs) == [1.0]
        assert term_uncertainty(nd) == 0.0

    def test_full_mass_keeps_nonzero(self):
        d = np.array([0.1, 0.0, 0.6, 0.3])
        nd = nucleus(d, 1.0)
        assert sorted(nd.support) == [0, 2, 3]
        np.testing.assert_allclose(nd.probs, [0.6, 0.3, 0.1])

    def test_tie_by_token_id(self):
        nd = nucleus([0.25, 0.25, 0.25, 0.25], 0.5)
        assert list(nd.support) == [0, 1]

    def test_exact_threshold_boundary(self):
        # 0.5 + 0.3 + 0.15 accumulates to 0.95 only up to roundoff
        assert len(nucleus([0.5, 0.3, 0.15, 0.05], 0.95)) == 3

    @pytest.mark.parametrize("p", [0.0, -0.1, 1.01])
    def test_invalid_p(self, p):
        with pytest.raises(ContractError):
            nucleus([1.0], p)

    def test_not_a_distribution(self):
        with pytest.raises(ContractError):
            nucleus([0.5, 0.2])

    def test_support_monotone_in_p(self, rng):
        for _ in range(200):
            d = _dist(rng, 12, 0.5)
            sizes = [len(nucleus(d, p)) for p in (0.3, 0.5, 0.8, 0.95, 1.0)]
            assert sizes == sorted(sizes)

    def test_support_is_minimal(self, rng):
        for _ in range(200):
            d = _dist(rng, 10)
            nd = nucleus(d, 0.9)
            top = np.sort(d)[::-1]
            assert top[:len(nd)].sum() >= 0.9 - 1e-12
            if len(nd) > 1:
                assert top[:len(nd) - 1].sum() < 0.9


class TestEntropy:
    def test_uniform_four(self):
        assert entropy([0.25] * 4) == pytest.approx(math.log(4))

    def test_against_brute(self, rng):
        for _ in range(100):
            d = _dist(rng, 7)
            assert entropy(d) == pytest.approx(brute_entropy(d), abs=1e-12)

    def test_bounds_on_10000_distributions(self, rng):
        for _ in range(10_000):
            d = _dist(rng, int(rng.integers(1, 30)), float(rng.choice([0.05, 0.5, 5.0])))
            nd = nucleus(d)
            u = term_uncertainty(nd)
            assert -1e-12 <= u <= math.log(len(nd)) + 1e-12

    def test_flat_beats_skewed_at_equal_max(self):
        # same top probability, so the same generation score for that token
        flat = np.array([0.4, 0.2, 0.2, 0.2])
        skew = np.array([0.4, 0.3, 0.25, 0.05])
        assert flat[0] == skew[0]
        assert term_uncertainty(nucleus(flat, 1.0)) > term_uncertainty(nucleus(skew, 1.0))

    def test_step_uncertainties_rows(self, rng):
        d = np.stack([_dist(rng, 5) for _ in range(4)])
        np.testing.assert_allclose(step_uncertainties(d),
                                   [term_uncertainty(nucleus(r)) for r in d])


class TestAggregates:
    def test_constant(self):
        a = query_aggregates([0.7, 0.7, 0.7])
        assert (a.mean, a.variance, a.max) == (pytest.approx(0.7), pytest.approx(0.0), 0.7)
        assert a.entropy == pytest.approx(math.log(3))

    def test_pair_of_ones(self):
        assert query_aggregates([1, 1]).entropy == pytest.approx(math.log(2))

    def test_zero_two(self):
        a = query_aggregates([0, 2])
        assert (a.mean, a.variance, a.max) == (1.0, 1.0, 2.0)
        assert a.entropy == 0.0

    def test_all_zero(self):
        assert query_aggregates([0.0, 0.0]).entropy == 0.0

    def test_empty(self):
        with pytest.raises(ContractError):
            query_aggregates([])

    @given(st.lists(st.floats(0, 10, allow_nan=False), min_size=1, max_size=40))
    def test_invariants(self, xs):
        a = query_aggregates(xs)
        assert a.variance >= 0
        assert a.max >= a.mean - 1e-12
        assert 0 <= a.entropy <= math.log(len(xs)) + 1e-9


class TestSpearman:
    def test_hand_example(self):
        assert spearman([1, 2, 3], [2, 1, 3]) == pytest.approx(0.5)

    def test_extremes(self):
        assert spearman([1, 2, 3, 4], [9, 7, 5, 1]) == -1.0
        assert spearman([3, 1, 2], [3, 1, 2]) == 1.0

    def test_constant_list_undefined(self):
        with pytest.raises(UndefinedCorrelationError):
            spearman([1, 1, 1], [1, 2, 3])

    def test_fractional_ranks(self):
        np.testing.assert_array_equal(fractional_ranks([10, 20, 10, 5]), [2.5, 4, 2.5, 1])

    def test_matches_scipy_with_ties(self, rng):
        for _ in range(50):
            n = int(rng.integers(5, 60))
            xs = rng.integers(0, 8, size=n).astype(float)
            ys = xs * rng.choice([-1, 1]) + rng.normal(size=n)
            if np.ptp(xs) == 0:
                continue
            r, p = spearman_test(xs, ys)
            ref = stats.spearmanr(xs, ys)
            assert r == pytest.approx(ref.statistic, abs=1e-12)
            assert p == pytest.approx(ref.pvalue, rel=1e-6, abs=1e-12)


class TestPositions:
    def test_hand_means(self):
        s = position_stats([[1, 2, 3, 4, 0.5], [3, 2, 1, 4, 0.1]])
        assert [r.mean for r in s[5]] == pytest.approx([2, 2, 2, 4, 0.3])

    def test_single_query_collapses(self):
        s = position_stats([[0.4, 0.2]])
        for r, v in zip(s[2], [0.4, 0.2]):
            assert r.q1 == r.median == r.q3 == v

    def test_partition(self, rng):
        queries = [rng.random(int(rng.integers(1, 6))) for _ in range(40)]
        s = position_stats(queries)
        assert sum(rows[0].n for rows in s.values()) == 40
        assert all(len(rows) == length for length, rows in s.items())

    def test_eos_lowest(self):
        s = position_stats([[1.0, 0.2], [2.0, 0.1], [1.0, 3.0, 0.5]])
        assert eos_is_lowest(s) == {2: True, 3: True}

    def test_csv_headers(self):
        s = position_stats([[1.0, 0.5]])
        assert position_csv(s).splitlines()[0] == "query_length,position,q1,median,q3"
        rows = [("q1", "d1", -2.5, query_aggregates([1.0, 0.5]))]
        lines = relevance_csv(rows).splitlines()
        assert lines[0] == "query_id,doc_id,relevance_score,unc_mean,unc_var,unc_max,unc_entropy"
        assert lines[1].startswith("q1,d1,-2.5,0.75,")
