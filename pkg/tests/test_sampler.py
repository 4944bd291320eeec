import math

import numpy as np
import pytest
from scipy import stats

from lazygumbel.gumbel import cutoff_for_expected_exceedances
from lazygumbel.mips.base import ExactProvider, TopKProvider
from lazygumbel.model import (Dataset, Query, RejectedInput, TopKResult, exact_topk, score_all,
                              select_topk, softmax)
from lazygumbel.sampler import (coupled_oracle_check, fixed_b_sample, golden_section_min,
                                lazy_sample, resolve_gap, sample_many, tail_escape_objective,
                                tv_upper_bound)

from conftest import scalar_dataset


class SkipBest(TopKProvider):
    """Returns ranks 2..k+1: approximate with a known gap, for testing c > 0."""

    exact = False
    gap_c = None

    def topk(self, dataset, query, k):
        y = score_all(dataset, query).scores
        ids, sc = select_topk(np.arange(dataset.n), y, k + 1)
        return TopKResult(ids[1:], sc[1:], k)


def tv_closed_form(zs, w):
    """min over u of 1 - (1 - e^{-u zs}) e^{-u w}, by calculus."""
    r = w / (zs + w)
    return 1 - r ** (w / zs) * (1 - r)


class TestResolveGap:
    def test_rules(self):
        assert resolve_gap(ExactProvider(), None) == 0.0
        with pytest.raises(RejectedInput):
            resolve_gap(SkipBest(), None)
        with pytest.raises(RejectedInput):
            resolve_gap(SkipBest(), 0.0)
        assert resolve_gap(SkipBest(), 0.3) == 0.3
        with pytest.raises(RejectedInput):
            resolve_gap(ExactProvider(), -1.0)

    def test_below_certificate(self):
        class Cert(SkipBest):
            gap_c = 0.5
        with pytest.raises(RejectedInput):
            resolve_gap(Cert(), 0.2)


class TestLazySample:
    def test_single_item(self, rng):
        ds, q = scalar_dataset([1.5])
        tr = lazy_sample(ds, q, k=1, rng=rng)
        assert tr.chosen_id == 0 and tr.m == 0 and tr.touched == 1

    def test_full_set_closed_form(self):
        ds, q = scalar_dataset([math.log(3), 0.0])
        ids = sample_many(ds, q, 100_000, k=2, rng=4)
        assert abs(np.mean(ids == 0) - 0.75) <= 0.01

    def test_trace_fields(self, small_gaussian):
        q = Query(np.ones(6), scale=2.0)
        tr = lazy_sample(small_gaussian, q, k=10, rng=3)
        top = exact_topk(small_gaussian, q, 10)
        assert tr.S_min == pytest.approx(top.min_score)
        assert tr.B == pytest.approx(tr.M - tr.S_min)
        assert tr.touched == 10 + tr.m
        assert tr.k == 10 and tr.l is None and tr.seed == 3

    def test_seeded_repeatable(self, small_gaussian):
        q = Query(np.ones(6))
        a = sample_many(small_gaussian, q, 50, k=5, rng=9)
        b = sample_many(small_gaussian, q, 50, k=5, rng=9)
        np.testing.assert_array_equal(a, b)

    def test_distribution_chi_square(self):
        r = np.random.default_rng(1)
        y = r.normal(0, 1.0, 40)
        ds, q = scalar_dataset(y)
        ids = sample_many(ds, q, 60_000, k=3, rng=2)
        exp_ = softmax(y) * ids.size
        assert stats.chisquare(np.bincount(ids, minlength=40), exp_).pvalue > 0.001

    def test_expected_m_bound(self):
        ds = Dataset(np.random.default_rng(0).standard_normal((10_000, 4)))
        q = Query(np.ones(4) / 2)
        tr = sample_many(ds, q, 1000, k=100, rng=5, traces=True)
        assert np.mean([t.m for t in tr]) <= 110

    def test_k_out_of_range(self, small_gaussian):
        with pytest.raises(RejectedInput):
            lazy_sample(small_gaussian, Query(np.ones(6)), k=0)

    def test_approximate_provider_with_gap(self):
        r = np.random.default_rng(3)
        y = r.normal(0, 0.3, 500)
        y[17] = 2.0   # the item the provider skips
        ds, q = scalar_dataset(y)
        prov = SkipBest()
        y = score_all(ds, q).scores
        top = prov.topk(ds, q, 20)
        out = np.setdiff1d(np.arange(500), top.ids)
        gap = y[out].max() - top.min_score
        rate = coupled_oracle_check(ds, q, 20, trials=3000, seed=1, gap_c=gap + 1e-9, provider=prov)
        assert rate == 0.0
        # understating the gap loses exactness
        bad = coupled_oracle_check(ds, q, 20, trials=3000, seed=1, gap_c=1e-6, provider=prov)
        assert bad > 0.0

    def test_duplicate_ids_raise(self, small_gaussian):
        class Dup(TopKProvider):
            exact = True
            gap_c = 0.0

            def topk(self, dataset, query, k):
                return TopKResult(np.array([0, 0]), np.array([1.0, 1.0]), 2)
        with pytest.raises(RuntimeError):
            lazy_sample(small_gaussian, Query(np.ones(6)), Dup(), k=2)


class TestFixedB:
    def test_trace_uses_fixed_cutoff(self, small_gaussian):
        tr = fixed_b_sample(small_gaussian, Query(np.ones(6)), k=10, l=30, rng=0)
        assert tr.B == cutoff_for_expected_exceedances(300, 30).B
        assert tr.l == 30

    def test_near_full_materialization_matches_softmax(self):
        # l = n - k: each tail Gumbel clears B with probability 1 - k/n
        r = np.random.default_rng(2)
        y = r.normal(0, 1.0, 30)
        ds, q = scalar_dataset(y)
        ids = sample_many(ds, q, 40_000, k=2, l=28, rng=3)
        exp_ = softmax(y) * ids.size
        assert stats.chisquare(np.bincount(ids, minlength=30), exp_).pvalue > 0.001

    def test_m_concentration(self):
        ds = Dataset(np.random.default_rng(0).standard_normal((10_000, 3)))
        tr = sample_many(ds, Query(np.ones(3)), 10_000, k=50, l=200, rng=1, traces=True)
        m = np.array([t.m for t in tr])
        assert np.mean(m < 400) >= 0.999
        assert abs(m.mean() - 200 * (10_000 - 50) / 10_000) < 1.0

    def test_failure_rate_bound(self):
        n, delta = 2000, 0.05
        k = math.ceil(math.sqrt(n * math.log(1 / delta)))
        ds = Dataset(np.random.default_rng(4).standard_normal((n, 4)))
        rate = coupled_oracle_check(ds, Query(np.ones(4) / 2), k, l=k, trials=4000, seed=2)
        assert stats.binomtest(round(rate * 4000), 4000, delta, alternative="greater").pvalue > 0.01


class TestCoupledOracle:
    def test_full_set(self, small_gaussian):
        assert coupled_oracle_check(small_gaussian, Query(np.ones(6)), 300, trials=500) == 0.0

    def test_adaptive_exact(self):
        ds = Dataset(np.random.default_rng(5).standard_normal((3000, 5)))
        for k in (1, 10, 55):
            assert coupled_oracle_check(ds, Query(np.ones(5) / 2), k, trials=2000, seed=k) == 0.0

    def test_fixed_cutoff_failure_rate(self):
        # uniform scores, k = l = 1: the draw fails when no tail Gumbel clears B
        # while the tail maximum beats G_0: integral of F dF^(n-1) up to F(B) = 1 - 1/n,
        # which is (1 - 1/n)^(n+1)
        n = 3000
        ds = Dataset(np.random.default_rng(5).standard_normal((n, 5)))
        rate = coupled_oracle_check(ds, Query(np.zeros(5)), 1, l=1, trials=2000, seed=3)
        want = (1 - 1 / n) ** (n + 1)
        assert abs(rate - want) <= 4 * math.sqrt(want * (1 - want) / 2000)


class TestTvBound:
    def test_equal_masses(self):
        y = np.array([0.0, 0.0])
        assert tv_upper_bound(y, [0]) == pytest.approx(0.75, abs=1e-6)

    def test_equal_masses_argmin(self):
        zs = 3.7
        t_star = math.log(math.log(2) / zs)
        f = lambda t: tail_escape_objective(t, math.log(zs), math.log(zs))  # noqa: E731
        assert f(t_star) == pytest.approx(0.75, abs=1e-12)
        grid = np.linspace(t_star - 5, t_star + 5, 20001)
        vals = np.array([f(t) for t in grid])
        assert abs(grid[vals.argmin()] - t_star) < 1e-3
        assert vals.min() >= 0.75 - 1e-12

    @pytest.mark.parametrize("zs,w", [(3.0, 1.0), (1.0, 5.0), (100.0, 0.01), (1e-3, 1e3)])
    def test_closed_form(self, zs, w):
        y = np.array([math.log(zs), math.log(w)])
        assert tv_upper_bound(y, [0]) == pytest.approx(tv_closed_form(zs, w), abs=1e-9)

    def test_no_tail(self):
        assert tv_upper_bound(np.array([1.0, 2.0, 3.0]), [0, 1, 2]) <= 1e-9

    def test_empty_set(self):
        assert tv_upper_bound(np.array([1.0, 2.0]), []) == 1.0

    def test_dominates_escape_probability(self):
        r = np.random.default_rng(0)
        for _ in range(30):
            y = r.normal(0, 2.0, 200)
            k = int(r.integers(1, 100))
            S = np.argsort(-y)[:k]
            w = np.exp(y).sum() - np.exp(y[S]).sum()
            assert tv_upper_bound(y, S) >= w / np.exp(y).sum() - 1e-12

    def test_monotone_in_k(self):
        y = np.random.default_rng(1).normal(0, 3.0, 500)
        order = np.argsort(-y)
        vals = [tv_upper_bound(y, order[:k]) for k in (5, 20, 80, 300)]
        assert all(a >= b for a, b in zip(vals, vals[1:]))

    def test_extreme_scores(self):
        y = np.array([800.0, -800.0, 790.0])
        v = tv_upper_bound(y, [0])
        assert 0.0 <= v <= 1.0
        assert v == pytest.approx(tv_closed_form(1.0, math.exp(-10.0)), abs=1e-9)

    def test_accepts_topk_result(self, small_gaussian):
        q = Query(np.ones(6), scale=5.0)
        top = exact_topk(small_gaussian, q, 30)
        assert tv_upper_bound(score_all(small_gaussian, q), top) == tv_upper_bound(
            score_all(small_gaussian, q).scores, top.ids)


def test_golden_section_quadratic():
    x, fx = golden_section_min(lambda t: (t - 1.234) ** 2 + 2.0, -10, 10, tol=1e-12)
    assert x == pytest.approx(1.234, abs=1e-6) and fx == pytest.approx(2.0, abs=1e-12)
