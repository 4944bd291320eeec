import io

import numpy as np
import pytest

from lazygumbel.mips import (ExactProvider, IndexFormatError, IvfProvider, LshProvider, augment,
                             build_ivf, build_lsh_ladder, dumps_index, ivf_topk, load_index,
                             loads_index, lsh_topk, save_index)
from lazygumbel.mips.ivf import default_n_clusters, probe_order
from lazygumbel.mips.lsh import collision_probability, ladder_size, size_instance, tables_needed
from lazygumbel.model import Dataset, Query, RejectedInput, exact_topk
from lazygumbel.synthetic import gen_synthetic


def unit_gaussian(n, d, seed):
    return gen_synthetic(n, d, "gaussian_unit", seed=seed).dataset


class TestIvfBuild:
    def test_single_list(self, small_gaussian):
        ix = build_ivf(small_gaussian, n_c=1, iters=3)
        assert ix.n_c == 1
        assert sorted(ix.list_ids.tolist()) == list(range(small_gaussian.n))

    def test_two_clouds(self):
        r = np.random.default_rng(2)
        a = r.normal(0, 0.05, (60, 3)) + [5, 0, 0]
        b = r.normal(0, 0.05, (40, 3)) - [5, 0, 0]
        ds = Dataset(np.vstack([a, b]))
        ix = build_ivf(ds, n_c=2, iters=10, seed=0)
        lists = [set(ix.list_ids[ix.list_offsets[c]:ix.list_offsets[c + 1]].tolist()) for c in range(2)]
        assert sorted(lists, key=min) == [set(range(60)), set(range(60, 100))]

    def test_deterministic_bytes(self, small_gaussian):
        a = dumps_index(build_ivf(small_gaussian, n_c=10, seed=4))
        b = dumps_index(build_ivf(small_gaussian, n_c=10, seed=4))
        assert a == b

    def test_lists_partition_ids(self, small_gaussian):
        ix = build_ivf(small_gaussian, n_c=17, seed=1)
        assert np.array_equal(np.sort(ix.list_ids), np.arange(small_gaussian.n))
        assert ix.list_offsets[0] == 0 and ix.list_offsets[-1] == small_gaussian.n

    def test_default_clusters(self):
        assert default_n_clusters(10_000) == 400
        assert default_n_clusters(5) == 5

    def test_bad_args(self, small_gaussian):
        with pytest.raises(RejectedInput):
            build_ivf(small_gaussian, n_c=0)
        with pytest.raises(RejectedInput):
            build_ivf(small_gaussian, n_c=5, iters=0)


class TestIvfQuery:
    def test_full_probe_is_exact(self, small_gaussian):
        ix = build_ivf(small_gaussian, n_c=12, seed=0)
        r = np.random.default_rng(0)
        for _ in range(20):
            q = Query(r.standard_normal(6), scale=3.0)
            a = ivf_topk(ix, small_gaussian, q, 25, n_p=12)
            b = exact_topk(small_gaussian, q, 25)
            np.testing.assert_array_equal(a.ids, b.ids)
            np.testing.assert_allclose(a.scores, b.scores, rtol=0, atol=1e-12)

    def test_planted_neighbour_rank_one(self):
        r = np.random.default_rng(8)
        ds = unit_gaussian(3000, 8, 8)
        theta = ds.features[1234] + 1e-4 * r.standard_normal(8)
        ix = build_ivf(ds, seed=0)
        for n_p in (1, 4):
            assert ivf_topk(ix, ds, Query(theta), 5, n_p=n_p).ids[0] == 1234

    def test_probe_order_by_centroid_score(self, small_gaussian):
        ix = build_ivf(small_gaussian, n_c=9, seed=3)
        q = Query(np.arange(6.0))
        order = probe_order(ix, q)
        s = ix.centroids @ q.theta
        assert np.all(np.diff(s[order]) <= 0)

    def test_short_result_flag(self, small_gaussian):
        ix = build_ivf(small_gaussian, n_c=50, seed=0)
        res = ivf_topk(ix, small_gaussian, Query(np.ones(6)), 200, n_p=1)
        assert res.short and res.ids.size < 200
        assert res.gap_c is None

    def test_provider_uncertified(self, small_gaussian):
        prov = IvfProvider(build_ivf(small_gaussian, n_c=8), small_gaussian)
        assert prov.gap_c is None and not prov.exact

    @pytest.mark.slow
    def test_recall_at_sqrt_n(self):
        n, k = 100_000, 316
        ds = unit_gaussian(n, 6, 0)
        ix = build_ivf(ds, n_c=1024, n_p=32, seed=0, train_size=20_000)
        r = np.random.default_rng(1)
        rec = []
        for qi in r.integers(0, n, 40):
            q = Query(ds.features[qi])
            got = ivf_topk(ix, ds, q, k)
            want = exact_topk(ds, q, k)
            rec.append(np.intersect1d(got.ids, want.ids).size / k)
        assert np.mean(rec) >= 0.95


class TestLshPieces:
    def test_collision_probability(self):
        assert collision_probability(1.0) == 1.0
        assert collision_probability(-1.0) == 0.0
        assert collision_probability(0.0) == pytest.approx(0.5)

    def test_augment_unit_rows(self, rng):
        x = rng.standard_normal((50, 4)) * rng.uniform(0.1, 1, (50, 1))
        M2 = np.linalg.norm(x, axis=1).max()
        a = augment(x, M2)
        np.testing.assert_allclose(np.linalg.norm(a, axis=1), 1.0, atol=1e-12)
        # inner products scale by 1/M2 against a zero-padded query
        theta = rng.standard_normal(4)
        np.testing.assert_allclose(a @ np.append(theta, 0.0), x @ theta / M2, atol=1e-12)

    def test_ladder_size(self):
        assert ladder_size(0.2, 1.0, 1.0) == 20
        assert ladder_size(4.0, 1.0, 1.0) == 1
        assert ladder_size(10.0, 1.0, 1.0) == 1

    def test_tables_meet_miss_bound(self):
        for s1, s2 in [(0.9, 0.8), (0.5, 0.4), (-0.3, -0.4)]:
            K, L = size_instance(10_000, s1, s2, 1e-4, max_bits=64, max_tables=64)
            miss = (1 - collision_probability(s1) ** K) ** L
            assert L <= 64 and miss <= 1e-4 * (1 + 1e-9)

    def test_tables_needed_edges(self):
        assert tables_needed(1.0, 5, 0.01) == 1
        assert tables_needed(0.5, 1, 0.5) == 1


class TestLshLadder:
    def test_everything_when_n_equals_kmax(self, small_gaussian):
        lad = build_lsh_ladder(small_gaussian, c=0.5, delta=0.1, k_max=small_gaussian.n)
        res = lsh_topk(lad, small_gaussian, Query(np.ones(6) / 3), small_gaussian.n)
        assert sorted(res.ids.tolist()) == list(range(small_gaussian.n))

    def test_wide_gap_single_instance(self, small_gaussian):
        lad = build_lsh_ladder(small_gaussian, c=4.0, delta=0.1, k_max=10)
        assert lad.n_lsh == 1

    def test_deterministic_tables(self, small_gaussian):
        a = build_lsh_ladder(small_gaussian, c=0.5, delta=0.1, k_max=10, seed=3)
        b = build_lsh_ladder(small_gaussian, c=0.5, delta=0.1, k_max=10, seed=3)
        assert dumps_index(a) == dumps_index(b)

    def test_delta_prime(self, small_gaussian):
        lad = build_lsh_ladder(small_gaussian, c=0.5, delta=0.1, k_max=10)
        assert lad.n_lsh == 8
        assert lad.delta_prime == pytest.approx(0.1 / (10 * 8))

    def test_thresholds_spaced_half_gap(self, small_gaussian):
        lad = build_lsh_ladder(small_gaussian, c=0.5, delta=0.1, k_max=10)
        s1, s2 = lad.score_thresholds(3)
        assert s1 - s2 == pytest.approx(0.25)
        assert s2 == pytest.approx(0.25 * 3 - lad.M2)

    def test_query_norm_bound(self, small_gaussian):
        lad = build_lsh_ladder(small_gaussian, c=0.5, delta=0.1, k_max=10)
        with pytest.raises(RejectedInput):
            lsh_topk(lad, small_gaussian, Query(np.ones(6)), 5)

    def test_forced_exhaustive_is_exact(self, small_gaussian):
        lad = build_lsh_ladder(small_gaussian, c=0.5, delta=0.1, k_max=40, bits=0, tables=1)
        r = np.random.default_rng(0)
        for _ in range(20):
            t = r.standard_normal(6)
            q = Query(t / np.linalg.norm(t))
            got = lsh_topk(lad, small_gaussian, q, 40)
            want = exact_topk(small_gaussian, q, 40)
            assert set(got.ids.tolist()) == set(want.ids.tolist())

    def test_planted_item_found(self):
        r = np.random.default_rng(11)
        x = r.standard_normal((2000, 8))
        x = 0.5 * x / np.linalg.norm(x, axis=1, keepdims=True)
        theta = r.standard_normal(8)
        theta /= np.linalg.norm(theta)
        x[777] = theta  # score 1 against at most 0.5 for every other row
        ds = Dataset(x)
        delta = 0.1
        found = 0
        for seed in range(200):
            lad = build_lsh_ladder(ds, c=0.4, delta=delta, k_max=5, seed=seed, max_tables=16)
            found += 777 in lsh_topk(lad, ds, Query(theta), 5).ids
        assert found / 200 >= 1 - delta

    def test_gap_condition_small(self):
        ds = unit_gaussian(3000, 8, 5)
        lad = build_lsh_ladder(ds, c=0.3, delta=0.1, k_max=30, seed=0)
        r = np.random.default_rng(6)
        ok = 0
        for qi in r.integers(0, ds.n, 60):
            q = Query(ds.features[qi])
            res = lsh_topk(lad, ds, q, 30)
            y = ds.features @ q.theta
            out = np.ones(ds.n, bool)
            out[res.ids] = False
            ok += res.ids.size == 30 and y[out].max() - y[res.ids].min() < 0.3
        assert ok / 60 >= 0.9

    def test_provider_certifies_gap(self, small_gaussian):
        lad = build_lsh_ladder(small_gaussian, c=0.5, delta=0.1, k_max=10)
        assert LshProvider(lad, small_gaussian).gap_c == 0.5


class TestStorage:
    @pytest.fixture(params=["ivf", "lsh"])
    def index(self, request, small_gaussian):
        if request.param == "ivf":
            return build_ivf(small_gaussian, n_c=10, seed=2)
        return build_lsh_ladder(small_gaussian, c=0.5, delta=0.1, k_max=20, seed=2)

    def test_roundtrip_bytes(self, index, small_gaussian, tmp_path):
        p = tmp_path / "a.ldix"
        save_index(index, p)
        again = load_index(p, small_gaussian)
        assert dumps_index(again) == p.read_bytes()

    def test_same_answers(self, index, small_gaussian):
        again = loads_index(dumps_index(index), small_gaussian)
        r = np.random.default_rng(0)
        for _ in range(100):
            t = r.standard_normal(6)
            q = Query(t / np.linalg.norm(t))
            if hasattr(index, "centroids"):
                a, b = ivf_topk(index, small_gaussian, q, 10), ivf_topk(again, small_gaussian, q, 10)
            else:
                a, b = lsh_topk(index, small_gaussian, q, 10), lsh_topk(again, small_gaussian, q, 10)
            np.testing.assert_array_equal(a.ids, b.ids)

    def test_wrong_dimension(self, index):
        other = Dataset(np.ones((300, 5)))
        with pytest.raises(IndexFormatError):
            loads_index(dumps_index(index), other)

    def test_corruption_detected(self, index):
        data = bytearray(dumps_index(index))
        data[40] ^= 0xFF
        with pytest.raises(IndexFormatError):
            loads_index(bytes(data))

    @pytest.mark.parametrize("cut", [0, 3, 30])
    def test_truncated(self, index, cut):
        data = dumps_index(index)
        with pytest.raises(IndexFormatError):
            loads_index(data[:cut])

    def test_bad_magic(self, index):
        data = b"XXXX" + dumps_index(index)[4:]
        with pytest.raises(IndexFormatError, match="magic"):
            loads_index(data)


def test_exact_provider(small_gaussian):
    p = ExactProvider()
    assert p.exact and p.gap_c == 0.0
    q = Query(np.ones(6))
    np.testing.assert_array_equal(p.topk(small_gaussian, q, 7).ids, exact_topk(small_gaussian, q, 7).ids)
