import numpy as np
import pytest

from anms_vo.anms import select_top_n, suppression_radii
from anms_vo.core import FeatureSet
from anms_vo.errors import ValidationError

from oracles import anms_radii_bruteforce, anms_select_bruteforce


def feature_set(xy, scores, width=2000, height=2000):
    xy = np.asarray(xy, dtype=np.float64)
    n = len(xy) if xy.size else 0
    return FeatureSet(
        image_id="t", width=width, height=height,
        xy=xy.reshape(n, 2), scores=np.asarray(scores, dtype=np.float64),
        descriptors=np.zeros((n, 4), np.float32),
    )


def random_features(rng, n, width=1500, height=900, distinct_scores=True):
    xy = np.c_[rng.uniform(0, width - 1, n), rng.uniform(0, height - 1, n)]
    if distinct_scores:
        scores = rng.permutation(n).astype(np.float64) + rng.uniform(0.0, 0.4)
    else:
        scores = rng.integers(0, max(2, n // 4), n).astype(np.float64)
    return feature_set(xy, scores, width, height)


class TestSuppressionRadii:
    def test_single_keypoint_infinite(self):
        radii = suppression_radii(feature_set([[10.0, 20.0]], [1.0]))
        assert radii.tolist() == [np.inf]

    def test_two_keypoints_forced_radius(self):
        fs = feature_set([[0.0, 0.0], [3.0, 4.0]], [2.0, 1.0])
        np.testing.assert_array_equal(suppression_radii(fs), [np.inf, 5.0])

    def test_empty_input_gives_empty_result(self):
        fs = feature_set(np.zeros((0, 2)), np.zeros(0))
        assert suppression_radii(fs).shape == (0,)
        res = select_top_n(fs, 10)
        assert res.selected.shape == (0,)

    def test_matches_bruteforce_on_random_input(self, rng):
        for _ in range(10):
            fs = random_features(rng, int(rng.integers(2, 500)))
            expected = anms_radii_bruteforce(fs.xy, fs.scores)
            np.testing.assert_array_equal(suppression_radii(fs), expected)

    def test_matches_bruteforce_500_keypoints(self, rng):
        fs = random_features(rng, 500)
        np.testing.assert_array_equal(
            suppression_radii(fs), anms_radii_bruteforce(fs.xy, fs.scores)
        )

    def test_matches_bruteforce_with_score_ties(self, rng):
        for _ in range(5):
            fs = random_features(rng, 300, distinct_scores=False)
            np.testing.assert_array_equal(
                suppression_radii(fs), anms_radii_bruteforce(fs.xy, fs.scores)
            )

    def test_all_equal_scores_still_finite_after_first(self):
        # the total order makes exactly one point globally strongest
        fs = feature_set([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]], [5.0, 5.0, 5.0])
        radii = suppression_radii(fs)
        assert np.isinf(radii).sum() == 1
        assert np.isfinite(radii).sum() == 2

    def test_batch_boundary_exactness(self, rng):
        # more points than the internal batch size
        fs = random_features(rng, 700)
        np.testing.assert_array_equal(
            suppression_radii(fs), anms_radii_bruteforce(fs.xy, fs.scores)
        )


class TestSelectTopN:
    def test_n_zero_empty(self, rng):
        fs = random_features(rng, 50)
        assert select_top_n(fs, 0).selected.shape == (0,)

    def test_n_equal_count_returns_all_sorted(self, rng):
        fs = random_features(rng, 60)
        res = select_top_n(fs, 60)
        _, expected = anms_select_bruteforce(fs.xy, fs.scores, 60)
        np.testing.assert_array_equal(res.selected, expected)
        assert sorted(res.selected.tolist()) == list(range(60))

    def test_n_larger_than_count(self, rng):
        fs = random_features(rng, 20)
        res = select_top_n(fs, 1000)
        assert len(res.selected) == 20
        assert res.n_requested == 1000

    def test_negative_n_rejected(self, rng):
        with pytest.raises(ValidationError):
            select_top_n(random_features(rng, 5), -1)

    def test_clustered_input_matches_bruteforce(self, rng):
        # two tight clusters plus a sparse field
        c1 = rng.normal([100, 100], 2.0, size=(40, 2))
        c2 = rng.normal([700, 400], 2.0, size=(40, 2))
        sparse = np.c_[rng.uniform(0, 1400, 40), rng.uniform(0, 800, 40)]
        xy = np.clip(np.vstack([c1, c2, sparse]), 0, [1499, 899])
        scores = rng.permutation(len(xy)).astype(np.float64)
        fs = feature_set(xy, scores, 1500, 900)
        res = select_top_n(fs, 10)
        _, expected = anms_select_bruteforce(fs.xy, fs.scores, 10)
        np.testing.assert_array_equal(res.selected, expected)

    def test_selected_radii_non_increasing(self, rng):
        fs = random_features(rng, 200)
        res = select_top_n(fs, 50)
        chosen = res.radii[res.selected]
        finite = chosen[np.isfinite(chosen)]
        assert np.all(np.diff(finite) <= 0)

    def test_monotone_prefix_property(self, rng):
        fs = random_features(rng, 120)
        for n in range(0, 120, 7):
            a = select_top_n(fs, n).selected
            b = select_top_n(fs, n + 1).selected
            np.testing.assert_array_equal(a, b[:n])

    def test_deterministic(self, rng):
        fs = random_features(rng, 300)
        a = select_top_n(fs, 100)
        b = select_top_n(fs, 100)
        np.testing.assert_array_equal(a.selected, b.selected)
        np.testing.assert_array_equal(a.radii, b.radii)


class TestInvariances:
    def test_translation_invariance(self, rng):
        # integer coordinates and shifts keep the pairwise differences exact,
        # so radii must match bit for bit
        for _ in range(10):
            xy = rng.integers(0, 600, size=(150, 2)).astype(np.float64)
            scores = rng.permutation(150).astype(np.float64)
            base = feature_set(xy, scores, 2000, 2000)
            shifted = feature_set(xy + [500.0, 300.0], scores, 2000, 2000)
            np.testing.assert_array_equal(
                suppression_radii(base), suppression_radii(shifted)
            )
            np.testing.assert_array_equal(
                select_top_n(base, 40).selected, select_top_n(shifted, 40).selected
            )

    def test_translation_invariance_continuous_index_set(self, rng):
        # with continuous coordinates only the selected index set is asserted
        for _ in range(10):
            fs = random_features(rng, 150, width=800, height=600)
            shifted = feature_set(fs.xy + [500.0, 300.0], fs.scores, 2000, 2000)
            base = feature_set(fs.xy, fs.scores, 2000, 2000)
            assert set(select_top_n(base, 40).selected.tolist()) == set(
                select_top_n(shifted, 40).selected.tolist()
            )

    def test_monotone_score_transform_invariance(self, rng):
        for transform in (lambda s: 3.0 * s + 7.0, np.exp, lambda s: np.tanh(s / 50.0)):
            fs = random_features(rng, 150)
            remapped = feature_set(fs.xy, transform(fs.scores), fs.width, fs.height)
            np.testing.assert_array_equal(
                suppression_radii(fs), suppression_radii(remapped)
            )
            np.testing.assert_array_equal(
                select_top_n(fs, 40).selected, select_top_n(remapped, 40).selected
            )

    def test_bit_identical_across_thread_counts(self, rng, monkeypatch):
        fs = random_features(rng, 800)
        results = []
        for threads in ("1", "4"):
            monkeypatch.setenv("ANMS_VO_THREADS", threads)
            res = select_top_n(fs, 200)
            results.append((res.radii.copy(), res.selected.copy()))
        np.testing.assert_array_equal(results[0][0], results[1][0])
        np.testing.assert_array_equal(results[0][1], results[1][1])

    def test_spread_beats_topn_by_score(self, rng):
        # over clustered inputs, ANMS selection is spatially wider than
        # naive top-n-by-score (median of min pairwise distances)
        def min_pairwise(xy):
            d = np.linalg.norm(xy[:, None, :] - xy[None, :, :], axis=2)
            d[np.diag_indices_from(d)] = np.inf
            return d.min()

        anms_spread, naive_spread = [], []
        for _ in range(100):
            centers = rng.uniform(100, 700, size=(4, 2))
            pts = np.vstack([rng.normal(c, 8.0, size=(30, 2)) for c in centers])
            pts = np.clip(pts, 0, 799)
            scores = rng.uniform(size=len(pts))
            # bias scores so one cluster dominates the naive ranking
            scores[:30] += 2.0
            fs = feature_set(pts, scores, 800, 800)
            sel = select_top_n(fs, 15).selected
            naive = np.argsort(-scores)[:15]
            anms_spread.append(min_pairwise(fs.xy[sel]))
            naive_spread.append(min_pairwise(fs.xy[naive]))
        assert np.median(anms_spread) >= np.median(naive_spread)
