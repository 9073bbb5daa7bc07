import gzip
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from dyst.detect import (IpdSeries, SeriesError, compressibility_scores, extract_ipds,
                         kolmogorov_q, ks_two_sample, render_ipds, roc_auc)
from dyst.traffic import TraceRecord, synth_trace


def recs(times):
    return [TraceRecord(t, bytes(6), bytes(6)) for t in times]


ALL = lambda r: True


class TestExtract:
    def test_simple(self):
        assert extract_ipds(recs([1, 2, 4]), ALL).deltas.tolist() == [1.0, 2.0]

    def test_none_matching(self):
        with pytest.raises(SeriesError):
            extract_ipds(recs([1, 2, 4]), lambda r: False)

    def test_poisson_mean(self):
        rate = 3600.0  # per hour
        s = extract_ipds(synth_trace(rate, 3600 * 10, seed=3), ALL)
        n = len(s)
        # exponential IPDs: mean 1/lambda, std of the mean (1/lambda)/sqrt(n)
        assert abs(s.deltas.mean() - 1.0) <= 3 / math.sqrt(n)


class TestKs:
    def test_identical(self):
        a = np.random.default_rng(0).random(50)
        r = ks_two_sample(a, a)
        assert r.d_stat == 0 and r.p_value == 1

    def test_disjoint(self):
        assert ks_two_sample([1, 2, 3], [4, 5, 6]).d_stat == 1

    def test_shifted_uniform(self):
        rng = np.random.default_rng(42)
        a, b = rng.uniform(0, 1, 1000), rng.uniform(0.5, 1.5, 1000)
        r = ks_two_sample(a, b)
        assert abs(r.d_stat - 0.5) <= 0.05 and r.p_value < 1e-6

    @given(st.lists(st.floats(0, 100), min_size=2, max_size=60),
           st.lists(st.floats(0, 100), min_size=2, max_size=60))
    @settings(max_examples=200)
    def test_statistic_matches_reference(self, a, b):
        ref = stats.ks_2samp(a, b).statistic
        ours = ks_two_sample(a, b)
        assert ours.d_stat == pytest.approx(ref, abs=1e-12)
        assert ours.d_stat == ks_two_sample(b, a).d_stat
        assert 0 <= ours.p_value <= 1

    @pytest.mark.parametrize("lam", [0.3, 0.5, 0.8, 1.0, 1.36, 2.0, 3.0])
    def test_kolmogorov_tail(self, lam):
        assert kolmogorov_q(lam) == pytest.approx(stats.kstwobign.sf(lam), abs=1e-9)

    def test_p_value_uses_effective_size(self):
        rng = np.random.default_rng(1)
        a, b = rng.normal(size=300), rng.normal(0.2, 1, size=500)
        r = ks_two_sample(a, b)
        ne = math.sqrt(300 * 500 / 800)
        assert r.p_value == pytest.approx(stats.kstwobign.sf((ne + 0.12 + 0.11 / ne) * r.d_stat),
                                          abs=1e-9)

    def test_undersized(self):
        with pytest.raises(SeriesError):
            ks_two_sample([1.0], [1.0, 2.0])


class TestCompressibility:
    def test_string_width(self):
        s = render_ipds(np.full(1000, 1.2345))
        assert len(s) == 10000 and s[:10] in (b"000001.234", b"000001.235")

    def test_rendering_clips(self):
        assert render_ipds(np.array([1e9])) == b"999999.999"

    def test_constant_beats_random(self):
        const = compressibility_scores(np.full(1000, 0.5))[0].kappa
        rnd = compressibility_scores(np.random.default_rng(0).uniform(0, 10, 1000))[0].kappa
        assert const > rnd > 0

    def test_kappa_reproducible_from_gzip(self):
        x = np.random.default_rng(2).exponential(1.0, 1000)
        raw = render_ipds(x)
        expected = len(raw) / len(gzip.compress(raw, 9, mtime=0))
        assert compressibility_scores(x)[0].kappa == expected

    def test_windows_and_trailing(self):
        out = compressibility_scores(np.ones(2500), window_len=1000)
        assert [w.index for w in out] == [0, 1] and all(w.window_len == 1000 for w in out)

    def test_short_series(self):
        with pytest.raises(SeriesError):
            compressibility_scores(np.ones(999))

    def test_series_object(self):
        s = IpdSeries(np.ones(1000), "x")
        assert compressibility_scores(s)[0].kappa >= 1


class TestAuc:
    def test_separated(self):
        assert roc_auc([5, 6, 7], [1, 2, 3]) == 1.0

    def test_equal_scores(self):
        assert roc_auc([1, 1, 1], [1, 1]) == 0.5

    def test_pairwise_oracle(self):
        rng = np.random.default_rng(9)
        neg = rng.normal(size=200).round(1)
        pos = neg[:150] + 0.3
        brute = np.mean([(p > n) + 0.5 * (p == n) for p in pos for n in neg])
        assert roc_auc(pos, neg) == pytest.approx(brute, abs=1e-12)

    def test_empty(self):
        with pytest.raises(SeriesError):
            roc_auc([], [1])
