import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gmmbench.gmm_model import make_prior, prior_mean, sample_prior, signal_power
from gmmbench.metrics import NMSE_FLOOR_DB, NmseRecord, aggregate, curve, nmse_db


def rec(value, nmse, estimator="elm", run=0):
    return NmseRecord(estimator, "a", value, run, nmse, n_test=10, signal_power=1.0)


class TestNmse:
    def test_exact_prediction_hits_floor(self):
        t = np.random.default_rng(0).standard_normal((20, 3))
        assert nmse_db(t, t, 3.0) == NMSE_FLOOR_DB == -100.0

    def test_known_value(self):
        t = np.zeros((4, 2))
        pred = np.ones((4, 2))
        assert nmse_db(pred, t, 20.0) == pytest.approx(-10.0, abs=1e-12)

    def test_prior_mean_predictor(self):
        prior = make_prior(10, 10, 3.0)
        t, _ = sample_prior(prior, 100_000, seed=1)
        pred = np.tile(prior_mean(prior), (len(t), 1))
        assert abs(nmse_db(pred, t, signal_power(prior))) < 0.1

    def test_zero_predictor_on_zero_mean_prior(self):
        prior = make_prior(6, 4, 2.0)
        t, _ = sample_prior(prior, 100_000, seed=2)
        assert abs(nmse_db(np.zeros_like(t), t, signal_power(prior))) < 0.1

    @pytest.mark.parametrize("power", [0.0, -1.0])
    def test_bad_power(self, power):
        with pytest.raises(ValueError):
            nmse_db(np.zeros((2, 2)), np.ones((2, 2)), power)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            nmse_db(np.zeros((3, 2)), np.zeros((4, 2)), 1.0)

    def test_empty(self):
        with pytest.raises(ValueError):
            nmse_db(np.zeros((0, 2)), np.zeros((0, 2)), 1.0)

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 50), q=st.integers(1, 5))
    def test_permutation_invariant(self, seed, n, q):
        rng = np.random.default_rng(seed)
        t, p = rng.standard_normal((2, n, q))
        perm = rng.permutation(n)
        assert nmse_db(p[perm], t[perm], 2.0) == pytest.approx(nmse_db(p, t, 2.0), abs=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 50))
    def test_error_scaling(self, seed, n):
        rng = np.random.default_rng(seed)
        t = rng.standard_normal((n, 3))
        err = rng.standard_normal((n, 3))
        base = nmse_db(t + err, t, 5.0)
        assert nmse_db(t + 10 * err, t, 5.0) == pytest.approx(base + 20.0, abs=1e-9)

    def test_single_vector_accepted(self):
        assert nmse_db(np.array([1.0, 0.0]), np.zeros(2), 1.0) == pytest.approx(0.0, abs=1e-12)


class TestRecord:
    def test_invalid(self):
        with pytest.raises(ValueError):
            NmseRecord("elm", "a", 1.0, 0, -3.0, n_test=0, signal_power=1.0)
        with pytest.raises(ValueError):
            NmseRecord("elm", "a", 1.0, 0, float("nan"), n_test=5, signal_power=1.0)

    def test_equality_ignores_power(self):
        a = NmseRecord("elm", "a", 1.0, 0, -3.0, n_test=5, signal_power=1.0)
        b = NmseRecord("elm", "a", 1.0, 0, -3.0, n_test=5, signal_power=float("nan"))
        assert a == b


class TestAggregate:
    def test_single(self):
        (s,) = aggregate([rec(1.0, -7.5)])
        assert (s.mean, s.std, s.count) == (-7.5, 0.0, 1)

    def test_repeated(self):
        (s,) = aggregate([rec(1.0, -4.0, run=0), rec(1.0, -4.0, run=1)])
        assert (s.mean, s.std) == (-4.0, 0.0)

    def test_two_values(self):
        (s,) = aggregate([rec(1.0, -2.0, run=0), rec(1.0, -4.0, run=1)])
        assert s.mean == pytest.approx(-3.0)
        assert s.std == pytest.approx(np.sqrt(2.0))
        assert (s.minimum, s.maximum, s.count) == (-4.0, -2.0, 2)

    def test_grouping(self):
        recs = [rec(v, -v, e, r) for v in (1.0, 2.0) for e in ("elm", "ffnn") for r in range(3)]
        stats = aggregate(recs)
        assert len(stats) == 4
        assert all(s.count == 3 for s in stats)
        x, y = curve(stats, "ffnn")
        np.testing.assert_array_equal(x, [1.0, 2.0])
        np.testing.assert_array_equal(y, [-1.0, -2.0])

    def test_linear_domain(self):
        (s,) = aggregate([rec(1.0, 0.0, run=0), rec(1.0, -10.0, run=1)], domain="linear")
        assert s.mean == pytest.approx(10 * np.log10(0.55))

    def test_bad_domain(self):
        with pytest.raises(ValueError):
            aggregate([rec(1.0, 0.0)], domain="log")

    def test_empty(self):
        with pytest.raises(ValueError):
            aggregate([])

    @settings(max_examples=50, deadline=None)
    @given(values=arrays(np.float64, st.integers(1, 20), elements=st.floats(-100, 20)),
           domain=st.sampled_from(["db", "linear"]))
    def test_mean_within_range(self, values, domain):
        recs = [rec(1.0, float(v), run=i) for i, v in enumerate(values)]
        (s,) = aggregate(recs, domain=domain)
        assert s.minimum - 1e-9 <= s.mean <= s.maximum + 1e-9
        assert s.std >= 0
