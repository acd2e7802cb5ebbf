import math

import numpy as np
import pytest

from spotflow.spot_market import (
    FailureModel,
    SpotPriceTrace,
    TraceError,
    cumulative_failure,
    estimate_ffp,
    load_trace,
)

from conftest import alternating_trace, constant_trace


class TestLoadTrace:
    def test_three_line_csv(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("0,0.05\n3600,0.06\n7200,0.05\n")
        trace = load_trace(path)
        assert len(trace) == 3
        assert trace.price_at(3600) == 0.06

    def test_iso8601_timestamps(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("2013-08-01T00:00:00,0.05\n2013-08-01T01:00:00,0.06\n")
        trace = load_trace(path)
        assert len(trace) == 2

    def test_unsorted_rejected_with_line(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("0,0.05\n7200,0.06\n3600,0.05\n")
        with pytest.raises(TraceError, match=":3:"):
            load_trace(path)

    def test_empty_rejected(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("# nothing here\n")
        with pytest.raises(TraceError):
            load_trace(path)

    def test_malformed_line_reported(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("0,0.05\nnot-a-line\n")
        with pytest.raises(TraceError, match=":2:"):
            load_trace(path)

    def test_august_shaped_stats(self, tmp_path):
        # Shape of the published August-2013 m1.small history: min 0.007, max 10.
        rng = np.random.default_rng(0)
        ts = np.arange(500) * 3600.0
        prices = np.clip(rng.gamma(2.0, 0.03, 500), 0.008, 9.0)
        prices[17] = 0.007
        prices[401] = 10.0
        path = tmp_path / "small.csv"
        path.write_text("".join("%d,%.4f\n" % (t, p) for t, p in zip(ts, prices)))
        trace = load_trace(path)
        assert trace.min_price() == pytest.approx(0.007)
        assert trace.max_price() == pytest.approx(10.0)


class TestPriceLookups:
    def test_step_function(self):
        trace = SpotPriceTrace([0, 100, 200], [0.05, 0.10, 0.07])
        assert trace.price_at(0) == 0.05
        assert trace.price_at(99) == 0.05
        assert trace.price_at(100) == 0.10
        assert trace.price_at(250) == 0.07

    def test_cyclic_replay(self):
        trace = SpotPriceTrace([0, 100], [0.05, 0.10])
        assert trace.price_at_cyclic(0) == 0.05
        assert trace.price_at_cyclic(150) == 0.10
        # cycle = span (100) + median interval (100) = 200
        assert trace.price_at_cyclic(200) == 0.05
        assert trace.price_at_cyclic(350) == 0.10

    def test_first_exceedance_cyclic(self):
        trace = SpotPriceTrace([0, 100, 200], [0.05, 0.20, 0.05])
        assert trace.first_exceedance_cyclic(0, 0.10) == 100.0
        assert trace.first_exceedance_cyclic(100, 0.10) == 100.0
        assert trace.first_exceedance_cyclic(150, 0.10) == 150.0  # inside the spike
        # past the spike: wraps into the next cycle's spike (cycle = 300)
        assert trace.first_exceedance_cyclic(200, 0.10) == 400.0
        assert trace.first_exceedance_cyclic(0, 0.30) is None

    def test_rejects_bad_traces(self):
        with pytest.raises(TraceError):
            SpotPriceTrace([0, 0], [0.05, 0.06])
        with pytest.raises(TraceError):
            SpotPriceTrace([0, 100], [0.05, -0.1])
        with pytest.raises(TraceError):
            SpotPriceTrace([], [])


def exhaustive_offset_oracle(low, high, seg, bid, horizon, step, t_query, cycles=200):
    """Cumulative failure before t_query by enumerating integer start offsets.

    Independent hand-walk over the periodic low/high trace: a walk starting
    in a high segment fails immediately; one starting in a low segment fails
    when the segment ends.  Walks reaching the trace end or the horizon
    count as no-failure.
    """
    span = 2 * seg * cycles - seg  # last point starts the final high segment
    fail = 0
    total = 0
    for offset in range(0, int(span), 13):  # co-prime stride, dense coverage
        pos = offset % (2 * seg)
        if (high if pos >= seg else low) > bid:
            elapsed = 0.0
        elif high > bid:
            elapsed = seg - pos
        else:
            elapsed = math.inf
        total += 1
        if offset + elapsed > span or elapsed >= horizon:
            continue  # no-failure
        if math.floor(elapsed / step) * step < t_query:
            fail += 1
    return fail / total


class TestEstimateFfp:
    def test_constant_low_never_fails(self):
        model = FailureModel(traces={0: constant_trace(0.05)}, num_trials=2000, rng_seed=1)
        dist = estimate_ffp(model, 0, 0.10)
        assert dist.no_failure_mass == 1.0
        assert dist.masses.sum() == 0.0

    def test_constant_high_fails_at_zero(self):
        model = FailureModel(traces={0: constant_trace(0.20)}, num_trials=2000, rng_seed=1)
        dist = estimate_ffp(model, 0, 0.10)
        assert dist.masses[0] == 1.0
        assert dist.no_failure_mass == 0.0

    def test_masses_sum_to_one(self):
        model = FailureModel(traces={0: alternating_trace()}, num_trials=5000, rng_seed=2)
        dist = estimate_ffp(model, 0, 0.10)
        assert dist.masses.sum() + dist.no_failure_mass == pytest.approx(1.0, abs=1e-9)

    def test_alternating_matches_offset_oracle(self):
        model = FailureModel(traces={0: alternating_trace()}, num_trials=10_000,
                             horizon=7200.0, step=60.0, rng_seed=3)
        for t_query in (60.0, 1800.0, 3600.0, 5400.0, 7200.0):
            got = cumulative_failure(model, 0, 0.10, t_query)
            want = exhaustive_offset_oracle(0.05, 0.15, 3600, 0.10, 7200.0, 60.0, t_query)
            assert got == pytest.approx(want, abs=0.02), t_query

    def test_rejects_nonpositive_bid(self):
        model = FailureModel(traces={0: constant_trace(0.05)}, num_trials=10)
        with pytest.raises(ValueError):
            estimate_ffp(model, 0, 0.0)

    def test_deterministic_for_seed(self):
        model_a = FailureModel(traces={0: alternating_trace()}, num_trials=3000, rng_seed=9)
        model_b = FailureModel(traces={0: alternating_trace()}, num_trials=3000, rng_seed=9)
        da = estimate_ffp(model_a, 0, 0.10)
        db = estimate_ffp(model_b, 0, 0.10)
        assert np.array_equal(da.masses, db.masses)


class TestCumulativeFailure:
    def test_zero_at_t_zero(self):
        model = FailureModel(traces={0: alternating_trace()}, num_trials=1000, rng_seed=1)
        assert cumulative_failure(model, 0, 0.10, 0.0) == 0.0

    def test_bid_above_max_never_fails(self):
        model = FailureModel(traces={0: alternating_trace()}, num_trials=1000, rng_seed=1)
        assert cumulative_failure(model, 0, 0.20, 86_400.0) == 0.0

    def test_full_horizon_on_alternating(self):
        model = FailureModel(traces={0: alternating_trace()}, num_trials=10_000,
                             horizon=7200.0, step=60.0, rng_seed=4)
        assert cumulative_failure(model, 0, 0.10, 7200.0) == pytest.approx(1.0, abs=0.02)

    def test_monotone_in_t(self):
        model = FailureModel(traces={0: alternating_trace()}, num_trials=3000, rng_seed=5)
        values = [cumulative_failure(model, 0, 0.10, t) for t in range(0, 10_000, 500)]
        assert all(a <= b for a, b in zip(values, values[1:]))

    def test_bid_monotonicity_pathwise(self):
        model = FailureModel(traces={0: alternating_trace()}, num_trials=5000, rng_seed=6)
        rng = np.random.default_rng(7)
        for _ in range(100):
            b1, b2 = sorted(rng.uniform(0.001, 0.2, size=2))
            for t in (600.0, 3600.0, 7200.0, 86_400.0):
                assert (cumulative_failure(model, 0, b1, t)
                        >= cumulative_failure(model, 0, b2, t))
