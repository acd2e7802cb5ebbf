"""Spot price traces and the Monte-Carlo first-failure model.

A trace is a step function over time: each (timestamp, price) point holds
until the next point.  A spot instance bid at price b is killed the first
moment the market price strictly exceeds b (an out-of-bid event); a price
exactly equal to the bid does not kill it.

The first-failure distribution for a (type, bid) pair is estimated by
walking the trace forward from uniformly random start offsets and recording
how long each walk survives, bucketed on a fixed step grid.  Walks that
reach the trace end or the horizon without failing count as "no failure",
which is the conservative direction for cost estimation.
"""

import math
from dataclasses import dataclass, field
from datetime import datetime

import numpy as np

from .distributions import substream


class TraceError(ValueError):
    """Raised for malformed or inconsistent trace files."""


def _parse_timestamp(text):
    try:
        return float(text)
    except ValueError:
        pass
    try:
        return datetime.fromisoformat(text).timestamp()
    except ValueError as exc:
        raise ValueError("bad timestamp %r" % text) from exc


class SpotPriceTrace:
    """Price history of one instance type."""

    def __init__(self, timestamps, prices):
        ts = np.asarray(timestamps, dtype=np.float64)
        pr = np.asarray(prices, dtype=np.float64)
        if ts.size == 0:
            raise TraceError("trace must contain at least one point")
        if ts.size != pr.size:
            raise TraceError("timestamps and prices must have equal length")
        if np.any(np.diff(ts) <= 0):
            raise TraceError("timestamps must be strictly increasing")
        if np.any(pr <= 0):
            raise TraceError("prices must be positive")
        ts = ts.copy()
        pr = pr.copy()
        ts.flags.writeable = False
        pr.flags.writeable = False
        self.timestamps = ts
        self.prices = pr
        # Duration of the last segment is unknown; extend it by the median
        # sampling interval so cyclic replay gives every point nonzero weight.
        if ts.size > 1:
            tail = float(np.median(np.diff(ts)))
        else:
            tail = 3600.0
        self.start = float(ts[0])
        self.end = float(ts[-1])
        self.span = self.end - self.start
        self.cycle = self.span + tail
        self._exceed_cache = {}

    def __len__(self):
        return int(self.timestamps.size)

    def min_price(self):
        return float(self.prices.min())

    def max_price(self):
        return float(self.prices.max())

    def mean_price(self):
        return float(self.prices.mean())

    def _segment_index(self, t):
        idx = int(np.searchsorted(self.timestamps, t, side="right")) - 1
        return max(idx, 0)

    def price_at(self, t):
        """Price in effect at absolute trace time t (clamped to the trace)."""
        return float(self.prices[self._segment_index(t)])

    def price_at_cyclic(self, sim_time):
        """Price for simulation time, replaying the trace cyclically.

        Simulation time 0 maps to the first trace timestamp; times beyond
        the trace wrap around with period `cycle`.
        """
        return self.price_at(self.start + (sim_time % self.cycle))

    def _next_exceed_index(self, bid):
        """For each point index i, the smallest j >= i with price[j] > bid.

        Returns an int array of length n+1 whose entries equal n when no
        later point exceeds the bid.
        """
        key = round(float(bid), 9)
        cached = self._exceed_cache.get(key)
        if cached is not None:
            return cached
        n = self.prices.size
        nxt = np.full(n + 1, n, dtype=np.int64)
        for i in range(n - 1, -1, -1):
            nxt[i] = i if self.prices[i] > bid else nxt[i + 1]
        nxt.flags.writeable = False
        self._exceed_cache[key] = nxt
        return nxt

    def first_exceedance_after(self, t, bid):
        """Absolute trace time >= t when the price first exceeds bid.

        Returns t itself when the price at t already exceeds the bid, or
        None when the price never exceeds the bid at or after t.
        """
        nxt = self._next_exceed_index(bid)
        i = self._segment_index(t)
        j = int(nxt[i])
        if j == self.prices.size:
            return None
        if j == i:
            return float(t)
        return float(self.timestamps[j])

    def first_exceedance_cyclic(self, sim_time, bid):
        """Simulation time >= sim_time of the next out-of-bid event.

        None when the bid covers every price in the trace (the instance can
        never be killed).
        """
        if self.max_price() <= bid:
            return None
        offset = sim_time % self.cycle
        base = sim_time - offset
        t = self.start + offset
        hit = self.first_exceedance_after(t, bid)
        if hit is not None and hit - self.start < self.cycle:
            return base + (hit - self.start)
        # Wrap: the first exceeding point from the trace start.
        j = int(self._next_exceed_index(bid)[0])
        return base + self.cycle + (float(self.timestamps[j]) - self.start)


def load_trace(path):
    """Parse a trace CSV with lines `timestamp,price`.

    Timestamps are epoch seconds or ISO-8601 strings; prices are USD/hour.
    Lines starting with '#' and blank lines are ignored.  Unsorted
    timestamps and malformed lines are rejected with the line number.
    """
    timestamps = []
    prices = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = [p.strip() for p in line.split(",")]
            if parts[0] in ("timestamp", "time"):  # header
                continue
            if len(parts) != 2:
                raise TraceError("%s:%d: expected `timestamp,price`" % (path, lineno))
            try:
                ts = _parse_timestamp(parts[0])
                price = float(parts[1])
            except ValueError as exc:
                raise TraceError("%s:%d: %s" % (path, lineno, exc)) from exc
            if timestamps and ts <= timestamps[-1]:
                raise TraceError(
                    "%s:%d: timestamps must be strictly increasing" % (path, lineno)
                )
            timestamps.append(ts)
            prices.append(price)
    if not timestamps:
        raise TraceError("%s: trace file contains no points" % path)
    try:
        return SpotPriceTrace(timestamps, prices)
    except TraceError as exc:
        raise TraceError("%s: %s" % (path, exc)) from exc


@dataclass(frozen=True)
class FirstFailureDistribution:
    """Discretized first-failure time distribution for one (type, bid).

    Bucket k holds the probability that the first out-of-bid event happens
    at elapsed time in [k*step, (k+1)*step); `no_failure_mass` is the
    probability of surviving the whole horizon (or trace end).
    """

    step: float
    masses: np.ndarray
    no_failure_mass: float

    def __post_init__(self):
        self.masses.flags.writeable = False

    @property
    def bucket_times(self):
        return np.arange(self.masses.size) * self.step

    def cumulative_before(self, t):
        """Probability of failing strictly before elapsed time t.

        Sums the mass of every grid point k*step < t.
        """
        if t <= 0:
            return 0.0
        buckets = min(int(math.ceil(t / self.step)), self.masses.size)
        return float(self.masses[:buckets].sum())

    def cumulative_before_many(self, times):
        """Vectorized cumulative_before over an array of elapsed times."""
        csum = np.concatenate(([0.0], np.cumsum(self.masses)))
        idx = np.ceil(np.asarray(times, dtype=np.float64) / self.step).astype(np.int64)
        idx = np.clip(idx, 0, self.masses.size)
        return csum[idx]

    def sample_failure_times(self, rng, n):
        """Draw n first-failure times (bucket start times; inf = no failure)."""
        outcomes = np.append(self.bucket_times, np.inf)
        probs = np.append(self.masses, self.no_failure_mass)
        # Guard against tiny float drift in the probability vector.
        probs = probs / probs.sum()
        return rng.choice(outcomes, size=n, p=probs)


@dataclass
class FailureModel:
    """Monte-Carlo estimator of spot first-failure behaviour per type.

    traces maps instance type id to its price trace; types without a trace
    have no spot market and cannot be refined onto spot instances.
    Estimates are pure given rng_seed (results are memoized per (type, bid)),
    so a model may be shared by concurrent readers once warmed.
    """

    traces: dict
    num_trials: int = 10_000
    horizon: float = 86_400.0
    step: float = 60.0
    rng_seed: int = 0
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.num_trials < 1:
            raise ValueError("num_trials must be >= 1")
        if self.step <= 0:
            raise ValueError("step must be positive")

    def has_trace(self, type_id):
        return type_id in self.traces


def estimate_ffp(model, type_id, bid):
    """First-failure distribution of a spot instance of `type_id` bid at `bid`.

    Monte-Carlo over num_trials start offsets drawn uniformly over the trace
    duration (not over point indices, so irregular sampling intervals do not
    bias the estimate).  Each walk fails at the first moment the price
    exceeds the bid, including immediately at the start offset; walks
    reaching the trace end or the horizon count as no-failure.
    """
    if bid <= 0:
        raise ValueError("bid must be positive")
    key = (type_id, round(float(bid), 9))
    cached = model._cache.get(key)
    if cached is not None:
        return cached

    trace = model.traces[type_id]
    nbuckets = int(math.ceil(model.horizon / model.step))
    # The start-offset stream is keyed by type only, not by bid: every bid is
    # evaluated against the same trial walks, which makes cumulative failure
    # exactly monotone in the bid instead of monotone up to sampling noise.
    rng = substream(model.rng_seed, "ffp", type_id)
    if trace.span > 0:
        starts = trace.start + rng.uniform(0.0, trace.span, size=model.num_trials)
    else:
        starts = np.full(model.num_trials, trace.start)

    seg = np.searchsorted(trace.timestamps, starts, side="right") - 1
    nxt = trace._next_exceed_index(bid)
    j = nxt[seg]
    n = trace.prices.size
    elapsed = np.where(
        j == seg, 0.0,
        np.where(j < n, trace.timestamps[np.minimum(j, n - 1)] - starts, np.inf),
    )
    failed = elapsed < model.horizon
    buckets = np.floor(elapsed[failed] / model.step).astype(np.int64)
    counts = np.bincount(buckets, minlength=nbuckets)
    masses = counts / float(model.num_trials)
    no_failure = 1.0 - masses.sum()
    result = FirstFailureDistribution(
        step=model.step, masses=masses, no_failure_mass=float(no_failure)
    )
    model._cache[key] = result
    return result


def cumulative_failure(model, type_id, bid, t):
    """Probability that a spot instance fails strictly before elapsed time t."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    return estimate_ffp(model, type_id, bid).cumulative_before(t)
