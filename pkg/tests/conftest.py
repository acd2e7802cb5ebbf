import numpy as np
import pytest

from spotflow.cloud_model import Catalog, GammaSpec, InstanceType, NormalSpec, TaskProfile
from spotflow.spot_market import SpotPriceTrace
from spotflow.workflow_dag import build_job


def ordered_catalog(n_types=3, lag_od=0.0, lag_spot=0.0):
    """Fixture catalog where each tier strictly dominates the previous one.

    Speed doubles and price doubles per tier (equal CPU cost), bandwidths
    grow by 1.5x per tier (I/O cost rises with tier), so expected task cost
    is weakly increasing in the type id and faster types stochastically
    dominate slower ones.
    """
    types = []
    for i in range(n_types):
        scale = 1.5 ** i
        types.append(InstanceType(
            i, "t%d" % i, 0.06 * (2 ** i), 1e9 * (2 ** i),
            GammaSpec(100.0, 1.0 * scale), NormalSpec(100.0 * scale, 15.0 * scale),
            GammaSpec(100.0, 1.0 * scale), GammaSpec(100.0, 1.0 * scale),
            lag_od, lag_spot,
        ))
    return Catalog(types)


def cpu_profile(seconds, speed=1e9):
    """Profile whose execution time on a type of `speed` is deterministic."""
    return TaskProfile(instructions=seconds * speed)


def mixed_profile(scale=1.0):
    return TaskProfile(instructions=2e11 * scale, seq_io_mb=2000 * scale,
                       rnd_io_mb=100 * scale, net_in_mb=200 * scale,
                       net_out_mb=100 * scale)


def chain_job(profiles, guarantee_p=0.9, class_id="chain", deadline=None):
    edges = [(i, i + 1) for i in range(len(profiles) - 1)]
    return build_job(dict(enumerate(profiles)), edges, deadline=deadline,
                     guarantee_p=guarantee_p, class_id=class_id)


def diamond_job(profiles, guarantee_p=0.9, class_id="diamond", deadline=None):
    """A -> {B, C} -> D with the four given profiles."""
    assert len(profiles) == 4
    edges = [(0, 1), (0, 2), (1, 3), (2, 3)]
    return build_job(dict(enumerate(profiles)), edges, deadline=deadline,
                     guarantee_p=guarantee_p, class_id=class_id)


def constant_trace(price, hours=200):
    ts = np.arange(hours) * 3600.0
    return SpotPriceTrace(ts, np.full(hours, price))


def alternating_trace(low=0.05, high=0.15, seg_seconds=3600.0, cycles=200):
    """Periodic trace: `low` for one segment, `high` for the next."""
    ts, pr = [], []
    t = 0.0
    for _ in range(cycles):
        ts.append(t); pr.append(low); t += seg_seconds
        ts.append(t); pr.append(high); t += seg_seconds
    return SpotPriceTrace(ts, pr)


def stable_trace(base, jitter=0.1, step_seconds=1800.0, hours=400, seed=0):
    """Low-variance trace fluctuating in [base, base * (1 + jitter)]."""
    rng = np.random.default_rng(seed)
    n = int(hours * 3600 / step_seconds)
    ts = np.arange(n) * step_seconds
    pr = base * (1.0 + jitter * rng.random(n))
    return SpotPriceTrace(ts, pr)


def spiky_trace(base=0.024, spike=3.0, low_hours=5, spike_hours=1, cycles=80):
    """Mostly-low trace with periodic spikes far above on-demand prices."""
    ts, pr = [], []
    t = 0.0
    for _ in range(cycles):
        ts.append(t); pr.append(base); t += low_hours * 3600.0
        ts.append(t); pr.append(spike); t += spike_hours * 3600.0
    return SpotPriceTrace(ts, pr)


@pytest.fixture
def catalog3():
    return ordered_catalog(3)
