"""Instance-type catalog and per-task execution-time modelling.

An instance type carries an hourly on-demand price, a deterministic CPU
speed and calibrated probability distributions for its sequential I/O,
random I/O and network bandwidths.  A task is described by a five-field
resource profile; its execution time on a type is the CPU time plus the
data volumes divided by bandwidth draws.
"""

import math
from dataclasses import dataclass

import numpy as np

from .distributions import DEFAULT_SAMPLE_COUNT, EmpiricalDistribution, substream

SECONDS_PER_HOUR = 3600.0


class CatalogError(ValueError):
    """Raised for malformed catalog files or inconsistent catalogs."""


@dataclass(frozen=True)
class GammaSpec:
    """Gamma(shape k, scale theta) bandwidth model, units MB/s."""

    k: float
    theta: float

    def mean(self):
        return self.k * self.theta

    def draw(self, rng, n):
        return rng.gamma(self.k, self.theta, size=n)


@dataclass(frozen=True)
class NormalSpec:
    """Normal(mu, sigma) bandwidth model, truncated at zero when sampled."""

    mu: float
    sigma: float

    def mean(self):
        return self.mu

    def draw(self, rng, n):
        if self.sigma == 0:
            return np.full(n, self.mu)
        return rng.normal(self.mu, self.sigma, size=n)


@dataclass(frozen=True)
class InstanceType:
    id: int
    name: str
    ondemand_price: float           # USD per hour
    cpu_speed: float                # instructions per second
    seq_io: GammaSpec
    rnd_io: NormalSpec
    net_in: GammaSpec
    net_out: GammaSpec
    acquisition_lag_ondemand: float = 120.0   # seconds
    acquisition_lag_spot: float = 420.0       # seconds

    def __post_init__(self):
        if self.ondemand_price <= 0:
            raise CatalogError("ondemand_price must be positive: %s" % self.name)
        if self.cpu_speed <= 0:
            raise CatalogError("cpu_speed must be positive: %s" % self.name)

    def lag(self, is_spot):
        return self.acquisition_lag_spot if is_spot else self.acquisition_lag_ondemand


@dataclass(frozen=True)
class TaskProfile:
    """Resource profile of one task.

    instructions: total instruction count; *_mb fields are data volumes in
    MB for sequential I/O, random I/O, network download and upload.
    """

    instructions: float = 0.0
    seq_io_mb: float = 0.0
    rnd_io_mb: float = 0.0
    net_in_mb: float = 0.0
    net_out_mb: float = 0.0

    def __post_init__(self):
        for field in ("instructions", "seq_io_mb", "rnd_io_mb", "net_in_mb", "net_out_mb"):
            if getattr(self, field) < 0:
                raise ValueError("%s must be nonnegative" % field)


class Catalog:
    """Ordered collection of instance types, cheapest first.

    The strict price ordering is load-bearing: planners expand search states
    by moving tasks to higher type ids, which must mean strictly more
    expensive instances.  Immutable after construction; safe to share across
    threads.
    """

    def __init__(self, types):
        types = list(types)
        if not types:
            raise CatalogError("catalog must contain at least one type")
        for i, itype in enumerate(types):
            if itype.id != i:
                raise CatalogError(
                    "type ids must be 0..n-1 in order; got id %d at position %d"
                    % (itype.id, i)
                )
        prices = [t.ondemand_price for t in types]
        if any(a >= b for a, b in zip(prices, prices[1:])):
            raise CatalogError("catalog must be strictly ordered by ascending price")
        self._types = tuple(types)

    def __len__(self):
        return len(self._types)

    def __iter__(self):
        return iter(self._types)

    def __getitem__(self, type_id):
        return self._types[type_id]

    @property
    def types(self):
        return self._types

    def cheapest(self):
        return self._types[0]

    def most_expensive(self):
        return self._types[-1]

    def by_name(self, name):
        for t in self._types:
            if t.name == name:
                return t
        raise KeyError(name)


_CATALOG_COLUMNS = [
    "id", "name", "ondemand_price", "cpu_speed",
    "seq_k", "seq_theta", "rnd_mu", "rnd_sigma",
    "in_k", "in_theta", "out_k", "out_theta",
    "lag_ondemand", "lag_spot",
]


def load_catalog(path):
    """Parse a catalog CSV (one record per instance type).

    Columns: id,name,ondemand_price,cpu_speed,seq_k,seq_theta,rnd_mu,
    rnd_sigma,in_k,in_theta,out_k,out_theta,lag_ondemand,lag_spot.
    Lines starting with '#' and blank lines are ignored.  A header line is
    optional.  Parse errors report the offending line number.
    """
    types = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            fields = [f.strip() for f in line.split(",")]
            if fields[0] == "id":  # header
                continue
            if len(fields) != len(_CATALOG_COLUMNS):
                raise CatalogError(
                    "%s:%d: expected %d fields, got %d"
                    % (path, lineno, len(_CATALOG_COLUMNS), len(fields))
                )
            try:
                types.append(InstanceType(
                    id=int(fields[0]),
                    name=fields[1],
                    ondemand_price=float(fields[2]),
                    cpu_speed=float(fields[3]),
                    seq_io=GammaSpec(float(fields[4]), float(fields[5])),
                    rnd_io=NormalSpec(float(fields[6]), float(fields[7])),
                    net_in=GammaSpec(float(fields[8]), float(fields[9])),
                    net_out=GammaSpec(float(fields[10]), float(fields[11])),
                    acquisition_lag_ondemand=float(fields[12]),
                    acquisition_lag_spot=float(fields[13]),
                ))
            except (ValueError, CatalogError) as exc:
                raise CatalogError("%s:%d: %s" % (path, lineno, exc)) from exc
    if not types:
        raise CatalogError("%s: catalog file contains no records" % path)
    return Catalog(types)


def save_catalog(catalog, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(_CATALOG_COLUMNS) + "\n")
        for t in catalog:
            fh.write(
                "%d,%s,%g,%g,%g,%g,%g,%g,%g,%g,%g,%g,%g,%g\n"
                % (t.id, t.name, t.ondemand_price, t.cpu_speed,
                   t.seq_io.k, t.seq_io.theta, t.rnd_io.mu, t.rnd_io.sigma,
                   t.net_in.k, t.net_in.theta, t.net_out.k, t.net_out.theta,
                   t.acquisition_lag_ondemand, t.acquisition_lag_spot)
            )


def default_catalog():
    """Catalog of the four m1 instance types with calibrated bandwidths.

    Prices and bandwidth distribution parameters come from published EC2
    measurements (US East, 2013).  CPU speeds are synthetic: the published
    data does not include per-type instruction rates, so we use 1:2:4:8
    ratios (matching ECU ratios) with the small type at 1e9 instr/s.
    """
    return Catalog([
        InstanceType(0, "m1.small", 0.06, 1e9,
                     GammaSpec(129.3, 0.79), NormalSpec(150.3, 50.0),
                     GammaSpec(51.8, 1.8), GammaSpec(107.3, 0.55)),
        InstanceType(1, "m1.medium", 0.12, 2e9,
                     GammaSpec(127.1, 0.80), NormalSpec(128.9, 8.4),
                     GammaSpec(279.9, 0.55), GammaSpec(421.1, 0.27)),
        InstanceType(2, "m1.large", 0.24, 4e9,
                     GammaSpec(376.6, 0.28), NormalSpec(172.9, 34.8),
                     GammaSpec(6187.7, 0.44), GammaSpec(571.4, 0.22)),
        InstanceType(3, "m1.xlarge", 0.48, 8e9,
                     GammaSpec(408.1, 0.26), NormalSpec(1034.0, 146.4),
                     GammaSpec(15313.4, 0.23), GammaSpec(420.3, 0.29)),
    ])


def _positive_draw(spec, rng, n):
    """Draw n strictly positive bandwidth samples, rejecting zeros/negatives."""
    out = np.asarray(spec.draw(rng, n), dtype=np.float64)
    for _ in range(1000):
        bad = out <= 0.0
        count = int(bad.sum())
        if count == 0:
            return out
        out[bad] = spec.draw(rng, count)
    raise ValueError("bandwidth model %r produces no positive mass" % (spec,))


_PROFILE_BANDS = (
    ("seq_io_mb", "seq_io"),
    ("rnd_io_mb", "rnd_io"),
    ("net_in_mb", "net_in"),
    ("net_out_mb", "net_out"),
)


def task_time_distribution(profile, itype, n=DEFAULT_SAMPLE_COUNT, seed=0):
    """Execution-time distribution of a task on an instance type.

    T = instructions/cpu_speed + sum(data / bandwidth draw) over the four
    bandwidth resources.  The CPU term is deterministic; bandwidth terms
    with zero data volume contribute nothing and are not sampled.
    """
    rng = substream(seed, "task-time", itype.id)
    total = np.full(n, profile.instructions / itype.cpu_speed)
    for data_field, band_field in _PROFILE_BANDS:
        data_mb = getattr(profile, data_field)
        if data_mb > 0:
            total += data_mb / _positive_draw(getattr(itype, band_field), rng, n)
    return EmpiricalDistribution(total, rng_seed=seed)


def sample_task_time(profile, itype, rng):
    """One realized execution time of a task on an instance type (seconds)."""
    total = profile.instructions / itype.cpu_speed
    for data_field, band_field in _PROFILE_BANDS:
        data_mb = getattr(profile, data_field)
        if data_mb > 0:
            total += data_mb / float(_positive_draw(getattr(itype, band_field), rng, 1)[0])
    return total


def expected_ondemand_cost(itype, dist):
    """Expected on-demand cost of a task: price times expected hours.

    Deliberately ignores instance-hour rounding; in a many-task service the
    rounding cost is amortized and modelling it here would over-constrain
    the plan search.
    """
    return itype.ondemand_price * dist.expectation() / SECONDS_PER_HOUR


def fit_gamma(samples):
    """Method-of-moments Gamma fit: k = mean^2/var, theta = var/mean.

    Returns None (degenerate) when the sample variance is zero; callers
    should fall back to a point mass.
    """
    arr = np.asarray(samples, dtype=np.float64)
    if arr.size < 2:
        raise ValueError("need at least 2 samples to fit")
    mean = arr.mean()
    var = arr.var()
    if var == 0.0:
        return None
    if mean <= 0:
        raise ValueError("gamma fit requires positive mean")
    return (mean * mean / var, var / mean)


def fit_normal(samples):
    """Moment fit of a Normal: (sample mean, population standard deviation)."""
    arr = np.asarray(samples, dtype=np.float64)
    if arr.size < 2:
        raise ValueError("need at least 2 samples to fit")
    return (float(arr.mean()), float(arr.std()))


def expected_task_time(profile, itype, n=DEFAULT_SAMPLE_COUNT, seed=0):
    """Expected execution time of a task on a type (mean of the MC model)."""
    if (profile.seq_io_mb == 0 and profile.rnd_io_mb == 0
            and profile.net_in_mb == 0 and profile.net_out_mb == 0):
        return profile.instructions / itype.cpu_speed
    return task_time_distribution(profile, itype, n=n, seed=seed).expectation()


def ceil_hours(seconds):
    """Whole billing hours covering a duration (partial hours round up)."""
    if seconds <= 0:
        return 0
    return int(math.ceil(seconds / SECONDS_PER_HOUR))
