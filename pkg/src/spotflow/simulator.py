"""Discrete-event simulator of the workflow service runtime.

Jobs arrive as a Poisson process and execute their tasks on a pool of
rented instances according to each task's hybrid configuration: spot
dimensions first, the on-demand dimension as the last resort.  A spot
instance dies the moment the market price exceeds its bid; the task it was
running restarts from scratch on the next dimension (results of finished
predecessor tasks are kept, so only the interrupted task reruns).

The pool reuses idle instances of the requested kind and type without a new
acquisition lag, and may place a spot request onto an idle on-demand
instance of the same type (never the reverse).  Billing follows the hourly
model: any started hour is charged in full, except the final partial hour
of a spot instance killed by an out-of-bid event, which is free.  Spot
hours are charged at the market price sampled at each hour start.

The core is strictly single-threaded and deterministic: events are ordered
by (time, kind rank, sequence number) and every random draw comes from a
stream keyed by stable identifiers, never by arrival order.
"""

import enum
import heapq
import json
import math
from dataclasses import dataclass, field

from .cloud_model import SECONDS_PER_HOUR, ceil_hours, expected_task_time, sample_task_time
from .distributions import substream
from .workflow_dag import substream_seed


class SimulationError(RuntimeError):
    pass


class PlanMismatchError(SimulationError):
    """The supplied plan cache does not cover the submitted job classes."""


class EventKind(enum.IntEnum):
    # Order encodes the tie-break at equal timestamps: completions settle
    # before failures, failures before new work, releases always last.
    TASK_FINISH = 0
    OUT_OF_BID = 1
    JOB_ARRIVAL = 2
    INSTANCE_READY = 3
    INSTANCE_RELEASE = 4


@dataclass
class SimConfig:
    arrival_rate_per_min: float = 0.1
    job_count: int = 100
    seed: int = 0
    idle_release_policy: str = "hour-boundary"  # or "immediate"
    guarantee_p: float = 0.96
    expectation_samples: int = 2000  # for consolidation headroom estimates
    collect_event_log: bool = False

    def __post_init__(self):
        if self.arrival_rate_per_min <= 0:
            raise ValueError("arrival rate must be positive")
        if self.job_count < 1:
            raise ValueError("job_count must be >= 1")
        if self.idle_release_policy not in ("hour-boundary", "immediate"):
            raise ValueError("unknown idle_release_policy %r" % self.idle_release_policy)


@dataclass
class Instance:
    id: int
    type_id: int
    is_spot: bool
    bid: float | None
    ready_time: int
    alive: bool = True
    # (job_index, task_id, attempt) currently assigned, also while booting.
    assigned: tuple | None = None
    busy: bool = False
    idle_since: int | None = None
    release_token: int = 0
    busy_intervals: list = field(default_factory=list)


class InstancePool:
    """Running instances, with idle lists per (type, kind).

    Spot and on-demand instances are kept in separate lists; an instance is
    never assigned to two tasks at once.
    """

    def __init__(self):
        self.instances = {}
        self._idle = {}
        self._next_id = 0

    def create(self, type_id, is_spot, bid, ready_time):
        inst = Instance(
            id=self._next_id, type_id=type_id, is_spot=is_spot,
            bid=bid, ready_time=ready_time,
        )
        self._next_id += 1
        self.instances[inst.id] = inst
        return inst

    def _idle_list(self, type_id, is_spot):
        return self._idle.setdefault((type_id, is_spot), [])

    def remaining_paid_seconds(self, inst, now):
        """Seconds left in the current already-committed billing hour."""
        elapsed = now - inst.ready_time
        if elapsed <= 0:
            return 0.0
        return (SECONDS_PER_HOUR - (elapsed % SECONDS_PER_HOUR)) % SECONDS_PER_HOUR

    def acquire_or_reuse(self, type_id, is_spot, now, expected_time=0.0):
        """Idle instance satisfying the request, or None if one must be acquired.

        Same-kind same-type idle instances are reused unconditionally.  A
        spot request may additionally be consolidated onto an idle on-demand
        instance of the same type when that instance's remaining paid
        partial hour covers the task's expected execution time; an on-demand
        request is never placed on a spot instance.
        """
        idle = self._idle_list(type_id, is_spot)
        if idle:
            return self.instances[idle.pop(0)]
        if is_spot:
            od_idle = self._idle_list(type_id, False)
            for i, inst_id in enumerate(od_idle):
                inst = self.instances[inst_id]
                if expected_time <= self.remaining_paid_seconds(inst, now):
                    od_idle.pop(i)
                    return inst
        return None

    def mark_idle(self, inst, now):
        inst.busy = False
        inst.assigned = None
        inst.idle_since = now
        inst.release_token += 1
        lst = self._idle_list(inst.type_id, inst.is_spot)
        lst.append(inst.id)
        lst.sort()

    def remove(self, inst):
        inst.alive = False
        lst = self._idle_list(inst.type_id, inst.is_spot)
        if inst.id in lst:
            lst.remove(inst.id)


def bill(inst, end_time, terminated_by, itype, trace=None):
    """Monetary cost of one instance's lifetime [ready_time, end_time].

    On-demand: started hours round up, at the fixed hourly price.  Spot,
    user-terminated: started hours round up, each charged the market price
    at its hour start.  Spot, out-of-bid: only fully elapsed hours are
    charged (the terminal partial hour is free).
    """
    if terminated_by not in ("user", "out-of-bid"):
        raise ValueError("terminated_by must be 'user' or 'out-of-bid'")
    elapsed = end_time - inst.ready_time
    if not inst.is_spot:
        return ceil_hours(elapsed) * itype.ondemand_price
    if trace is None:
        raise SimulationError("spot billing requires a price trace")
    if terminated_by == "out-of-bid":
        hours = int(elapsed // SECONDS_PER_HOUR)
    else:
        hours = ceil_hours(elapsed)
    total = 0.0
    for h in range(hours):
        total += trace.price_at_cyclic(inst.ready_time + h * SECONDS_PER_HOUR)
    return total


@dataclass
class JobRun:
    index: int
    cls: object  # WorkflowJob
    plan: object  # JobPlan
    arrival: int
    unfinished: int = 0
    pending_preds: dict = field(default_factory=dict)
    finished: set = field(default_factory=set)
    completion: int | None = None


@dataclass
class SimReport:
    job_count: int
    total_cost: float
    avg_cost_per_job: float
    avg_makespan_s: float
    hit_rate: float
    instance_hours: dict
    instance_bills: list
    per_job: list
    seed: int

    def to_json(self):
        doc = {
            "job_count": self.job_count,
            "total_cost": self.total_cost,
            "avg_cost_per_job": self.avg_cost_per_job,
            "avg_makespan_s": self.avg_makespan_s,
            "hit_rate": self.hit_rate,
            "instance_hours": self.instance_hours,
            "instance_bills": self.instance_bills,
            "per_job": self.per_job,
            "seed": self.seed,
        }
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"

    def normalized(self, baseline, name="baseline"):
        """Headline metrics as ratios against another run."""
        return {
            "baseline": name,
            "avg_cost_ratio": _ratio(self.avg_cost_per_job, baseline.avg_cost_per_job),
            "avg_makespan_ratio": _ratio(self.avg_makespan_s, baseline.avg_makespan_s),
            "hit_rate_delta": self.hit_rate - baseline.hit_rate,
        }


def _ratio(a, b):
    return a / b if b else math.inf


class Simulator:
    """One deterministic simulation run."""

    def __init__(self, config, job_classes, plans, catalog, traces=None):
        self.config = config
        self.catalog = catalog
        self.traces = traces or {}
        self.classes = list(job_classes)
        if not self.classes:
            raise SimulationError("need at least one job class")
        self.plans = {}
        for cls in self.classes:
            plan = plans.get(cls.class_id)
            if plan is None:
                raise PlanMismatchError("no cached plan for class %r" % cls.class_id)
            if len(plan.task_configs) != len(cls.tasks):
                raise PlanMismatchError(
                    "plan for %r covers %d tasks, workflow has %d"
                    % (cls.class_id, len(plan.task_configs), len(cls.tasks))
                )
            if plan.deadline is None or plan.deadline <= 0:
                raise PlanMismatchError("plan for %r has no deadline" % cls.class_id)
            for config_ in plan.task_configs:
                for dim in config_.dims:
                    if dim.is_spot and dim.type_id not in self.traces:
                        raise PlanMismatchError(
                            "plan for %r uses spot type %d with no price trace"
                            % (cls.class_id, dim.type_id)
                        )
            self.plans[cls.class_id] = plan

        self.pool = InstancePool()
        self.heap = []
        self._seq = 0
        self.now = 0
        self.jobs = []
        self.bills = []  # (instance_id, type_id, is_spot, hours, amount)
        self.event_log = []
        self._expected_cache = {}

    # ------------------------------------------------------------------
    # event plumbing
    # ------------------------------------------------------------------

    def _push(self, time_, kind, payload):
        heapq.heappush(self.heap, (int(time_), int(kind), self._seq, payload))
        self._seq += 1

    def _log(self, time_, kind, detail):
        if self.config.collect_event_log:
            self.event_log.append("%d %s %s" % (time_, kind, detail))

    # ------------------------------------------------------------------
    # run loop
    # ------------------------------------------------------------------

    def run(self):
        self._schedule_arrivals()
        while self.heap:
            time_, kind, _, payload = heapq.heappop(self.heap)
            self.now = time_
            if kind == EventKind.JOB_ARRIVAL:
                self._on_arrival(payload)
            elif kind == EventKind.TASK_FINISH:
                self._on_task_finish(*payload)
            elif kind == EventKind.OUT_OF_BID:
                self._on_out_of_bid(payload)
            elif kind == EventKind.INSTANCE_READY:
                self._on_instance_ready(payload)
            elif kind == EventKind.INSTANCE_RELEASE:
                self._on_instance_release(*payload)
        incomplete = [j.index for j in self.jobs if j.completion is None]
        if incomplete:
            raise SimulationError("jobs never completed: %s" % incomplete)
        alive = [i.id for i in self.pool.instances.values() if i.alive]
        if alive:
            raise SimulationError("instances still alive at drain: %s" % alive)
        return self._build_report()

    def _schedule_arrivals(self):
        rng = substream(self.config.seed, "arrivals")
        t = 0.0
        scale = 60.0 / self.config.arrival_rate_per_min
        for i in range(self.config.job_count):
            t += rng.exponential(scale)
            cls = self.classes[i % len(self.classes)]
            job = JobRun(
                index=i,
                cls=cls,
                plan=self.plans[cls.class_id],
                arrival=int(math.ceil(t)),
                unfinished=len(cls.tasks),
                pending_preds={tk.id: len(tk.predecessors) for tk in cls.tasks},
            )
            self.jobs.append(job)
            self._push(job.arrival, EventKind.JOB_ARRIVAL, i)

    # ------------------------------------------------------------------
    # handlers
    # ------------------------------------------------------------------

    def _on_arrival(self, job_index):
        job = self.jobs[job_index]
        self._log(self.now, "JobArrival", "job=%d class=%s" % (job.index, job.cls.class_id))
        for tid in job.cls.source_ids():
            self._request_instance(job, tid, attempt=0)

    def _request_instance(self, job, task_id, attempt):
        config = job.plan.task_configs[task_id]
        dim = config.dims[attempt]
        itype = self.catalog[dim.type_id]
        expected = self._expected_time(job.cls, task_id, dim.type_id)
        inst = self.pool.acquire_or_reuse(dim.type_id, dim.is_spot, self.now, expected)
        if inst is not None:
            inst.release_token += 1  # cancel any pending idle release
            inst.idle_since = None
            inst.assigned = (job.index, task_id, attempt)
            self._log(self.now, "InstanceReuse",
                      "inst=%d job=%d task=%d" % (inst.id, job.index, task_id))
            self._start_task(job, task_id, attempt, inst)
            return
        bid = dim.price if dim.is_spot else None
        ready = self.now + int(itype.lag(dim.is_spot))
        inst = self.pool.create(dim.type_id, dim.is_spot, bid, ready)
        inst.assigned = (job.index, task_id, attempt)
        self._log(self.now, "InstanceRequest",
                  "inst=%d type=%d spot=%d job=%d task=%d"
                  % (inst.id, dim.type_id, dim.is_spot, job.index, task_id))
        self._push(ready, EventKind.INSTANCE_READY, inst.id)
        if dim.is_spot:
            trace = self.traces[dim.type_id]
            fail_at = trace.first_exceedance_cyclic(ready, dim.price)
            if fail_at is not None:
                self._push(int(math.ceil(fail_at)), EventKind.OUT_OF_BID, inst.id)

    def _on_instance_ready(self, inst_id):
        inst = self.pool.instances[inst_id]
        if not inst.alive or inst.assigned is None:
            return
        job_index, task_id, attempt = inst.assigned
        self._log(self.now, "InstanceReady", "inst=%d" % inst.id)
        self._start_task(self.jobs[job_index], task_id, attempt, inst)

    def _start_task(self, job, task_id, attempt, inst):
        itype = self.catalog[inst.type_id]
        rng = substream(self.config.seed, "duration", job.index, task_id, attempt)
        profile = job.cls.task_by_id(task_id).profile
        # Nearest-second rounding keeps the integer clock without biasing
        # durations upward (ceiling would systematically inflate makespans).
        duration = int(round(sample_task_time(profile, itype, rng)))
        inst.busy = True
        inst.assigned = (job.index, task_id, attempt)
        inst.busy_intervals.append((self.now, self.now + duration))
        self._log(self.now, "TaskStart",
                  "job=%d task=%d attempt=%d inst=%d duration=%d"
                  % (job.index, task_id, attempt, inst.id, duration))
        self._push(self.now + duration, EventKind.TASK_FINISH,
                   (inst.id, job.index, task_id, attempt))

    def _on_task_finish(self, inst_id, job_index, task_id, attempt):
        inst = self.pool.instances[inst_id]
        if not inst.alive or inst.assigned != (job_index, task_id, attempt):
            return  # the instance died at this timestamp ordering boundary
        job = self.jobs[job_index]
        self._log(self.now, "TaskFinish",
                  "job=%d task=%d inst=%d" % (job_index, task_id, inst.id))
        self.pool.mark_idle(inst, self.now)
        self._schedule_release(inst)

        job.finished.add(task_id)
        job.unfinished -= 1
        if job.unfinished == 0:
            job.completion = self.now
            self._log(self.now, "JobComplete", "job=%d" % job_index)
        else:
            task = job.cls.task_by_id(task_id)
            for succ in task.successors:
                job.pending_preds[succ] -= 1
                if job.pending_preds[succ] == 0:
                    self._request_instance(job, succ, attempt=0)

    def _on_out_of_bid(self, inst_id):
        inst = self.pool.instances[inst_id]
        if not inst.alive:
            return
        self._log(self.now, "OutOfBid", "inst=%d" % inst.id)
        victim = inst.assigned  # None when the instance was idling
        self._settle(inst, "out-of-bid")
        if victim is not None:
            job_index, task_id, attempt = victim
            self._request_instance(self.jobs[job_index], task_id, attempt + 1)

    def _schedule_release(self, inst):
        if self.config.idle_release_policy == "immediate":
            when = self.now
        else:
            when = inst.ready_time + int(SECONDS_PER_HOUR) * ceil_hours(self.now - inst.ready_time)
        self._push(when, EventKind.INSTANCE_RELEASE, (inst.id, inst.release_token))

    def _on_instance_release(self, inst_id, token):
        inst = self.pool.instances[inst_id]
        if not inst.alive or inst.busy or inst.release_token != token:
            return
        self._log(self.now, "InstanceRelease", "inst=%d" % inst.id)
        self._settle(inst, "user")

    def _settle(self, inst, terminated_by):
        itype = self.catalog[inst.type_id]
        trace = self.traces.get(inst.type_id)
        amount = bill(inst, self.now, terminated_by, itype, trace)
        elapsed = self.now - inst.ready_time
        if inst.is_spot and terminated_by == "out-of-bid":
            hours = int(elapsed // SECONDS_PER_HOUR)
        else:
            hours = ceil_hours(elapsed)
        self.bills.append((inst.id, inst.type_id, inst.is_spot, hours, amount))
        self.pool.remove(inst)

    # ------------------------------------------------------------------
    # metrics
    # ------------------------------------------------------------------

    def _expected_time(self, cls, task_id, type_id):
        key = (cls.class_id, task_id, type_id)
        if key not in self._expected_cache:
            self._expected_cache[key] = expected_task_time(
                cls.task_by_id(task_id).profile,
                self.catalog[type_id],
                n=self.config.expectation_samples,
                seed=substream_seed(self.config.seed, "expected", task_id, type_id),
            )
        return self._expected_cache[key]

    def _build_report(self):
        per_job = []
        hits = 0
        makespans = []
        for job in self.jobs:
            makespan = job.completion - job.arrival
            hit = makespan <= job.plan.deadline
            hits += int(hit)
            makespans.append(makespan)
            per_job.append({
                "job": job.index,
                "class": job.cls.class_id,
                "arrival": job.arrival,
                "completion": job.completion,
                "makespan_s": makespan,
                "deadline_s": job.plan.deadline,
                "hit": bool(hit),
            })
        hours_by_kind = {}
        bills = []
        for _, type_id, is_spot, hours, amount in sorted(self.bills):
            key = "%s:%s" % (self.catalog[type_id].name, "spot" if is_spot else "ondemand")
            hours_by_kind[key] = hours_by_kind.get(key, 0) + hours
            bills.append(amount)
        total = sum(bills)
        n = len(self.jobs)
        return SimReport(
            job_count=n,
            total_cost=total,
            avg_cost_per_job=total / n,
            avg_makespan_s=sum(makespans) / n,
            hit_rate=hits / n,
            instance_hours=hours_by_kind,
            instance_bills=bills,
            per_job=per_job,
            seed=self.config.seed,
        )


def run(config, job_classes, plans, catalog, traces=None):
    """Run one simulation and return its report."""
    return Simulator(config, job_classes, plans, catalog, traces).run()
