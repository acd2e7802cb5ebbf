"""Search for the cheapest per-task on-demand instance assignment.

The state space is the vector of instance type ids per task (topological
id order).  The search starts from the all-cheapest plan and expands states
by replacing one dimension with a more expensive type; a best-first queue
ordered by f = g + h (g: cost delta from the initial plan, h: expected cost
of the plan) is pruned against the cheapest feasible cost found so far.

Note on scores: h is the full expected plan cost and g the delta from the
initial plan, so f effectively double-counts cost relative to textbook
best-first search.  This is kept as designed; correctness of the returned
plan rests on the explicit upper-bound pruning, and the pop order is still
monotone in plan cost.
"""

import heapq
import json
import math
import time
from dataclasses import dataclass, field

from .cloud_model import expected_ondemand_cost, task_time_distribution
from .distributions import DEFAULT_SAMPLE_COUNT
from .workflow_dag import (
    ConfigDim,
    HybridConfig,
    WorkflowError,
    is_feasible,
    substream_seed,
    workflow_time_distribution,
)


class InfeasiblePlanError(RuntimeError):
    """No feasible plan was found within the iteration budget."""

    def __init__(self, job, best_plan, best_percentile):
        self.best_plan = best_plan
        self.best_percentile = best_percentile
        self.deadline = job.deadline
        super().__init__(
            "no feasible plan for %r: best percentile %.1f s vs deadline %.1f s (plan %s)"
            % (job.class_id, best_percentile, job.deadline, list(best_plan))
        )


@dataclass
class AStarParams:
    max_iter: int = 10_000
    upper_bound: float = math.inf

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass(frozen=True)
class SearchState:
    plan: tuple
    level: int
    g: float
    h: float

    @property
    def f(self):
        return self.g + self.h


@dataclass
class SearchStats:
    """Diagnostics of one search run."""

    iterations: int = 0
    generated: int = 0
    pruned: int = 0
    feasible_found: int = 0
    upper_bound_history: list = field(default_factory=list)
    wall_time: float = 0.0


class TaskDistCache:
    """Memoized per-(task, type) execution-time distributions and costs.

    Distributions are seeded from (seed, task id, type id) so every plan
    evaluation, in the search or in an exhaustive oracle, sees identical
    samples for the same assignment.
    """

    def __init__(self, job, catalog, sample_count=DEFAULT_SAMPLE_COUNT, seed=0):
        self.job = job
        self.catalog = catalog
        self.sample_count = sample_count
        self.seed = seed
        self._dists = {}
        self._costs = {}

    def dist(self, task_id, type_id):
        key = (task_id, type_id)
        if key not in self._dists:
            task = self.job.task_by_id(task_id)
            self._dists[key] = task_time_distribution(
                task.profile,
                self.catalog[type_id],
                n=self.sample_count,
                seed=substream_seed(self.seed, task_id, type_id),
            )
        return self._dists[key]

    def cost(self, task_id, type_id):
        key = (task_id, type_id)
        if key not in self._costs:
            self._costs[key] = expected_ondemand_cost(
                self.catalog[type_id], self.dist(task_id, type_id)
            )
        return self._costs[key]


def plan_cost(cache, plan):
    """Expected on-demand cost of a whole plan (sum over tasks)."""
    return sum(cache.cost(tid, type_id) for tid, type_id in enumerate(plan))


def plan_distribution(job, cache, plan, seed=None):
    """Workflow makespan distribution under a plan.

    Uses one composition seed for every plan so that two routes evaluating
    the same plan get bit-identical results.
    """
    if seed is None:
        seed = substream_seed(cache.seed, "compose-root")
    dists = {tid: cache.dist(tid, type_id) for tid, type_id in enumerate(plan)}
    return workflow_time_distribution(job, dists, seed=seed)


def astar_configure(job, catalog, params=None, sample_count=DEFAULT_SAMPLE_COUNT,
                    seed=0, cache=None, stats=None):
    """Cheapest feasible per-task on-demand type assignment.

    Returns the plan as a list of type ids indexed by task id.  Raises
    InfeasiblePlanError when no feasible plan is found within max_iter
    iterations, carrying the closest-to-feasible plan seen as a diagnosis.
    """
    if job.deadline is None:
        raise WorkflowError("job has no deadline set")
    params = params if params is not None else AStarParams()
    cache = cache if cache is not None else TaskDistCache(job, catalog, sample_count, seed)
    stats = stats if stats is not None else SearchStats()
    t0 = time.perf_counter()

    n_tasks = len(job.tasks)
    n_types = len(catalog)
    initial = tuple([0] * n_tasks)
    h0 = plan_cost(cache, initial)

    upper_bound = params.upper_bound
    best_plan = None
    best_infeasible = (math.inf, initial)  # (percentile, plan) for diagnosis

    start = SearchState(plan=initial, level=0, g=0.0, h=h0)
    open_heap = [(start.f, start.g, start.plan)]
    open_states = {initial: start}
    closed = set()

    while open_heap and stats.iterations < params.max_iter:
        stats.iterations += 1
        _, _, plan = heapq.heappop(open_heap)
        state = open_states.pop(plan, None)
        if state is None or plan in closed:
            continue

        dist = plan_distribution(job, cache, plan)
        percentile = dist.percentile(job.guarantee_p)
        if percentile <= job.deadline:
            stats.feasible_found += 1
            current_cost = state.h
            if current_cost < upper_bound:
                upper_bound = current_cost
                best_plan = plan
                stats.upper_bound_history.append(upper_bound)
        elif percentile < best_infeasible[0]:
            best_infeasible = (percentile, plan)

        closed.add(plan)

        for dim in range(state.level, n_tasks):
            for type_id in range(plan[dim] + 1, n_types):
                child_plan = plan[:dim] + (type_id,) + plan[dim + 1:]
                stats.generated += 1
                child_h = state.h - cache.cost(dim, plan[dim]) + cache.cost(dim, type_id)
                child_g = child_h - h0
                child = SearchState(plan=child_plan, level=dim, g=child_g, h=child_h)
                if child.f >= upper_bound or child_plan in closed:
                    stats.pruned += 1
                    continue
                if child_plan not in open_states:
                    open_states[child_plan] = child
                    heapq.heappush(open_heap, (child.f, child.g, child_plan))

    stats.wall_time = time.perf_counter() - t0
    if best_plan is None:
        raise InfeasiblePlanError(job, best_infeasible[1], best_infeasible[0])
    return list(best_plan)


def brute_force_configure(job, catalog, cache=None, sample_count=DEFAULT_SAMPLE_COUNT,
                          seed=0):
    """Exhaustive minimum-cost feasible plan; oracle twin of astar_configure.

    Enumerates every type assignment, so only usable for tiny workflows.
    Returns (plan, cost) or (None, inf) when nothing is feasible.  Shares
    the evaluation cache/seeding with the search so results are comparable
    float-for-float.
    """
    cache = cache if cache is not None else TaskDistCache(job, catalog, sample_count, seed)
    n_tasks = len(job.tasks)
    n_types = len(catalog)
    best = (None, math.inf)
    plan = [0] * n_tasks
    while True:
        tplan = tuple(plan)
        dist = plan_distribution(job, cache, tplan)
        if is_feasible(job, dist):
            cost = plan_cost(cache, tplan)
            if cost < best[1] or (cost == best[1] and (best[0] is None or tplan < best[0])):
                best = (tplan, cost)
        # Odometer increment.
        i = n_tasks - 1
        while i >= 0 and plan[i] == n_types - 1:
            plan[i] = 0
            i -= 1
        if i < 0:
            break
        plan[i] += 1
    return best


# ---------------------------------------------------------------------------
# Plan cache file
# ---------------------------------------------------------------------------


@dataclass
class JobPlan:
    """Cached planning result for one workflow class."""

    class_id: str
    deadline: float
    guarantee_p: float
    task_configs: list  # HybridConfig per task id


def save_plan_cache(plans, path):
    """Write plans (mapping class_id -> JobPlan) as a JSON plan-cache file."""
    doc = {"format": "plan-cache/1", "classes": {}}
    for class_id, plan in sorted(plans.items()):
        doc["classes"][class_id] = {
            "deadline": plan.deadline,
            "guarantee_p": plan.guarantee_p,
            "tasks": [
                [
                    {"type_id": d.type_id, "price": d.price, "is_spot": d.is_spot}
                    for d in config.dims
                ]
                for config in plan.task_configs
            ],
        }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2)
        fh.write("\n")


def load_plan_cache(path):
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != "plan-cache/1":
        raise ValueError("%s: not a plan-cache file" % path)
    plans = {}
    for class_id, rec in doc["classes"].items():
        configs = [
            HybridConfig(tuple(
                ConfigDim(d["type_id"], d["price"], d["is_spot"]) for d in dims
            ))
            for dims in rec["tasks"]
        ]
        plans[class_id] = JobPlan(
            class_id=class_id,
            deadline=rec["deadline"],
            guarantee_p=rec["guarantee_p"],
            task_configs=configs,
        )
    return plans
