import pytest

from spotflow.distributions import dominates
from spotflow.planner_astar import (
    AStarParams,
    InfeasiblePlanError,
    JobPlan,
    SearchStats,
    TaskDistCache,
    astar_configure,
    brute_force_configure,
    load_plan_cache,
    plan_cost,
    save_plan_cache,
)
from spotflow.workflow_dag import ConfigDim, HybridConfig, deadline_bounds

from conftest import chain_job, cpu_profile, diamond_job, mixed_profile, ordered_catalog


def planned_job(profiles, builder=chain_job, deadline_frac=0.5, guarantee_p=0.9,
                catalog=None, n=1500, seed=7):
    catalog = catalog or ordered_catalog(3)
    job = builder(profiles, guarantee_p=guarantee_p)
    d_min, d_max = deadline_bounds(job, catalog, n=n, seed=seed)
    return job.with_deadline(d_min + deadline_frac * (d_max - d_min)), catalog


class TestSingleTask:
    def test_both_types_feasible_picks_cheapest(self):
        cat = ordered_catalog(2)
        job = chain_job([cpu_profile(60.0)], deadline=1000.0)
        plan = astar_configure(job, cat, sample_count=200, seed=1)
        assert plan == [0]

    def test_only_expensive_type_feasible(self):
        cat = ordered_catalog(2)
        # 60 s on t0, 30 s on t1; deadline between the two.
        job = chain_job([cpu_profile(60.0)], deadline=40.0)
        plan = astar_configure(job, cat, sample_count=200, seed=1)
        assert plan == [1]

    def test_infeasible_raises_with_diagnosis(self):
        cat = ordered_catalog(2)
        job = chain_job([cpu_profile(60.0)], deadline=10.0)
        with pytest.raises(InfeasiblePlanError) as err:
            astar_configure(job, cat, sample_count=200, seed=1)
        assert err.value.best_plan == (1,)
        assert err.value.best_percentile > 10.0


class TestOracleEquivalence:
    def test_three_task_chain_matches_exhaustive(self):
        job, cat = planned_job([mixed_profile()] * 3)
        cache = TaskDistCache(job, cat, sample_count=1500, seed=7)
        plan = astar_configure(job, cat, cache=cache, seed=7)
        bf_plan, bf_cost = brute_force_configure(job, cat, cache=cache)
        assert plan_cost(cache, tuple(plan)) == bf_cost
        assert bf_plan is not None

    def test_diamond_matches_exhaustive(self):
        job, cat = planned_job([mixed_profile(s) for s in (1.0, 2.0, 0.5, 1.0)],
                               builder=diamond_job, deadline_frac=0.35)
        cache = TaskDistCache(job, cat, sample_count=1500, seed=7)
        plan = astar_configure(job, cat, cache=cache, seed=7)
        _, bf_cost = brute_force_configure(job, cat, cache=cache)
        assert plan_cost(cache, tuple(plan)) == bf_cost

    def test_tight_deadline_forces_most_expensive(self):
        job, cat = planned_job([mixed_profile()] * 2, deadline_frac=0.0)
        # Deadline at D_min: only near-fastest plans can qualify; compare
        # against the oracle whatever the outcome.
        cache = TaskDistCache(job, cat, sample_count=1500, seed=7)
        bf_plan, bf_cost = brute_force_configure(job, cat, cache=cache)
        if bf_plan is None:
            with pytest.raises(InfeasiblePlanError):
                astar_configure(job, cat, cache=cache, seed=7)
        else:
            plan = astar_configure(job, cat, cache=cache, seed=7)
            assert plan_cost(cache, tuple(plan)) == bf_cost


class TestSearchBehaviour:
    def test_deterministic(self):
        job, cat = planned_job([mixed_profile()] * 3, deadline_frac=0.3)
        p1 = astar_configure(job, cat, sample_count=1000, seed=3)
        p2 = astar_configure(job, cat, sample_count=1000, seed=3)
        assert p1 == p2

    def test_upper_bound_never_increases(self):
        job, cat = planned_job([mixed_profile()] * 3, deadline_frac=0.3)
        stats = SearchStats()
        astar_configure(job, cat, sample_count=1000, seed=3, stats=stats)
        ub = stats.upper_bound_history
        assert ub and all(a >= b for a, b in zip(ub, ub[1:]))

    def test_max_iter_respected(self):
        job, cat = planned_job([mixed_profile()] * 4, deadline_frac=0.2)
        stats = SearchStats()
        params = AStarParams(max_iter=3)
        try:
            astar_configure(job, cat, params=params, sample_count=500, seed=3, stats=stats)
        except InfeasiblePlanError:
            pass
        assert stats.iterations <= 3

    def test_initial_state_feasible_returns_all_cheapest(self):
        # Past D_max with margin: the percentile sits above the expectation,
        # so frac 1.0 alone does not make the all-cheapest plan feasible.
        job, cat = planned_job([mixed_profile()] * 3, deadline_frac=1.5)
        stats = SearchStats()
        plan = astar_configure(job, cat, sample_count=1000, seed=3, stats=stats)
        assert plan == [0, 0, 0]

    def test_monotone_expansion_dominance_per_task(self):
        # On a catalog with strictly ordered types, the mutated dimension of
        # any child has a distribution dominating the parent's.
        job, cat = planned_job([mixed_profile()] * 2)
        cache = TaskDistCache(job, cat, sample_count=1500, seed=7)
        for tid in range(2):
            for t1 in range(len(cat) - 1):
                for t2 in range(t1 + 1, len(cat)):
                    assert dominates(cache.dist(tid, t2), cache.dist(tid, t1), 0.01)


class TestPlanCache:
    def test_roundtrip(self, tmp_path):
        config = HybridConfig((ConfigDim(1, 0.031, True), ConfigDim(0, 0.06, False)))
        plans = {
            "wf-a": JobPlan("wf-a", 1234.5, 0.96,
                            [config, HybridConfig((ConfigDim(0, 0.06, False),))]),
        }
        path = tmp_path / "plans.json"
        save_plan_cache(plans, path)
        loaded = load_plan_cache(path)
        assert loaded["wf-a"].deadline == 1234.5
        assert loaded["wf-a"].task_configs[0] == config

    def test_rejects_other_files(self, tmp_path):
        path = tmp_path / "other.json"
        path.write_text('{"format": "something-else"}')
        with pytest.raises(ValueError):
            load_plan_cache(path)
