"""Command-line driver for planning, simulation and failure-model inspection.

Subcommands:

  plan      build per-task instance configurations for workflow classes and
            write them to a plan-cache file
  simulate  replay a workload against a plan cache on a price trace and
            report cost / makespan / deadline-hit metrics
  ffp       tabulate the cumulative first-failure probability of a spot
            (type, bid) pair over elapsed time

Flags can also be supplied through a JSON spec file (--spec); explicit
command-line flags take precedence over spec-file values.
"""

import argparse
import json
import pathlib
import sys
import time
from dataclasses import dataclass, field

from . import cloud_model, planner_astar, planner_hybrid, simulator, spot_market, workflow_dag

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_INFEASIBLE = 3
EXIT_MISMATCH = 4

SPOT_ONLY_BID = 1000.0  # effectively never out-of-bid

PLANNERS = ("dyna", "dyna-ns", "spot-only")


@dataclass
class ExperimentSpec:
    """Resolved experiment parameters shared by the subcommands."""

    catalog: str | None = None          # None -> built-in default catalog
    trace_dir: str | None = None
    workflows: list = field(default_factory=list)
    guarantee: float = 0.96
    deadline: float | None = None       # explicit deadline in seconds
    deadline_factor: float = 0.5        # else D_min + factor * (D_max - D_min)
    arrival_rate: float = 0.1           # jobs per minute
    jobs: int = 100
    seed: int = 0
    planner: str = "dyna"
    out: str = "."
    samples: int = 10_000
    ffp_trials: int = 10_000
    max_iter: int = 10_000
    release_policy: str = "hour-boundary"
    per_job: bool = False
    event_log: bool = False
    baseline: str | None = None

    def __post_init__(self):
        if self.planner not in PLANNERS:
            raise ValueError("planner must be one of %s" % (PLANNERS,))
        if not 0.0 < self.guarantee <= 1.0:
            raise ValueError("guarantee must be in (0, 1]")

    def load_catalog(self):
        if self.catalog is None:
            return cloud_model.default_catalog()
        return cloud_model.load_catalog(self.catalog)

    def load_traces(self, catalog):
        """Traces keyed by type id, from <trace_dir>/<type name>.csv files."""
        traces = {}
        if self.trace_dir is None:
            return traces
        root = pathlib.Path(self.trace_dir)
        for itype in catalog:
            path = root / ("%s.csv" % itype.name)
            if path.exists():
                traces[itype.id] = spot_market.load_trace(str(path))
        return traces

    def load_jobs(self, catalog):
        if not self.workflows:
            raise ValueError("no workflow files given")
        jobs = []
        for path in self.workflows:
            job = workflow_dag.load_workflow(path, guarantee_p=self.guarantee)
            if self.deadline is not None:
                deadline = float(self.deadline)
            else:
                d_min, d_max = workflow_dag.deadline_bounds(
                    job, catalog, n=self.samples, seed=self.seed)
                deadline = d_min + self.deadline_factor * (d_max - d_min)
            jobs.append(job.with_deadline(deadline))
        return jobs


def _spec_from_args(args):
    values = {}
    if getattr(args, "spec", None):
        with open(args.spec, "r", encoding="utf-8") as fh:
            values.update(json.load(fh))
    for key in ExperimentSpec.__dataclass_fields__:
        flag_value = getattr(args, key, None)
        if flag_value is not None:
            values[key] = flag_value
    return ExperimentSpec(**values)


def _add_common_flags(p):
    p.add_argument("--spec", help="JSON file of experiment parameters")
    p.add_argument("--catalog", help="instance catalog CSV (default: built-in)")
    p.add_argument("--trace-dir", dest="trace_dir", help="directory of <type>.csv price traces")
    p.add_argument("--workflow", dest="workflows", action="append",
                   help="workflow file; repeat for a class mix")
    p.add_argument("--guarantee", type=float, help="probabilistic deadline guarantee p")
    p.add_argument("--deadline", type=float, help="explicit deadline in seconds")
    p.add_argument("--deadline-factor", dest="deadline_factor", type=float,
                   help="deadline position within [D_min, D_max]")
    p.add_argument("--lambda", dest="arrival_rate", type=float, help="job arrivals per minute")
    p.add_argument("--jobs", type=int, help="number of jobs to simulate")
    p.add_argument("--seed", type=int)
    p.add_argument("--planner", choices=PLANNERS)
    p.add_argument("--out", help="output directory")
    p.add_argument("--samples", type=int, help="Monte Carlo sample count for distributions")
    p.add_argument("--ffp-trials", dest="ffp_trials", type=int)
    p.add_argument("--max-iter", dest="max_iter", type=int,
                   help="search iteration budget per workflow class")
    p.add_argument("--release-policy", dest="release_policy",
                   choices=("hour-boundary", "immediate"))
    p.add_argument("--per-job", dest="per_job", action="store_const", const=True)
    p.add_argument("--event-log", dest="event_log", action="store_const", const=True)
    p.add_argument("--baseline", help="report JSON to normalize against")


def _out_dir(spec):
    out = pathlib.Path(spec.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _failure_model(spec, catalog):
    traces = spec.load_traces(catalog)
    if not traces:
        return None
    return spot_market.FailureModel(
        traces=traces, num_trials=spec.ffp_trials, rng_seed=spec.seed)


def cmd_plan(spec):
    catalog = spec.load_catalog()
    jobs = spec.load_jobs(catalog)
    failure = _failure_model(spec, catalog) if spec.planner == "dyna" else None
    out = _out_dir(spec)
    plans = {}
    for job in jobs:
        t0 = time.perf_counter()
        cache = planner_astar.TaskDistCache(job, catalog, spec.samples, spec.seed)
        params = planner_astar.AStarParams(max_iter=spec.max_iter)
        plan = planner_astar.astar_configure(job, catalog, params=params,
                                             cache=cache, seed=spec.seed)
        if spec.planner == "dyna-ns":
            configs = [
                workflow_dag.HybridConfig.ondemand_only(catalog[plan[t.id]])
                for t in job.tasks
            ]
        elif spec.planner == "spot-only":
            # High fixed bid: spot execution with an (unreachable) on-demand
            # fallback dimension retained as the completion guarantee.
            configs = [
                workflow_dag.HybridConfig((
                    workflow_dag.ConfigDim(plan[t.id], SPOT_ONLY_BID, True),
                    workflow_dag.ConfigDim(
                        plan[t.id], catalog[plan[t.id]].ondemand_price, False),
                ))
                for t in job.tasks
            ]
        else:
            configs = planner_hybrid.refine_plan(
                job, plan, catalog, failure, cache, seed=spec.seed)
        wall = time.perf_counter() - t0
        plans[job.class_id] = planner_astar.JobPlan(
            class_id=job.class_id,
            deadline=job.deadline,
            guarantee_p=job.guarantee_p,
            task_configs=configs,
        )
        est_cost = planner_astar.plan_cost(cache, tuple(plan))
        spot_dims = sum(len(c.spot_dims) for c in configs)
        print("planned %s: %d tasks, est. cost $%.4f, %d spot dims, %.2f s"
              % (job.class_id, len(job.tasks), est_cost, spot_dims, wall))
    cache_path = out / "plans.json"
    planner_astar.save_plan_cache(plans, cache_path)
    print("plan cache written to %s" % cache_path)
    return EXIT_OK


def cmd_simulate(spec, plans_path=None):
    catalog = spec.load_catalog()
    jobs = spec.load_jobs(catalog)
    out = _out_dir(spec)
    path = pathlib.Path(plans_path) if plans_path else out / "plans.json"
    plans = planner_astar.load_plan_cache(path)
    missing = [j.class_id for j in jobs if j.class_id not in plans]
    if missing:
        raise simulator.PlanMismatchError("plan cache lacks classes: %s" % missing)
    config = simulator.SimConfig(
        arrival_rate_per_min=spec.arrival_rate,
        job_count=spec.jobs,
        seed=spec.seed,
        idle_release_policy=spec.release_policy,
        guarantee_p=spec.guarantee,
        collect_event_log=spec.event_log,
    )
    traces = spec.load_traces(catalog)
    sim = simulator.Simulator(config, jobs, plans, catalog, traces)
    rep = sim.run()

    (out / "report.json").write_text(rep.to_json(), encoding="utf-8")
    with open(out / "report.csv", "w", encoding="utf-8") as fh:
        fh.write("jobs,total_cost,avg_cost_per_job,avg_makespan_s,hit_rate\n")
        fh.write("%d,%.6f,%.6f,%.2f,%.4f\n" % (
            rep.job_count, rep.total_cost, rep.avg_cost_per_job,
            rep.avg_makespan_s, rep.hit_rate))
    if spec.per_job:
        with open(out / "per_job.csv", "w", encoding="utf-8") as fh:
            fh.write("job,class,arrival,completion,makespan_s,deadline_s,hit\n")
            for row in rep.per_job:
                fh.write("%d,%s,%d,%d,%d,%.2f,%d\n" % (
                    row["job"], row["class"], row["arrival"], row["completion"],
                    row["makespan_s"], row["deadline_s"], int(row["hit"])))
    if spec.event_log:
        (out / "events.log").write_text("\n".join(sim.event_log) + "\n", encoding="utf-8")
    if spec.baseline:
        with open(spec.baseline, "r", encoding="utf-8") as fh:
            base = json.load(fh)
        ratios = {
            "avg_cost_ratio": rep.avg_cost_per_job / base["avg_cost_per_job"],
            "hit_rate_delta": rep.hit_rate - base["hit_rate"],
        }
        (out / "normalized.json").write_text(
            json.dumps(ratios, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    print("simulated %d jobs: hit rate %.4f, avg cost $%.4f, avg makespan %.0f s"
          % (rep.job_count, rep.hit_rate, rep.avg_cost_per_job, rep.avg_makespan_s))
    print("report written to %s" % (out / "report.json"))
    return EXIT_OK


def cmd_ffp(spec, type_name, bid):
    catalog = spec.load_catalog()
    itype = catalog.by_name(type_name)
    model = _failure_model(spec, catalog)
    if model is None or not model.has_trace(itype.id):
        raise spot_market.TraceError("no trace for type %s" % type_name)
    dist = spot_market.estimate_ffp(model, itype.id, bid)
    out = _out_dir(spec)
    rows = []
    for k, t in enumerate(dist.bucket_times):
        rows.append((float(t), float(dist.masses[:k].sum())))
    rows.append((model.horizon, float(dist.masses.sum())))
    with open(out / "ffp.csv", "w", encoding="utf-8") as fh:
        fh.write("t_seconds,cumulative_failure\n")
        for t, p in rows:
            fh.write("%.0f,%.6f\n" % (t, p))
    print("type %s bid %.4f: failure mass %.4f, no-failure mass %.4f"
          % (type_name, bid, dist.masses.sum(), dist.no_failure_mass))
    print("table written to %s" % (out / "ffp.csv"))
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="spotflow",
        description="Workflow planning and cloud simulation with probabilistic deadlines",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_plan = sub.add_parser("plan", help="build and cache instance configurations")
    _add_common_flags(p_plan)

    p_sim = sub.add_parser("simulate", help="simulate a workload against a plan cache")
    _add_common_flags(p_sim)
    p_sim.add_argument("--plans", help="plan-cache file (default: <out>/plans.json)")

    p_ffp = sub.add_parser("ffp", help="tabulate cumulative failure probability")
    _add_common_flags(p_ffp)
    p_ffp.add_argument("type_name", help="instance type name, e.g. m1.small")
    p_ffp.add_argument("bid", type=float, help="bid price in USD/hour")

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        spec = _spec_from_args(args)
        if args.command == "plan":
            return cmd_plan(spec)
        if args.command == "simulate":
            return cmd_simulate(spec, getattr(args, "plans", None))
        if args.command == "ffp":
            return cmd_ffp(spec, args.type_name, args.bid)
        parser.error("unknown command %r" % args.command)
    except planner_astar.InfeasiblePlanError as exc:
        print("infeasible: %s" % exc, file=sys.stderr)
        return EXIT_INFEASIBLE
    except simulator.PlanMismatchError as exc:
        print("mismatch: %s" % exc, file=sys.stderr)
        return EXIT_MISMATCH
    except (cloud_model.CatalogError, spot_market.TraceError,
            workflow_dag.WorkflowError, ValueError, OSError, json.JSONDecodeError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return EXIT_PARSE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
