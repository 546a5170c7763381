import logging
from pathlib import Path

from joblib import Parallel, delayed

from agent import NavigationAgent
from config import RunConfig
import harness
from sim import Simulator
import utils


class Runner:
    def __init__(self, config: RunConfig, world, groups, out_dir, trace=False):
        self.config = config
        self.world = world
        self.groups = groups
        self.out_dir = Path(out_dir)
        self.trace = trace

    def run(self, method, seed) -> harness.RunReport:
        """Run one full route pass and store its logs under runs/."""
        cfg = self.config
        sim = Simulator(self.world, cfg.sim)
        agent = NavigationAgent(method, cfg.control, cfg.bank, cfg.weights, cfg.noise, seed)
        trace = [] if self.trace else None
        report = harness.run_route(
            sim, agent, self.groups, cfg.budget_ticks, seed=seed, route=self.world.name,
            check_period=cfg.check_period, threshold=cfg.ncc_threshold,
            carry_memory=cfg.carry_memory, trace=trace)

        name = utils.run_name(method, seed)
        run_dir = self.out_dir / "runs"
        run_dir.mkdir(parents=True, exist_ok=True)
        utils.dump_json(report.to_dict(), run_dir / f"{name}.json")
        utils.dump_jsonl([s.to_dict() for s in report.segments], run_dir / f"{name}-segments.jsonl")
        if trace is not None:
            utils.dump_jsonl(trace, run_dir / f"{name}-trace.jsonl")
        if agent.bank is not None:
            agent.bank.dump(run_dir / f"{name}-memory.json")
        reached = sum(report.milestones_reached)
        logging.info(f"{self.world.name} {method} seed {seed}: {reached}/{len(self.groups)} milestones")
        return report

    def run_all(self, jobs=1):
        cells = [(method, seed) for method in self.config.methods for seed in self.config.seeds]
        logging.info(f"Running {len(cells)} runs with {jobs} job(s)")
        reports = Parallel(n_jobs=jobs)(delayed(_run_cell)(self, method, seed) for method, seed in cells)
        return sorted(reports, key=lambda r: (r.method, r.seed))


def _run_cell(runner, method, seed):
    return runner.run(method, seed)
