import logging
from pathlib import Path

from dpushnet.commands import DpushCommand
from simnet.scenario import load_scenario, run_scenario

logger = logging.getLogger(__name__)


class Command(DpushCommand):
    help = "Run a simulation scenario file and export its metrics"

    def add_arguments(self, parser):
        sub = parser.add_subparsers(dest="subcommand", required=True)
        run = sub.add_parser("run", help="Run <scenario.json> to completion")
        run.add_argument("scenario")
        run.add_argument("--metrics", help="Write the per-operation CSV here")
        run.add_argument("--trace", help="Write the event trace here")

    def handle(self, *args, **options):
        run = run_scenario(load_scenario(options["scenario"]))
        metrics = run.metrics
        if options.get("metrics"):
            Path(options["metrics"]).write_text(metrics.to_csv(), encoding="utf-8")
        if options.get("trace"):
            Path(options["trace"]).write_text("\n".join(run.trace) + "\n", encoding="utf-8")

        self.stdout.write(f"nodes={len(run.sim.nodes)} seed={run.sim.cfg.seed} operations={len(metrics.operations)}")
        self.stdout.write(
            f"sent={metrics.sent} delivered={metrics.delivered} dropped={metrics.dropped} "
            f"undeliverable={metrics.undeliverable} timeouts={metrics.timeouts}"
        )
        for kind in sorted({op.kind for op in metrics.operations}):
            self.stdout.write(
                f"{kind}: count={metrics.count(kind)} mean_hops={metrics.mean_hops(kind):.2f} "
                f"attempts={metrics.total_attempts(kind)}"
            )
        for name, actor in sorted(run.actors.items()):
            self.stdout.write(f"actor {name} node={actor.node} received={len(actor.received)}")
