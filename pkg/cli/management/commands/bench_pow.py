from cli.bench import bench_pow
from dpushnet.commands import DpushCommand


class Command(DpushCommand):
    help = "Benchmark proof-of-work mining at one difficulty (bench-pow; Django command names use underscores)"

    def add_arguments(self, parser):
        parser.add_argument("--difficulty", type=int, required=True)
        parser.add_argument("--trials", type=int, default=20)
        parser.add_argument("--seed", type=int, default=None)

    def handle(self, *args, **options):
        report = bench_pow(options["difficulty"], options["trials"], seed=options["seed"])
        self.stdout.write(
            f"difficulty={report.difficulty} trials={report.trials} min={report.min_attempts} "
            f"median={report.median_attempts:g} geomean={report.geomean_attempts:.1f}"
        )
        self.stdout.write(
            f"hashes_per_second={report.hashes_per_second:.0f} seconds_per_message={report.seconds_per_message:.6f}"
        )
