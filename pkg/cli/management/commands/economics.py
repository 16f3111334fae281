from django.conf import settings

from cli.economics import economics, messages_per_conversion, seconds_for_difficulty
from dpushnet.commands import DpushCommand
from dpushnet.exceptions import UsageError


class Command(DpushCommand):
    help = "Computer time a spammer spends per conversion at a given per-message cost"

    def add_arguments(self, parser):
        cost = parser.add_mutually_exclusive_group(required=True)
        cost.add_argument("--pow-seconds", type=float, help="Seconds of work per message")
        cost.add_argument("--difficulty", type=int, help="Derive seconds per message from difficulty bits")
        parser.add_argument("--hashes-per-second", type=float, default=None)
        parser.add_argument("--per-conversion", type=float, help="Messages sent per conversion")
        parser.add_argument("--messages", type=float)
        parser.add_argument("--conversions", type=float)

    def handle(self, *args, **options):
        if options["per_conversion"] is not None:
            per_conversion = options["per_conversion"]
        elif options["messages"] is not None and options["conversions"] is not None:
            per_conversion = messages_per_conversion(options["messages"], options["conversions"])
        else:
            raise UsageError("give --per-conversion or both --messages and --conversions")

        if options["pow_seconds"] is not None:
            pow_seconds = options["pow_seconds"]
        else:
            rate = options["hashes_per_second"] or settings.DPUSH_HASHES_PER_SECOND
            pow_seconds = seconds_for_difficulty(options["difficulty"], rate)

        report = economics(pow_seconds, per_conversion)
        self.stdout.write(f"pow_seconds_per_message={report.pow_seconds_per_message:g}")
        self.stdout.write(f"messages_per_conversion={report.messages_per_conversion:.0f}")
        self.stdout.write(f"seconds_per_conversion={report.total_seconds_per_conversion:.0f}")
        self.stdout.write(f"years_per_conversion={report.total_years_per_conversion:.2f}")
