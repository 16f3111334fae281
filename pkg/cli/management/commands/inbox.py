from cli.base import ProfileCommand, printable
from dpush.client import DpushClient


class Command(ProfileCommand):
    help = "Scan the inbox; prints one `block_id sender body` line per message"

    def add_arguments(self, parser):
        super().add_arguments(parser)
        sub = parser.add_subparsers(dest="subcommand", required=True)
        scan = sub.add_parser("scan", help="Fetch the next page of every watched target")
        scan.add_argument("--limit", type=int, default=20)

    def handle(self, *args, **options):
        with self.session(options) as session:
            state = session.require_state()
            if hasattr(state, "agreement"):
                outcome = session.run(session.client.scan_mail(state, options["limit"]), "scan")
                for mail in outcome.accepted:
                    self.stdout.write(f"{mail.block_id.hex()} {mail.sender_address.hex()} "
                                      f"{printable(mail.message.body)}")
                for block_id, reason in outcome.rejected:
                    self.stderr.write(f"rejected {block_id.hex()} {reason.value}")
            else:
                outcome = session.run(DpushClient(session.client.node).scan_inbox(state, options["limit"]), "scan")
                for message in outcome.messages:
                    self.stdout.write(f"{message.block_id.hex()} - {printable(message.data)}")
            for target_key, code in outcome.failures.items():
                self.stderr.write(f"failed {target_key.hex()} {code}")
