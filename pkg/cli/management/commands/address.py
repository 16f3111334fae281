from cli.base import ProfileCommand
from dpushnet.exceptions import UsageError


class Command(ProfileCommand):
    help = "Publish this profile's site (Dmail by default)"

    def add_arguments(self, parser):
        super().add_arguments(parser)
        sub = parser.add_subparsers(dest="subcommand", required=True)
        create = sub.add_parser("create", help="Publish site version 1")
        create.add_argument("--plain", action="store_true", help="Plain Dpush site without encryption")
        create.add_argument("--difficulty", type=int, default=None)

    def handle(self, *args, **options):
        with self.session(options) as session:
            if session.state is not None:
                raise UsageError(f"address {session.state.address.hex()} is already published")
            keys = session.keys
            if options["plain"]:
                proc = self.plain_client(session).create_address(keys.signing, options["difficulty"])
            else:
                proc = session.client.create_dmail_address(keys.signing, options["difficulty"], keys.agreement)
            session.state = session.run(proc, "create_address")
            target = session.state.site.targets[0]
            self.stdout.write(f"address={session.state.address.hex()}")
            self.stdout.write(f"kind={session.state.site.kind} target={target.target_key.hex()} "
                              f"difficulty={int(target.difficulty)}")
