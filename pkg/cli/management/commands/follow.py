from cli.base import ProfileCommand, printable
from dht.ident import KeyId


class Command(ProfileCommand):
    help = "Follow senders' channels and poll them (no proof of work involved)"

    def add_arguments(self, parser):
        super().add_arguments(parser)
        sub = parser.add_subparsers(dest="subcommand", required=True)
        add = sub.add_parser("add", help="Follow a channel id")
        add.add_argument("channel")
        sub.add_parser("poll", help="Print new channel entries as `channel seq body`")

    def handle(self, *args, **options):
        with self.session(options) as session:
            state = session.require_state()
            client = session.client
            if options["subcommand"] == "add":
                channel_id = KeyId.from_hex(options["channel"])
                client.follow(state, channel_id)
                self.stdout.write(f"following {channel_id.hex()}")
                return
            outcome = session.run(client.poll_followed(state), "poll")
            for message in outcome.messages:
                self.stdout.write(f"{message.channel_id.hex()} {message.seq} {printable(message.data)}")
            for channel_id, code in outcome.failures.items():
                self.stderr.write(f"failed {channel_id.hex()} {code}")
