from cli.base import ProfileCommand, add_payload_arguments, read_payload


class Command(ProfileCommand):
    help = "Publish to this profile's follow channel"

    def add_arguments(self, parser):
        super().add_arguments(parser)
        sub = parser.add_subparsers(dest="subcommand", required=True)
        publish = sub.add_parser("publish", help="Append one entry to the channel")
        add_payload_arguments(publish)

    def handle(self, *args, **options):
        payload = read_payload(options)
        with self.session(options) as session:
            receipt = session.run(session.client.publish(session.channel, payload), "publish")
        self.stdout.write(f"channel={receipt.channel_id.hex()} seq={receipt.seq} replicas={receipt.replicas}")
