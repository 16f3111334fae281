from cli.base import ProfileCommand
from dht.ident import KeyId
from dpush.client import DpushClient


class Command(ProfileCommand):
    help = "Show or change this profile's published site"

    def add_arguments(self, parser):
        super().add_arguments(parser)
        sub = parser.add_subparsers(dest="subcommand", required=True)
        sub.add_parser("show", help="Print the site and watched targets")
        sub.add_parser("rotate", help="Advertise a fresh target_key; keep scanning the old one")
        retire = sub.add_parser("retire", help="Stop scanning a rotated-out target")
        retire.add_argument("target")
        difficulty = sub.add_parser("difficulty", help="Change the difficulty of one advertised target")
        difficulty.add_argument("index", type=int)
        difficulty.add_argument("bits", type=int)

    def handle(self, *args, **options):
        subcommand = options["subcommand"]
        with self.session(options, save=subcommand != "show") as session:
            state = session.require_state()
            # plain sites rotate without a key-agreement value
            client = session.client if hasattr(state, "agreement") else DpushClient(session.client.node)
            if subcommand == "rotate":
                session.run(client.rotate_target(state), "rotate")
            elif subcommand == "retire":
                client.retire_target(state, KeyId.from_hex(options["target"]))
            elif subcommand == "difficulty":
                session.run(client.set_difficulty(state, options["index"], options["bits"]), "set_difficulty")
            self.show(state)

    def show(self, state):
        self.stdout.write(f"address={state.address.hex()} kind={state.site.kind} version={state.version}")
        for slot in state.active:
            self.stdout.write(f"active {slot.target_key.hex()} difficulty={int(slot.difficulty)}")
        for slot in state.retired:
            self.stdout.write(f"retired {slot.target_key.hex()} difficulty={int(slot.difficulty)} "
                              f"since={slot.retired_at}")
