from cli.base import ProfileCommand, add_payload_arguments, read_payload
from dht.ident import KeyId
from dmail.site import DmailSite


class Command(ProfileCommand):
    help = "Send a message to an address: Dmail when its site is a Dmail site, plain Dpush otherwise"

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument("--to", required=True, help="Receiver address (128 hex characters)")
        add_payload_arguments(parser)
        parser.add_argument("--priority", type=int, default=0, help="Index of the advertised target to use")

    def handle(self, *args, **options):
        to = KeyId.from_hex(options["to"])
        payload = read_payload(options)
        with self.session(options) as session:
            client = session.client
            site = session.run(client.fetch_site(to), "fetch_site")
            if isinstance(site, DmailSite):
                proc = client.compose_and_send(session.keys.signing, to, payload, options["priority"], site=site)
                kind = "dmail"
            else:
                proc = client.send(to, payload, options["priority"], site=site)
                kind = "send"
            receipt = session.run(proc, kind)
        self.stdout.write(
            f"{kind} block_id={receipt.block_id.hex()} attempts={receipt.attempts} "
            f"target={receipt.target_key.hex()} difficulty={int(receipt.difficulty)} replicas={receipt.replicas}"
        )
