from cli.base import ProfileCommand
from cli.profile import ProfileKeys
from dpushnet.exceptions import UsageError


class Command(ProfileCommand):
    help = "Create the profile's signing, key-agreement and channel keys"

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument("--force", action="store_true", help="Replace existing keys")

    def handle(self, *args, **options):
        profile = self.get_profile(options)
        passphrase = self.passphrase(options)
        with profile.lock():
            if profile.has_keys() and not options["force"]:
                raise UsageError(f"{profile.path} already has keys; use --force to replace them")
            keys = ProfileKeys.generate()
            profile.save_keys(keys, passphrase)
        self.stdout.write(f"address={keys.address.hex()}")
        self.stdout.write(f"channel={keys.channel.key_id.hex()}")
