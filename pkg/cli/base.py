import logging
import os
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path

from django.conf import settings

from dmail.client import DmailClient
from dpush.client import DpushClient
from dpushnet.commands import DpushCommand
from dpushnet.exceptions import UsageError

from .profile import Profile
from .world import World

logger = logging.getLogger(__name__)


@dataclass
class Session:
    profile: Profile
    world: World
    keys: object
    state: object
    channel: object
    client: DmailClient

    def run(self, proc, kind):
        return self.world.execute(proc, kind, self.keys.address)

    def require_state(self):
        if self.state is None:
            raise UsageError("this profile has no address yet; run `address create`")
        return self.state

    def sync_keys(self):
        """Pick up key-agreement rotation done on the inbox state."""
        agreement = getattr(self.state, "agreement", None)
        if agreement is None or agreement.public == self.keys.agreement.public:
            return False
        self.keys.agreement = agreement
        self.keys.retired_agreements = list(self.state.retired_agreements)
        return True


class ProfileCommand(DpushCommand):
    """Command working on a profile directory and the local simulated world."""

    def add_arguments(self, parser):
        parser.add_argument("--profile", default=None, help="Profile directory (DPUSH_PROFILE_DIR)")
        parser.add_argument("--world", default=None, help="World directory (DPUSH_WORLD_DIR)")
        parser.add_argument("--passphrase-env", default=None,
                            help="Environment variable holding the key passphrase")

    def get_profile(self, options):
        return Profile(options.get("profile") or settings.DPUSH_PROFILE_DIR)

    def passphrase(self, options):
        variable = options.get("passphrase_env")
        if not variable:
            return None
        value = os.environ.get(variable)
        if not value:
            raise UsageError(f"environment variable {variable} is empty or unset")
        return value

    @contextmanager
    def session(self, options, save=True):
        profile = self.get_profile(options)
        passphrase = self.passphrase(options)
        with profile.lock():
            keys = profile.load_keys(passphrase)
            state, channel = profile.load_inbox(keys)
            world = World.open(options.get("world"))
            client = DmailClient(world.node_for(keys.address))
            session = Session(profile, world, keys, state, channel, client)
            try:
                yield session
            finally:
                world.save()
            if save:
                if session.sync_keys():
                    profile.save_keys(keys, passphrase)
                profile.save_inbox(session.state, session.channel)

    def plain_client(self, session):
        return DpushClient(session.client.node, rng=session.client.rng)


def read_payload(options):
    if options.get("text") is not None:
        return options["text"].encode("utf-8")
    path = Path(options["in"])
    try:
        return path.read_bytes()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc


def add_payload_arguments(parser):
    group = parser.add_mutually_exclusive_group(required=True)
    group.add_argument("--in", dest="in", help="Read the message from a file")
    group.add_argument("--text", help="Message text")


def printable(data):
    return data.decode("utf-8", errors="backslashreplace").replace("\n", "\\n")
