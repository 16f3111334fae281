"""
Dpush operations bound to one DHT node.

Every network operation is a generator in the RPC batch protocol of
``dht.routing``; drive it with ``Sim.execute`` or any other transport. Local
state (``InboxState``, ``Channel``) is only mutated after the network part
of an operation succeeded.
"""
import logging
import random
import time
from dataclasses import dataclass

from django.conf import settings

from dht.block import Difficulty, mine
from dht.ident import KeyId, default_suite
from dht.store import ScanCursor, UpdateableRecord
from dpushnet.exceptions import NetworkError, NotFound, ProtocolError, UsageError

from .channel import Channel, ChannelMessage, PollOutcome, PublishReceipt, encode_channel, parse_channel
from .inbox import Backfill, InboxMessage, InboxState, ScanOutcome
from .site import DpushSite, SiteTarget, site_from_record

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SendReceipt:
    block_id: KeyId
    attempts: int
    target_key: KeyId
    difficulty: Difficulty
    replicas: int


class DpushClient:
    site_class = DpushSite
    state_class = InboxState

    def __init__(self, node, rng=None, clock=None, suite=default_suite,
                 max_attempts=None, default_difficulty=None, backlog=None):
        self.node = node
        self.rng = rng if rng is not None else random.SystemRandom()
        self.clock = clock or (lambda: int(time.time()))
        self.suite = suite
        if max_attempts is None:
            max_attempts = settings.DPUSH_MAX_MINING_ATTEMPTS or None
        self.max_attempts = max_attempts
        self.default_difficulty = Difficulty(
            default_difficulty if default_difficulty is not None else settings.DPUSH_DEFAULT_DIFFICULTY
        )
        self.backlog = backlog or settings.DPUSH_CHANNEL_BACKLOG
        self.max_block_size = node.store.policy.max_block_size

    def fresh_target(self):
        return KeyId(self.rng.randbytes(64))

    def new_keypair(self):
        return self.suite.signing_keypair(seed=self.rng.randbytes(32))

    # sites

    def _publish_site(self, state, site):
        version = state.version + 1
        record = UpdateableRecord.create(state.keypair, version, site.to_json(), suite=self.suite)
        receipt = yield from self.node.iterative_put_updateable(record)
        logger.info("Published site %s v%d on %d replicas", state.address.short(), version, receipt.replicas)
        return version

    def initial_site(self, difficulty):
        return self.site_class(targets=[SiteTarget(self.fresh_target(), difficulty)])

    def create_address(self, keypair=None, difficulty=None):
        keypair = keypair or self.new_keypair()
        site = self.initial_site(difficulty if difficulty is not None else self.default_difficulty)
        state = self.state_class.for_site(keypair, site)
        version = yield from self._publish_site(state, site)
        state.commit_site(site, version)
        return state

    def fetch_site(self, address):
        fetch = yield from self.node.iterative_get_updateable(KeyId(address))
        return site_from_record(address, fetch.record)

    # sending

    def send(self, address, payload, priority=0, site=None):
        """Mine ``payload`` toward the receiver's advertised target; ``site`` skips the fetch (possibly stale)."""
        if site is None:
            site = yield from self.fetch_site(address)
        return (yield from self.send_to_site(site, payload, priority))

    def send_to_site(self, site, payload, priority=0):
        target = site.target(priority)
        mined = mine(
            target.target_key, target.difficulty, payload,
            start_nonce=self.rng.getrandbits(64),
            max_attempts=self.max_attempts,
            max_block_size=self.max_block_size,
        )
        stored = yield from self.node.iterative_store_targeted(mined.block)
        logger.info("Sent block %s to %s after %d attempts",
                    mined.block.id.short(), target.target_key.short(), mined.attempts)
        return SendReceipt(
            block_id=mined.block.id,
            attempts=mined.attempts,
            target_key=target.target_key,
            difficulty=target.difficulty,
            replicas=stored.replicas,
        )

    # receiving

    def scan_inbox(self, state, limit=20):
        """One page per watched target (active, then retired) and per backfill range it carries."""
        outcome = ScanOutcome()
        for slot in state.slots():
            try:
                blocks = yield from self._scan_slot(slot, limit)
            except NetworkError as exc:
                logger.warning("Scan of %s failed: %s", slot.target_key.short(), exc.detail)
                outcome.failures[slot.target_key] = exc.code
                continue
            outcome.messages.extend(InboxMessage(block.id, slot.target_key, block.data) for block in blocks)
        return outcome

    def _scan_slot(self, slot, limit):
        page = yield from self.node.iterative_scan(slot.target_key, slot.difficulty, slot.cursor, limit)
        blocks = list(page.blocks)
        pending = []
        for fill in slot.backfill:
            fill_page = yield from self.node.iterative_scan(slot.target_key, slot.difficulty, fill.cursor, limit)
            inside = [block for block in fill_page.blocks if block.id < fill.end]
            blocks.extend(inside)
            # a block at or past the end means the range is done
            if len(inside) == len(fill_page.blocks) and not fill_page.cursor.exhausted:
                pending.append(Backfill(cursor=fill_page.cursor, end=fill.end))
        # nothing moves until every page of this slot arrived
        slot.advance(page.cursor)
        slot.backfill = pending
        return blocks

    # owner actions

    def rotated_site(self, state, index):
        old = state.site.target(index)
        targets = list(state.site.targets)
        targets.pop(index)
        targets.insert(0, SiteTarget(self.fresh_target(), old.difficulty))
        return state.site.with_targets(targets)

    def rotate_target(self, state, index=0):
        site = self.rotated_site(state, index)
        version = yield from self._publish_site(state, site)
        state.commit_rotation(site, version, index, now=self.clock())
        return site

    def retire_target(self, state, target_key):
        """Stop scanning a target that was already rotated out."""
        target_key = KeyId(target_key)
        if any(slot.target_key == target_key for slot in state.active):
            raise UsageError(f"{target_key.short()} is still advertised; rotate it first")
        remaining = [slot for slot in state.retired if slot.target_key != target_key]
        if len(remaining) == len(state.retired):
            raise NotFound(f"no retired target {target_key.short()}")
        state.retired = remaining
        logger.info("Dropped retired target %s", target_key.short())

    def set_difficulty(self, state, index, bits):
        target = state.site.target(index)
        targets = list(state.site.targets)
        targets[index] = SiteTarget(target.target_key, bits)
        site = state.site.with_targets(targets)
        version = yield from self._publish_site(state, site)
        slot = state.active[index]
        if Difficulty(bits) < slot.difficulty:
            slot.lower_difficulty(bits)
        else:
            slot.advance(ScanCursor.start(slot.target_key, bits))
            slot.difficulty = Difficulty(bits)
        state.commit_site(site, version)
        return site

    # follow channel

    def open_channel(self, keypair=None):
        return Channel(keypair=keypair or self.new_keypair(), backlog=self.backlog)

    def publish(self, channel, data):
        entries = channel.appended(data, self.max_block_size)
        seq = entries[-1].seq
        record = UpdateableRecord.create(channel.keypair, seq, encode_channel(entries), suite=self.suite)
        stored = yield from self.node.iterative_put_updateable(record)
        channel.commit(entries)
        logger.info("Published channel %s entry %d", channel.channel_id.short(), seq)
        return PublishReceipt(channel_id=channel.channel_id, seq=seq, replicas=stored.replicas)

    def follow(self, state, channel_id):
        state.follows.setdefault(KeyId(channel_id), 0)

    def poll_followed(self, state):
        outcome = PollOutcome()
        for channel_id, last_seen in sorted(state.follows.items()):
            outcome.fetches += 1
            try:
                fetch = yield from self.node.iterative_get_updateable(channel_id)
                entries = parse_channel(fetch.record.data)
            except (ProtocolError, NetworkError) as exc:
                outcome.failures[channel_id] = exc.code
                continue
            fresh = [e for e in entries if e.seq > last_seen]
            outcome.messages.extend(ChannelMessage(channel_id, e.seq, e.data) for e in fresh)
            state.follows[channel_id] = max(last_seen, fetch.record.version)
        return outcome
