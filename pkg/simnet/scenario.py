"""
Scripted scenarios: a SimConfig plus an ordered list of actions executed
against a freshly built network. Every actor draws randomness from its own
seeded generator, so a scenario file fully determines the run.
"""
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

from dmail.client import DmailClient
from dpush.client import DpushClient
from dpushnet.exceptions import ScenarioFailed, UsageError

from .config import SimConfig
from .network import Sim
from .serializers import ScenarioSerializer

logger = logging.getLogger(__name__)


@dataclass
class Actor:
    name: str
    node: int
    dpush: DpushClient
    dmail: DmailClient
    keypair: object
    state: object = None
    channel: object = None
    received: list = field(default_factory=list)
    # receiver name -> site fetched by the last send to it
    sites: dict = field(default_factory=dict)

    @property
    def is_dmail(self):
        return hasattr(self.state, "agreement")


@dataclass
class ScenarioRun:
    sim: Sim
    actors: dict
    results: list

    @property
    def metrics(self):
        return self.sim.metrics

    @property
    def trace(self):
        return self.sim.trace


def load_scenario(path):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read scenario {path}: {exc}") from exc


def validate_scenario(data):
    serializer = ScenarioSerializer(data=data)
    if not serializer.is_valid():
        raise UsageError(f"invalid scenario: {json.dumps(serializer.errors, sort_keys=True)}")
    return serializer.validated_data


class ScenarioRunner:
    def __init__(self, data):
        scenario = validate_scenario(data)
        self.cfg = SimConfig.from_settings(**scenario["config"])
        self.actions = scenario["actions"]
        self.sim = None
        self.actors = {}
        self.results = []

    def run(self):
        self.sim = Sim.build(self.cfg)
        for position, action in enumerate(self.actions):
            handler = getattr(self, f"do_{action['action']}")
            logger.debug("Action %d: %s", position, action["action"])
            self.results.append(handler(action))
        logger.info("Scenario finished: %d actions, %d operations",
                    len(self.actions), len(self.sim.metrics.operations))
        return ScenarioRun(sim=self.sim, actors=self.actors, results=self.results)

    # helpers

    def actor(self, name, node=None):
        if name in self.actors:
            return self.actors[name]
        if node is None:
            raise UsageError(f"actor {name!r} is used before it has an address or a node")
        if node >= self.cfg.node_count:
            raise UsageError(f"actor {name!r} placed on missing node {node}")
        rng = self.sim.actor_rng(name)
        dht_node = self.sim.nodes[node]
        dpush = DpushClient(dht_node, rng=rng, clock=self.sim.clock)
        dmail = DmailClient(dht_node, rng=rng, clock=self.sim.clock)
        actor = Actor(name=name, node=node, dpush=dpush, dmail=dmail, keypair=dpush.new_keypair())
        self.actors[name] = actor
        return actor

    def run_op(self, actor, proc, kind):
        return self.sim.execute(proc, kind=kind, origin=actor.node)

    def payload(self, actor, action):
        if "text" in action:
            return action["text"].encode("utf-8")
        return actor.dpush.rng.randbytes(action["size"])

    def receiver(self, name):
        if name not in self.actors or self.actors[name].state is None:
            raise UsageError(f"{name!r} has no published address")
        return self.actors[name]

    # actions

    def do_create_address(self, action):
        actor = self.actor(action["actor"], action.get("node"))
        actor.state = self.run_op(actor, actor.dpush.create_address(actor.keypair, action.get("difficulty")),
                                  "create_address")
        return actor.state.address

    def do_create_dmail_address(self, action):
        actor = self.actor(action["actor"], action.get("node"))
        actor.state = self.run_op(actor, actor.dmail.create_dmail_address(actor.keypair, action.get("difficulty")),
                                  "create_dmail_address")
        return actor.state.address

    def _site(self, actor, receiver, action):
        if action["stale"]:
            if receiver.name not in actor.sites:
                raise UsageError(f"{actor.name!r} has no earlier site of {receiver.name!r}")
            return actor.sites[receiver.name]
        site = self.run_op(actor, actor.dpush.fetch_site(receiver.state.address), "fetch_site")
        actor.sites[receiver.name] = site
        return site

    def do_send(self, action):
        actor = self.actor(action["actor"], action.get("node"))
        receiver = self.receiver(action["to"])
        site = self._site(actor, receiver, action)
        proc = actor.dpush.send(receiver.state.address, self.payload(actor, action), action["priority"], site=site)
        return self.run_op(actor, proc, "send")

    def do_dmail(self, action):
        actor = self.actor(action["actor"], action.get("node"))
        receiver = self.receiver(action["to"])
        site = self._site(actor, receiver, action)
        proc = actor.dmail.compose_and_send(actor.keypair, receiver.state.address,
                                            self.payload(actor, action), action["priority"], site=site)
        return self.run_op(actor, proc, "dmail")

    def do_scan(self, action):
        actor = self.receiver(action["actor"])
        if actor.is_dmail:
            outcome = self.run_op(actor, actor.dmail.scan_mail(actor.state, action["limit"]), "scan")
            actor.received.extend(mail.message.body for mail in outcome.accepted)
        else:
            outcome = self.run_op(actor, actor.dpush.scan_inbox(actor.state, action["limit"]), "scan")
            actor.received.extend(message.data for message in outcome.messages)
        return outcome

    def do_rotate(self, action):
        actor = self.receiver(action["actor"])
        client = actor.dmail if actor.is_dmail else actor.dpush
        return self.run_op(actor, client.rotate_target(actor.state), "rotate")

    def do_retire(self, action):
        actor = self.receiver(action["actor"])
        if not actor.state.retired:
            raise UsageError(f"{actor.name!r} has no retired target")
        oldest = actor.state.retired[0].target_key
        actor.dpush.retire_target(actor.state, oldest)
        return oldest

    def do_open_channel(self, action):
        actor = self.actor(action["actor"], action.get("node"))
        actor.channel = actor.dpush.open_channel()
        return actor.channel.channel_id

    def do_publish(self, action):
        actor = self.actor(action["actor"])
        if actor.channel is None:
            raise UsageError(f"{actor.name!r} has no open channel")
        return self.run_op(actor, actor.dpush.publish(actor.channel, self.payload(actor, action)), "publish")

    def do_follow(self, action):
        actor = self.receiver(action["actor"])
        publisher = self.actor(action["channel"])
        if publisher.channel is None:
            raise UsageError(f"{publisher.name!r} has no open channel")
        actor.dpush.follow(actor.state, publisher.channel.channel_id)

    def do_poll(self, action):
        actor = self.receiver(action["actor"])
        outcome = self.run_op(actor, actor.dpush.poll_followed(actor.state), "poll")
        actor.received.extend(message.data for message in outcome.messages)
        return outcome

    def do_offline(self, action):
        self.sim.node_offline(action["node"])

    def do_online(self, action):
        self.sim.node_online(action["node"])

    def do_lookup(self, action):
        return self.sim.lookup_hops(action["samples"], seed=len(self.results))

    def do_assert(self, action):
        actor = self.actors.get(action.get("actor")) if "actor" in action else None
        if any(name in action for name in ("received", "received_count", "contains")) and actor is None:
            raise UsageError("received checks need an existing actor")
        if "received" in action:
            expected = sorted(text.encode("utf-8") for text in action["received"])
            if sorted(actor.received) != expected:
                raise ScenarioFailed(f"{actor.name} received {len(actor.received)} message(s), "
                                     f"expected {len(expected)} specific ones")
        if "received_count" in action and len(actor.received) != action["received_count"]:
            raise ScenarioFailed(f"{actor.name} received {len(actor.received)}, "
                                 f"expected {action['received_count']}")
        if "contains" in action and action["contains"].encode("utf-8") not in actor.received:
            raise ScenarioFailed(f"{actor.name} never received {action['contains']!r}")
        if "attempts" in action:
            check = action["attempts"]
            total = self.sim.metrics.total_attempts(check["kind"])
            if total != check["equals"]:
                raise ScenarioFailed(f"{check['kind']} attempts were {total}, expected {check['equals']}")


def run_scenario(data):
    return ScenarioRunner(data).run()
