"""
The local simulated world CLI commands talk to.

world.json fixes node count and seed; the network is rebuilt from them on
every invocation and the node stores are reloaded from stores.bin, so the
world survives between commands.
"""
import json
import logging
import struct
from pathlib import Path

from django.conf import settings

from dht.ident import KeyId
from dht.store import SNAPSHOT_MAGIC, dump_frames, load_frames
from dpushnet.exceptions import UsageError
from simnet.config import SimConfig
from simnet.network import Sim

logger = logging.getLogger(__name__)

WORLD_FILE = "world.json"
STORES_FILE = "stores.bin"


class World:
    def __init__(self, path, sim):
        self.path = Path(path)
        self.sim = sim

    @classmethod
    def open(cls, path=None):
        path = Path(path or settings.DPUSH_WORLD_DIR).expanduser()
        path.mkdir(parents=True, exist_ok=True)
        world_file = path / WORLD_FILE
        if world_file.exists():
            try:
                spec = json.loads(world_file.read_text(encoding="utf-8"))
            except ValueError as exc:
                raise UsageError(f"{world_file} is not valid JSON: {exc}") from exc
        else:
            spec = {"nodes": settings.DPUSH_WORLD_NODES, "seed": settings.DPUSH_WORLD_SEED}
            world_file.write_text(json.dumps(spec, sort_keys=True) + "\n", encoding="utf-8")
            logger.info("Created world in %s with %d nodes", path, spec["nodes"])
        cfg = SimConfig.from_settings(node_count=spec["nodes"], seed=spec["seed"])
        world = cls(path, Sim.build(cfg))
        world.load_stores()
        return world

    def node_index(self, address):
        return int(KeyId(address)) % len(self.sim.nodes)

    def node_for(self, address):
        return self.sim.nodes[self.node_index(address)]

    def execute(self, proc, kind, address):
        return self.sim.execute(proc, kind=kind, origin=self.node_index(address))

    def load_stores(self):
        stores_file = self.path / STORES_FILE
        if not stores_file.exists():
            return 0
        raw = stores_file.read_bytes()
        if not raw.startswith(SNAPSHOT_MAGIC):
            raise UsageError(f"{stores_file} is not a store snapshot")
        offset, loaded = len(SNAPSHOT_MAGIC), 0
        while offset < len(raw):
            index, length = struct.unpack_from(">II", raw, offset)
            offset += 8
            if index >= len(self.sim.nodes):
                raise UsageError(f"{stores_file} holds node {index} but the world has {len(self.sim.nodes)}")
            loaded += load_frames(raw[offset:offset + length], self.sim.nodes[index].store)
            offset += length
        logger.debug("Reloaded %d records into the world", loaded)
        return loaded

    def save(self):
        chunks = [SNAPSHOT_MAGIC]
        for index, node in enumerate(self.sim.nodes):
            body = dump_frames(node.store)
            chunks.append(struct.pack(">II", index, len(body)) + body)
        scratch = self.path / (STORES_FILE + ".tmp")
        scratch.write_bytes(b"".join(chunks))
        scratch.replace(self.path / STORES_FILE)
