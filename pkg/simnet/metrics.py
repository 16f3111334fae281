import csv
import io
from collections import Counter
from dataclasses import dataclass, field

CSV_COLUMNS = ["op_kind", "hops", "messages", "attempts"]


@dataclass(frozen=True)
class OpRecord:
    kind: str
    hops: int
    messages: int
    attempts: int
    ok: bool = True


@dataclass
class SimMetrics:
    """Counters never go negative and are only cleared by ``reset``."""

    operations: list = field(default_factory=list)
    messages_by_kind: Counter = field(default_factory=Counter)
    sent: int = 0
    delivered: int = 0
    dropped: int = 0
    undeliverable: int = 0
    timeouts: int = 0
    occupancy: list = field(default_factory=list)

    def record(self, op):
        self.operations.append(op)

    def count(self, kind):
        return sum(1 for op in self.operations if op.kind == kind)

    def total_attempts(self, kind=None):
        return sum(op.attempts for op in self.operations if kind is None or op.kind == kind)

    def mean_hops(self, kind):
        hops = [op.hops for op in self.operations if op.kind == kind]
        return sum(hops) / len(hops) if hops else 0.0

    def reset(self):
        self.operations.clear()
        self.messages_by_kind.clear()
        self.sent = self.delivered = self.dropped = self.undeliverable = self.timeouts = 0
        self.occupancy = []

    def snapshot(self, occupancy=None):
        return SimMetrics(
            operations=list(self.operations),
            messages_by_kind=Counter(self.messages_by_kind),
            sent=self.sent,
            delivered=self.delivered,
            dropped=self.dropped,
            undeliverable=self.undeliverable,
            timeouts=self.timeouts,
            occupancy=list(occupancy if occupancy is not None else self.occupancy),
        )

    def to_csv(self):
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for op in self.operations:
            writer.writerow([op.kind, op.hops, op.messages, op.attempts])
        return buffer.getvalue()
