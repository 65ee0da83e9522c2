"""Per-broadcast delivery accounting and the derived statistics.

One ``MessageRec`` tracks one broadcast: when it started, how many
distinct nodes got it, and when the last receipt landed if everyone
did. Coverage aggregates receipts across repeats against a fixed
denominator, so under churn the achievable maximum is the average
online fraction rather than 100; that is deliberate, the complement is
what the offline experiments plot.
"""

from __future__ import annotations

from typing import Sequence

from .errors import ConfigurationError


class MessageRec:
    """Delivery record for a single broadcast."""

    __slots__ = (
        "seq",
        "initiator",
        "full_count",
        "received_count",
        "honest_received",
        "start_us",
        "last_receive_us",
    )

    def __init__(self, seq: int, initiator: int, full_count: int):
        self.seq = seq
        self.initiator = initiator
        self.full_count = full_count
        self.received_count = 0
        self.honest_received = 0
        self.start_us: int | None = None
        self.last_receive_us: int | None = None

    @property
    def complete(self) -> bool:
        return self.received_count == self.full_count

    def __repr__(self) -> str:
        return (
            f"MessageRec(seq={self.seq}, received={self.received_count}/{self.full_count},"
            f" start={self.start_us}, last={self.last_receive_us})"
        )


def record(rec: MessageRec, event: tuple) -> MessageRec:
    """Fold one event into a record.

    ``("initiate", t)`` stamps the start time; ``("receive", t)`` counts
    one node's first receipt and, when the count reaches the full
    population, freezes the completion time. The caller guarantees each
    node contributes at most one receive per hash; a count past the
    population is therefore a harness bug and raises.
    """
    kind, t = event
    if kind == "initiate":
        rec.start_us = t
    elif kind == "receive":
        if rec.received_count >= rec.full_count:
            raise AssertionError(f"broadcast {rec.seq} double-counted beyond {rec.full_count}")
        rec.received_count += 1
        if rec.received_count == rec.full_count:
            rec.last_receive_us = t
    else:
        raise ConfigurationError(f"unknown record event kind {kind!r}")
    return rec


def latency(rec: MessageRec) -> int | None:
    """Start-to-last-receipt span in μs, or None while incomplete."""
    if rec.last_receive_us is None or rec.start_us is None:
        return None
    return rec.last_receive_us - rec.start_us


class BroadcastTracker:
    """Collects one MessageRec per scheduled broadcast of a run.

    The initiator is counted as receiving its own broadcast at start,
    so full coverage means all ``n_nodes`` receipts. A broadcast whose
    initiator is offline at its scheduled slot still gets a record; it
    just stays at zero receipts.
    """

    __slots__ = ("n_nodes", "recs", "_by_hash")

    def __init__(self, n_nodes: int):
        self.n_nodes = n_nodes
        self.recs: list[MessageRec] = []
        self._by_hash: dict[int, MessageRec] = {}

    def initiate(self, msg_hash: int, initiator: int, t: int, honest: bool = True) -> None:
        rec = MessageRec(len(self.recs), initiator, self.n_nodes)
        self.recs.append(rec)
        self._by_hash[msg_hash] = rec
        record(rec, ("initiate", t))
        record(rec, ("receive", t))
        if honest:
            rec.honest_received += 1

    def initiate_skipped(self, msg_hash: int, initiator: int, t: int) -> None:
        rec = MessageRec(len(self.recs), initiator, self.n_nodes)
        self.recs.append(rec)
        self._by_hash[msg_hash] = rec
        record(rec, ("initiate", t))

    def receive(self, msg_hash: int, t: int, honest: bool) -> None:
        rec = self._by_hash[msg_hash]
        record(rec, ("receive", t))
        if honest:
            rec.honest_received += 1

    def received_total(self) -> int:
        return sum(rec.received_count for rec in self.recs)

    def honest_received_total(self) -> int:
        return sum(rec.honest_received for rec in self.recs)


def coverage_percent(received_totals: Sequence[int], rounds: int, n_nodes: int) -> float:
    """Aggregate coverage over repeats, in percent.

    ``received_totals`` holds one summed receipt count per repeat;
    ``rounds`` is the number of broadcasts per repeat. The denominator
    is rounds * repeats * n_nodes, every scheduled broadcast counted
    against the whole population.
    """
    repeats = len(received_totals)
    if repeats < 1 or rounds < 1 or n_nodes < 1:
        raise ConfigurationError(
            f"coverage needs at least one repeat, round, and node"
            f" (got {repeats} repeats, {rounds} rounds, {n_nodes} nodes)"
        )
    return 100.0 * sum(received_totals) / (rounds * repeats * n_nodes)


def honest_coverage_percent(
    received_totals: Sequence[int], rounds: int, honest_counts: Sequence[int]
) -> float:
    """Coverage restricted to honest nodes, in percent.

    The numerator must tally receipts by honest nodes only, and the
    denominator scales per-repeat honest populations instead of N, so
    refusing nodes neither help nor hurt the score.
    """
    if len(received_totals) != len(honest_counts):
        raise ConfigurationError(
            f"got {len(received_totals)} receipt totals but {len(honest_counts)} honest counts"
        )
    if rounds < 1 or not honest_counts or min(honest_counts) < 1:
        raise ConfigurationError("honest coverage needs rounds >= 1 and honest nodes in every repeat")
    return 100.0 * sum(received_totals) / (rounds * sum(honest_counts))
