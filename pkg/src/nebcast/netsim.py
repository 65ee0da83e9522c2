"""Deterministic discrete-event network simulation.

Events live in a min-heap keyed by (time in integer μs, insertion
sequence), so equal-time events resolve in a fixed order and a run is
bit-for-bit reproducible from its seeds. The link model is the usual
two-part cost: each sender owns an upstream queue that serializes its
transmissions at its bandwidth (``busy_until`` tracks the queue
horizon), and a region-to-region propagation delay is added on top.
Receive-side bandwidth is unlimited.

Node liveness is all-or-nothing and detection is free: a send to an
offline peer fails on the spot and the sender drops that peer from its
table, while packets already in flight toward a node that dies are
discarded on arrival. Disturbances re-roll every node's status at
once; survivors keep their tables, casualties lose theirs, and
returning nodes rebuild from scratch the same way the initial
bootstrap did.
"""

from __future__ import annotations

from heapq import heappop, heappush
from random import Random
from typing import Sequence

from .errors import ConfigurationError
from .identity import sample_ids
from .metrics import BroadcastTracker
from .protocol import (
    CONFIRM_BYTES,
    DATA_BYTES,
    Message,
    NodeState,
    accept_all_stamps,
    gossip_handle,
    gossip_initiate,
    handle_message,
    initiate_broadcast,
)
from .routing import RoutingTable

REGIONS = ("a", "b", "c", "d")

# share of nodes per region, percent
REGION_PROPORTIONS = (30, 10, 40, 20)

# upstream bandwidth classes, bits per second, with their shares in percent
BANDWIDTH_CLASSES = (512_000, 256_000, 128_000, 64_000)
BANDWIDTH_PROPORTIONS = (10, 60, 20, 10)

# symmetric inter-region propagation delay, μs, indexed [region][region]
DELAY_US = (
    (10_000, 200_000, 250_000, 250_000),
    (200_000, 3_000, 100_000, 100_000),
    (250_000, 100_000, 7_000, 200_000),
    (250_000, 100_000, 200_000, 8_000),
)

DEFAULT_BUCKET_CAPACITY = 15

# event kinds, also the order they appear in heap tuples
DELIVER = 0
INITIATE = 1
DISTURB = 2


class NodeNetProfile:
    """Where a node sits and how fast it can push bytes out."""

    __slots__ = ("region", "upstream_bps", "busy_until")

    def __init__(self, region: int, upstream_bps: int):
        self.region = region
        self.upstream_bps = upstream_bps
        self.busy_until = 0


class NetworkConfig:
    """Static description of one simulated network."""

    __slots__ = (
        "n_nodes",
        "address_bits",
        "bucket_capacity",
        "data_msg_bytes",
        "confirm_msg_bytes",
        "region_proportions",
        "bandwidth_proportions",
        "delay_us",
        "seed",
    )

    def __init__(
        self,
        n_nodes: int,
        address_bits: int = 16,
        bucket_capacity: int = DEFAULT_BUCKET_CAPACITY,
        data_msg_bytes: int = DATA_BYTES,
        confirm_msg_bytes: int = CONFIRM_BYTES,
        region_proportions: tuple = REGION_PROPORTIONS,
        bandwidth_proportions: tuple = BANDWIDTH_PROPORTIONS,
        delay_us: tuple = DELAY_US,
        seed: int = 0,
    ):
        if n_nodes < 1:
            raise ConfigurationError(f"need at least one node, got {n_nodes}")
        if n_nodes > (1 << address_bits):
            raise ConfigurationError(
                f"{n_nodes} nodes cannot get distinct {address_bits}-bit ids"
            )
        if sum(region_proportions) != 100 or sum(bandwidth_proportions) != 100:
            raise ConfigurationError("region and bandwidth proportions must each sum to 100")
        for i in range(len(delay_us)):
            for j in range(len(delay_us)):
                if delay_us[i][j] != delay_us[j][i]:
                    raise ConfigurationError("delay matrix must be symmetric")
        self.n_nodes = n_nodes
        self.address_bits = address_bits
        self.bucket_capacity = bucket_capacity
        self.data_msg_bytes = data_msg_bytes
        self.confirm_msg_bytes = confirm_msg_bytes
        self.region_proportions = tuple(region_proportions)
        self.bandwidth_proportions = tuple(bandwidth_proportions)
        self.delay_us = tuple(tuple(row) for row in delay_us)
        self.seed = seed


def _weighted_index(proportions: Sequence[int], draw: float) -> int:
    """Map a unit draw onto percent proportions."""
    acc = 0
    scaled = draw * 100
    for i, share in enumerate(proportions):
        acc += share
        if scaled < acc:
            return i
    return len(proportions) - 1


def transmission_schedule(
    profile: NodeNetProfile,
    size_bytes: int,
    now: int,
    receiver_region: int,
    delay_us: tuple = DELAY_US,
) -> int:
    """Queue one transmission on a sender and return its arrival time.

    The packet starts when the sender's queue frees up, occupies the
    upstream for ceil(bits / bps) μs, and lands after the propagation
    delay between the two regions. Mutates ``profile.busy_until``.
    """
    start = profile.busy_until
    if start < now:
        start = now
    tx = (size_bytes * 8_000_000 + profile.upstream_bps - 1) // profile.upstream_bps
    profile.busy_until = start + tx
    return start + tx + delay_us[profile.region][receiver_region]


def liveness_maintenance(node: NodeState, peer: int, delivery_failed: bool, now: int = 0) -> bool:
    """Table upkeep around one send or receipt.

    A failed send means the peer was offline, so it is dropped, score
    and all. A successful receipt from an unknown peer is a chance to
    adopt it, which silently fails when the bucket is full.
    """
    if delivery_failed:
        return node.table.remove_peer(peer)
    if peer in node.table:
        return False
    return node.table.insert_peer(peer, now)


def bootstrap_topology(
    config: NetworkConfig,
    rng: Random,
    require_full_reach: bool = False,
    max_attempts: int = 5,
) -> tuple[list[NodeState], list[NodeNetProfile]]:
    """Build nodes, assign net profiles, and fill routing tables.

    Every node is offered every other node's id in seeded random order
    and keeps what its buckets accept. The overlay this produces is not
    symmetric, but a bucket only ends up empty when no id in its range
    exists at all, which is what ``require_full_reach`` re-checks
    before runs that depend on full delivery.
    """
    for attempt in range(max_attempts):
        ids = sample_ids(config.n_nodes, config.address_bits, rng)
        profiles = []
        for _ in range(config.n_nodes):
            region = _weighted_index(config.region_proportions, rng.random())
            bw = BANDWIDTH_CLASSES[_weighted_index(config.bandwidth_proportions, rng.random())]
            profiles.append(NodeNetProfile(region, bw))
        nodes = []
        for node_id in ids:
            table = RoutingTable(node_id, config.address_bits, config.bucket_capacity)
            nodes.append(NodeState(node_id, table))
        for i, node in enumerate(nodes):
            candidates = [other for j, other in enumerate(ids) if j != i]
            rng.shuffle(candidates)
            table = node.table
            for peer in candidates:
                table.insert_peer(peer, 0)
        if not require_full_reach or fully_reachable(nodes, config.address_bits):
            return nodes, profiles
    raise ConfigurationError(
        f"no fully reachable overlay found in {max_attempts} attempts; widen the id space"
    )


def fully_reachable(nodes: list[NodeState], width: int) -> bool:
    """True when every bucket that could hold someone does.

    For each node and bucket index i, the ids whose shared prefix with
    the node is exactly i form a contiguous range; an empty bucket is
    only acceptable when that whole range is unpopulated. Under the
    offer-everyone bootstrap this is equivalent to subtree broadcasts
    reaching every node.
    """
    sorted_ids = sorted(node.id for node in nodes)
    from bisect import bisect_left

    for node in nodes:
        nid = node.id
        for i, bucket in enumerate(node.table.buckets):
            if bucket.entries:
                continue
            span = width - i - 1
            prefix = (nid >> (span + 1) << 1) | (1 - ((nid >> span) & 1))
            lo = prefix << span
            hi = lo + (1 << span)
            if bisect_left(sorted_ids, hi) - bisect_left(sorted_ids, lo) > 0:
                return False
    return True


def assign_refusers(nodes: list[NodeState], rng: Random) -> set[int]:
    """Mark a uniform half of the nodes (N//2) as relay refusers."""
    chosen = set(rng.sample(range(len(nodes)), len(nodes) // 2))
    for i in chosen:
        nodes[i].refuses_relay = True
    return chosen


def apply_disturbance(
    nodes: list[NodeState],
    rng: Random,
    mode: str,
    profiles: list[NodeNetProfile] | None = None,
    now: int = 0,
    log: list | None = None,
) -> None:
    """Re-roll liveness (churn) or assign refusers, per the mode.

    Churn: node with serial s (1-indexed) fails with probability s/N,
    so roughly half the network drops each time and high serials almost
    always do. Fresh casualties lose their routing table, tickets, and
    outgoing queue; nodes coming back restart with a full re-bootstrap
    against every other id. Survivors are untouched.
    """
    if mode == "refuse_half":
        assign_refusers(nodes, rng)
        return
    if mode != "churn":
        raise ConfigurationError(f"unknown disturbance mode {mode!r}")
    n = len(nodes)
    all_ids = [node.id for node in nodes]
    for i, node in enumerate(nodes):
        fails = rng.random() < (i + 1) / n
        if fails:
            if node.online:
                node.online = False
                node.table.clear()
                node.tickets.clear()
                if profiles is not None:
                    profiles[i].busy_until = 0
                if log is not None:
                    log.append(("node_offline", now, node.id))
        elif not node.online:
            node.online = True
            candidates = [other for other in all_ids if other != node.id]
            rng.shuffle(candidates)
            table = node.table
            for peer in candidates:
                table.insert_peer(peer, now)
            if log is not None:
                log.append(("node_online", now, node.id))


class Engine:
    """The event loop for one simulation run.

    Owns the heap, the clock, and all transmission bookkeeping; routing
    and protocol decisions stay in the protocol module and come back as
    send intents. ``collect_log=True`` records every event for audits;
    experiment runs leave it off and read the counters instead.
    """

    def __init__(
        self,
        nodes: list[NodeState],
        profiles: list[NodeNetProfile],
        config: NetworkConfig,
        rng: Random,
        beta: int = 1,
        ne_enabled: bool = False,
        gossip_fanout: int | None = None,
        refuse_withholds_confirms: bool = False,
        disturb_rng: Random | None = None,
        tracker: BroadcastTracker | None = None,
        initiate_order: list[int] | None = None,
        collect_log: bool = False,
        count_per_hash: bool = False,
    ):
        if len(nodes) != len(profiles):
            raise ConfigurationError("every node needs exactly one net profile")
        self.nodes = nodes
        self.profiles = profiles
        self.config = config
        self.rng = rng
        self.beta = beta
        self.ne_enabled = ne_enabled
        self.gossip_fanout = gossip_fanout
        self.refuse_withholds = refuse_withholds_confirms
        self.disturb_rng = disturb_rng
        self.tracker = tracker
        self.initiate_order = list(range(len(nodes))) if initiate_order is None else initiate_order
        self.log: list[tuple] | None = [] if collect_log else None
        self.per_hash_sends: dict[int, int] | None = {} if count_per_hash else None
        self.idx_of = {node.id: i for i, node in enumerate(nodes)}
        self.heap: list[tuple] = []
        self.seq = 0
        self.now = 0
        self.next_hash = 0
        self.truncated = False
        self.data_sends = 0
        self.confirm_sends = 0
        self.failed_sends = 0
        self.dropped_offline = 0
        self.accepted = 0
        self.duplicates = 0
        self.disturbances = 0

    def push_initiate(self, t: int, slot: int) -> None:
        """Schedule a broadcast for the node at ``initiate_order[slot % n]``.

        If that node is offline when the event fires, the slot falls to
        the next online node in the order, so a disturbed network still
        emits its full broadcast schedule.
        """
        heappush(self.heap, (t, self.seq, INITIATE, slot, None))
        self.seq += 1

    def push_disturbance(self, t: int) -> None:
        heappush(self.heap, (t, self.seq, DISTURB, 0, None))
        self.seq += 1

    def run(self, horizon_us: int | None = None) -> None:
        """Drain the heap, or stop (flag truncated) past the horizon."""
        heap = self.heap
        nodes = self.nodes
        profiles = self.profiles
        idx_of = self.idx_of
        delay = self.config.delay_us
        rng = self.rng
        tracker = self.tracker
        log = self.log
        per_hash = self.per_hash_sends
        beta = self.beta
        ne = self.ne_enabled
        fanout = self.gossip_fanout
        gossip = fanout is not None
        payload = self.config.data_msg_bytes
        confirm_size = self.config.confirm_msg_bytes
        withholds = self.refuse_withholds
        seq = self.seq
        pop = heappop
        push = heappush

        while heap:
            event = pop(heap)
            t = event[0]
            if horizon_us is not None and t > horizon_us:
                push(heap, event)
                self.truncated = True
                break
            self.now = t
            kind = event[2]

            if kind == DELIVER:
                di = event[3]
                m = event[4]
                node = nodes[di]
                if not node.online:
                    self.dropped_offline += 1
                    if log is not None:
                        log.append(("drop_offline", t, node.id, m.hash))
                    continue
                h = m.hash
                was_new = h not in node.known
                if gossip:
                    sends = gossip_handle(node, m, fanout, rng)
                else:
                    sender = m.sender
                    # passive discovery: adopt a live unknown sender if there is room
                    if sender not in node.table._entries:
                        if nodes[idx_of[sender]].online:
                            node.table.insert_peer(sender, t)
                    sends = handle_message(
                        node, m, beta, ne, rng, t,
                        confirm_size, withholds, accept_all_stamps, log,
                    )
                if was_new and h in node.known:
                    self.accepted += 1
                    if tracker is not None:
                        tracker.receive(h, t, not node.refuses_relay)
                    if log is not None:
                        log.append(("deliver", t, node.id, h, m.sender, True, m.is_confirmation))
                else:
                    self.duplicates += 1
                    if log is not None:
                        log.append(("deliver", t, node.id, h, m.sender, False, m.is_confirmation))

            elif kind == INITIATE:
                slot = event[3]
                order = self.initiate_order
                count = len(order)
                di = -1
                for step in range(count):
                    candidate = order[(slot + step) % count]
                    if nodes[candidate].online:
                        di = candidate
                        break
                h = self.next_hash
                self.next_hash = h + 1
                if di < 0:
                    scheduled = order[slot % count]
                    if tracker is not None:
                        tracker.initiate_skipped(h, scheduled, t)
                    if log is not None:
                        log.append(("initiate_skipped", t, nodes[scheduled].id, h))
                    continue
                node = nodes[di]
                if tracker is not None:
                    tracker.initiate(h, di, t, not node.refuses_relay)
                if log is not None:
                    log.append(("initiate", t, node.id, h))
                if gossip:
                    sends = gossip_initiate(node, payload, fanout, rng, h)
                else:
                    sends = initiate_broadcast(node, payload, beta, ne, rng, t, h, log)

            else:
                self.disturbances += 1
                if log is not None:
                    log.append(("disturb", t, self.disturbances))
                apply_disturbance(nodes, self.disturb_rng, "churn", profiles, t, log)
                continue

            if not sends:
                continue
            prof = profiles[di]
            bps = prof.upstream_bps
            busy = prof.busy_until
            if busy < t:
                busy = t
            srow = delay[prof.region]
            for dest_id, sm in sends:
                ti = idx_of[dest_id]
                if not nodes[ti].online:
                    self.failed_sends += 1
                    node.table.remove_peer(dest_id)
                    if log is not None:
                        log.append(("send_failed", t, node.id, dest_id, sm.hash))
                    continue
                start = busy
                busy = start + (sm.size * 8_000_000 + bps - 1) // bps
                arrival = busy + srow[profiles[ti].region]
                push(heap, (arrival, seq, DELIVER, ti, sm))
                seq += 1
                if sm.is_confirmation:
                    self.confirm_sends += 1
                else:
                    self.data_sends += 1
                    if per_hash is not None:
                        per_hash[sm.hash] = per_hash.get(sm.hash, 0) + 1
                if log is not None:
                    log.append(
                        (
                            "send", t, node.id, dest_id, sm.hash,
                            sm.size, sm.is_confirmation, start, arrival, sm.relay,
                        )
                    )
            prof.busy_until = busy

        self.seq = seq
