"""Simulated wireless bridge between the receiver station and the reflector.

The coarse aligner sends relative hexapod move requests across a lossy,
delaying channel.  Reliability is stop-and-wait: one outstanding request,
retransmitted on ack timeout, with sequence-number deduplication on the
receiver so each request moves the hexapod at most once.

In simulation the channel is an event queue inside the single control
timeline.  A live mode serialises the same messages as JSON lines over any
byte stream (one message per line, fields: seq, kind, dx_urad, dy_urad,
sent_at_s) so the protocol logic can run against a real transport.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field

from .errors import ConfigError

MOVE_REQUEST = "MoveRequest"
ACK = "Ack"
TELEMETRY = "Telemetry"
_KINDS = (MOVE_REQUEST, ACK, TELEMETRY)


@dataclass(frozen=True)
class BridgeMessage:
    seq: int
    kind: str
    dx_urad: float = 0.0
    dy_urad: float = 0.0
    sent_at_s: float = 0.0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ConfigError(f"unknown message kind {self.kind!r}")
        if not (math.isfinite(self.dx_urad) and math.isfinite(self.dy_urad)):
            raise ValueError("message payload must be finite")


@dataclass(frozen=True)
class ChannelParams:
    latency_min_s: float = 0.005
    latency_max_s: float = 0.050
    drop_prob: float = 0.01
    ack_timeout_s: float = 0.5
    max_retries: int = 5

    def __post_init__(self):
        if not 0.0 <= self.drop_prob < 1.0:
            raise ConfigError("drop_prob must be in [0, 1)")
        if self.latency_min_s > self.latency_max_s or self.latency_min_s < 0:
            raise ConfigError("need 0 <= latency_min_s <= latency_max_s")
        if self.max_retries < 0:
            raise ConfigError("max_retries must be >= 0")


def message_to_line(msg: BridgeMessage) -> str:
    """Wire format: one JSON object per line."""
    return json.dumps(
        {
            "seq": msg.seq,
            "kind": msg.kind,
            "dx_urad": msg.dx_urad,
            "dy_urad": msg.dy_urad,
            "sent_at_s": msg.sent_at_s,
        }
    )


def line_to_message(line: str) -> BridgeMessage:
    obj = json.loads(line)
    return BridgeMessage(
        seq=int(obj["seq"]),
        kind=str(obj["kind"]),
        dx_urad=float(obj["dx_urad"]),
        dy_urad=float(obj["dy_urad"]),
        sent_at_s=float(obj["sent_at_s"]),
    )


class SimChannel:
    """Event-queue channel with uniform latency and Bernoulli loss.

    `script` (if given) is a list of (drop, latency_s) tuples consumed in
    send order, overriding the random draws; it makes loss/duplication
    scenarios exactly reproducible in tests.
    """

    def __init__(self, params: ChannelParams, rng, script=None):
        self.params = params
        self.rng = rng
        self.script = list(script) if script is not None else None
        self._queue = []
        self._order = 0
        self.sent = 0
        self.dropped = 0
        self.delivered = 0
        self.latencies_s = []

    def send(self, msg: BridgeMessage, dest: str, now_s: float):
        """Schedule msg for delivery to dest, or drop it."""
        self.sent += 1
        if self.script is not None:
            drop, latency = self.script.pop(0) if self.script else (False, 0.0)
        else:
            drop = self.rng.random() < self.params.drop_prob
            latency = self.rng.uniform(self.params.latency_min_s, self.params.latency_max_s)
        if drop:
            self.dropped += 1
            return
        self.latencies_s.append(latency)
        heapq.heappush(self._queue, (now_s + latency, self._order, dest, msg))
        self._order += 1

    def deliveries_due(self, now_s: float):
        """Pop and return all (dest, msg) scheduled at or before now_s."""
        out = []
        while self._queue and self._queue[0][0] <= now_s:
            _, _, dest, msg = heapq.heappop(self._queue)
            self.delivered += 1
            out.append((dest, msg))
        return out


class MoveReceiver:
    """Reflector-side endpoint: applies deduplicated moves, acks every request."""

    def __init__(self, apply_move, send_telemetry=False):
        self._apply = apply_move
        self._seen = set()
        self.applied = 0
        self.duplicates = 0
        self.send_telemetry = send_telemetry

    def handle(self, msg: BridgeMessage, channel: SimChannel, now_s: float):
        if msg.kind != MOVE_REQUEST:
            return
        if msg.seq not in self._seen:
            self._seen.add(msg.seq)
            self._apply(msg.dx_urad, msg.dy_urad)
            self.applied += 1
        else:
            self.duplicates += 1
        channel.send(BridgeMessage(msg.seq, ACK, sent_at_s=now_s), "station", now_s)
        if self.send_telemetry:
            channel.send(
                BridgeMessage(msg.seq, TELEMETRY, msg.dx_urad, msg.dy_urad, now_s),
                "station",
                now_s,
            )


@dataclass
class MoveOutcome:
    applied: bool
    seq: int
    attempts: int


class MoveSender:
    """Station-side stop-and-wait sender with one outstanding request."""

    def __init__(self, params: ChannelParams):
        self.params = params
        self._next_seq = 0
        self._pending = None  # (msg, attempts, last_tx_s)
        self.outcomes = []
        self.retransmissions = 0
        self.failed = 0

    @property
    def busy(self) -> bool:
        return self._pending is not None

    def request(self, dx_urad: float, dy_urad: float, now_s: float) -> int:
        if self._pending is not None:
            raise ConfigError("stop-and-wait sender already has an outstanding request")
        msg = BridgeMessage(self._next_seq, MOVE_REQUEST, dx_urad, dy_urad, now_s)
        self._next_seq += 1
        self._pending = [msg, 1, now_s]
        return msg.seq

    def transmit_pending(self, channel: SimChannel, now_s: float):
        msg = self._pending[0]
        channel.send(
            BridgeMessage(msg.seq, msg.kind, msg.dx_urad, msg.dy_urad, now_s),
            "reflector",
            now_s,
        )

    def handle(self, msg: BridgeMessage):
        if msg.kind != ACK or self._pending is None:
            return
        if msg.seq == self._pending[0].seq:
            self.outcomes.append(MoveOutcome(True, msg.seq, self._pending[1]))
            self._pending = None

    def poll(self, channel: SimChannel, now_s: float):
        """Retransmit on timeout; give up after max_retries retransmissions."""
        if self._pending is None:
            return
        msg, attempts, last_tx = self._pending
        if now_s - last_tx < self.params.ack_timeout_s:
            return
        if attempts > self.params.max_retries:
            self.outcomes.append(MoveOutcome(False, msg.seq, attempts))
            self.failed += 1
            self._pending = None
            return
        self._pending[1] = attempts + 1
        self._pending[2] = now_s
        self.retransmissions += 1
        self.transmit_pending(channel, now_s)


def reliable_move(
    dx_urad: float,
    dy_urad: float,
    channel: SimChannel,
    receiver: MoveReceiver,
    *,
    start_s: float = 0.0,
    time_step_s: float = 0.01,
    max_time_s: float = 1e6,
) -> MoveOutcome:
    """Drive one move request to completion over the channel.

    Advances a private clock in time_step_s increments, delivering due
    messages and polling for retransmission, until the request is acked or
    exhausted.
    """
    sender = MoveSender(channel.params)
    seq = sender.request(dx_urad, dy_urad, start_s)
    sender.transmit_pending(channel, start_s)
    now = start_s
    while not sender.outcomes:
        now += time_step_s
        if now - start_s > max_time_s:
            raise RuntimeError("reliable_move did not terminate")
        for dest, msg in channel.deliveries_due(now):
            if dest == "reflector":
                receiver.handle(msg, channel, now)
            else:
                sender.handle(msg)
        sender.poll(channel, now)
    outcome = sender.outcomes[-1]
    assert outcome.seq == seq
    return outcome


def serve_moves_live(rfile, wfile, apply_move):
    """Minimal live-mode receiver: read JSON lines, apply, ack each request.

    Runs until EOF.  rfile/wfile are text-mode file objects over any
    transport (socket makefile, pipe).
    """
    seen = set()
    for line in rfile:
        line = line.strip()
        if not line:
            continue
        msg = line_to_message(line)
        if msg.kind != MOVE_REQUEST:
            continue
        if msg.seq not in seen:
            seen.add(msg.seq)
            apply_move(msg.dx_urad, msg.dy_urad)
        wfile.write(message_to_line(BridgeMessage(msg.seq, ACK, sent_at_s=msg.sent_at_s)) + "\n")
        wfile.flush()


def send_move_live(rfile, wfile, seq: int, dx_urad: float, dy_urad: float, sent_at_s: float = 0.0) -> bool:
    """Live-mode sender side of one exchange; returns True when acked."""
    wfile.write(
        message_to_line(BridgeMessage(seq, MOVE_REQUEST, dx_urad, dy_urad, sent_at_s)) + "\n"
    )
    wfile.flush()
    line = rfile.readline()
    if not line:
        return False
    reply = line_to_message(line)
    return reply.kind == ACK and reply.seq == seq
