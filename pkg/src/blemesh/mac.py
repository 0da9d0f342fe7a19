"""Per-node data-link layer.

Advertising: every ``adv_interval + delta`` (delta uniform in
``[0, adv_random_delay_max]``, redrawn per cycle) a node sends its payload
on channels 37, 38 and 39 back to back, listening after each PDU for a
connection request.

Scanning: a node with pending packets (or running discovery) listens on one
advertising channel for ``scan_window`` out of every ``scan_interval``,
cycling 37 -> 38 -> 39. It keeps advertising while scanning so that two
nodes waiting for each other cannot deadlock.

Connection: on hearing a wanted advertiser the scanner answers with a
connection request; if it survives the air both ends enter a private data
session and the scanner sends every queued packet for that peer, one per
acknowledgment, retransmitting up to ``retx_limit`` times. Data sessions
never collide; only the advertising channels contend.

Failure: if no connection to a destination is made within
``failure_declare_window`` of starting to scan for it, the destination is
declared failed and its queued packets are handed back to the network layer.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Protocol

from .channel import ADV_CHANNELS, Transmission
from .engine import EventKind, SimEvent, millis, seconds
from .metrics import IDLE, RX, TX, RadioTimeline

if TYPE_CHECKING:
    from .discovery import AdvPayload
    from .routing import LinkResponse

SEQ_MOD = 256


@dataclass(frozen=True)
class MacConfig:
    adv_interval: int = seconds(1.0)
    head_adv_interval: int = millis(100)
    adv_random_delay_max: int = millis(10)
    scan_interval: int = millis(10)
    scan_window: int = millis(10)
    retx_limit: int = 3
    failure_declare_window: int = seconds(6.0)
    packet_bits: int = 240
    phy_bitrate: int = 1_000_000
    t_ifs: int = 150
    conn_setup: int = 1250
    data_loss_prob: float = 0.0
    ack_loss_prob: float = 0.0
    backoff_max: int = 4

    def __post_init__(self):
        if self.scan_window > self.scan_interval:
            raise ValueError("scan window must not exceed scan interval")
        if self.retx_limit < 1:
            raise ValueError("retx_limit must be at least 1")
        if self.backoff_max < 1:
            raise ValueError("backoff_max must be at least 1")
        if self.scan_window <= 0 or self.adv_interval <= 0 or self.head_adv_interval <= 0:
            raise ValueError("intervals must be positive")

    @property
    def airtime(self) -> int:
        return int(round(self.packet_bits * 1_000_000 / self.phy_bitrate))

    @property
    def ack_timeout(self) -> int:
        return 2 * self.airtime + 1000

    @property
    def adv_slot(self) -> int:
        # PDU, then a listen window long enough for a connection request
        return 2 * self.airtime + self.t_ifs


class Mode(enum.Enum):
    ADVERTISING = "advertising"
    SCANNING = "scanning"
    CONNECTED = "connected"


@dataclass
class MacState:
    mode: Mode = Mode.ADVERTISING
    current_adv_channel: int = ADV_CHANNELS[0]
    scan_channel: int = ADV_CHANNELS[0]


class Upper(Protocol):
    """Network-layer callbacks used by the MAC."""

    def adv_payload(self) -> "AdvPayload": ...
    def on_adv_heard(self, adv: "AdvPayload", rssi: float) -> None: ...
    def discovery_scanning(self) -> bool: ...
    def on_packet(self, packet: Any, sender: int) -> "LinkResponse": ...
    def on_link_response(self, packet: Any, dest: int, response: "LinkResponse") -> None: ...
    def on_link_failure(self, dest: int, packets: list[Any]) -> None: ...


@dataclass
class Frame:
    packet: Any
    seq: int | None = None
    retx: int = 0


@dataclass
class _AdvEvent:
    start: int
    payload: Any
    index: int = 0
    pdu: Transmission | None = None
    requests: list[tuple[int, Transmission]] = field(default_factory=list)


@dataclass
class Session:
    initiator: int
    peer: int
    started: int
    frame: Frame | None = None
    frame_start: int = 0
    pending: SimEvent | None = None
    packets: int = 0


class Mac:
    def __init__(self, node_id: int, upper: Upper, world: Any, cfg: MacConfig, adv_interval: int, rng):
        self.id = node_id
        self.upper = upper
        self.world = world
        self.sim = world.sim
        self.cfg = cfg
        self.adv_interval = adv_interval
        self.rng = rng
        self.state = MacState()
        self.timeline = RadioTimeline()
        self.powered = False
        self.queues: dict[int, deque[Frame]] = {}
        self.fail_timers: dict[int, SimEvent] = {}
        self.scanning = False
        self.scan_start = 0  # channel-cycle anchor
        self.scan_since = 0
        self.busy = False
        self.last_busy_end = -1
        self.adv: _AdvEvent | None = None
        self.adv_span = (-1, -1)
        self.session: Session | None = None
        self.seq_out: dict[int, int] = {}
        self.last_in: dict[int, tuple[int, Any]] = {}
        self._next_adv: SimEvent | None = None
        self._rx_from: int | None = None
        # randomized backoff for connection requests after collisions
        self._upper_limit = 1
        self._backoff = 1
        # counters
        self.adv_events = 0
        self.adv_skipped = 0
        self.adv_while_scanning = 0
        self.tx_packets = 0
        self.retransmissions = 0
        self.sessions = 0
        self.conn_requests = 0
        self.conn_collisions = 0
        self.failures_declared: list[tuple[int, int]] = []
        self.session_log: list[tuple[int, int]] = []  # (peer, time) for sessions this node initiated
        self.delivered_up = 0

    # -- power ----------------------------------------------------------
    def power_on(self, at: int) -> None:
        self.powered = True
        self._next_adv = self.sim.schedule(at, self._adv_cycle, target=self.id, kind=EventKind.ADV_TX_START)

    def power_off(self) -> None:
        now = self.sim.now()
        self.powered = False
        self.sim.cancel(self._next_adv)
        for h in self.fail_timers.values():
            self.sim.cancel(h)
        self.fail_timers.clear()
        self.queues.clear()
        if self.adv is not None:
            self.adv = None
            self.adv_span = (self.adv_span[0], now)
        if self.scanning and not self.busy:
            self._close_rx(now)
        self.scanning = False
        self.timeline.close_all(now)
        if self.session is not None:
            self.session = None
        self.busy = False

    # -- advertising ----------------------------------------------------
    def _adv_cycle(self, ev: SimEvent) -> None:
        if not self.powered:
            return
        now = self.sim.now()
        dmax = self.cfg.adv_random_delay_max
        delta = int(self.rng.integers(0, dmax + 1)) if dmax > 0 else 0
        self._next_adv = self.sim.schedule(
            now + self.adv_interval + delta, self._adv_cycle, target=self.id, kind=EventKind.ADV_TX_START
        )
        if self.busy or self.adv is not None:
            self.adv_skipped += 1
            return
        self.adv_events += 1
        if self.scanning:
            self.adv_while_scanning += 1
        self.adv = _AdvEvent(now, self.upper.adv_payload())
        self.adv_span = (now, now + len(ADV_CHANNELS) * self.cfg.adv_slot)
        self._pdu_start()

    def _pdu_start(self) -> None:
        adv = self.adv
        now = self.sim.now()
        ch = ADV_CHANNELS[adv.index]
        self.state.current_adv_channel = ch
        pdu = Transmission(self.id, ch, now, now + self.cfg.airtime)
        adv.pdu = pdu
        adv.requests = []
        self.world.air.add(pdu)
        self.timeline.add(TX, pdu.start, pdu.end)
        self.sim.schedule(pdu.end, self._pdu_end, target=self.id, kind=EventKind.ADV_TX_END, payload=adv)

    def _pdu_end(self, ev: SimEvent) -> None:
        adv = ev.payload
        if adv is not self.adv or not self.powered:
            return
        self.world.broadcast_adv(self, adv.pdu, adv.payload, adv.index)
        slot_end = adv.pdu.start + self.cfg.adv_slot
        self.sim.schedule(slot_end, self._slot_end, target=self.id, kind=EventKind.ADV_SLOT_END, payload=adv)

    def _slot_end(self, ev: SimEvent) -> None:
        adv = ev.payload
        if adv is not self.adv:
            return
        now = self.sim.now()
        self.timeline.add(RX, adv.pdu.end, now)
        winner = None
        for scanner_id, req in adv.requests:
            scanner = self.world.macs[scanner_id]
            ok = (
                self.powered
                and scanner.powered
                and winner is None
                and not self.world.air.collided(req, self.id)
            )
            if ok:
                winner = scanner
            else:
                if scanner.powered:
                    self.conn_collisions += 1
                scanner._handshake_failed()
        adv.requests = []
        if winner is not None:
            self.adv = None
            self.adv_span = (self.adv_span[0], now)
            winner._open_session(self)
            return
        adv.index += 1
        if adv.index < len(ADV_CHANNELS):
            self._pdu_start()
        else:
            self.adv = None
            self.adv_span = (self.adv_span[0], now)

    # -- scanning -------------------------------------------------------
    def wanted(self) -> set[int]:
        return {d for d, q in self.queues.items() if q}

    def wants_scan(self) -> bool:
        return self.powered and (self.upper.discovery_scanning() or any(self.queues.values()))

    def update_scan(self) -> None:
        if self.busy or not self.powered:
            return
        now = self.sim.now()
        want = self.wants_scan()
        if want and not self.scanning:
            self.scanning = True
            self.scan_since = now
            # scanners are not phase-locked: start the channel cycle at a random point
            span = self.cfg.scan_interval * len(ADV_CHANNELS)
            self.scan_start = now - int(self.rng.integers(0, span))
            self.state.mode = Mode.SCANNING
            self._open_rx(now)
        elif not want and self.scanning:
            self.scanning = False
            self.state.mode = Mode.ADVERTISING
            self._close_rx(now)

    def _open_rx(self, now: int) -> None:
        self._rx_from = now

    def _close_rx(self, now: int) -> None:
        start = self._rx_from
        if start is None:
            return
        self._rx_from = None
        si, sw = self.cfg.scan_interval, self.cfg.scan_window
        if sw >= si:
            self.timeline.add(RX, start, now)
            return
        k = (start - self.scan_start) // si
        while True:
            w0 = self.scan_start + k * si
            if w0 >= now:
                break
            lo, hi = max(w0, start), min(w0 + sw, now)
            if hi > lo:
                self.timeline.add(RX, lo, hi)
            k += 1

    def scan_channel_at(self, t: int) -> int | None:
        if not self.scanning:
            return None
        k, off = divmod(t - self.scan_start, self.cfg.scan_interval)
        if off >= self.cfg.scan_window:
            return None
        return ADV_CHANNELS[k % len(ADV_CHANNELS)]

    def can_receive(self, ch: int, t0: int, t1: int) -> bool:
        if not (self.powered and self.scanning) or self.busy:
            return False
        if self.scan_since > t0 or self.last_busy_end > t0:
            return False
        a0, a1 = self.adv_span
        if a0 < t1 and a1 > t0:
            return False
        si = self.cfg.scan_interval
        k0, off0 = divmod(t0 - self.scan_start, si)
        if (t1 - 1 - self.scan_start) // si != k0:
            return False
        if off0 + (t1 - t0) > self.cfg.scan_window:
            return False
        return ADV_CHANNELS[k0 % len(ADV_CHANNELS)] == ch

    def on_adv_pdu(self, adv_mac: "Mac", pdu: Transmission, payload: Any, rssi: float) -> None:
        self.state.scan_channel = pdu.channel
        self.upper.on_adv_heard(payload, rssi)
        if not self.powered or self.busy:
            return
        q = self.queues.get(adv_mac.id)
        if not q:
            return
        if adv_mac.adv is None or adv_mac.adv.pdu is not pdu:
            return
        self._backoff -= 1
        if self._backoff > 0:
            return
        self.conn_requests += 1
        now = self.sim.now()
        req = Transmission(self.id, pdu.channel, now + self.cfg.t_ifs, now + self.cfg.t_ifs + self.cfg.airtime)
        self.world.air.add(req)
        self.timeline.add(IDLE, now, req.start)
        self.timeline.add(TX, req.start, req.end)
        self._set_busy(True)
        adv_mac.adv.requests.append((self.id, req))

    def _handshake_failed(self) -> None:
        self._upper_limit = min(2 * self._upper_limit, self.cfg.backoff_max)
        self._backoff = int(self.rng.integers(1, self._upper_limit + 1))
        if self.session is None:
            self._set_busy(False)
            self.update_scan()

    def _set_busy(self, busy: bool) -> None:
        now = self.sim.now()
        if busy and not self.busy:
            self.busy = True
            if self.scanning:
                self._close_rx(now)
        elif not busy and self.busy:
            self.busy = False
            self.last_busy_end = now
            if self.scanning:
                if self.wants_scan():
                    self._open_rx(now)
                else:
                    self.scanning = False
                    self.state.mode = Mode.ADVERTISING

    # -- sessions -------------------------------------------------------
    def _open_session(self, peer: "Mac") -> None:
        now = self.sim.now()
        handle = self.fail_timers.pop(peer.id, None)
        self.sim.cancel(handle)
        peer._set_busy(True)
        self.busy = True  # already busy from the handshake
        self._upper_limit = max(1, self._upper_limit // 2)
        self._backoff = 1
        sess = Session(self.id, peer.id, now)
        self.session = sess
        peer.session = sess
        self.state.mode = peer.state.mode = Mode.CONNECTED
        self.sessions += 1
        self.session_log.append((peer.id, now))
        self.sim.schedule(now + self.cfg.conn_setup, self._next_frame, target=self.id, kind=EventKind.SESSION_DATA)

    def _next_frame(self, ev: SimEvent | None = None) -> None:
        sess = self.session
        if sess is None or sess.initiator != self.id:
            return
        q = self.queues.get(sess.peer)
        if not q:
            self._close_session()
            return
        frame = q[0]
        if frame.seq is None:
            frame.seq = self.seq_out.get(sess.peer, 0)
            self.seq_out[sess.peer] = (frame.seq + 1) % SEQ_MOD
        self._transmit(frame)

    def _transmit(self, frame: Frame) -> None:
        sess = self.session
        now = self.sim.now()
        sess.frame = frame
        sess.frame_start = now
        self.tx_packets += 1
        sess.packets += 1
        self.timeline.add(TX, now, now + self.cfg.airtime)
        sess.pending = self.sim.schedule(
            now + self.cfg.airtime, self._frame_end, target=self.id, kind=EventKind.SESSION_DATA, payload=frame
        )

    def _frame_end(self, ev: SimEvent) -> None:
        sess = self.session
        if sess is None or sess.frame is not ev.payload:
            return
        now = self.sim.now()
        peer = self.world.macs[sess.peer]
        received = peer.powered and peer.session is sess
        if received and self.cfg.data_loss_prob > 0 and self.rng.random() < self.cfg.data_loss_prob:
            received = False
        response = None
        acked = False
        if received:
            peer.timeline.add(RX, sess.frame_start, now)
            response = peer._receive(self.id, ev.payload)
            acked = not (self.cfg.ack_loss_prob > 0 and self.rng.random() < self.cfg.ack_loss_prob)
            if acked:
                a0 = now + self.cfg.t_ifs
                peer.timeline.add(TX, a0, a0 + self.cfg.airtime)
                self.timeline.add(RX, a0, a0 + self.cfg.airtime)
        if acked:
            sess.pending = self.sim.schedule(
                now + self.cfg.t_ifs + self.cfg.airtime,
                self._ack_end,
                target=self.id,
                kind=EventKind.SESSION_ACK,
                payload=(ev.payload, response),
            )
        else:
            sess.pending = self.sim.schedule(
                sess.frame_start + self.cfg.ack_timeout,
                self._retransmit,
                target=self.id,
                kind=EventKind.RETRANSMIT,
                payload=ev.payload,
            )

    def _receive(self, sender: int, frame: Frame) -> Any:
        last = self.last_in.get(sender)
        if last is not None and last[0] == frame.seq:
            return last[1]
        response = self.upper.on_packet(frame.packet, sender)
        self.delivered_up += 1
        self.last_in[sender] = (frame.seq, response)
        return response

    def _ack_end(self, ev: SimEvent) -> None:
        sess = self.session
        frame, response = ev.payload
        if sess is None or sess.frame is not frame:
            return
        q = self.queues.get(sess.peer)
        if q and q[0] is frame:
            q.popleft()
        sess.frame = None
        self.upper.on_link_response(frame.packet, sess.peer, response)
        if self.session is sess:
            self.sim.schedule(self.sim.now() + self.cfg.t_ifs, self._next_frame, target=self.id, kind=EventKind.SESSION_DATA)

    def _retransmit(self, ev: SimEvent) -> None:
        sess = self.session
        frame = ev.payload
        if sess is None or sess.frame is not frame:
            return
        if frame.retx >= self.cfg.retx_limit:
            # link lost: go back to scanning for a new connection with the peer
            peer = sess.peer
            self._close_session()
            if self.queues.get(peer):
                self._arm_failure(peer)
            self.update_scan()
            return
        frame.retx += 1
        self.retransmissions += 1
        self._transmit(frame)

    def _close_session(self) -> None:
        sess = self.session
        if sess is None:
            return
        now = self.sim.now()
        peer = self.world.macs[sess.peer]
        for mac in (self, peer):
            if mac.session is sess:
                mac.session = None
                mac.timeline.add(IDLE, sess.started, now)
                mac.state.mode = Mode.ADVERTISING
                mac._set_busy(False)
        for mac in (self, peer):
            if mac.powered:
                for dest, q in mac.queues.items():
                    if q and dest not in mac.fail_timers:
                        mac._arm_failure(dest)
                mac.update_scan()

    # -- queueing and failure declaration -------------------------------
    def enqueue(self, dest: int, packet: Any) -> None:
        if not self.powered:
            return
        q = self.queues.setdefault(dest, deque())
        q.append(Frame(packet))
        in_session = self.session is not None and self.session.initiator == self.id and self.session.peer == dest
        if not in_session and dest not in self.fail_timers:
            self._arm_failure(dest)
        self.update_scan()

    def _arm_failure(self, dest: int) -> None:
        old = self.fail_timers.pop(dest, None)
        self.sim.cancel(old)
        self.fail_timers[dest] = self.sim.schedule(
            self.sim.now() + self.cfg.failure_declare_window,
            self._declare_failure,
            target=self.id,
            kind=EventKind.TIMER_FAILURE,
            payload=dest,
        )

    def _declare_failure(self, ev: SimEvent) -> None:
        dest = ev.payload
        if self.fail_timers.get(dest) is not ev:
            return
        del self.fail_timers[dest]
        if self.session is not None and self.session.peer == dest and self.session.initiator == self.id:
            return
        frames = self.queues.pop(dest, deque())
        self.failures_declared.append((dest, self.sim.now()))
        self.upper.on_link_failure(dest, [f.packet for f in frames])
        self.update_scan()

    def finish(self, now: int) -> None:
        """Flush open radio intervals at the end of a run."""
        if self.scanning and not self.busy:
            self._close_rx(now)
            self._open_rx(now)
