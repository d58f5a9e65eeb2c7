"""Datagram transports.

``SimNetwork`` is a deterministic discrete-event network: datagrams are
delivered after a configurable latency, dropped with a seeded loss
probability or by scripted filters, and every send is traced.
``UdpNetwork`` offers the same interface over real sockets.

Both expose ``bind``, ``call_at``/``call_later``, ``run_once`` and ``now``,
so clients and the gateway block on ``run_once`` while waiting for
acknowledgements.
"""

import errno
import heapq
import itertools
import logging
import random
import selectors
import socket
from dataclasses import dataclass, field
from typing import Optional

from ..clock import MonotonicClock, NS_PER_MS, NS_PER_S, SimClock
from ..errors import BindError

logger = logging.getLogger(__name__)

BROADCAST = "ff02::1"
EPHEMERAL_BASE = 49152


@dataclass
class Datagram:
    time: int
    src: tuple
    dst: tuple
    data: bytes
    dropped: bool = False
    delivered_at: Optional[int] = None


class Timer:
    __slots__ = ("when", "fn", "args", "cancelled")

    def __init__(self, when, fn, args):
        self.when = when
        self.fn = fn
        self.args = args
        self.cancelled = False

    def cancel(self):
        self.cancelled = True


class _Scheduler:
    def __init__(self):
        self._heap = []
        self._seq = itertools.count()

    def call_at(self, when, fn, *args):
        timer = Timer(int(when), fn, args)
        heapq.heappush(self._heap, (timer.when, next(self._seq), timer))
        return timer

    def call_later(self, delay, fn, *args):
        return self.call_at(self.now() + int(delay), fn, *args)

    def _next_timer(self):
        while self._heap and self._heap[0][2].cancelled:
            heapq.heappop(self._heap)
        return self._heap[0][2] if self._heap else None

    @property
    def pending_events(self):
        return sum(1 for _, _, t in self._heap if not t.cancelled)


class SimEndpoint:
    def __init__(self, net, address, handler):
        self.net = net
        self.address = address
        self.handler = handler
        self.closed = False

    def send(self, dst, data, hop_limit=None):
        if self.closed:
            raise OSError(errno.EBADF, "endpoint closed")
        self.net._transmit(self, tuple(dst), bytes(data), hop_limit)

    def close(self):
        if not self.closed:
            self.closed = True
            self.net._unbind(self)


class SimNetwork(_Scheduler):
    """In-process network with simulated time.

    ``loss`` is the probability that any datagram is dropped; ``drop_filters``
    are callables receiving a :class:`Datagram` and returning True to drop it.
    """

    def __init__(self, clock=None, seed=0, loss=0.0, latency_ns=5 * NS_PER_MS, jitter_ns=0):
        super().__init__()
        self.clock = clock or SimClock()
        self.rng = random.Random(seed)
        self.loss = loss
        self.latency_ns = latency_ns
        self.jitter_ns = jitter_ns
        self.drop_filters = []
        self.trace = []
        self._endpoints = {}
        self._hops = {}
        self._ephemeral = {}

    def now(self):
        return self.clock.now()

    # topology

    def set_hops(self, a, b, hops):
        self._hops[frozenset((a, b))] = hops

    def hops(self, a, b):
        if a == b:
            return 0
        return self._hops.get(frozenset((a, b)), 1)

    # sockets

    def bind(self, host, port, handler):
        if port == 0:
            port = self._ephemeral.get(host, EPHEMERAL_BASE)
            while (host, port) in self._endpoints:
                port += 1
            self._ephemeral[host] = port + 1
        address = (host, port)
        if address in self._endpoints:
            raise BindError(f"{host}:{port} already bound")
        endpoint = SimEndpoint(self, address, handler)
        self._endpoints[address] = endpoint
        return endpoint

    def _unbind(self, endpoint):
        if self._endpoints.get(endpoint.address) is endpoint:
            del self._endpoints[endpoint.address]

    def _transmit(self, src_ep, dst, data, hop_limit):
        now = self.now()
        host, port = dst
        if host == BROADCAST:
            limit = 1 if hop_limit is None else hop_limit
            targets = [
                ep for (h, p), ep in sorted(self._endpoints.items())
                if p == port and h != src_ep.address[0]
                and self.hops(src_ep.address[0], h) <= limit
            ]
            if not targets:
                self.trace.append(Datagram(now, src_ep.address, dst, data, dropped=True))
            for ep in targets:
                self._schedule(src_ep.address, ep.address, data, now)
        else:
            self._schedule(src_ep.address, dst, data, now)

    def _schedule(self, src, dst, data, now):
        record = Datagram(now, src, dst, data)
        self.trace.append(record)
        if self.loss and self.rng.random() < self.loss:
            record.dropped = True
            return
        if any(f(record) for f in self.drop_filters):
            record.dropped = True
            return
        delay = self.latency_ns
        if self.jitter_ns:
            delay += int(self.rng.uniform(0, self.jitter_ns))
        self.call_at(now + delay, self._deliver, record)

    def _deliver(self, record):
        ep = self._endpoints.get(record.dst)
        if ep is None or ep.closed:
            record.dropped = True
            return
        record.delivered_at = self.now()
        ep.handler(record.data, record.src)

    # event loop

    def run_once(self, deadline=None):
        """Run the next event if one is due by ``deadline``.

        Returns False (after advancing the clock to ``deadline``) when nothing
        is scheduled before it.
        """
        timer = self._next_timer()
        if timer is None or (deadline is not None and timer.when > deadline):
            if deadline is not None:
                self.clock.advance_to(deadline)
            return False
        heapq.heappop(self._heap)
        self.clock.advance_to(timer.when)
        timer.fn(*timer.args)
        return True

    def run_until(self, t):
        while self.run_once(deadline=t):
            pass
        self.clock.advance_to(t)

    def run_for(self, ns):
        self.run_until(self.now() + int(ns))

    def run_until_idle(self, limit=1_000_000):
        for _ in range(limit):
            if not self.run_once():
                return
        raise RuntimeError("network did not go idle")

    # trace helpers

    def sent(self, src_host=None, dst_host=None):
        return [
            d for d in self.trace
            if (src_host is None or d.src[0] == src_host)
            and (dst_host is None or d.dst[0] == dst_host)
        ]


class UdpEndpoint:
    def __init__(self, net, sock, handler):
        self.net = net
        self.sock = sock
        self.handler = handler
        self.address = sock.getsockname()[:2]
        self.closed = False

    def send(self, dst, data, hop_limit=None):
        host, port = dst
        if hop_limit is not None:
            try:
                if self.sock.family == socket.AF_INET6:
                    self.sock.setsockopt(socket.IPPROTO_IPV6, socket.IPV6_MULTICAST_HOPS, hop_limit)
                else:
                    self.sock.setsockopt(socket.IPPROTO_IP, socket.IP_MULTICAST_TTL, hop_limit)
            except OSError:
                logger.debug("hop limit not settable on %s", self.address)
        self.sock.sendto(bytes(data), (host, port))

    def close(self):
        if not self.closed:
            self.closed = True
            self.net._unbind(self)
            self.sock.close()


class UdpNetwork(_Scheduler):
    """Single-threaded reactor over real UDP sockets (wall clock)."""

    def __init__(self, clock=None):
        super().__init__()
        self.clock = clock or MonotonicClock()
        self._selector = selectors.DefaultSelector()

    def now(self):
        return self.clock.now()

    def bind(self, host, port, handler):
        family = socket.AF_INET6 if ":" in host else socket.AF_INET
        sock = socket.socket(family, socket.SOCK_DGRAM)
        sock.setsockopt(socket.SOL_SOCKET, socket.SO_BROADCAST, 1)
        try:
            sock.bind((host, port))
        except OSError as exc:
            sock.close()
            raise BindError(f"cannot bind {host}:{port}: {exc}") from exc
        sock.setblocking(False)
        endpoint = UdpEndpoint(self, sock, handler)
        self._selector.register(sock, selectors.EVENT_READ, endpoint)
        return endpoint

    def _unbind(self, endpoint):
        try:
            self._selector.unregister(endpoint.sock)
        except (KeyError, ValueError):
            pass

    def run_once(self, deadline=None):
        now = self.now()
        timer = self._next_timer()
        if timer is not None and timer.when <= now:
            heapq.heappop(self._heap)
            timer.fn(*timer.args)
            return True
        wake = timer.when if timer is not None else None
        if deadline is not None:
            wake = deadline if wake is None else min(wake, deadline)
        timeout = None if wake is None else max(0.0, (wake - now) / NS_PER_S)
        events = self._selector.select(timeout)
        for key, _ in events:
            endpoint = key.data
            try:
                data, src = endpoint.sock.recvfrom(0xFFFF)
            except (BlockingIOError, InterruptedError):
                continue
            endpoint.handler(data, src[:2])
        if events:
            return True
        timer = self._next_timer()
        if timer is not None and timer.when <= self.now():
            heapq.heappop(self._heap)
            timer.fn(*timer.args)
            return True
        return False

    def run_until(self, t):
        while self.now() < t:
            self.run_once(deadline=t)

    def run_for(self, ns):
        self.run_until(self.now() + int(ns))

    def close(self):
        for key in list(self._selector.get_map().values()):
            key.data.close()
        self._selector.close()
