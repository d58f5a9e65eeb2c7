"""Clocks in integer nanoseconds.

Everything that keeps time takes a clock object so simulated-time tests
and wall-clock runs share one code path.
"""

import time

NS_PER_S = 1_000_000_000
NS_PER_MS = 1_000_000


def seconds(value):
    return int(round(value * NS_PER_S))


class MonotonicClock:
    simulated = False

    def now(self):
        return time.monotonic_ns()

    def advance(self, ns):
        """Cost-model hook; real time advances on its own."""

    def sleep(self, ns):
        if ns > 0:
            time.sleep(ns / NS_PER_S)


class SimClock:
    simulated = True

    def __init__(self, start=0):
        self._now = int(start)

    def now(self):
        return self._now

    def advance(self, ns):
        if ns < 0:
            raise ValueError("clock cannot move backwards")
        self._now += int(ns)

    def advance_to(self, t):
        if t > self._now:
            self._now = int(t)

    sleep = advance

    def __repr__(self):
        return f"SimClock({self._now})"
