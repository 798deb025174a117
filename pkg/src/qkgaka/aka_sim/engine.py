"""Deterministic discrete-event network."""

from __future__ import annotations

import heapq
import itertools
from typing import Callable, Iterable, Optional

from .model import CostModel, Entity, SimMessage

Interceptor = Callable[[SimMessage], Optional[SimMessage]]


class Network:
    """Single-threaded event loop over simulated milliseconds.

    Entities are modeled as servers: work queued on an entity starts when both
    the triggering event has happened and the entity is free. Messages are
    delivered after the configured link latency; equal delivery times are
    broken by send order, so every run is fully reproducible.
    """

    def __init__(self, costs: CostModel, interceptor: Interceptor | None = None):
        self.costs = costs
        self.interceptor = interceptor
        self.now = 0.0
        self.delivered: list[SimMessage] = []
        self._queue: list = []
        self._seq = itertools.count()

    def work(self, entity: Entity, cost: float) -> float:
        """Charge ``cost`` to ``entity``; return the time the work finishes."""
        start = max(self.now, entity.busy_until)
        entity.busy_until = start + cost
        return entity.busy_until

    def send(self, sender: Entity, receiver: Entity, kind: str, payload: dict, at: float | None = None) -> None:
        at = self.now if at is None else at
        delay = self.costs.latency(sender.role, receiver.role)
        msg = SimMessage(kind, sender.id, receiver.id, payload, at, at + delay)
        if self.interceptor is not None:
            msg = self.interceptor(msg)
            if msg is None:
                return
        heapq.heappush(self._queue, (msg.delivered_at, next(self._seq), msg, receiver))

    def run(self, dispatch: Callable[[Entity, SimMessage], None], max_events: int = 10_000) -> None:
        for _ in range(max_events):
            if not self._queue:
                return
            t, _, msg, receiver = heapq.heappop(self._queue)
            self.now = t
            self.delivered.append(msg)
            dispatch(receiver, msg)
        raise RuntimeError("event budget exhausted; message loop does not terminate")

    def elapsed(self, entities: Iterable[Entity]) -> float:
        return max([self.now, *(e.busy_until for e in entities)])
