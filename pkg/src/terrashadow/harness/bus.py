"""Simulated publish/subscribe link: fixed latency, uniform jitter, Bernoulli loss."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

from ..errors import ValidationError


@dataclass(frozen=True)
class BusConfig:
    latency_mean_s: float = 0.0
    jitter_s: float = 0.0
    drop_probability: float = 0.0

    def __post_init__(self):
        for name in ("latency_mean_s", "jitter_s", "drop_probability"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v) or v < 0:
                raise ValidationError(f"bus {name} must be a finite number >= 0")
            object.__setattr__(self, name, float(v))
        if self.drop_probability > 1:
            raise ValidationError("bus drop_probability must lie in [0, 1]")

    @classmethod
    def from_dict(cls, doc: Mapping | None) -> "BusConfig":
        doc = doc or {}
        if not isinstance(doc, Mapping):
            raise ValidationError("bus must be an object")
        extra = set(doc) - {"latency_mean_s", "jitter_s", "drop_probability"}
        if extra:
            raise ValidationError(f"unknown bus fields {sorted(extra)}")
        return cls(**doc)

    def to_dict(self) -> dict:
        return {"latency_mean_s": self.latency_mean_s, "jitter_s": self.jitter_s, "drop_probability": self.drop_probability}


@dataclass(frozen=True)
class Message:
    seq: int
    sender: str
    recipient: str
    topic: str
    payload: Any
    sent_at: float
    deliver_at: float | None  # None when dropped


@dataclass
class BusStats:
    sent: int = 0
    delivered: int = 0
    dropped: int = 0
    reordered: int = 0
    pending: set[int] = field(default_factory=set)
    latencies: list[float] = field(default_factory=list)

    def in_flight(self) -> int:
        return len(self.pending)

    def to_dict(self) -> dict:
        mean = math.fsum(self.latencies) / len(self.latencies) if self.latencies else None
        return {
            "sent": self.sent,
            "delivered": self.delivered,
            "dropped": self.dropped,
            "in_flight": self.in_flight(),
            "reordered": self.reordered,
            "mean_latency_s": mean,
        }


class MessageBus:
    """Samples a fate for each message when it is sent.

    Latency is ``mean + U(-jitter, +jitter)`` floored at zero, so delivery
    order can differ from send order. The caller schedules delivery.
    """

    def __init__(self, config: BusConfig, rng: np.random.Generator):
        self.config = config
        self._rng = rng
        self.stats = BusStats()
        self._seq = 0
        self._last_delivered: dict[tuple[str, str], int] = {}

    def send(self, sender: str, recipient: str, topic: str, payload, now: float, latency_override_s: float | None = None) -> Message:
        # Both draws always happen so the random stream does not depend on outcomes.
        u_drop = self._rng.random()
        u_lat = self._rng.uniform(-1.0, 1.0)
        self._seq += 1
        self.stats.sent += 1
        if u_drop < self.config.drop_probability:
            self.stats.dropped += 1
            return Message(self._seq, sender, recipient, topic, payload, now, None)
        if latency_override_s is not None:
            latency = float(latency_override_s)
            if latency < 0:
                raise ValidationError("latency override must be >= 0")
        else:
            latency = max(0.0, self.config.latency_mean_s + self.config.jitter_s * u_lat)
        self.stats.pending.add(self._seq)
        return Message(self._seq, sender, recipient, topic, payload, now, now + latency)

    def mark_delivered(self, msg: Message) -> None:
        self.stats.pending.remove(msg.seq)
        self.stats.delivered += 1
        self.stats.latencies.append(msg.deliver_at - msg.sent_at)
        key = (msg.sender, msg.recipient)
        if msg.seq < self._last_delivered.get(key, 0):
            self.stats.reordered += 1
        else:
            self._last_delivered[key] = msg.seq

    def check_conservation(self) -> None:
        s = self.stats
        if s.sent != s.delivered + s.dropped + s.in_flight():
            raise AssertionError(f"bus conservation violated: {s.to_dict()}")
