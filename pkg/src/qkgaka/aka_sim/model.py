"""Entities, messages, cost model and transcripts for the AKA simulator."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Any, Mapping

from ..errors import ConfigurationError, KeyConfinementError
from ..key_hierarchy import KeyChain, PreK


class Role(str, enum.Enum):
    UE = "UE"
    ENB = "ENB"
    MME = "MME"
    HSS = "HSS"
    QKS = "QKS"


# Which keys each role may hold (rows of the LTE key hierarchy).
ROLE_KEYS = {
    Role.UE: frozenset({"pre_k", "k", "ck", "ik", "k_asme", "k_nas_enc", "k_nas_int", "k_enb", "nh"}),
    Role.HSS: frozenset({"pre_k", "k", "ck", "ik", "k_asme", "s6a"}),
    Role.MME: frozenset({"k_asme", "k_nas_enc", "k_nas_int", "k_enb", "nh", "s6a"}),
    Role.ENB: frozenset({"k_enb", "nh"}),
    Role.QKS: frozenset(),
}


class Outcome(str, enum.Enum):
    SUCCESS = "success"
    AUTH_FAILURE = "auth_failure"
    DETECTION_ABORT = "detection_abort"


@dataclass(eq=False)
class Entity:
    role: Role
    id: str
    state: str = "idle"
    busy_until: float = 0.0
    keys: dict[str, bytes] = field(default_factory=dict)

    def hold(self, name: str, value: bytes) -> None:
        if name not in ROLE_KEYS[self.role]:
            raise KeyConfinementError(f"{self.role.value} {self.id} may not hold {name}")
        self.keys[name] = value

    def __repr__(self) -> str:
        return f"Entity({self.role.value}:{self.id} state={self.state} keys={sorted(self.keys)})"


Payload = Mapping[str, Any]


@dataclass(frozen=True)
class SimMessage:
    kind: str
    sender: str
    receiver: str
    payload: Payload
    timestamp: float       # when the sender finished processing and sent it
    delivered_at: float

    def __post_init__(self):
        object.__setattr__(self, "payload", MappingProxyType(dict(self.payload)))

    def payload_bytes(self) -> bytes:
        """Every byte-string field of the payload, concatenated."""
        return b"".join(v for v in self.payload.values() if isinstance(v, (bytes, bytearray)))

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "sender": self.sender,
            "receiver": self.receiver,
            "timestamp": self.timestamp,
            "delivered_at": self.delivered_at,
            "payload": {k: (v.hex() if isinstance(v, (bytes, bytearray)) else v)
                        for k, v in sorted(self.payload.items())},
        }


DEFAULT_LATENCY_MS = {
    "UE-MME": 10.0,
    "MME-HSS": 5.0,
    "MME-ENB": 2.0,
    "QKS-HSS": 1.0,
    "QKS-UE": 1.0,
}


@dataclass(frozen=True)
class CostModel:
    """Latencies and processing costs, all in simulated milliseconds.

    ``grid_lookup_cost_ms`` covers deriving K from the grid (walk plus
    mixing) and is the QKG-AKA counterpart of ``av_fetch_cost_ms``, the HSS
    cost of retrieving and generating an authentication vector.
    ``se_group_size`` is how many SE-AKA authentications one HSS fetch
    serves; ``pk_op_cost_ms`` prices one SE-AKA public-key operation.
    """

    link_latency_ms: Mapping[str, float] = field(default_factory=lambda: dict(DEFAULT_LATENCY_MS))
    kdf_cost_ms: float = 0.05
    grid_lookup_cost_ms: float = 0.2
    av_fetch_cost_ms: float = 4.0
    pk_op_cost_ms: float = 1.5
    qkd_exchange_cost_ms: float = 5.0
    se_group_size: int = 5

    def __post_init__(self):
        lat = {}
        for link, v in dict(self.link_latency_ms).items():
            a, sep, b = link.partition("-")
            if not sep:
                raise ConfigurationError(f"link name {link!r} must look like 'UE-MME'")
            lat[f"{Role(a.upper()).value}-{Role(b.upper()).value}"] = float(v)
        object.__setattr__(self, "link_latency_ms", MappingProxyType(lat))
        costs = [*lat.values(), self.kdf_cost_ms, self.grid_lookup_cost_ms, self.av_fetch_cost_ms,
                 self.pk_op_cost_ms, self.qkd_exchange_cost_ms]
        if any(c < 0 for c in costs):
            raise ConfigurationError("all latencies and costs must be >= 0")
        if self.se_group_size < 1:
            raise ConfigurationError("se_group_size must be at least 1")

    def latency(self, a: Role, b: Role) -> float:
        for key in (f"{a.value}-{b.value}", f"{b.value}-{a.value}"):
            if key in self.link_latency_ms:
                return self.link_latency_ms[key]
        raise ConfigurationError(f"no latency configured for link {a.value}-{b.value}")

    @classmethod
    def zero(cls) -> "CostModel":
        return cls({k: 0.0 for k in DEFAULT_LATENCY_MS}, 0.0, 0.0, 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class SubscriberState:
    """Protocol state carried from one authentication to the next."""

    ue_pre_k: PreK
    hss_pre_k: PreK
    ue_sqn: int = 0
    hss_sqn: int = 0
    se_cache: tuple = ()


@dataclass(frozen=True, eq=False)
class AuthTranscript:
    scheme: str
    messages: tuple[SimMessage, ...]
    elapsed_ms: float
    outcome: Outcome
    hss_load: int
    mme_load: int
    state: SubscriberState
    ue_keys: KeyChain | None = None
    network_keys: KeyChain | None = None

    @property
    def keys_agree(self) -> bool:
        return self.ue_keys is not None and self.ue_keys == self.network_keys

    def to_dict(self) -> dict:
        # keys are deliberately left out; only the message record is exported
        return {
            "scheme": self.scheme,
            "outcome": self.outcome.value,
            "elapsed_ms": self.elapsed_ms,
            "hss_load": self.hss_load,
            "mme_load": self.mme_load,
            "messages": [m.to_dict() for m in self.messages],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n"
