"""Scenario definition and YAML loading.

Config schema (every key optional)::

    seed: 1
    ue_id: ue-0001
    serving_network_id: "00101"
    algorithm_id: 2
    grid:
      n: 5              # odd, >= 3
      photons: 16384    # photons per QKD exchange while building the grid
      noise: 0.0        # channel bit-flip probability
    costs:
      kdf_ms: 0.05
      grid_lookup_ms: 0.2
      av_fetch_ms: 4.0
      pk_op_ms: 1.5
      qkd_exchange_ms: 5.0
      se_group_size: 5
      latency_ms: {UE-MME: 10, MME-HSS: 5, MME-ENB: 2, QKS-HSS: 1, QKS-UE: 1}
    attacker:
      kind: none        # none | intercept_resend | replay | tamper
      fraction: 1.0     # intercept_resend: share of photons Eve measures
      retries: 3        # intercept_resend: aborted exchanges tolerated
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from ..errors import ConfigurationError, FormatError
from ..key_hierarchy import DerivationContext, PreK
from ..qk_grid import QkGrid, run_grid_generation
from ..qkd_link import ChannelConfig
from .model import CostModel, SubscriberState

ATTACKS = ("none", "intercept_resend", "replay", "tamper")

# Named SeedSequence streams drawn from the scenario seed.
_STREAMS = ("grid", "pre_k", "permanent_k", "s6a", "hss", "attacker", "provision")


def seed_stream(seed: int, name: str) -> np.random.Generator:
    tag = _STREAMS.index(name)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, tag])))


def derived_seed(seed: int, name: str) -> int:
    return int(seed_stream(seed, name).integers(0, 2**63))


@dataclass(frozen=True)
class AttackerConfig:
    kind: str = "none"
    fraction: float = 1.0
    retries: int = 3

    def __post_init__(self):
        if self.kind not in ATTACKS:
            raise ConfigurationError(f"unknown attacker {self.kind!r}; expected one of {ATTACKS}")
        if not 0.0 <= self.fraction <= 1.0:
            raise ConfigurationError("attacker fraction must lie in [0, 1]")
        if self.retries < 0:
            raise ConfigurationError("retries must be >= 0")


@dataclass(frozen=True, eq=False)
class Scenario:
    """Everything one authentication run depends on.

    ``grid`` is the network's QK-GRID and ``ue_grid`` the UE's replica
    (the same object unless a test wants them to differ). Both replicas are
    pre-shared at setup.
    """

    seed: int
    grid: QkGrid | None
    state: SubscriberState
    permanent_k: bytes
    s6a_key: bytes
    costs: CostModel = field(default_factory=CostModel)
    ue_grid: QkGrid | None = None
    ue_id: str = "ue-0001"
    serving_network_id: bytes = b"00101"
    algorithm_id: int = 2
    grid_n: int = 5
    photons: int = 16384
    noise: float = 0.0
    attacker: AttackerConfig = field(default_factory=AttackerConfig)

    def __post_init__(self):
        if self.ue_grid is None:
            object.__setattr__(self, "ue_grid", self.grid)

    @property
    def ctx(self) -> DerivationContext:
        return DerivationContext(self.serving_network_id, 0, self.algorithm_id)

    def with_state(self, state: SubscriberState) -> "Scenario":
        return replace(self, state=state)

    def with_seed(self, seed: int) -> "Scenario":
        return replace(self, seed=seed)

    def provisioning_channel(self) -> ChannelConfig:
        fraction = self.attacker.fraction if self.attacker.kind == "intercept_resend" else 0.0
        return ChannelConfig(self.photons, self.noise, fraction, derived_seed(self.seed, "provision"))

    @classmethod
    def build(
        cls,
        seed: int,
        costs: CostModel | None = None,
        grid_n: int = 5,
        photons: int = 16384,
        noise: float = 0.0,
        attacker: AttackerConfig | None = None,
        ue_id: str = "ue-0001",
        serving_network_id: bytes = b"00101",
        algorithm_id: int = 2,
    ) -> "Scenario":
        """Set up a fresh subscriber: build a grid over a clean QKD link and
        bootstrap Pre-K, the permanent K of the baselines and the MME-HSS key."""
        grid = run_grid_generation(ChannelConfig(photons, noise, 0.0, derived_seed(seed, "grid")), grid_n)
        pre_k = PreK.bootstrap(seed_stream(seed, "pre_k"))
        return cls(
            seed=seed,
            grid=grid,
            state=SubscriberState(pre_k, pre_k),
            permanent_k=seed_stream(seed, "permanent_k").bytes(32),
            s6a_key=seed_stream(seed, "s6a").bytes(32),
            costs=costs or CostModel(),
            ue_id=ue_id,
            serving_network_id=serving_network_id,
            algorithm_id=algorithm_id,
            grid_n=grid_n,
            photons=photons,
            noise=noise,
            attacker=attacker or AttackerConfig(),
        )


_COST_KEYS = {
    "kdf_ms": "kdf_cost_ms",
    "grid_lookup_ms": "grid_lookup_cost_ms",
    "av_fetch_ms": "av_fetch_cost_ms",
    "pk_op_ms": "pk_op_cost_ms",
    "qkd_exchange_ms": "qkd_exchange_cost_ms",
    "se_group_size": "se_group_size",
    "latency_ms": "link_latency_ms",
}


def _section(cfg: dict, name: str, allowed) -> dict:
    sec = cfg.get(name) or {}
    if not isinstance(sec, dict):
        raise FormatError(f"config section {name!r} must be a mapping")
    extra = set(sec) - set(allowed)
    if extra:
        raise FormatError(f"unknown keys in {name!r}: {sorted(extra)}")
    return sec


def cost_model_from_config(cfg: dict) -> CostModel:
    sec = _section(cfg, "costs", _COST_KEYS)
    kwargs = {_COST_KEYS[k]: v for k, v in sec.items()}
    if "link_latency_ms" in kwargs:
        kwargs["link_latency_ms"] = {**CostModel().link_latency_ms, **kwargs["link_latency_ms"]}
    return CostModel(**kwargs)


def scenario_from_config(cfg: dict, seed: int | None = None) -> Scenario:
    """Build a :class:`Scenario` from a parsed config; ``seed`` overrides ``cfg['seed']``."""
    if not isinstance(cfg, dict):
        raise FormatError("scenario config must be a mapping")
    extra = set(cfg) - {"seed", "ue_id", "serving_network_id", "algorithm_id", "grid", "costs", "attacker"}
    if extra:
        raise FormatError(f"unknown top-level config keys: {sorted(extra)}")
    grid = _section(cfg, "grid", ("n", "photons", "noise"))
    att = _section(cfg, "attacker", ("kind", "fraction", "retries"))
    return Scenario.build(
        seed=int(cfg.get("seed", 0) if seed is None else seed),
        costs=cost_model_from_config(cfg),
        grid_n=int(grid.get("n", 5)),
        photons=int(grid.get("photons", 16384)),
        noise=float(grid.get("noise", 0.0)),
        attacker=AttackerConfig(**att),
        ue_id=str(cfg.get("ue_id", "ue-0001")),
        serving_network_id=str(cfg.get("serving_network_id", "00101")).encode(),
        algorithm_id=int(cfg.get("algorithm_id", 2)),
    )


def load_config(path) -> tuple[dict, str]:
    """Parse a YAML config; return it with the sha256 of the raw file."""
    raw = Path(path).read_bytes()
    try:
        cfg = yaml.safe_load(raw) or {}
    except yaml.YAMLError as e:
        raise FormatError(f"{path}: not valid YAML: {e}") from None
    if not isinstance(cfg, dict):
        raise FormatError(f"{path}: top level must be a mapping")
    return cfg, hashlib.sha256(raw).hexdigest()


def load_scenario(path, seed: int | None = None) -> Scenario:
    cfg, _ = load_config(path)
    return scenario_from_config(cfg, seed)
