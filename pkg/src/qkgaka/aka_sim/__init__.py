"""Message-level simulation of QKG-AKA and the EPS-AKA / SE-AKA baselines."""

from .engine import Network
from .flows import (
    LOAD_CURVE_COLUMNS,
    SCHEMES,
    LoadCurve,
    load_curve_csv,
    run_attack,
    run_batch,
    run_eps_aka,
    run_qkg_aka,
    run_se_aka,
    write_load_curve_csv,
)
from .model import (
    ROLE_KEYS,
    AuthTranscript,
    CostModel,
    Entity,
    Outcome,
    Role,
    SimMessage,
    SubscriberState,
)
from .scenario import (
    ATTACKS,
    AttackerConfig,
    Scenario,
    cost_model_from_config,
    load_config,
    load_scenario,
    scenario_from_config,
)

__all__ = [
    "ATTACKS", "LOAD_CURVE_COLUMNS", "ROLE_KEYS", "SCHEMES",
    "AttackerConfig", "AuthTranscript", "CostModel", "Entity", "LoadCurve", "Network",
    "Outcome", "Role", "Scenario", "SimMessage", "SubscriberState",
    "cost_model_from_config", "load_config", "load_curve_csv", "load_scenario",
    "run_attack", "run_batch", "run_eps_aka", "run_qkg_aka", "run_se_aka",
    "scenario_from_config", "write_load_curve_csv",
]
