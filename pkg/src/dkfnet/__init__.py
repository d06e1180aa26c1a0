"""Distributed estimation for interconnected systems.

Network models with successor-count rescaling, the per-subsystem filter
rounds and their centralized baseline, small-gain design and
certification, reconfiguration admission checks, and a deterministic
scenario runner with CSV output.
"""

from .design import (
    DesignCertificate,
    centralized_design_search,
    default_certificate,
    initialize_covariances,
    iterate_covariances,
    load_certificate,
    save_certificate,
    verify_pbar,
)
from .dkf import EstimatorState, centralized_step, network_round, \
    simplified_round
from .network import (
    NetworkModel,
    SubsystemModel,
    build_network,
    load_network,
    save_network,
    validate_assumptions,
)
from .pnp import (
    PnPEvent,
    add_sensor,
    apply_plugin,
    apply_unplug,
    evaluate_plugin,
    evaluate_unplug,
    replace_sensors,
)
from .riccati import kalman_gain, riccati_update, solve_dare
from .sim import (
    Scenario,
    SimResult,
    academic_pnp_scenario,
    academic_scenario,
    load_scenario,
    metric_e,
    metric_rmse,
    power_network_scenario,
    save_scenario,
    simulate,
    write_csv_bundle,
)

__version__ = "0.1.0"

__all__ = [
    "DesignCertificate",
    "EstimatorState",
    "NetworkModel",
    "PnPEvent",
    "Scenario",
    "SimResult",
    "SubsystemModel",
    "academic_pnp_scenario",
    "academic_scenario",
    "add_sensor",
    "apply_plugin",
    "apply_unplug",
    "build_network",
    "centralized_design_search",
    "centralized_step",
    "default_certificate",
    "evaluate_plugin",
    "evaluate_unplug",
    "initialize_covariances",
    "iterate_covariances",
    "kalman_gain",
    "load_certificate",
    "load_network",
    "load_scenario",
    "metric_e",
    "metric_rmse",
    "network_round",
    "power_network_scenario",
    "replace_sensors",
    "riccati_update",
    "save_certificate",
    "save_network",
    "save_scenario",
    "simplified_round",
    "simulate",
    "solve_dare",
    "validate_assumptions",
    "verify_pbar",
    "write_csv_bundle",
]
