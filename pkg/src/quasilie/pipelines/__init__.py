"""End-to-end scenarios, solver pipelines, reports and the command line."""

from .abel import (PipelineError, abel_pde_pipeline, almost_homogeneous_solve, gcc_family, pushed_v0_family,
                   shift_invariant_reduce, solve_generalised_abel)
from .config import ConfigError, load_config, parse_config
from .pde import (bt_field, kdv_soliton, kink, liouville_field, random_smooth_pair, riccati_gradient_field,
                  run_bt_kdv, run_liouville, run_riccati, run_sine_gordon, run_wznw_abelian, sine_gordon_field,
                  sine_gordon_identity_check, wznw_field)
from .report import Check, Report
from .scenarios import SCENARIOS, list_scenarios, run_scenario

__all__ = [
    "Check", "ConfigError", "PipelineError", "Report", "SCENARIOS", "abel_pde_pipeline", "almost_homogeneous_solve",
    "bt_field", "gcc_family", "kdv_soliton", "kink", "list_scenarios", "liouville_field", "load_config",
    "parse_config", "pushed_v0_family", "random_smooth_pair", "riccati_gradient_field", "run_bt_kdv",
    "run_liouville", "run_riccati", "run_scenario", "run_sine_gordon", "run_wznw_abelian", "shift_invariant_reduce",
    "sine_gordon_field", "sine_gordon_identity_check", "solve_generalised_abel", "wznw_field",
]
