"""buckcert: periodic-mode computation and LMI stability certification
for PWM DC-DC buck converters."""

from ._accel import NUMBA_ENABLED, backend_name
from .model import (ControlConfig, LtiSystem, PowerStageParams, RampParams,
                    StateSpaceBlock, assemble, build_power_stage, shift)
from .periodic import (ExistenceReport, PeriodicMode, approx_output,
                       find_modes, l1_analytic, l1_open_loop_sweep,
                       reconstruct, sigma_hat)
from .lmi import (LmiCertificate, LmiProblem, Theorem2Data, build_theorem1,
                  build_theorem2, certify_theorem1, certify_theorem2,
                  check_lemma1_equivalence, min_sigma_star, solve_feasibility,
                  theorem1_sweep)
from .simulator import (DiagnosticsReport, SimConfig, SimTrace, diagnostics,
                        export_csv, simulate, switching_time)

__version__ = "0.1.0"

__all__ = [
    "NUMBA_ENABLED", "backend_name", "__version__",
    "ControlConfig", "LtiSystem", "PowerStageParams", "RampParams",
    "StateSpaceBlock", "assemble", "build_power_stage", "shift",
    "ExistenceReport", "PeriodicMode", "approx_output", "find_modes",
    "l1_analytic", "l1_open_loop_sweep", "reconstruct", "sigma_hat",
    "LmiCertificate", "LmiProblem", "Theorem2Data", "build_theorem1",
    "build_theorem2", "certify_theorem1", "certify_theorem2",
    "check_lemma1_equivalence", "min_sigma_star", "solve_feasibility",
    "theorem1_sweep",
    "DiagnosticsReport", "SimConfig", "SimTrace", "diagnostics",
    "export_csv", "simulate", "switching_time",
]
