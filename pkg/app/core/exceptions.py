from typing import Any, Dict, Optional

from ..constants.app_constants import ExitCode


class WorkbenchError(Exception):
    exit_code: ExitCode = ExitCode.RUNTIME_FAULT


class ConfigError(WorkbenchError):
    exit_code = ExitCode.CONFIG_ERROR


class NumericalError(WorkbenchError):
    exit_code = ExitCode.RUNTIME_FAULT


class SingularOperatorError(NumericalError):
    pass


class ConvergenceError(NumericalError):
    pass


class InfeasibleOperatingPointError(WorkbenchError):
    exit_code = ExitCode.RUNTIME_FAULT


class ControllerFaultError(WorkbenchError):
    exit_code = ExitCode.RUNTIME_FAULT

    def __init__(self, term: str, value: Any = None):
        self.term = term
        self.value = value
        super().__init__(f"controller produced non-finite '{term}' ({value})")


class SimulationAbortedError(WorkbenchError):
    exit_code = ExitCode.RUNTIME_FAULT

    def __init__(self, last_good_time: float, reason: str = "non-finite state"):
        self.last_good_time = last_good_time
        super().__init__(f"{reason} after t={last_good_time:.6g}s")


class SynthesisInfeasibleError(WorkbenchError):
    exit_code = ExitCode.SYNTHESIS_INFEASIBLE

    def __init__(self, message: str, certificates: Optional[Dict[str, Any]] = None):
        self.certificates = certificates or {}
        super().__init__(message)
