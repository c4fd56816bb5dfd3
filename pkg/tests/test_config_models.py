import pytest
from pydantic import ValidationError

from app.constants.app_constants import SimConstants, SynthesisConstants
from app.models.config_models import ClfProblemConfig, SimulationSettings


def test_simulation_defaults_come_from_constants():
    settings = SimulationSettings()
    assert settings.dt == SimConstants.DEFAULT_DT
    assert settings.knowledge_horizon == SimConstants.KNOWLEDGE_HORIZON
    assert settings.bus_ref == SimConstants.BUS_REF


def test_clf_problem_defaults_come_from_constants():
    problem = ClfProblemConfig(a1="ch4_a1", a2="ch4_a2", b="ch4_b")
    assert problem.rho == SynthesisConstants.DEFAULT_RHO
    assert problem.beta == SynthesisConstants.DEFAULT_BETA
    assert problem.subgrad_iters == SynthesisConstants.SUBGRAD_ITERS
    assert problem.max_outer == SynthesisConstants.MAX_OUTER


def test_unknown_keys_rejected():
    with pytest.raises(ValidationError):
        SimulationSettings(step=1e-5)


def test_loaded_config_seed(cfg):
    assert cfg.seed == SimConstants.DEFAULT_SEED
