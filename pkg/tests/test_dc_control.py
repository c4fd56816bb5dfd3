import math

import numpy as np
import pytest

from app.constants.app_constants import ControlConstants
from app.core.exceptions import ControllerFaultError, InfeasibleOperatingPointError
from app.models.plant_models import (
    AncState, AobState, Atmosphere, HessDisturbance, PvBatDisturbance, PvBatObserverState
)
from app.services import dc_control, dc_plant

STC = Atmosphere(irradiance=1000.0, temperature=25.0)
DT = 2e-5


@pytest.fixture
def hess_point(cfg):
    params = cfg.dc_params
    v_mpp, i_mpp, _ = dc_plant.mpp_point(STC, cfg.pv_cell)
    refs = dc_control.secondary_refs_hess(40.0, v_mpp, i_mpp, params.v_b, 8.0, params)
    d = HessDisturbance(d1=i_mpp, d2=params.v_b, d3=params.u_c0, d4=1.0 / 8.0)
    x, _ = dc_plant.hess_equilibrium(refs, d, params)
    return x, refs, d


@pytest.fixture
def pvbat_point(cfg):
    params = cfg.dc_params
    v_mpp, i_mpp, _ = dc_plant.mpp_point(STC, cfg.pv_cell)
    refs = dc_control.secondary_refs_pvbat(40.0, v_mpp, i_mpp, params.v_b, 8.0, params)
    x, u = dc_plant.pvbat_equilibrium(refs, params)
    D = PvBatDisturbance(D1=i_mpp / params.c_pvi, D2=params.v_b / params.l_b, D3=1.0 / (params.c_l * 8.0))
    return x, u, refs, D


def test_secondary_refs_hold_the_bus(cfg, hess_point):
    _, refs, _ = hess_point
    assert refs.x9 == 40.0
    assert refs.x8 == 40.0
    assert refs.x7 == 0.0


def test_secondary_refs_infeasible_operating_point(cfg):
    params = cfg.dc_params.model_copy(update={"r_pv": 1000.0})
    with pytest.raises(InfeasibleOperatingPointError):
        dc_control.secondary_refs_hess(40.0, 26.0, 8.0, params.v_b, 8.0, params)


def test_aob_duties_stay_in_bounds(cfg, hess_point):
    x, refs, d = hess_point
    st = AobState(d1_hat=d.d1, d2_hat=d.d2, d3_hat=d.d3, d4_hat=d.d4)
    u, _ = dc_control.aob_step(x, refs, st, cfg.aob_gains, cfg.dc_params, DT)
    lo, hi = ControlConstants.AOB_DUTY_MIN, ControlConstants.AOB_DUTY_MAX
    assert all(lo <= v <= hi for v in u)


def test_aob_observer_idle_on_zero_tracking_error(cfg, hess_point):
    x, refs, d = hess_point
    st = AobState(d1_hat=d.d1, d2_hat=d.d2, d3_hat=d.d3, d4_hat=d.d4)
    _, nxt = dc_control.aob_step(x, refs, st, cfg.aob_gains, cfg.dc_params, DT)
    assert nxt.d1_hat == st.d1_hat
    assert nxt.d2_hat == st.d2_hat
    assert nxt.d4_hat >= 0.0
    # input state untouched
    assert st.prev_u1 == 0.5


def test_aob_observer_moves_with_pv_error(cfg, hess_point):
    x, refs, d = hess_point
    x = x.copy()
    x[0] += 1.0
    st = AobState(d1_hat=d.d1, d2_hat=d.d2, d3_hat=d.d3, d4_hat=d.d4)
    _, nxt = dc_control.aob_step(x, refs, st, cfg.aob_gains, cfg.dc_params, DT)
    assert nxt.d1_hat == pytest.approx(st.d1_hat + DT * cfg.aob_gains.gamma1 * 1.0)


def test_aob_non_finite_state_raises(cfg, hess_point):
    x, refs, d = hess_point
    x = x.copy()
    x[0] = float("nan")
    st = AobState(d1_hat=d.d1, d2_hat=d.d2, d3_hat=d.d3, d4_hat=d.d4)
    with pytest.raises(ControllerFaultError):
        dc_control.aob_step(x, refs, st, cfg.aob_gains, cfg.dc_params, DT)


def test_baseline_uses_measured_disturbance(cfg, hess_point):
    x, refs, d = hess_point
    u, st = dc_control.baseline_bs_step(x, refs, d, cfg.aob_gains, cfg.dc_params, DT)
    assert (st.d1_hat, st.d2_hat, st.d3_hat, st.d4_hat) == (d.d1, d.d2, d.d3, d.d4)
    assert len(u) == 3


def test_aob_lyapunov_is_nonnegative(cfg, hess_point):
    x, refs, d = hess_point
    st = AobState(d1_hat=d.d1 + 0.5, d2_hat=d.d2, d3_hat=d.d3, d4_hat=d.d4)
    v = dc_control.aob_lyapunov(x, refs, st, d, cfg.aob_gains, cfg.dc_params)
    assert v >= 0.25 / (2 * cfg.aob_gains.gamma1)


def test_pvbat_backstepping_holds_equilibrium(cfg, pvbat_point):
    x, u_eq, refs, D = pvbat_point
    u = dc_control.bs_pvbat_step(x, refs, D, cfg.pvbat_gains, cfg.dc_params)
    assert u[0] == pytest.approx(u_eq[0], abs=1e-9)
    assert u[1] == pytest.approx(u_eq[1], abs=1e-9)


def test_adaptive_pvbat_keeps_load_estimate_nonnegative(cfg, pvbat_point):
    x, _, refs, D = pvbat_point
    x = x.copy()
    x[5] += 5.0
    st = PvBatObserverState(D1_hat=D.D1, D2_hat=D.D2, D3_hat=0.0)
    _, nxt = dc_control.abs_pvbat_step(x, refs, st, cfg.pvbat_gains, cfg.dc_params, DT)
    assert nxt.D3_hat == 0.0


def test_rbf_peak_at_center():
    phi = dc_control.rbf_eval([0.5], [[0.0], [0.5], [1.0]], [0.2, 0.2, 0.2])
    assert phi[1] == pytest.approx(1.0)
    assert phi[0] == pytest.approx(math.exp(-0.25 / 0.08))


def test_rbf_rejects_non_positive_width():
    with pytest.raises(ValueError):
        dc_control.rbf_eval([0.0], [[0.0]], [0.0])


def test_anc_layers_cover_boxes(cfg):
    layers = dc_control.build_anc_layers(cfg.anc)
    assert len(layers) == 6
    for (lo, hi), layer in zip(cfg.anc.boxes, layers):
        assert layer.centers.shape == (cfg.anc.nodes, 1)
        assert layer.centers[0, 0] == lo and layer.centers[-1, 0] == hi
        assert np.all(layer.widths > 0)


def test_anc_step_bounds_and_adaptation(cfg, pvbat_point):
    x, _, refs, _ = pvbat_point
    x = x.copy()
    x[0] += 1.0
    layers = dc_control.build_anc_layers(cfg.anc)
    u, st = dc_control.anc_step(x, refs, AncState(), cfg.anc, layers, DT)
    lo, hi = ControlConstants.ANC_DUTY_MIN, ControlConstants.ANC_DUTY_MAX
    assert all(lo <= v <= hi for v in u)
    assert np.all(st.theta >= 0.0)
    assert st.theta[0] > 0.0


def test_anc_theta_bound(cfg):
    bound = dc_control.anc_theta_bound(0, cfg.anc, 2.0, 4.0)
    assert bound == pytest.approx(cfg.anc.gamma[0] * 8.0 / (2 * cfg.anc.eta[0] ** 2 * cfg.anc.p[0]))


def test_uub_bound_requires_gain_above_half():
    with pytest.raises(ValueError):
        dc_control.uub_error_bound(0.5, 0.1, 50.0, 0.5, 0.1, 1.0, 0.1, 1.0, 1.0)
    assert dc_control.uub_error_bound(1.0, 0.1, 50.0, 0.5, 0.1, 1.0, 0.1, 1.0, 1.0) > 0.0


def test_aob_lyapunov_vanishes_at_matched_equilibrium(cfg, hess_point):
    x, refs, d = hess_point
    st = AobState(d1_hat=d.d1, d2_hat=d.d2, d3_hat=d.d3, d4_hat=d.d4)
    assert cfg.aob_gains.alpha8_form == "compact"
    v = dc_control.aob_lyapunov(x, refs, st, d, cfg.aob_gains, cfg.dc_params)
    assert v == pytest.approx(0.0, abs=1e-9)


def test_anc_uub_bounds_follow_configured_gain(cfg):
    theta = [0.2] * 6
    bounds = dc_control.anc_uub_bounds(cfg.anc, theta, 1e-4, 1.0)
    a = cfg.anc
    assert bounds[0] == pytest.approx(dc_control.uub_error_bound(
        a.k[0], a.p[0], a.gamma[0], a.eta[0], a.uub_eps, 0.2, a.uub_a, 1e-4, 1.0))
    soft = dc_control.anc_uub_bounds(cfg.anc.model_copy(update={"k": [2.0] * 6}), theta, 1e-4, 1.0)
    assert soft[0] > bounds[0]
    with pytest.raises(ValueError):
        dc_control.anc_uub_bounds(cfg.anc.model_copy(update={"k": [0.5] * 6}), theta, 1e-4, 1.0)
