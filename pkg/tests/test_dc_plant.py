import numpy as np
import pytest

from app.core.exceptions import NumericalError
from app.models.plant_models import Atmosphere, HessDisturbance, PvBatDisturbance
from app.services import dc_control, dc_plant

STC = Atmosphere(irradiance=1000.0, temperature=25.0)
LOAD_OHM = 8.0
BUS = 40.0


def test_atmosphere_bounds():
    with pytest.raises(ValueError):
        Atmosphere(irradiance=-1.0, temperature=25.0)
    with pytest.raises(ValueError):
        Atmosphere(irradiance=1000.0, temperature=95.0)


def test_pv_current_decreases_with_voltage(cfg):
    currents = [dc_plant.pv_current(v, STC, cfg.pv_cell) for v in (0.0, 10.0, 20.0, 30.0)]
    assert all(a > b for a, b in zip(currents, currents[1:]))
    assert 8.0 < currents[0] <= cfg.pv_cell.i_sc


def test_pv_current_rejects_negative_voltage(cfg):
    with pytest.raises(NumericalError):
        dc_plant.pv_current(-1.0, STC, cfg.pv_cell)


def test_open_circuit_voltage(cfg):
    v_oc = dc_plant.open_circuit_voltage(STC, cfg.pv_cell)
    assert v_oc > 0.0
    assert abs(dc_plant.pv_curve(STC, cfg.pv_cell).current(v_oc)) < 1e-6
    dark = Atmosphere(irradiance=0.0, temperature=25.0)
    assert dc_plant.open_circuit_voltage(dark, cfg.pv_cell) == 0.0


def test_mpp_is_a_local_power_maximum(cfg):
    v, i, p = dc_plant.mpp_point(STC, cfg.pv_cell)
    assert p == pytest.approx(v * i)
    for shifted in (0.95 * v, 1.05 * v):
        assert shifted * dc_plant.pv_current(shifted, STC, cfg.pv_cell) < p


def test_mpp_voltage_falls_with_temperature(cfg):
    cool = dc_plant.mpp_point(Atmosphere(1000.0, 0.0), cfg.pv_cell)[0]
    hot = dc_plant.mpp_point(Atmosphere(1000.0, 75.0), cfg.pv_cell)[0]
    assert hot < cool


def _hess_operating_point(cfg):
    params = cfg.dc_params
    v_mpp, i_mpp, _ = dc_plant.mpp_point(STC, cfg.pv_cell)
    refs = dc_control.secondary_refs_hess(BUS, v_mpp, i_mpp, params.v_b, LOAD_OHM, params)
    d = HessDisturbance(d1=i_mpp, d2=params.v_b, d3=params.u_c0, d4=1.0 / LOAD_OHM)
    x, u = dc_plant.hess_equilibrium(refs, d, params)
    return x, u, d


def test_hess_equilibrium_is_stationary(cfg):
    x, u, d = _hess_operating_point(cfg)
    rates = dc_plant.hess_derivatives(x, u, d, cfg.dc_params)
    assert np.allclose(rates, 0.0, atol=1e-6)
    assert x[8] == pytest.approx(BUS)


def test_hess_energy_balance_at_steady_state(cfg):
    x, u, d = _hess_operating_point(cfg)
    sources, sinks = dc_plant.energy_balance(x, u, d, cfg.dc_params)
    assert sources == pytest.approx(sinks, rel=1e-9)


def test_steady_state_solver_returns_to_equilibrium(cfg):
    x, u, d = _hess_operating_point(cfg)
    root = dc_plant.steady_state(u, d, cfg.dc_params, x * 1.01)
    assert np.allclose(root, x, atol=1e-6)


def test_pvbat_equilibrium_is_stationary(cfg):
    params = cfg.dc_params
    v_mpp, i_mpp, _ = dc_plant.mpp_point(STC, cfg.pv_cell)
    refs = dc_control.secondary_refs_pvbat(BUS, v_mpp, i_mpp, params.v_b, LOAD_OHM, params)
    x, u = dc_plant.pvbat_equilibrium(refs, params)
    D = PvBatDisturbance(D1=i_mpp / params.c_pvi, D2=params.v_b / params.l_b,
                         D3=1.0 / (params.c_l * LOAD_OHM))
    rates = dc_plant.pvbat_derivatives(x, u, D, params)
    assert np.allclose(rates, 0.0, atol=1e-6)
    assert all(0.0 < v < 1.0 for v in u)


def test_supercap_without_leakage_integrates_current(cfg):
    params = cfg.dc_params.model_copy(update={"r_p": None})
    u_next, v_out = dc_plant.supercap_step(48.0, 2.0, params, 0.01)
    assert u_next == pytest.approx(48.0 + 0.01 * 2.0 / params.c_sc)
    assert v_out == pytest.approx(u_next + 2.0 * params.r_s_sc)


def test_supercap_leaks_without_current(cfg):
    u_next, _ = dc_plant.supercap_step(48.0, 0.0, cfg.dc_params, 1.0)
    assert u_next < 48.0


def test_supercap_rejects_bad_step(cfg):
    with pytest.raises(NumericalError):
        dc_plant.supercap_step(48.0, 0.0, cfg.dc_params, 0.0)


def test_mpp_at_standard_conditions(cfg):
    v, i, p = dc_plant.mpp_point(STC, cfg.pv_cell)
    assert v == pytest.approx(26.31, abs=0.05)
    assert p == pytest.approx(199.8, abs=1.0)


def test_pv_current_rises_with_irradiance(cfg):
    dim = Atmosphere(irradiance=800.0, temperature=25.0)
    for v in (0.0, 15.0, 25.0):
        assert dc_plant.pv_current(v, dim, cfg.pv_cell) < dc_plant.pv_current(v, STC, cfg.pv_cell)


def test_supercap_leak_follows_rc_decay(cfg):
    params = cfg.dc_params.model_copy(update={"c_sc": 1.0, "r_p": 2.0})
    u_c = 48.0
    for _ in range(20):
        u_c, _ = dc_plant.supercap_step(u_c, 0.0, params, 0.1)
    assert u_c == pytest.approx(48.0 * np.exp(-1.0), rel=1e-6)


def test_supercap_settles_at_current_times_leak_resistance(cfg):
    params = cfg.dc_params.model_copy(update={"c_sc": 1.0, "r_p": 2.0})
    assert dc_plant.supercap_rate(3.0 * 2.0, 3.0, params) == pytest.approx(0.0, abs=1e-12)
    assert dc_plant.supercap_rate(5.0, 3.0, params) > 0.0


def test_hess_model_is_affine_in_duty(cfg):
    x, _, d = _hess_operating_point(cfg)
    dv = (d.d1, d.d2, d.d3, d.d4)
    zero = np.array(dc_plant.hess_rates(x, (0.0, 0.0, 0.0), dv, cfg.dc_params))

    def drive(u):
        return np.array(dc_plant.hess_rates(x, u, dv, cfg.dc_params)) - zero

    ua, ub = np.array([0.2, 0.1, 0.3]), np.array([0.1, 0.4, 0.05])
    assert np.allclose(drive(ua + ub), drive(ua) + drive(ub), rtol=1e-9, atol=1e-6)
    assert np.allclose(drive(2.5 * ua), 2.5 * drive(ua), rtol=1e-9, atol=1e-6)


def test_pvbat_model_is_affine_in_duty(cfg):
    x = np.array([26.0, 40.0, 7.5, 20.0, 40.0, 40.0])
    dv = (1000.0, 1000.0, 50.0)
    zero = np.array(dc_plant.pvbat_rates(x, (0.0, 0.0), dv, cfg.dc_params))

    def drive(u):
        return np.array(dc_plant.pvbat_rates(x, u, dv, cfg.dc_params)) - zero

    ua, ub = np.array([0.3, 0.1]), np.array([0.2, 0.6])
    assert np.allclose(drive(ua + ub), drive(ua) + drive(ub), rtol=1e-9, atol=1e-6)
    assert np.allclose(drive(2.5 * ua), 2.5 * drive(ua), rtol=1e-9, atol=1e-6)
