from types import SimpleNamespace

import numpy as np
import pytest

from app.core.exceptions import ConfigError
from app.services import ac_feeder


@pytest.mark.parametrize("feeder,key,atol", [
    ("ch4-a1", "ch4_a1", 0.01),
    ("ch4-a2", "ch4_a2", 0.01),
    ("ch5-a1", "ch5_a1", 0.02),
    ("ch5-a2", "ch5_a2", 0.02),
])
def test_feeder_rebuilds_published_state_matrix(cfg, feeder, key, atol):
    built = ac_feeder.build_feeder(cfg.feeders[feeder]).a
    printed = np.array(cfg.published.matrices[key])
    assert np.allclose(built, printed, atol=atol)


def test_feeder_input_matrix_close_to_published(cfg):
    system = ac_feeder.build_feeder(cfg.feeders["ch5-a1"])
    assert system.b.shape == (4, 4)
    assert np.max(np.abs(system.b - np.array(cfg.published.matrices["ch5_b1"]))) <= 0.5
    assert np.array_equal(system.c, np.eye(4))


def test_feeder_blocks_shape(cfg):
    t, t1, t2, t3 = ac_feeder.feeder_blocks(cfg.feeders["nominal"])
    assert t.shape == t1.shape == t2.shape == t3.shape == (4, 4)
    assert np.array_equal(t2, -t1)


def test_closed_loop_dimension_check():
    with pytest.raises(ValueError):
        ac_feeder.closed_loop(np.eye(3), np.eye(3), np.eye(2))


def test_zero_delay_is_plain_closed_loop(cfg):
    system = ac_feeder.build_feeder(cfg.feeders["ch4-a2"])
    k = np.array(cfg.published.matrices["ch4_k_delay"])
    assert np.array_equal(ac_feeder.delay_closed_loop(system.a, system.b, k, np.zeros_like(k)),
                          ac_feeder.closed_loop(system.a, system.b, k))


def test_negative_delay_rejected():
    with pytest.raises(ValueError):
        ac_feeder.delay_closed_loop(-np.eye(2), np.eye(2), np.eye(2), -np.ones((2, 2)))


def test_alpha_bound(cfg):
    a = np.array(cfg.published.matrices["ch4_a1"])
    b = ac_feeder.build_feeder(cfg.feeders["ch4-a1"]).b
    d1 = np.array(cfg.published.matrices["d1"])
    d2 = np.array(cfg.published.matrices["d2"])
    assert ac_feeder.alpha_bound(5.0, a, b, np.zeros((4, 4))) == 0.0
    one = ac_feeder.alpha_bound(5.0, a, b, d1)
    assert one > 0.0
    assert ac_feeder.alpha_bound(5.0, a, b, d2) == pytest.approx(2.0 * one)
    with pytest.raises(ValueError):
        ac_feeder.alpha_bound(0.0, a, b, d1)


def test_zone_chart_partitions_sweep(cfg):
    values = [0.3, 1e-4, 0.2, 0.1]
    chart = ac_feeder.zone_chart(cfg.feeders["nominal"], values, 2)
    assert [g[0] for g in chart.grid] == sorted(values)
    assert len(chart.zones) >= 1
    for before, after in zip(chart.zones, chart.zones[1:]):
        assert before.sweep_hi < after.sweep_lo
    covered = 0
    for zone in chart.zones:
        inside = [eig for v, eig in chart.grid if zone.sweep_lo <= v <= zone.sweep_hi]
        covered += len(inside)
        assert zone.worst_max_real == max(inside)
        assert zone.worst_a.shape == (4, 4)
    assert covered == len(values)


def test_zone_chart_splits_non_adjacent_bands(cfg, monkeypatch):
    worst = {1.0: -1.0, 2.0: -5.0, 3.0: -1.2}
    monkeypatch.setattr(ac_feeder, "build_feeder",
                        lambda feeder: SimpleNamespace(a=np.diag([worst[feeder.r_load], -10.0])))
    chart = ac_feeder.zone_chart(cfg.feeders["nominal"], [1.0, 2.0, 3.0], 2)
    assert [(z.sweep_lo, z.sweep_hi) for z in chart.zones] == [(1.0, 1.0), (2.0, 2.0), (3.0, 3.0)]
    assert [z.worst_max_real for z in chart.zones] == [-1.0, -5.0, -1.2]


def test_zone_chart_load_sweep_endpoint(cfg):
    chart = ac_feeder.zone_chart(cfg.feeders["ch4-a1"], [1e-4, 0.1, 0.2, 0.3], 2)
    assert chart.grid[-1][1] == pytest.approx(-18.8524, abs=0.1)
    assert chart.zones[-1].worst_a.shape == (4, 4)


def test_zone_chart_rejects_bad_input(cfg):
    with pytest.raises(ValueError):
        ac_feeder.zone_chart(cfg.feeders["nominal"], [], 2)
    with pytest.raises(ConfigError):
        ac_feeder.zone_chart(cfg.feeders["nominal"], [0.1], 1, parameter="l_c")


def test_delay_oracle_without_delay_matches_exact_flow():
    a = np.array([[0.0, 1.0], [-1.0, -1.0]])
    b = np.eye(2)
    k = -np.eye(2)
    x0 = [1.0, 0.0]
    _, oracle = ac_feeder.simulate_delay_oracle(a, b, k, np.zeros((2, 2)), x0, 0.05, 1e-3)
    _, exact = ac_feeder.simulate_linear(a + b @ k, x0, 0.05, 1e-3)
    assert np.allclose(oracle, exact, atol=1e-9)


def test_simulate_linear_decay():
    t, xs = ac_feeder.simulate_linear([[-1.0]], [1.0], 0.1, 0.01)
    assert len(t) == 11
    assert xs[-1, 0] == pytest.approx(np.exp(-0.1), rel=1e-12)


def test_resolve_matrix(cfg):
    assert ac_feeder.resolve_matrix("feeder:ch4-a1", cfg, "b").shape == (4, 4)
    assert ac_feeder.resolve_matrix("published:d1", cfg).shape == (4, 4)
    for bad in ("ch4_a1", "feeder:nowhere", "published:nothing"):
        with pytest.raises(ConfigError):
            ac_feeder.resolve_matrix(bad, cfg)
    with pytest.raises(ConfigError):
        ac_feeder.resolve_matrix("feeder:ch4-a1", cfg, "c")
