import numpy as np
import pytest

from patchssl.schedule import (OneCycleConfig, dump_csv, for_total, lr_at,
                               momentum_at, schedule_table)


@pytest.fixture
def cfg():
    return OneCycleConfig(total_iterations=1000, step_size=400)


def test_default_anchor_values(cfg):
    assert lr_at(cfg, 0) == 0.000055
    assert lr_at(cfg, cfg.step_size) == 0.00055
    assert lr_at(cfg, 2 * cfg.step_size) == 0.000055
    assert lr_at(cfg, cfg.total_iterations - 1) == cfg.final_lr
    assert cfg.final_lr == 0.000055 / 100


def test_momentum_anchor_values(cfg):
    assert momentum_at(cfg, 0) == 0.95
    assert momentum_at(cfg, cfg.step_size) == 0.85
    assert momentum_at(cfg, 600) == pytest.approx(0.90, rel=1e-12)  # 1.5 * step


def test_out_of_range_iteration_rejected(cfg):
    with pytest.raises(ValueError):
        lr_at(cfg, -1)
    with pytest.raises(ValueError):
        lr_at(cfg, cfg.total_iterations)
    with pytest.raises(ValueError):
        momentum_at(cfg, cfg.total_iterations)


def test_continuity_at_segment_boundaries(cfg):
    table = schedule_table(cfg)
    lrs = np.array([row[1] for row in table])
    # no jump anywhere close to the within-segment slope scale
    max_ramp_step = (cfg.lr_max - cfg.lr_min) / cfg.step_size
    assert np.max(np.abs(np.diff(lrs))) <= max_ramp_step * (1 + 1e-12)


def test_bounds_hold_everywhere(cfg):
    for t, lr, mom in schedule_table(cfg):
        assert cfg.final_lr <= lr <= cfg.lr_max
        assert cfg.momentum_low <= mom <= cfg.momentum_high


def test_lr_momentum_anticorrelated_on_ramps(cfg):
    table = schedule_table(cfg)
    for (t0, lr0, m0), (t1, lr1, m1) in zip(table, table[1:]):
        if t1 <= 2 * cfg.step_size:
            assert np.sign(lr1 - lr0) == -np.sign(m1 - m0)


def test_invalid_configs_rejected():
    with pytest.raises(ValueError):
        OneCycleConfig(total_iterations=100, step_size=50)  # cycle not < total
    with pytest.raises(ValueError):
        OneCycleConfig(total_iterations=100, step_size=40, lr_max=0.1, lr_min=0.2)
    with pytest.raises(ValueError):
        OneCycleConfig(total_iterations=100, step_size=40,
                       momentum_high=0.85, momentum_low=0.95)


def test_for_total_respects_cycle_constraint():
    for total in (3, 5, 7, 35, 1000):
        c = for_total(total)
        assert 2 * c.step_size < c.total_iterations == total


def test_dump_csv_shape_and_metadata():
    cfg = OneCycleConfig(total_iterations=300, step_size=100)
    text = dump_csv(cfg, metadata_line="# meta")
    lines = text.strip().split("\n")
    assert lines[0] == "# meta"
    assert lines[1] == "t,lr,momentum"
    assert len(lines) == 302
    row100 = lines[2 + 100].split(",")
    assert float(row100[1]) == 0.00055
