from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from crsfl.config import ResourcesConfig
from crsfl.population import DataShard, Device
from crsfl.resources import (MB, ZERO, ResourceVector, UsageObservation, capacity_filter,
                             expected_usage, model_requirements, read_usage_csv, realize_usage,
                             sample_availability, write_usage_csv)


def _device(i, mem=2048.0, pro=2.0, dis=8192.0, n=100):
    shard = DataShard(np.zeros((n, 2)), 0, np.arange(80), np.arange(80, n))
    return Device(i, 0, ResourceVector(mem, pro, dis), shard)


def test_fits_within_is_componentwise():
    assert ResourceVector(1, 1, 1).fits_within(ResourceVector(1, 1, 1))
    assert not ResourceVector(1, 2, 1).fits_within(ResourceVector(5, 1, 5))


def test_capacity_filter_boundary_is_inclusive():
    devs = [_device(0, mem=100.0), _device(1, mem=99.999)]
    assert capacity_filter(devs, ResourceVector(100.0, 1.0, 1.0)) == {0}


def test_capacity_filter_rejects_negative_requirements():
    with pytest.raises(ValueError):
        capacity_filter([_device(0)], ResourceVector(-1.0, 0.0, 0.0))


def test_capacity_filter_empty_when_requirement_too_large():
    assert capacity_filter([_device(0), _device(1)], ResourceVector(1e9, 0, 0)) == set()


@settings(max_examples=200, deadline=None)
@given(caps=st.lists(st.tuples(st.floats(0, 1e4), st.floats(0, 10), st.floats(0, 1e5)),
                     min_size=1, max_size=20),
       req=st.tuples(st.floats(0, 1e4), st.floats(0, 10), st.floats(0, 1e5)))
def test_capacity_filter_matches_definition(caps, req):
    devs = [_device(i, *c) for i, c in enumerate(caps)]
    r = ResourceVector(*req)
    got = capacity_filter(devs, r)
    want = {i for i, c in enumerate(caps) if all(rv <= cv for rv, cv in zip(req, c))}
    assert got == want


def test_model_requirements_scale_with_model_size():
    cfg = ResourcesConfig()
    r = model_requirements(131072, cfg, 8)
    assert r.mem == pytest.approx(1.0 * cfg.mem_multiplier)
    assert r.dis == pytest.approx(1.0 * cfg.disk_multiplier)
    assert r.pro == cfg.pro_requirement


def test_availability_bounds_and_determinism():
    d = _device(3)
    for k in range(50):
        a = sample_availability(d, k, seed=9)
        for got, cap in zip(a.available, d.capacity):
            assert 0.6 * cap <= got <= cap
        assert a == sample_availability(d, k, seed=9)
    assert sample_availability(d, 0, 9) != sample_availability(d, 1, 9)


def test_availability_floor_one_gives_capacity():
    d = _device(0)
    assert sample_availability(d, 4, 1, floor=1.0).available == d.capacity


def test_availability_negative_round_rejected():
    with pytest.raises(ValueError):
        sample_availability(_device(0), -1, 0)


def test_expected_usage_law():
    cfg = ResourcesConfig(base_mem_mb=1000.0, mem_per_sample_mb=2.0, pro_per_megawork=0.5)
    u = expected_usage(100, 2_000_000, cfg, 8)
    assert u == ResourceVector(1200.0, 100.0, 2_000_000 * 8 / MB)


def test_realize_usage_zero_noise_is_identity():
    p = ResourceVector(10.0, 2.0, 3.0)
    assert realize_usage(p, 0, 1, 2, noise_sd=0.0) == p


def test_realize_usage_zero_vector_stays_zero():
    assert realize_usage(ZERO, 3, 1, 2, noise_sd=0.5) == ZERO


def test_realize_usage_never_negative():
    for k in range(200):
        assert min(realize_usage(ResourceVector(1.0, 1.0, 1.0), k, 0, 0, noise_sd=2.0)) >= 0.0


def test_realize_usage_rejects_negative_sd():
    with pytest.raises(ValueError):
        realize_usage(ZERO, 0, 0, 0, noise_sd=-0.1)


def test_realize_usage_monte_carlo_mean():
    # 10000 keyed draws; with sd 0.1 the standard error of the mean is 0.1%
    p = ResourceVector(1500.0, 0.4, 0.2)
    draws = np.array([realize_usage(p, k % 100, k // 100, 17, 0.1) for k in range(10000)])
    np.testing.assert_allclose(draws.mean(axis=0), np.array(p), rtol=0.01)


def test_usage_csv_roundtrip(tmp_path):
    obs = [UsageObservation(2, 1, ResourceVector(1.5, 0.1, 1 / 3), False),
           UsageObservation(1, 0, ResourceVector(1e3, 2.0, 0.0), True)]
    path = tmp_path / "u.csv"
    write_usage_csv(obs, path)
    assert read_usage_csv(path) == sorted(obs, key=lambda o: (o.device_id, o.round))
