import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from spikewalk.circuits import compile_mesh, simulate_density
from spikewalk.cost import (Kind, PlatformParams, advantage_report,
                            default_cpu, default_neural, effective_parallelism, normalize_ticks, predict_energy,
                            predict_time, scaling_exponent)
from spikewalk.dtmc import DomainError
from spikewalk.problems import torus_diffusion_problem


def test_time_examples():
    vn = PlatformParams(Kind.VN, 4, 1.0, 1.0)
    assert predict_time(vn, 1000, 1e5) == 2.5e7
    assert default_neural(441, 128).parallelism == 128
    assert default_neural(441, 4096).parallelism == 441


@given(st.integers(1, 10**6), st.integers(1, 10**6), st.integers(1, 64))
def test_time_linear_and_energy_core_invariant(W, S, P):
    for p in (PlatformParams(Kind.VN, P, 3e-8, 4e-7), PlatformParams(Kind.NEURAL, P, 1e-6, 1e-8, 441)):
        t = [predict_time(p, k * W, S) for k in (1, 2, 3)]
        assert math.isclose(t[1] - t[0], t[2] - t[1], rel_tol=1e-12)
        assert math.isclose(t[1], 2 * t[0], rel_tol=1e-12)
        assert math.isclose(predict_time(p, W, 3 * S), 3 * t[0], rel_tol=1e-12)
        e = predict_energy(p, W, S)
        doubled = PlatformParams(p.kind, 2 * P, p.time_per_update, p.energy_per_update, p.mesh_size)
        assert predict_energy(doubled, W, S) == e
        assert math.isclose(W * S / e, p.updates_per_joule, rel_tol=1e-12)


def test_bad_inputs():
    with pytest.raises(DomainError):
        PlatformParams(Kind.VN, 0, 1.0, 1.0)
    with pytest.raises(DomainError):
        PlatformParams(Kind.NEURAL, 4, 1.0, 1.0)
    with pytest.raises(DomainError):
        predict_time(default_cpu(), 0, 1)


def test_default_constants_in_bands():
    cpu = default_cpu()
    assert 1 / 3e6 <= cpu.energy_per_update <= 1 / 2.5e6
    assert math.isclose(default_neural(band_end="low").updates_per_joule, 6e7)
    assert math.isclose(default_neural(band_end="high").updates_per_joule, 2.5e8)


def test_identical_platforms_no_advantage():
    p = PlatformParams(Kind.NEURAL, 4, 1e-6, 1e-7, 100)
    r = advantage_report(p, p, 1000, 100)
    assert r.time_ratio == 1 and r.energy_ratio == 1
    assert not r.neuromorphic_advantage


@pytest.mark.parametrize("band", ["low", "high"])
def test_envelope_advantage(band):
    r = advantage_report(default_cpu(), default_neural(band_end=band), 1000, 1e5, K=441)
    assert r.energy_ratio >= 20
    assert r.neuromorphic_advantage
    lo, hi = r.bands["cpu_updates_per_joule"]
    assert lo <= r.updates_per_joule_vn <= hi
    lo, hi = r.bands["nmc_updates_per_joule"]
    assert lo <= r.updates_per_joule_neural <= hi
    assert math.isclose(r.exponent_vn, 1.0) and math.isclose(r.exponent_neural, 1.0)


def test_slow_but_efficient_neural():
    vn = PlatformParams(Kind.VN, 1, 1e-8, 20e-8)
    nn = PlatformParams(Kind.NEURAL, 1, 1e-6, 1e-8, 10)
    r = advantage_report(vn, nn, 500, 100)
    assert math.isclose(r.time_ratio, 100) and math.isclose(r.energy_ratio, 20)
    assert r.neuromorphic_advantage
    super_cpu = PlatformParams(Kind.VN, 1, 1e-8, 1e-9)
    assert not advantage_report(super_cpu, nn, 500, 100).neuromorphic_advantage


def test_report_exports(tmp_path):
    r = advantage_report(default_cpu(), default_neural(), 100, 10)
    r.save(tmp_path / "r.json")
    doc = json.loads((tmp_path / "r.json").read_text())
    assert doc["neuromorphic_advantage"] is True and doc["note"] == "model, not measurement"
    assert "updates/J" in r.table()


def test_scaling_exponent_linear():
    assert math.isclose(scaling_exponent(default_cpu(8), 100, 10), 1.0)


def test_normalize_ticks():
    t = np.array([5, 5, 4, 4, 4, 4, 4, 4, 4, 4.0])
    assert normalize_ticks(t, 5) == 22
    assert normalize_ticks(t, 20) == t.sum() + 10 * 4
    with pytest.raises(DomainError):
        normalize_ticks([], 3)


def test_effective_parallelism_on_torus():
    prob = torus_diffusion_problem(21, 1000)
    mesh = compile_mesh(prob.chain)
    d = simulate_density(mesh, {220: 1000}, 400, seed=0)
    ticks = d.ticks
    c = ticks[0] / 1000  # every walker sits on one node during the first step
    m = effective_parallelism(ticks, 1000, c)
    assert np.all(m <= min(128, 441))
    q = len(m) // 4
    assert m[-q:].mean() > m[:q].mean()
    with pytest.raises(DomainError):
        effective_parallelism([0, 1], 10, 1.0)
