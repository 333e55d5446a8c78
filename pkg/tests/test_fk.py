import itertools
import json
import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from spikewalk.dtmc import DomainError, TransitionModel, sample_density, sample_paths
from spikewalk.ensembles import DensitySeries, PathEnsemble
from spikewalk.fk import (ContractError, Estimate, IncompleteEnsembleError, density_estimates, estimate_from_density,
                          estimate_initial_value, estimate_stopped, fit_decay_rate, path_weights, standard_error,
                          write_solution_csv)
from spikewalk.problems import boltzmann_oracle, boltzmann_problem


def test_standard_error_examples():
    assert standard_error([2.0, 2.0, 2.0]) == 0.0
    assert standard_error([0.0, 2.0]) == 1.0
    base = np.array([1.0, 3.0, 4.0, 8.0])
    quad = np.tile(base, 4)
    # same unbiased variance at four times the size: rescale the spread
    quad = quad.mean() + (quad - quad.mean()) * math.sqrt(base.var(ddof=1) / quad.var(ddof=1))
    assert math.isclose(standard_error(quad), standard_error(base) / 2, rel_tol=1e-12)
    with pytest.raises(DomainError):
        standard_error([1.0])


def test_plain_mean_without_weights():
    paths = PathEnsemble(0, 0.1, np.array([[0, 1, 2], [0, 2, 2], [0, 0, 1]]))
    g = np.array([1.0, 10.0, 100.0])
    est = estimate_initial_value(paths, g)
    assert est.value == np.mean([100.0, 100.0, 10.0])
    assert est.sample_count == 3


def test_boltzmann_at_zero_is_initial_condition():
    prob = boltzmann_problem()
    paths = sample_paths(prob.chain, 1, 100, 0, seed=0)
    est = estimate_initial_value(paths, prob.g, prob.c_const)
    assert est.value == 5.0 and est.stderr == 0.0


def test_boltzmann_at_one():
    prob = boltzmann_problem()
    paths = sample_paths(prob.chain, 1, 10_000, 100, seed=3)
    est = estimate_initial_value(paths, prob.g, prob.c_const)
    exact = 4 * math.exp(-0.5) + math.exp(-5.5)
    assert abs(exact - 2.4302) < 1e-4
    assert abs(est.value - exact) <= 4 * est.stderr


def test_left_endpoint_sums():
    paths = PathEnsemble(0, 0.5, np.array([[0, 1, 1]]))
    c = np.array([-1.0, -2.0])
    w = path_weights(paths, c, 2)
    assert np.allclose(w, [[1.0, math.exp(-0.5), math.exp(-1.5)]])
    f = np.array([3.0, 7.0])
    est = estimate_initial_value(paths, np.zeros(2), c, f)
    assert math.isclose(est.value, (3.0 * 1 + 7.0 * math.exp(-0.5)) * 0.5)


@settings(max_examples=25)
@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 1000))
def test_linearity(a, b, seed):
    prob = boltzmann_problem()
    paths = sample_paths(prob.chain, 0, 50, 20, seed=seed)
    g1, g2 = np.array([1.0, 4.0]), np.array([-2.0, 0.5])
    lhs = estimate_initial_value(paths, a * g1 + b * g2, -0.5).value
    rhs = a * estimate_initial_value(paths, g1, -0.5).value + b * estimate_initial_value(paths, g2, -0.5).value
    assert math.isclose(lhs, rhs, rel_tol=1e-12, abs_tol=1e-12)


def test_weights_in_unit_interval_for_nonpositive_c():
    prob = boltzmann_problem()
    paths = sample_paths(prob.chain, 0, 30, 50, seed=1)
    w = path_weights(paths, lambda t, s: -0.5 - 0.1 * s, 50)
    assert np.all((w > 0) & (w <= 1))


def test_stopped_examples():
    dt = 0.01
    f = np.array([0.0, 3.0, 0.0])
    # state 0 outside the source, state 1 inside, state 2 absorbing
    never = PathEnsemble(0, dt, np.array([[0, 0, 2, 2]]), np.array([2]))
    assert estimate_stopped(never, 0.0, f).value == 0.0
    inside = PathEnsemble(1, dt, np.array([[1, 1, 1, 2]]), np.array([3]))
    assert math.isclose(estimate_stopped(inside, 0.0, f).value, 3 * 3 * dt)
    chain = TransitionModel([sp.csr_array([[0.0, 1.0], [0.0, 1.0]])], dt, absorbing_id=1)
    paths = sample_paths(chain, 0, 20, 1, seed=0, stop={1})
    assert estimate_stopped(paths, 0.0, np.array([1.0, 0.0])).value == dt
    with pytest.raises(IncompleteEnsembleError):
        estimate_stopped(PathEnsemble(0, dt, np.array([[0, 0]]), np.array([-1])), 0.0, f)


def test_stopped_density_matches_paths():
    chain = TransitionModel([sp.csr_array([[0.5, 0.3, 0.2], [0.2, 0.5, 0.3], [0.0, 0.0, 1.0]])], 0.1, absorbing_id=2)
    f = np.array([1.0, 4.0, 0.0])
    g = np.array([0.0, 0.0, 2.0])
    paths = sample_paths(chain, 0, 500, 10, seed=4, stop={2}, until_stopped=True)
    dens = sample_density(chain, {0: 500}, None, seed=4)
    a = estimate_stopped(paths, g, f, speed_scale=2.0)
    b = estimate_stopped(dens, g, f, speed_scale=2.0, outside=[2])
    assert math.isclose(a.value, b.value, rel_tol=1e-12)
    with pytest.raises(DomainError):
        estimate_stopped(dens, g, f)


def test_density_estimate_degenerate_cases():
    d = DensitySeries(0.5, np.array([[0, 7, 0], [0, 7, 0]]))
    est = estimate_from_density(d, np.array([1.0, 2.0, 3.0]), -0.1)
    assert math.isclose(est.value, math.exp(-0.05) * 2.0)
    assert est.stderr == 0.0
    d = DensitySeries(0.1, np.tile([[3, 5]], (101, 1)))
    assert math.isclose(estimate_from_density(d, 1.0, -0.05).value, math.exp(-0.5), rel_tol=1e-12)
    with pytest.raises(ContractError):
        estimate_from_density(d, 1.0, lambda t, s: -s)


def test_density_equals_enumerated_paths():
    # quarter probabilities keep the expected density integral at M = 4^steps
    P = np.array([[0.5, 0.25, 0.25], [0.0, 0.75, 0.25], [0.25, 0.25, 0.5]])
    steps, M, c, dt = 4, 256, -0.3, 0.2
    g = np.array([2.0, -1.0, 5.0])
    counts = [M * np.eye(3)[0]]
    for _ in range(steps):
        counts.append(counts[-1] @ P)
    dens = DensitySeries(dt, np.rint(counts).astype(int))
    vals, _ = density_estimates(dens, g, c)
    for i in range(steps + 1):
        exact = 0.0
        for path in itertools.product(range(3), repeat=i):
            p, s = 1.0, 0
            for x in path:
                p *= P[s, x]
                s = x
            exact += p * g[s] * math.exp(c * i * dt)
        assert math.isclose(vals[i], exact, rel_tol=1e-12)


def test_density_and_paths_agree_on_samples():
    prob = boltzmann_problem()
    paths = sample_paths(prob.chain, 0, 300, 40, seed=9)
    dens = paths.density(2)
    a = estimate_initial_value(paths, prob.g, prob.c_const)
    b = estimate_from_density(dens, prob.g, prob.c_const)
    assert math.isclose(a.value, b.value, rel_tol=1e-12)
    assert math.isclose(a.stderr, b.stderr, rel_tol=1e-9)


def test_more_walkers_reduce_error():
    prob = boltzmann_problem()
    t = np.arange(201) * prob.dt
    exact = boltzmann_oracle(t)

    def max_err(M, seed):
        out = []
        for s in (0, 1):
            d = sample_density(prob.chain, {s: M}, 200, seed)
            v, _ = density_estimates(d, prob.g, prob.c_const)
            out.append(np.abs(v - exact[:, s]).max())
        return max(out)

    small = np.median([max_err(100, s) for s in range(20)])
    large = np.median([max_err(10_000, s + 100) for s in range(20)])
    assert large < small


def test_exports(tmp_path):
    Estimate(1.5, 0.1, 10, 0.2).save(tmp_path / "e.json")
    assert json.loads((tmp_path / "e.json").read_text()) == {"value": 1.5, "stderr": 0.1, "M": 10, "t": 0.2}
    write_solution_csv(tmp_path / "s.csv", np.array([1.0, 2.0]), None, np.array([[0.1, 0.2], [0.3, 0.4]]))
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "state_id,x0,x1,value,stderr"
    assert lines[2].startswith("1,0.3,0.4,2.0,")


def test_fit_decay_rate():
    t = np.linspace(0, 3, 30)
    assert math.isclose(fit_decay_rate(t, 2 * np.exp(-1.3 * t)), 1.3, rel_tol=1e-12)
    with pytest.raises(DomainError):
        fit_decay_rate(t, -np.ones(30))
