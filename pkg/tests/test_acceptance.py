"""End-to-end acceptance checks, one test per criterion.

Each test prints a PASS/FAIL line; the session summary repeats them in order.
Run alone with ``pytest tests/test_acceptance.py -v -s``.
"""

import math
from fractions import Fraction

import numpy as np
import pytest

from layer_oracle import cylinder_probability, exact_distribution, layer_outcomes, random_simplex
from spikewalk.circuits import (Platform, build_probability_tree, compile_mesh, compress_tree_to_layer,
                                realized_chain, simulate_density)
from spikewalk.cost import (Kind, PlatformParams, advantage_report, default_cpu, default_neural, predict_energy,
                            predict_time)
from spikewalk.dtmc import SdeCoefficients, StateSpace, assemble_chain, euler_maruyama_paths, sample_density, snap_to_grid
from spikewalk.fk import fit_decay_rate
from spikewalk.geometry import build_barbell_mesh, build_geodesic_sphere
from spikewalk.pipeline import estimate_run, mean_percent_error, simulate_problem
from spikewalk.problems import boltzmann_problem, fluence_problem, sphere_heat_problem, torus_diffusion_problem
from spikewalk.spiking import Network, tg_neuron


def verdict(request, ok: bool, detail: str) -> None:
    number, title = request.node.get_closest_marker("criterion").args
    request.node.user_properties.append(("detail", detail))
    print(f"\n{'PASS' if ok else 'FAIL'} {number:2d} {title}: {detail}")
    assert ok, detail


@pytest.mark.criterion(1, "Boltzmann analytic reproduction")
def test_boltzmann_matches_closed_form(request):
    prob = boltzmann_problem()
    fractions = []
    for seed in range(10):
        est = estimate_run(prob, simulate_problem(prob, "TRUENORTH", 10_000, 200, seed))
        err = np.abs(est.oracle_errors(prob.oracle))[1:]
        assert err.size == 400
        fractions.append(np.mean(err <= 0.10))
    med = float(np.median(fractions))
    verdict(request, med >= 0.95, f"median fraction of (t, state) points within 0.10 = {med:.3f} (TrueNorth mesh)")


@pytest.mark.criterion(2, "Quantization bit-exactness")
def test_truenorth_chain_is_exact(request):
    q = realized_chain(boltzmann_problem().chain, Platform.TRUENORTH).dense()
    ok = np.array_equal(q, np.array([[250, 6], [6, 250]]) / 256)
    verdict(request, ok, f"quantized rows x 256 = {(q * 256).tolist()}")


@pytest.mark.criterion(3, "Spiking vs reference equivalence")
def test_spiking_mesh_matches_reference(request):
    prob = torus_diffusion_problem(21, 1000)
    chain = realized_chain(prob.chain, Platform.LOIHI)
    mesh = compile_mesh(prob.chain, Platform.LOIHI)
    spikes = simulate_density(mesh, {220: 1000}, 1000, seed=11)
    ref = sample_density(chain, {220: 1000}, 1000, seed=12)
    conserved = bool(np.all(spikes.counts.sum(axis=1) == 1000) and np.all(ref.counts.sum(axis=1) == 1000))
    P = chain.dense()
    row = np.eye(441)[220]
    worst = 0.0
    ok = conserved
    for k in range(1, 1001):
        row = row @ P
        if k % 100:
            continue
        sigma = np.sqrt(2 * 1000 * row * (1 - row))
        diff = np.abs(spikes.counts[k] - ref.counts[k]).astype(float)
        ok &= bool(np.all(diff[sigma == 0] == 0) and np.all(diff[sigma > 0] < 5 * sigma[sigma > 0]))
        worst = max(worst, float(np.max(diff[sigma > 0] / sigma[sigma > 0])))
    verdict(request, ok, f"worst |diff|/sigma over 10 checkpoints = {worst:.2f}, walkers conserved = {conserved}")


@pytest.mark.criterion(4, "Probability-tree exactness")
def test_probability_tree_enumeration(request):
    worst = Fraction(0)
    ok = True
    for N in (2, 4, 8, 16):
        rng = np.random.default_rng(1000 + N)
        for _ in range(100):
            nu = random_simplex(rng, N)
            tree = build_probability_tree(nu)
            net = Network()
            gen = net.add(tg_neuron(1), "gen")
            _, frag = compress_tree_to_layer(tree, gen, net)
            live, leaves, pats, fired = layer_outcomes(tree, frag, net, gen)
            ok &= bool(np.all(fired.sum(axis=1) == 1))
            q = tree.quantized_cond()
            if len(live) <= 8:
                exact = exact_distribution(tree, live, leaves, pats, fired, tree.cond)
                quant = exact_distribution(tree, live, leaves, pats, fired, q)
            else:
                exact = {l: cylinder_probability(tree, live, leaves, pats, fired, l, tree.cond) for l in leaves}
                quant = {l: cylinder_probability(tree, live, leaves, pats, fired, l, q) for l in leaves}
            for i, v in enumerate(nu):
                ok &= exact.get(i, Fraction(0)) == v
                worst = max(worst, abs(quant.get(i, Fraction(0)) - v))
    ok &= worst <= Fraction(1, 256)
    verdict(request, ok, f"400 simplices exact before quantization; worst error after = {float(worst) * 256:.3f}/256")


@pytest.mark.criterion(5, "Sphere heat eigen-decay")
def test_sphere_eigen_decay(request):
    prob = sphere_heat_problem()
    run = simulate_problem(prob, "LOIHI", 3000, 30, seed=5)
    conserved = all(np.all(d.counts.sum(axis=1) == 3000) for d in run.densities.values())
    est = estimate_run(prob, run)
    w, g = prob.weights, prob.g
    proj = est.values @ (w * g) / np.sum(w * g * g)
    t = est.times
    window = (t >= 0.5 - 1e-9) & (t <= 3 + 1e-9)
    rate = fit_decay_rate(t[window], proj[window])
    # projection error against exp(-t), moving average over 5 steps, from t = 1 on
    err = np.abs(proj - np.exp(-t))
    smooth = np.convolve(err, np.ones(5) / 5, mode="valid")
    tail = smooth[t[2:-2] >= 1 - 1e-9]
    falling = bool(np.all(np.diff(tail) <= 0))
    ok = abs(rate - 1) <= 0.1 and conserved and falling
    verdict(request, ok, f"fitted rate = {rate:.4f}, mass conserved = {conserved}, "
                         f"smoothed error non-increasing on [1, 3] = {falling}")


@pytest.mark.slow
@pytest.mark.criterion(6, "Fluence convergence trend")
def test_fluence_error_falls_with_walkers(request):
    prob = fluence_problem()
    baseline = estimate_run(prob, simulate_problem(prob, "REFERENCE", 100_000, None, seed=2024)).values[0]
    errors = {256: [], 6250: []}
    for seed in range(5):
        for M in errors:
            est = estimate_run(prob, simulate_problem(prob, "LOIHI", M, None, seed=seed)).values[0]
            errors[M].append(mean_percent_error(est, baseline))
    lo, hi = np.median(errors[256]), np.median(errors[6250])
    verdict(request, hi < lo, f"median mean percent error: 256 walkers = {lo:.2f}%, 6250 walkers = {hi:.2f}%")


@pytest.mark.criterion(7, "Moment matching")
def test_constant_coefficient_moments(request):
    a, b, dt, M = 1.0, 0.5, 0.01, 100_000
    # bin centres on a 0.01 lattice through zero; stencil wide enough for 6 sigma per step
    space = StateSpace.grid(-6.005, 7.005, 1301, radius=60)
    chain = assemble_chain(SdeCoefficients(drift=lambda t, x: b, diffusion=lambda t, x: a), space, dt)
    start = int(np.argmin(np.abs(space.points)))
    dens = sample_density(chain, {start: M}, 100, seed=7)
    ok, parts = True, []
    for k in (10, 100):
        x = np.repeat(space.points, dens.counts[k])
        mean, var = x.mean(), x.var(ddof=1)
        se_mean = math.sqrt(var / M)
        c = x - mean
        se_var = math.sqrt((np.mean(c**4) - var**2) / M)
        zm = abs(mean - b * k * dt) / se_mean
        zv = abs(var - a**2 * k * dt) / se_var
        ok &= zm <= 4 and zv <= 4
        parts.append(f"k={k}: mean z={zm:.2f}, variance z={zv:.2f}")
    verdict(request, ok, "; ".join(parts))


@pytest.mark.criterion(8, "Snapping bound")
def test_snapping_bound(request):
    space = StateSpace.grid(-5, 5, 50)
    coeffs = SdeCoefficients(drift=lambda t, x: 0.2, diffusion=lambda t, x: 0.5)
    worst = 0.0
    for seed in range(100):
        X = euler_maruyama_paths(coeffs, 0.0, 200, 20, 0.05, seed)[:, -1]
        worst = max(worst, abs(float(np.mean(snap_to_grid(space, X)) - np.mean(X))))
    verdict(request, worst <= space.dx / 2, f"worst |snapped - raw| mean = {worst:.4f} vs dx/2 = {space.dx / 2:.4f}")


@pytest.mark.criterion(9, "Cost model")
def test_cost_model(request):
    rng = np.random.default_rng(9)
    ok = True
    platforms = [default_cpu(8), default_neural(441, 128), PlatformParams(Kind.VN, 3, 2e-8, 5e-7)]
    for p in platforms:
        for _ in range(50):
            W, S, P = (int(v) for v in rng.integers(1, 10**6, 3))
            t = [predict_time(p, k * W, S) for k in (1, 2, 3)]
            ok &= math.isclose(t[2] - 2 * t[1] + t[0], 0, abs_tol=1e-9 * t[2])
            s = [predict_time(p, W, k * S) for k in (1, 2, 3)]
            ok &= math.isclose(s[2] - 2 * s[1] + s[0], 0, abs_tol=1e-9 * s[2])
            other = PlatformParams(p.kind, P, p.time_per_update, p.energy_per_update, p.mesh_size)
            ok &= predict_energy(other, W, S) == predict_energy(p, W, S)
    flags, bands = [], None
    for end in ("low", "high"):
        r = advantage_report(default_cpu(), default_neural(band_end=end), 1000, 10**5, K=441)
        flags.append(r.neuromorphic_advantage)
        bands = r.bands
    cpu_lo, cpu_hi = bands["cpu_updates_per_joule"]
    nmc_lo, nmc_hi = bands["nmc_updates_per_joule"]
    brackets = (math.isclose(cpu_lo, 2.5e6) and math.isclose(cpu_hi, 3e6)
                and math.isclose(nmc_lo, 6e7) and math.isclose(nmc_hi, 2.5e8))
    ok &= all(flags) and brackets
    verdict(request, ok, f"linear and core-invariant; advantage flags = {flags}; "
                         f"bands CPU [{cpu_lo:.3g}, {cpu_hi:.3g}], NMC [{nmc_lo:.3g}, {nmc_hi:.3g}]")


@pytest.mark.criterion(10, "Mesh counts")
def test_mesh_counts(request):
    sphere = build_geodesic_sphere()
    deg = np.array([len(a) for a in sphere.adjacency])
    barbell = build_barbell_mesh()
    split = (int((deg == 12).sum()), int((deg == 13).sum()))
    tri = barbell.meta["triangles_per_sphere"]
    ok = sphere.size == 320 and split == (60, 260) and barbell.size == 748 and tri == 314
    ok &= barbell.kinds.count("rectangle") == 120
    verdict(request, ok, f"sphere {sphere.size} triangles split {split}; barbell {barbell.size} = 2 x {tri} + "
                         f"{barbell.kinds.count('rectangle')}")
