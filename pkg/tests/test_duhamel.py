import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from torobs.clusters import decompose, neighborhoods
from torobs.duhamel import (
    CutoffSpec, NonContractionError, PotentialSpec, cutoff_coefficients, cutoff_fourier,
    cutoff_tail_mass, duhamel_fourier, duhamel_identity_rhs, duhamel_norm, duhamel_quadrature,
    fiber_average, hamiltonian_propagator, hb_norm, k_operator, k_operator_bound, op_P, op_T,
    project_potential, solve_approximate, solve_periodized, t_operator_constant, theta_apply,
)
from torobs.lattice import AffineSublattice, hnf_canonicalize
from torobs.spectral import SpectrumField, free_evolve, l2_norm, project, random_field, xb_norm

SPEC = CutoffSpec()
V1 = PotentialSpec.from_modes(1, {(1,): 0.3, (-1,): 0.3, (2,): 0.1j, (-2,): -0.1j})


def point_value(f, t, x):
    return sum(a * np.exp(1j * (n * t + np.dot(k, x))) for (n, k), a in f.items())


def random_u0(seed, K=3):
    rng = np.random.default_rng(seed)
    return SpectrumField.spatial(1, {(k,): complex(*rng.normal(size=2)) for k in range(-K, K + 1)})


# ---------------------------------------------------------------- Θ, T, P

def test_theta_examples():
    f = SpectrumField(1, {(-1, (1,)): 1.0, (1, (0,)): 2.0, (-3, (1,)): 4.0})
    g = theta_apply(f)
    assert g[(-1, (1,))] == 0
    assert g[(1, (0,))] == 2.0
    assert g[(-3, (1,))] == -2.0


def test_T_and_P_examples():
    f = SpectrumField(1, {(3, (1,)): 1.0, (-2, (1,)): 2j, (-1, (1,)): 5.0})
    assert op_T(f) == SpectrumField.spatial(1, {(1,): 6.0 + 2j})
    assert op_P(f) == SpectrumField.spatial(1, {(1,): 5.0})
    assert op_P(SpectrumField(1, {(3, (1,)): 1.0})).is_zero()
    u0 = random_field(np.random.default_rng(0), 2, (0, 0), 3)
    assert op_P(free_evolve(u0)) == u0


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_T_bound(seed):
    f = random_field(np.random.default_rng(seed), 1, (-8, 8), 3, 0.4)
    assert l2_norm(op_T(f)) <= t_operator_constant(0.6) * xb_norm(f, 0.6) * (1 + 1e-12)


# ---------------------------------------------------------------- cutoffs

def test_cutoff_shape():
    assert SPEC.eta(0.0) == 1.0 and SPEC.eta(SPEC.plateau_half_width) == 1.0
    assert SPEC.eta(SPEC.half_width) == 0.0 and SPEC.eta(3.0) == 0.0
    t = np.linspace(-3, 3, 1001)
    assert np.all(np.diff(SPEC.eta(t[t >= 0])) <= 0)
    with pytest.raises(ValueError):
        CutoffSpec(half_width=4.0)
    with pytest.raises(ValueError):
        CutoffSpec(plateau=1.0)


def test_cutoff_coefficients_against_quad():
    c = cutoff_coefficients(SPEC, "eta")
    ct = cutoff_coefficients(SPEC, "t_eta")
    L = SPEC.fourier_truncation
    tau = SPEC.half_width
    for n in range(6):
        ref = quad(lambda t: SPEC.eta(t) * math.cos(n * t), -tau, tau, limit=200, epsabs=1e-14)[0] / (2 * math.pi)
        assert abs(c[L + n] - ref) < 1e-12
        reft = quad(lambda t: t * SPEC.eta(t) * math.sin(n * t), -tau, tau, limit=200, epsabs=1e-14)[0] / (2 * math.pi)
        assert abs(ct[L + n] - (-1j) * reft) < 1e-12
    assert abs(ct[L]) < 1e-12
    f = cutoff_fourier(SPEC, "eta")
    assert max(abs(a.imag) for _, a in f.items()) <= 1e-12
    assert f.is_temporal()


def test_tail_mass_decreases():
    tails = [cutoff_tail_mass(CutoffSpec(fourier_truncation=L)) for L in (64, 128, 256, 512)]
    assert all(a > b for a, b in zip(tails, tails[1:]))
    assert tails[-1] < 1e-9


# ---------------------------------------------------------------- Duhamel operator

@pytest.mark.parametrize("m,k", [(3, 1), (-2, 2), (1, 0), (5, -1)])
def test_nonresonant_closed_form(m, k):
    f = SpectrumField(1, {(m, (k,)): 1.0})
    w = m + k * k
    assert w != 0
    g = duhamel_fourier(f, SPEC)
    for t in (-0.3, 0.1, 0.35):
        x = 0.7
        ref = -np.exp(1j * k * x) * (np.exp(1j * m * t) - np.exp(-1j * k * k * t)) / w
        assert abs(point_value(g, t, x) - ref) < 1e-8


def test_resonant_closed_form():
    f = SpectrumField(1, {(-4, (2,)): 1.0})
    g = duhamel_fourier(f, SPEC)
    for t in (-0.3, 0.2, 0.39):
        ref = -1j * t * np.exp(1j * (2 * 0.5 - 4 * t))
        assert abs(point_value(g, t, (0.5,)) - ref) < 1e-8


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_kernel_equals_operator_identity(seed):
    f = random_field(np.random.default_rng(seed), 1, (-4, 4), 2, 0.6)
    a = duhamel_fourier(f, SPEC)
    b = duhamel_identity_rhs(f, SPEC)
    assert l2_norm(a - b) <= 1e-12 * l2_norm(a)


def test_kernel_matches_quadrature():
    rng = np.random.default_rng(11)
    for dim, n, kb in [(1, (-4, 4), 2), (2, (-4, 4), 1)]:
        f = random_field(rng, dim, n, kb, 0.6)
        a = duhamel_fourier(f, SPEC)
        b = duhamel_quadrature(f, SPEC)
        assert l2_norm(a - b) <= 1e-6 * l2_norm(b)


def test_far_multiplier_bound():
    rng = np.random.default_rng(5)
    dec = decompose(AffineSublattice.full(1), 1, 20)
    split = neighborhoods(dec)
    far = split.far_set()
    b, R = 0.6, 1
    for eps in (0.05, 0.1, 0.3, 0.6):
        for _ in range(10):
            f = random_field(rng, 1, (-420, 20), 20, 0.05)
            lhs = xb_norm(project(f, far), b - eps)
            assert lhs <= (10 * R) ** (-eps) * xb_norm(f, b)


# ---------------------------------------------------------------- potentials

def test_project_potential_examples():
    V = PotentialSpec.from_modes(2, {(1, 1): 0.5, (-1, -1): 0.5})
    assert project_potential(V, hnf_canonicalize([(1, 1)])).modes() == V.modes()
    assert project_potential(V, hnf_canonicalize([(1, 0)])).modes() == {}
    assert V.is_real()
    assert not PotentialSpec.from_modes(1, {(1,): 1.0}).is_real()


def test_project_potential_norms_and_fiber_average():
    rng = np.random.default_rng(2)
    modes = {}
    for k in [(1, 0), (0, 1), (1, 1), (2, -1), (1, 2)]:
        a = complex(*rng.normal(size=2))
        modes[k] = a
        modes[tuple(-x for x in k)] = a.conjugate()
    V = PotentialSpec.from_modes(2, modes)
    lat = hnf_canonicalize([(1, 1)])
    VL = project_potential(V, lat)
    assert l2_norm(VL.as_field()) <= l2_norm(V.as_field())
    assert np.abs(VL.grid(16)).max() <= np.abs(V.grid(16)).max() + 1e-12
    x = rng.uniform(0, 2 * np.pi, size=(20, 2))
    direct = sum(a * np.exp(1j * x @ np.array(k)) for k, a in VL.modes().items())
    assert np.allclose(fiber_average(V, lat, x), direct, atol=1e-12)
    G = PotentialSpec.from_grid(V.grid(16))
    assert np.allclose(project_potential(G, lat).grid(16), VL.grid(16), atol=1e-12)


# ---------------------------------------------------------------- solvers

def test_free_solution_exact():
    u0 = random_u0(0)
    g = SpectrumField(1, {(3, (1,)): 0.5})
    rep = solve_periodized(u0, None, g=g, freq_bound=5)
    assert rep.iterations == 1 and rep.residual_xb == 0.0
    assert rep.solution == free_evolve(u0) + g
    rep = solve_approximate(u0, None, cutoff_fourier(SPEC), cutoff_fourier(SPEC, "t_eta"), freq_bound=5)
    assert rep.solution == free_evolve(u0)


def test_solver_matches_propagator_on_plateau():
    u0 = random_u0(1)
    rep = solve_periodized(u0, V1, freq_bound=12)
    assert rep.residual_xb <= 1e-10
    t = np.linspace(-SPEC.plateau_half_width, SPEC.plateau_half_width, 15)
    P = hamiltonian_propagator(rep.modes, V1.modes(), t)
    a0 = np.array([u0[(0, k)] for k in rep.modes])
    assert np.abs(P @ a0 - rep.spatial_at(t)).max() <= 1e-6
    data = json.loads(rep.to_json("u.csv"))
    assert data["iterations"] == rep.iterations and data["field"] == "u.csv"


def test_solver_on_affine_sublattice():
    gamma = AffineSublattice((1, 0), hnf_canonicalize([(0, 1)]))
    V = PotentialSpec.from_modes(2, {(0, 1): 0.2, (0, -1): 0.2, (1, 0): 0.4, (-1, 0): 0.4})
    u0 = SpectrumField.spatial(2, {(1, j): 1.0 / (1 + abs(j)) for j in range(-2, 3)})
    lat = hnf_canonicalize([(0, 1)])
    rep = solve_periodized(u0, V, lat=lat, gamma=gamma, freq_bound=6)
    assert all(k[0] == 1 for k in rep.modes)
    VL = project_potential(V, lat).modes()
    t = np.array([0.0, 0.2, -0.3])
    P = hamiltonian_propagator(rep.modes, VL, t)
    a0 = np.array([u0[(0, k)] for k in rep.modes])
    assert np.abs(P @ a0 - rep.spatial_at(t)).max() <= 1e-6


def test_contraction_decreases_with_tau():
    u0 = random_u0(2)
    spec, est, norms = SPEC, [], []
    for _ in range(5):
        est.append(solve_periodized(u0, V1, spec=spec, freq_bound=10, max_shrinks=0).contraction_estimate)
        norms.append(duhamel_norm(spec, 0.6, 0.1, window=256))
        spec = spec.rescaled(0.5)
    assert all(a >= b for a, b in zip(est, est[1:]))
    assert all(a >= b for a, b in zip(norms, norms[1:]))


def test_non_contraction_raises():
    V = PotentialSpec.from_modes(1, {(1,): 40.0, (-1,): 40.0})
    with pytest.raises(NonContractionError):
        solve_periodized(random_u0(0), V, freq_bound=6, max_shrinks=0)
    with pytest.raises(ValueError):
        solve_periodized(random_u0(0), V, b=0.4)


def test_approximate_converges_to_periodized():
    u0 = random_u0(1)
    u = solve_periodized(u0, V1, freq_bound=10)
    full, fullt = cutoff_fourier(SPEC), cutoff_fourier(SPEC, "t_eta")
    errs = []
    for L in (16, 32, 64, 128, 256):
        phi = SpectrumField(1, {k: a for k, a in full.items() if abs(k[0]) <= L})
        psi = SpectrumField(1, {k: a for k, a in fullt.items() if abs(k[0]) <= L})
        errs.append(xb_norm(solve_approximate(u0, V1, phi, psi, freq_bound=10).solution - u.solution, 0.6))
    assert all(a > b for a, b in zip(errs, errs[1:]))


def test_k_operator_bound():
    rng = np.random.default_rng(8)
    full, fullt = cutoff_fourier(SPEC), cutoff_fourier(SPEC, "t_eta")
    for L in (2, 8, 32):
        phi = SpectrumField(1, {k: a for k, a in full.items() if abs(k[0]) <= L})
        psi = SpectrumField(1, {k: a for k, a in fullt.items() if abs(k[0]) <= L})
        C = k_operator_bound(phi, psi, 0.6)
        for _ in range(10):
            f = random_field(rng, 1, (-10, 10), 3, 0.3)
            assert xb_norm(k_operator(f, phi, psi), 0.6) <= C * xb_norm(f, -0.4)
        assert C >= hb_norm(phi, 0.6) + hb_norm(psi, 0.6)
