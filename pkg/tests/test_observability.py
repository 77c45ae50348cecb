import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from torobs.clusters import decompose
from torobs.duhamel import PotentialSpec
from torobs.lattice import AffineSublattice, Sublattice, hnf_canonicalize
from torobs.observability import (
    GridMultiplier, ObservationSetup, ProductIndicator, TrigMultiplier, decoupling_defect,
    eigenspace_gram, gram_free, gram_potential, gram_potential_exact, gram_quadrature,
    interval_coefficients, lp_ratio, obs_constant_scan, observation_norm_sq, riemann_approximate,
    strichartz_scan, top_mass, ui_profile, write_obs_csv, y_norm_estimate,
)
from torobs.spectral import SpectrumField, free_evolve, galilean, random_field

Z1 = AffineSublattice.full(1)
Z2 = AffineSublattice.full(2)
CHI1 = ProductIndicator(1, (-1.0, 0.5), ((0.3, 2.0),))


def trig_weight(seed, dim=1):
    """|χ|^2 for a random low-degree trigonometric χ."""
    chi = random_field(np.random.default_rng(seed), dim, (-1, 1), 1, 0.6)
    return TrigMultiplier.from_chi(chi)


def test_interval_coefficients_against_quadrature():
    x = np.linspace(0.5, 2.0, 200001)
    for n in (0, 1, -3, 7):
        ref = np.trapezoid(np.exp(-1j * n * x), x) / (2 * math.pi)
        assert abs(interval_coefficients(0.5, 2.0, np.array([n]))[0] - ref) < 1e-9


def test_unit_weight_gives_identity():
    for gamma, F in [(Z1, 8), (Z2, 4)]:
        rep = gram_free(ObservationSetup(ProductIndicator(gamma.dim), gamma, F))
        assert np.abs(rep.gram - np.eye(len(rep.modes))).max() <= 1e-12
        assert rep.obs_constant == pytest.approx(1.0, abs=1e-12)


def test_single_mode_constant():
    single = AffineSublattice((3,), Sublattice.zero(1))
    rep = gram_free(ObservationSetup(CHI1, single, 10))
    assert rep.obs_constant == pytest.approx(math.sqrt(CHI1.measure()), abs=1e-10)
    w = trig_weight(3)
    rep = gram_free(ObservationSetup(w, single, 10))
    assert rep.obs_constant == pytest.approx(math.sqrt(w.mean()), abs=1e-10)


def test_time_independent_weight_gives_diagonal():
    chi = ProductIndicator(1, None, ((0.0, 1.0),))
    rep = gram_free(ObservationSetup(chi, AffineSublattice((0,), hnf_canonicalize([(1,)])), 1))
    G = rep.gram
    # modes 0 and ±1 have distinct |k|^2 except ±1 pair
    idx = {k: i for i, k in enumerate(rep.modes)}
    assert G[idx[(0,)], idx[(1,)]] == 0
    assert G[idx[(1,)], idx[(-1,)]] != 0


def test_closed_form_vs_grid_quadrature():
    for seed in range(4):
        for dim, F in [(1, 5), (2, 2)]:
            st_ = ObservationSetup(trig_weight(seed, dim), AffineSublattice.full(dim), F)
            assert np.abs(gram_free(st_).gram - gram_quadrature(st_).gram).max() <= 1e-8


def test_closed_form_vs_time_quadrature_and_exact():
    for chi, gamma, F in [(CHI1, Z1, 6), (ProductIndicator(2, (0.0, 2.0), ((0, 1.0), (0.5, 3.0))), Z2, 3)]:
        st_ = ObservationSetup(chi, gamma, F)
        G = gram_free(st_).gram
        assert np.abs(G - gram_potential(st_).gram).max() <= 1e-8
        assert np.abs(G - gram_potential_exact(st_)).max() <= 1e-8


def test_grid_multiplier_consistent():
    w = trig_weight(1)
    Gm = GridMultiplier(w.samples(16, 16))
    a = gram_free(ObservationSetup(w, Z1, 3)).gram
    b = gram_free(ObservationSetup(Gm, Z1, 3)).gram
    assert np.abs(a - b).max() <= 1e-12


def test_potential_gram():
    V = PotentialSpec.from_modes(1, {(1,): 0.5, (-1,): 0.5})
    st_ = ObservationSetup(CHI1, Z1, 6, potential=V)
    rep = gram_potential(st_)
    assert np.abs(rep.gram - rep.gram.conj().T).max() <= 1e-12
    assert rep.eigenvalues[0] >= -1e-10
    assert np.abs(rep.gram - gram_potential_exact(st_)).max() <= 1e-8
    assert np.abs(rep.gram - gram_potential(st_, refine=2).gram).max() <= 1e-8
    with pytest.raises(ValueError):
        gram_potential(ObservationSetup(CHI1, Z1, 4, potential=PotentialSpec.from_modes(1, {(1,): 1.0})))


def test_scan_monotone():
    half = ProductIndicator(1, None, ((0.0, math.pi),))
    scan = obs_constant_scan(ObservationSetup(half, Z1, 4), [4, 8, 16])
    vals = [c for _, c in scan]
    assert all(a >= b - 1e-12 for a, b in zip(vals, vals[1:])) and min(vals) >= 0
    ones = obs_constant_scan(ObservationSetup(ProductIndicator(1), Z1, 1), [1, 2, 4])
    assert all(abs(c - 1) < 1e-12 for _, c in ones)
    with pytest.raises(ValueError):
        obs_constant_scan(ObservationSetup(half, Z1, 4), [8, 4])


def test_equivalence_class_invariance():
    lat = hnf_canonicalize([(1, 0)])
    gamma = AffineSublattice((0, 1), lat)
    chi = ProductIndicator(2, (-1.0, 1.0), ((0.2, 1.7), (0.0, 2.5)))
    st_ = ObservationSetup(chi, gamma, 4)
    a = gram_free(st_).obs_constant
    for p in [(0, 1), (0, -3), (0, 5)]:
        assert gram_free(st_.shifted(p)).obs_constant == pytest.approx(a, abs=1e-8)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(-3, 3))
def test_galilean_observation_invariance(seed, p2):
    rng = np.random.default_rng(seed)
    u0 = SpectrumField.spatial(2, {(k, 1): complex(*rng.normal(size=2)) for k in range(-3, 4)})
    u = free_evolve(u0)
    w = trig_weight(seed, 2)
    a = observation_norm_sq(w, u, 64, 32)
    b = observation_norm_sq(w, galilean(u, (0, p2)), 64, 32)
    assert a == pytest.approx(b, abs=1e-8)


def test_eigenspace_gram():
    rep = eigenspace_gram(1, ProductIndicator(2), 2)
    assert sorted(rep.modes) == [(-1, 0), (0, -1), (0, 1), (1, 0)]
    assert np.abs(rep.gram - np.eye(4)).max() == 0
    chi = ProductIndicator(1, None, ((0.2, 1.5),))
    rep = eigenspace_gram(1, chi, 1)
    meas = 1.3 / (2 * math.pi)
    assert np.allclose(np.diag(rep.gram), meas)
    i, j = rep.modes.index((-1,)), rep.modes.index((1,))
    assert rep.gram[i, j] == pytest.approx(interval_coefficients(0.2, 1.5, np.array([-2]))[0])
    with pytest.raises(ValueError):
        eigenspace_gram(3, ProductIndicator(2), 2)


def test_lambda_max_bounded_by_sup():
    rep = gram_free(ObservationSetup(CHI1, Z1, 8))
    assert rep.lambda_max <= CHI1.sup() + 1e-12
    w = trig_weight(2)
    assert gram_free(ObservationSetup(w, Z1, 8)).lambda_max <= w.sup() + 1e-12


def test_decoupling_defect():
    rng = np.random.default_rng(0)
    dec = decompose(Z1, 1, 60)
    samples = [SpectrumField.spatial(1, {(k,): complex(*rng.normal(size=2)) for k in range(-60, 61)})
               for _ in range(3)]
    zeta = random_field(rng, 1, (-1, 1), 1)
    assert decoupling_defect(zeta, dec, samples) <= 1e-10
    one = decompose(Z1, 50, 10)
    small = [SpectrumField.spatial(1, {(k,): 1.0 for k in range(-10, 11)})]
    assert decoupling_defect(random_field(rng, 1, (-5, 5), 5), one, small) == 0
    # ζ couples (-2500, 50) in the central cluster with (-2601, 51)
    zeta = SpectrumField(1, {(-50, (1,)): 1.0, (51, (0,)): 1.0})
    assert zeta.degree() == 51
    assert decoupling_defect(zeta, dec, samples) > 1e-3


def test_ui_profile_examples():
    prof = ui_profile(1, 4, 6, [0.0, 0.1, 0.5, 1.0], 4, seed=3)
    assert all(a <= b for a, b in zip(prof.worst_mass, prof.worst_mass[1:]))
    assert prof.worst_mass[-1] == pytest.approx(1.0, abs=1e-12)
    assert ui_profile(1, 4, 6, [0.0, 0.1, 0.5, 1.0], 4, seed=3) == prof
    flat = np.ones((8, 8))
    for dl in (0.1, 0.37, 1.0):
        assert top_mass(flat, dl) == pytest.approx(dl, abs=1e-15)


def test_l4_two_modes():
    assert lp_ratio([(0,), (1,)], np.array([1.0, 1.0]), 4) ** 4 == pytest.approx(1.5, abs=1e-12)
    assert lp_ratio([(3,)], np.array([2.0]), 6) == pytest.approx(1.0, abs=1e-12)
    assert lp_ratio([(3,)], np.array([2.0]), 3) == pytest.approx(1.0, abs=1e-12)
    assert lp_ratio([(0,), (1,)], np.array([1.0, 1.0]), 5) > 1
    rows = strichartz_scan(1, 4, [4, 8], 10, seed=1)
    assert rows == strichartz_scan(1, 4, [4, 8], 10, seed=1)
    assert all(r["sup"] >= r["random_sup"] for r in rows)


def test_y_norm_estimate():
    for chi, F in [(CHI1, 6), (ProductIndicator(2, None, ((0, 2.0), (1.0, 4.0))), 3)]:
        st_ = ObservationSetup(chi, AffineSublattice.full(chi.dim), F)
        est, _ = y_norm_estimate(st_)
        dense = math.sqrt(np.linalg.eigvalsh(gram_free(st_).gram)[-1])
        assert abs(est - dense) <= 1e-8
        assert math.sqrt(chi.measure()) - 1e-12 <= est <= 1 + 1e-12
    one, _ = y_norm_estimate(ObservationSetup(ProductIndicator(1), Z1, 5))
    assert one == pytest.approx(1.0, abs=1e-12)


def test_riemann_approximate():
    x = 2 * np.pi * np.arange(1024) / 1024
    ind = ((x >= 1.0) & (x <= 3.0)).astype(float)
    errs = []
    for level in (1, 2, 4, 8):
        r = riemann_approximate(ind, level)
        assert r.oscillation_measure <= 2 / level
        assert r.sup_norm <= 1 + 1e-12
        errs.append(r.sup_error_off_set)
    assert errs[-1] < errs[1]
    smooth = np.exp(np.cos(x))
    serr = [riemann_approximate(smooth, L).sup_error for L in (1, 2, 4, 8)]
    assert all(a > b for a, b in zip(serr, serr[1:]))


def test_report_serialization(tmp_path):
    rep = gram_free(ObservationSetup(CHI1, Z1, 4))
    write_obs_csv([rep], tmp_path / "o.csv", seed=7)
    lines = (tmp_path / "o.csv").read_text().splitlines()
    assert lines[0] == "F,lambda_min,lambda_max,obs_constant,seed"
    assert lines[1].startswith("4,") and lines[1].endswith(",7")
    assert '"obs_constant"' in rep.to_json()
