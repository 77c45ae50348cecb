"""Fast self-checks grouped into suites, used by ``torobs verify``."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import clusters as cl
from . import duhamel as du
from . import lattice as lt
from . import observability as ob
from . import spectral as sp


@dataclass(frozen=True)
class Check:
    suite: str
    name: str
    passed: bool
    value: float
    tolerance: float

    def row(self) -> list[str]:
        return [self.suite, self.name, "pass" if self.passed else "fail",
                f"{self.value:.17g}", f"{self.tolerance:.17g}"]


CHECK_HEADER = ["suite", "check", "status", "value", "tolerance"]


def _check(suite, name, value, tol, exact=False) -> Check:
    value = float(value)
    ok = value == 0 if exact else value <= tol
    return Check(suite, name, bool(ok), value, tol)


def _random_primitive(rng, d: int) -> lt.Sublattice:
    r = int(rng.integers(1, d + 1))
    while True:
        B = rng.integers(-3, 4, size=(r, d)).tolist()
        lat = lt.saturate(lt.hnf_canonicalize(B, d))
        if lat.rank == r:
            return lat


def suite_lattice(seed: int) -> list[Check]:
    rng = np.random.default_rng(seed)
    out = []
    h = lt.hnf_canonicalize([(2, 4), (1, 3)])
    out.append(_check("lattice", "hnf example", 0 if h.basis == ((1, 1), (0, 2)) else 1, 0, True))
    worst = 0.0
    for _ in range(40):
        lat = _random_primitive(rng, int(rng.integers(2, 5)))
        worst = max(worst, abs(lt.covolume(lt.perp(lat)) - lt.covolume(lat)))
    out.append(_check("lattice", "covolume duality", worst, 1e-9))
    bad = 0
    for basis in ([(1, 2)], [(1, 1, 1)], [(1, 2, 0), (0, 1, 3)], [(2, 1)]):
        lat = lt.hnf_canonicalize(basis)
        bad += lt.orbit_census(lat).class_count != lat.gram_det()
    out.append(_check("lattice", "orbit count equals covolume squared", bad, 0, True))
    return out


def suite_clusters(seed: int) -> list[Check]:
    dec = cl.decompose(lt.AffineSublattice.full(1), 1, 60)
    sizes = sorted((c.size for c in dec.clusters), reverse=True)
    out = [_check("clusters", "reference decomposition", 0 if sizes == [101] + [1] * 20 else 1, 0, True)]
    st = cl.cluster_stats(dec)
    out.append(_check("clusters", "cluster separation margin", 0 if st.min_separation_sq > 100 ** 2 else 1, 0, True))
    split = cl.neighborhoods(dec)
    sep = cl.neighborhood_separation_sq(split)
    out.append(_check("clusters", "neighborhood separation margin", 0 if sep > 10 ** 2 else 1, 0, True))
    return out


def suite_spectral(seed: int) -> list[Check]:
    rng = np.random.default_rng(seed)
    worst_law = worst_tw = worst_grid = 0.0
    for _ in range(10):
        f = sp.random_field(rng, 2, (-3, 3), 2, 0.5)
        p = tuple(int(x) for x in rng.integers(-2, 3, size=2))
        q = tuple(int(x) for x in rng.integers(-2, 3, size=2))
        pq = tuple(a + b for a, b in zip(p, q))
        worst_law = max(worst_law, sp.l2_norm(sp.galilean(sp.galilean(f, p), q) - sp.galilean(f, pq)))
        u0 = sp.random_field(rng, 2, (0, 0), 2, 0.7)
        worst_tw = max(worst_tw, sp.l2_norm(sp.galilean(sp.free_evolve(u0), p)
                                            - sp.free_evolve(sp.modulate(u0, p))))
        g = sp.evaluate_grid(f, 16, 16)
        worst_grid = max(worst_grid, sp.l2_norm(sp.grid_to_field(g) - f))
    return [_check("spectral", "galilean group law", worst_law, 0, True),
            _check("spectral", "intertwining with free evolution", worst_tw, 0, True),
            _check("spectral", "grid round trip", worst_grid, 1e-12)]


def suite_duhamel(seed: int) -> list[Check]:
    rng = np.random.default_rng(seed)
    spec = du.CutoffSpec()
    worst = 0.0
    for _ in range(3):
        f = sp.random_field(rng, 1, (-4, 4), 2, 0.6)
        a = du.duhamel_fourier(f, spec)
        b = du.duhamel_quadrature(f, spec)
        worst = max(worst, sp.l2_norm(a - b) / sp.l2_norm(b))
    out = [_check("duhamel", "kernel vs time quadrature", worst, 1e-6)]
    V = du.PotentialSpec.from_modes(1, {(1,): 0.3, (-1,): 0.3})
    u0 = sp.SpectrumField.spatial(1, {(k,): complex(*rng.normal(size=2)) for k in range(-2, 3)})
    rep = du.solve_periodized(u0, V, spec=spec, freq_bound=8)
    t = np.linspace(-spec.plateau_half_width, spec.plateau_half_width, 9)
    P = du.hamiltonian_propagator(rep.modes, V.modes(), t)
    a0 = np.array([u0[(0, k)] for k in rep.modes])
    err = float(np.abs(P @ a0 - rep.spatial_at(t)).max())
    out.append(_check("duhamel", "solver residual", rep.residual_xb, 1e-10))
    out.append(_check("duhamel", "plateau agreement with eigen-propagator", err, 1e-6))
    return out


def suite_observability(seed: int) -> list[Check]:
    G1 = lt.AffineSublattice.full(1)
    one = ob.gram_free(ob.ObservationSetup(ob.ProductIndicator(1), G1, 6))
    out = [_check("observability", "unit weight gives identity",
                  np.abs(one.gram - np.eye(len(one.gram))).max(), 1e-12)]
    chi = ob.ProductIndicator(1, (-1.0, 0.5), ((0.3, 2.0),))
    single = ob.gram_free(ob.ObservationSetup(chi, lt.AffineSublattice((3,), lt.Sublattice.zero(1)), 5))
    out.append(_check("observability", "single-mode constant", abs(single.obs_constant - math.sqrt(chi.measure())), 1e-10))
    scan = ob.obs_constant_scan(ob.ObservationSetup(chi, G1, 2), [2, 4, 8])
    rises = max(0.0, max(b[1] - a[1] for a, b in zip(scan, scan[1:])))
    out.append(_check("observability", "constant non-increasing in F", rises, 1e-12))
    st = ob.ObservationSetup(chi, G1, 6)
    diff = np.abs(ob.gram_free(st).gram - ob.gram_potential(st).gram).max()
    out.append(_check("observability", "closed form vs quadrature Gram", diff, 1e-8))
    return out


SUITES: dict[str, Callable[[int], list[Check]]] = {
    "lattice": suite_lattice,
    "clusters": suite_clusters,
    "spectral": suite_spectral,
    "duhamel": suite_duhamel,
    "observability": suite_observability,
}


def run_suite(name: str, seed: int = 0) -> list[Check]:
    if name == "all":
        return [c for key in SUITES for c in SUITES[key](seed)]
    return SUITES[name](seed)
