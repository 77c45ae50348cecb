"""Observation Gram matrices and probes of Schrödinger waves on the torus.

For a finite set of frequencies K and a nonnegative weight w = |χ|^2,

    ||χ u||^2 = a^H G a,   G[k, k'] = <w e_k', e_k>,

where u = Σ a_k e_k(t, x) is the propagated wave and the inner product uses
the normalized measure on [-π, π) x T^d. For free waves
e_k = exp(i(k.x - |k|^2 t)) and G[k, k'] = ŵ(|k'|^2 - |k|^2, k - k').
"""
from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np
from scipy.ndimage import maximum_filter, minimum_filter

from .clusters import ClusterDecomposition, lattice_points_in_ball
from .duhamel import PotentialSpec
from .lattice import AffineSublattice, Sublattice
from .spectral import SpectrumField, evaluate_grid, free_evolve, l2_norm, multiply

TWO_PI = 2 * math.pi


def thread_count() -> int:
    """Worker cap from TOROBS_THREADS (default 1)."""
    try:
        return max(1, int(os.environ.get("TOROBS_THREADS", "1")))
    except ValueError:
        return 1


def _ordered_map(fn, items):
    """Map preserving input order; threads only change scheduling, not results."""
    workers = thread_count()
    if workers == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


# ---------------------------------------------------------------- multipliers

def interval_coefficients(a: float, b: float, n: np.ndarray) -> np.ndarray:
    """Normalized Fourier coefficients of the indicator of [a, b] ⊂ [-π, π]."""
    n = np.asarray(n)
    out = np.empty(n.shape, dtype=complex)
    z = n == 0
    out[z] = (b - a) / TWO_PI
    nz = n[~z].astype(float)
    out[~z] = (np.exp(-1j * nz * a) - np.exp(-1j * nz * b)) / (TWO_PI * 1j * nz)
    return out


class Multiplier:
    """A nonnegative space-time weight w(t, x), usually w = |χ|^2."""

    dim: int

    def coeff(self, n: np.ndarray, m: np.ndarray) -> np.ndarray:
        """ŵ(n, m) for integer arrays n (shape S) and m (shape S + (d,))."""
        raise NotImplementedError

    def spatial_coeff(self, t: np.ndarray, m: np.ndarray) -> np.ndarray:
        """Σ_n ŵ(n, m) e^{int}: shape (len(t),) + m.shape[:-1]."""
        raise NotImplementedError

    def time_breakpoints(self) -> list[float]:
        return []

    def time_degree(self) -> float:
        return math.inf

    def samples(self, Nt: int, Nx: int) -> np.ndarray:
        """Values at t_j = -π + 2πj/Nt, x_l = 2πl/Nx."""
        raise NotImplementedError

    def sup(self) -> float:
        raise NotImplementedError

    def mean(self) -> float:
        return float(self.coeff(np.zeros(1, dtype=int), np.zeros((1, self.dim), dtype=int)).real[0])

    def check_nonnegative(self, Nt: int = 64, Nx: int = 64, tol: float = 1e-12) -> None:
        if self.samples(Nt, Nx).real.min() < -tol:
            raise ValueError("observation weight takes negative values")


@dataclass(frozen=True)
class ProductIndicator(Multiplier):
    """Indicator of J x ω_1 x ... x ω_d; ``None`` means the full circle."""

    dim: int
    time: tuple[float, float] | None = None
    space: tuple[tuple[float, float] | None, ...] = ()

    def __post_init__(self):
        sp = tuple(self.space) + (None,) * (self.dim - len(self.space))
        object.__setattr__(self, "space", sp)
        if self.time is not None and not -math.pi <= self.time[0] <= self.time[1] <= math.pi:
            raise ValueError("time interval must lie in [-π, π]")
        for iv in sp:
            if iv is not None and not (iv[0] <= iv[1] and iv[1] - iv[0] <= TWO_PI):
                raise ValueError("spatial intervals must have length in [0, 2π]")

    def _space(self, m: np.ndarray) -> np.ndarray:
        out = np.ones(m.shape[:-1], dtype=complex)
        for j, iv in enumerate(self.space):
            mj = m[..., j]
            out *= (mj == 0) if iv is None else interval_coefficients(iv[0], iv[1], mj)
        return out

    def _time(self, n: np.ndarray) -> np.ndarray:
        if self.time is None:
            return (np.asarray(n) == 0).astype(complex)
        return interval_coefficients(self.time[0], self.time[1], n)

    def coeff(self, n, m):
        return self._time(np.asarray(n)) * self._space(np.asarray(m))

    def spatial_coeff(self, t, m):
        t = np.asarray(t, dtype=float)
        ind = np.ones(t.shape) if self.time is None else ((t >= self.time[0]) & (t <= self.time[1])).astype(float)
        return ind.reshape((-1,) + (1,) * (m.ndim - 1)) * self._space(np.asarray(m))[None]

    def time_breakpoints(self):
        return [] if self.time is None else list(self.time)

    def time_degree(self):
        return 0 if self.time is None else math.inf

    def samples(self, Nt, Nx):
        t = -math.pi + TWO_PI * np.arange(Nt) / Nt
        x = TWO_PI * np.arange(Nx) / Nx
        out = np.ones(Nt) if self.time is None else ((t >= self.time[0]) & (t <= self.time[1])).astype(float)
        for iv in self.space:
            if iv is None:
                f = np.ones(Nx)
            else:
                f = ((x - iv[0]) % TWO_PI <= (iv[1] - iv[0])).astype(float)
            out = np.multiply.outer(out, f)
        return out

    def sup(self):
        return 1.0

    def measure(self) -> float:
        """Normalized measure of the set."""
        out = 1.0 if self.time is None else (self.time[1] - self.time[0]) / TWO_PI
        for iv in self.space:
            if iv is not None:
                out *= (iv[1] - iv[0]) / TWO_PI
        return out


class TrigMultiplier(Multiplier):
    """A real nonnegative trigonometric polynomial given by a SpectrumField."""

    def __init__(self, f: SpectrumField, check: bool = True):
        self.field = f
        self.dim = f.dim
        self._map = dict(f.coeffs)
        if check:
            if l2_norm(f - f.conj()) > 1e-12 * max(1.0, l2_norm(f)):
                raise ValueError("observation weight is not real-valued")
            N = 4 * max(f.degree(), 4)
            if f.dim <= 2:
                self.check_nonnegative(N, N)

    @classmethod
    def from_chi(cls, chi: SpectrumField) -> "TrigMultiplier":
        """|χ|^2 for a trigonometric χ."""
        return cls(multiply(chi, chi.conj()))

    def coeff(self, n, m):
        n = np.asarray(n)
        m = np.asarray(m)
        out = np.zeros(n.shape, dtype=complex)
        for idx in np.ndindex(n.shape):
            out[idx] = self._map.get((int(n[idx]), tuple(int(x) for x in m[idx])), 0j)
        return out

    def spatial_coeff(self, t, m):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        m = np.asarray(m)
        out = np.zeros((len(t),) + m.shape[:-1], dtype=complex)
        by_k: dict = {}
        for (n, k), a in self._map.items():
            by_k.setdefault(k, []).append((n, a))
        for idx in np.ndindex(m.shape[:-1]):
            for n, a in by_k.get(tuple(int(x) for x in m[idx]), ()):
                out[(slice(None),) + idx] += a * np.exp(1j * n * t)
        return out

    def time_degree(self):
        return self.field.temporal_degree()

    def samples(self, Nt, Nx):
        # evaluate_grid samples t from 0; shift by π via modulation
        g = self.field
        shifted = SpectrumField(g.dim, {(n, k): a * (-1) ** (n % 2) for (n, k), a in g.coeffs.items()})
        return evaluate_grid(shifted, Nt, Nx).real

    def sup(self):
        N = 8 * max(self.field.degree(), 4)
        return float(self.samples(N, N).max()) if self.dim <= 2 else float(sum(abs(a) for a in self._map.values()))


class GridMultiplier(Multiplier):
    """Weight sampled on a uniform grid, read as its trigonometric interpolant.

    ``values`` has shape (Nt, Nx, ..., Nx) with t starting at -π, or shape
    (Nx, ..., Nx) for a time-independent weight.
    """

    def __init__(self, values, time_dependent: bool = True):
        v = np.asarray(values, dtype=float)
        if not time_dependent:
            v = v[None]
        if v.min() < -1e-12:
            raise ValueError("observation weight takes negative values")
        self.values = v
        self.dim = v.ndim - 1
        C = np.fft.fftn(v) / v.size
        Nt = v.shape[0]
        nfreq = np.fft.fftfreq(Nt, 1.0 / Nt).round().astype(int)
        C *= np.exp(1j * math.pi * nfreq).reshape((-1,) + (1,) * self.dim)
        self._C = C

    def _lookup(self, n, m):
        Nt = self.values.shape[0]
        Nx = self.values.shape[1] if self.dim else 1
        ok = (2 * np.abs(n) < Nt) | (n == 0)
        for j in range(self.dim):
            ok &= (2 * np.abs(m[..., j]) < Nx) | (m[..., j] == 0)
        idx = (n % Nt,) + tuple(m[..., j] % Nx for j in range(self.dim))
        return np.where(ok, self._C[idx], 0)

    def coeff(self, n, m):
        return self._lookup(np.asarray(n), np.asarray(m))

    def spatial_coeff(self, t, m):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        Nt = self.values.shape[0]
        ns = np.arange(-(Nt // 2) + (1 if Nt % 2 == 0 else 0), Nt // 2 + (0 if Nt % 2 == 0 else 1))
        m = np.asarray(m)
        cs = np.stack([self._lookup(np.full(m.shape[:-1], n), m) for n in ns])
        E = np.exp(1j * np.outer(t, ns))
        return np.tensordot(E, cs, axes=(1, 0))

    def time_degree(self):
        return self.values.shape[0] // 2

    def samples(self, Nt, Nx):
        if self.values.shape == (Nt,) + (Nx,) * self.dim:
            return self.values
        raise ValueError("grid multiplier can only be sampled at its own resolution")

    def sup(self):
        return float(self.values.max())


# ---------------------------------------------------------------- setup and reports

@dataclass(frozen=True)
class ObservationSetup:
    """Weight |χ|^2, frequencies {k ∈ Γ : |k - center| <= F}, optional potential."""

    chi_sq: Multiplier
    gamma: AffineSublattice
    freq_bound: int
    potential: PotentialSpec | None = None
    center: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.chi_sq.dim != self.gamma.dim:
            raise ValueError("weight and lattice dimensions differ")
        if self.freq_bound < 0:
            raise ValueError("freq_bound must be >= 0")
        if not self.modes():
            raise ValueError("empty frequency subspace")

    def modes(self) -> list[tuple[int, ...]]:
        c = self.center or (0,) * self.gamma.dim
        shifted = AffineSublattice(tuple(q - x for q, x in zip(self.gamma.offset, c)), self.gamma.direction)
        K = lattice_points_in_ball(shifted, self.freq_bound ** 2) + np.asarray(c, dtype=np.int64)
        return [tuple(int(x) for x in k) for k in K]

    def shifted(self, p) -> "ObservationSetup":
        """Same setup over p + Γ with the frequency ball moved along."""
        c = self.center or (0,) * self.gamma.dim
        return replace(self, gamma=self.gamma.translate(p), center=tuple(x + y for x, y in zip(c, p)))

    def with_bound(self, F: int) -> "ObservationSetup":
        return replace(self, freq_bound=F)


@dataclass
class ObservabilityReport:
    gram: np.ndarray = field(repr=False)
    eigenvalues: np.ndarray
    obs_constant: float
    modes: list[tuple[int, ...]] = field(repr=False)
    metadata: dict = field(default_factory=dict)

    @classmethod
    def from_gram(cls, G: np.ndarray, modes, **metadata) -> "ObservabilityReport":
        asym = float(np.abs(G - G.conj().T).max()) if G.size else 0.0
        if asym > 1e-10:
            raise ValueError(f"Gram matrix not Hermitian (defect {asym:.3g})")
        G = 0.5 * (G + G.conj().T)
        lam = np.linalg.eigvalsh(G)
        if lam[0] < -1e-10:
            raise ValueError(f"Gram matrix not positive semidefinite (λ_min = {lam[0]:.3g})")
        metadata.setdefault("hermitian_defect", asym)
        return cls(G, lam, math.sqrt(max(lam[0], 0.0)), list(modes), metadata)

    @property
    def lambda_min(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def lambda_max(self) -> float:
        return float(self.eigenvalues[-1])

    def csv_row(self, seed=None) -> list[str]:
        F = self.metadata.get("F", "")
        return [str(F), f"{self.lambda_min:.17g}", f"{self.lambda_max:.17g}",
                f"{self.obs_constant:.17g}", "" if seed is None else str(seed)]

    def to_dict(self) -> dict:
        return {"eigenvalues": [float(x) for x in self.eigenvalues],
                "obs_constant": self.obs_constant,
                "lambda_min": self.lambda_min, "lambda_max": self.lambda_max,
                "modes": [list(k) for k in self.modes], "metadata": self.metadata}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


OBS_CSV_HEADER = ["F", "lambda_min", "lambda_max", "obs_constant", "seed"]


def write_obs_csv(reports: Iterable[ObservabilityReport], path, seed=None) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(OBS_CSV_HEADER)
        for r in reports:
            w.writerow(r.csv_row(seed))


# ---------------------------------------------------------------- Gram matrices

def _mode_arrays(modes):
    K = np.asarray(modes, dtype=np.int64).reshape(len(modes), -1)
    s = (K * K).sum(axis=1)
    return K, s


def gram_free(setup: ObservationSetup) -> ObservabilityReport:
    """Closed-form Gram matrix of free waves from the Fourier coefficients of |χ|^2."""
    if setup.potential is not None:
        raise ValueError("gram_free requires a setup without potential")
    modes = setup.modes()
    K, s = _mode_arrays(modes)
    n = s[None, :] - s[:, None]
    m = K[:, None, :] - K[None, :, :]
    G = setup.chi_sq.coeff(n, m)
    return ObservabilityReport.from_gram(G, modes, F=setup.freq_bound, method="closed form")


def gram_quadrature(setup: ObservationSetup, Nt: int | None = None, Nx: int | None = None) -> ObservabilityReport:
    """Gram matrix of free waves by direct grid quadrature of w |u|^2.

    Exact (up to rounding) for trigonometric weights when the grid resolves
    every product w conj(e_k) e_k'.
    """
    modes = setup.modes()
    K, s = _mode_arrays(modes)
    d = K.shape[1]
    w = setup.chi_sq
    if Nt is None:
        td = w.time_degree()
        td = 0 if math.isinf(td) else td
        Nt = 1 << max(3, int(math.ceil(math.log2(2 * (s.max() - s.min()) + 2 * td + 2))))
    if Nx is None:
        deg = getattr(getattr(w, "field", None), "spatial_degree", lambda: 0)()
        span = int((K.max(axis=0) - K.min(axis=0)).max()) if len(K) else 0
        Nx = 1 << max(3, int(math.ceil(math.log2(2 * span + 2 * deg + 2))))
    W = w.samples(Nt, Nx).reshape(Nt, -1)
    t = -math.pi + TWO_PI * np.arange(Nt) / Nt
    xs = np.stack(np.meshgrid(*[TWO_PI * np.arange(Nx) / Nx] * d, indexing="ij"), -1).reshape(-1, d)
    G = np.zeros((len(modes), len(modes)), dtype=complex)
    Ex = np.exp(1j * xs @ K.T)  # (Nx^d, M)
    for j, tj in enumerate(t):
        E = Ex * np.exp(-1j * s * tj)[None, :]
        G += E.conj().T @ (W[j][:, None] * E)
    G /= Nt * Ex.shape[0]
    return ObservabilityReport.from_gram(G, modes, F=setup.freq_bound, method="grid quadrature", Nt=Nt, Nx=Nx)


def _gauss_panels(breaks: Sequence[float], max_phase: float, nodes: int) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss–Legendre rule on [-π, π] honoring breakpoints."""
    x, w = np.polynomial.legendre.leggauss(nodes)
    edges = sorted({-math.pi, math.pi, *[b for b in breaks if -math.pi < b < math.pi]})
    T, Wt = [], []
    width = min(1.0, 4.0 / max(max_phase, 1e-9))  # about two thirds of a period per panel
    for a, b in zip(edges[:-1], edges[1:]):
        m = max(1, int(math.ceil((b - a) / width)))
        for j in range(m):
            lo = a + (b - a) * j / m
            hi = a + (b - a) * (j + 1) / m
            T.append(0.5 * (hi - lo) * x + 0.5 * (hi + lo))
            Wt.append(0.5 * (hi - lo) * w)
    return np.concatenate(T), np.concatenate(Wt) / TWO_PI


def gram_potential(setup: ObservationSetup, nodes: int = 16, refine: int = 1) -> ObservabilityReport:
    """Gram matrix of perturbed waves exp(-itH)u0 by time quadrature.

    H = diag(|k|^2) + (V̂(k - k')) on the frequency box is diagonalized once;
    in its eigenbasis the integrand is B(t) ∘ exp(i(λ_a - λ_b)t) with
    B(t) = Q^H M(t) Q and M(t)[k, k'] = ŵ(t; k - k').
    """
    modes = setup.modes()
    K, s = _mode_arrays(modes)
    pot = {} if setup.potential is None else setup.potential.modes()
    lam, Q, asym = _hamiltonian_eig(modes, pot)
    m = K[:, None, :] - K[None, :, :]
    w = setup.chi_sq
    td = w.time_degree()
    spread = float(lam.max() - lam.min()) + (0 if math.isinf(td) else td)
    t, wt = _gauss_panels(w.time_breakpoints(), spread * refine + 1, nodes)
    G = np.zeros((len(modes), len(modes)), dtype=complex)
    time_dep = w.time_degree() != 0
    if not time_dep:
        M0 = w.spatial_coeff(np.zeros(1), m)[0]
        B0 = Q.conj().T @ M0 @ Q
    for start in range(0, len(t), 256):
        tt = t[start:start + 256]
        ww = wt[start:start + 256]
        Ms = w.spatial_coeff(tt, m) if time_dep else None
        for j, tj in enumerate(tt):
            B = Q.conj().T @ Ms[j] @ Q if time_dep else B0
            ph = np.exp(1j * lam * tj)
            G += ww[j] * (ph[:, None] * B * ph.conj()[None, :])
    G = Q @ G @ Q.conj().T
    meta = dict(F=setup.freq_bound, method="time quadrature", panels_nodes=nodes, quadrature_points=len(t))
    if asym:
        meta["symmetrized"] = asym
    return ObservabilityReport.from_gram(G, modes, **meta)


def _hamiltonian_eig(modes, pot):
    col = {k: i for i, k in enumerate(modes)}
    H = np.diag([float(sum(x * x for x in k)) for k in modes]).astype(complex)
    for i, k in enumerate(modes):
        for j, v in pot.items():
            src = col.get(tuple(a - c for a, c in zip(k, j)))
            if src is not None:
                H[i, src] += v
    asym = float(np.abs(H - H.conj().T).max())
    if asym > 1e-12:
        raise ValueError(f"truncated Hamiltonian is not Hermitian (defect {asym:.3g})")
    lam, Q = np.linalg.eigh(0.5 * (H + H.conj().T))
    return lam, Q, asym


def gram_potential_exact(setup: ObservationSetup) -> np.ndarray:
    """Gram matrix for time-independent weights via exact time integrals.

    Only the time-indicator part is integrated: the mean of exp(iωt) over a
    window [a, b] ⊆ [-π, π] has a closed form.
    """
    if not isinstance(setup.chi_sq, ProductIndicator):
        raise TypeError("closed-form time integral needs a product indicator")
    modes = setup.modes()
    K, _ = _mode_arrays(modes)
    pot = {} if setup.potential is None else setup.potential.modes()
    lam, Q, _ = _hamiltonian_eig(modes, pot)
    m = K[:, None, :] - K[None, :, :]
    M0 = setup.chi_sq._space(m)
    B = Q.conj().T @ M0 @ Q
    a, b = setup.chi_sq.time or (-math.pi, math.pi)
    om = lam[:, None] - lam[None, :]
    T = np.where(np.abs(om) < 1e-300, (b - a) / TWO_PI, 0j)
    nz = np.abs(om) >= 1e-300
    T[nz] = (np.exp(1j * om[nz] * b) - np.exp(1j * om[nz] * a)) / (1j * om[nz] * TWO_PI)
    return Q @ (B * T) @ Q.conj().T


def obs_constant_scan(setup: ObservationSetup, F_list: Sequence[int]) -> list[tuple[int, float]]:
    """Observability constants on growing frequency balls."""
    if list(F_list) != sorted(F_list):
        raise ValueError("F_list must be increasing")
    fn = gram_free if setup.potential is None else gram_potential
    return [(F, fn(setup.with_bound(F)).obs_constant) for F in F_list]


def eigenspace_gram(n: int, chi_sq: Multiplier, d: int) -> ObservabilityReport:
    """Spatial Gram matrix over span{e^{ik.x} : |k|^2 = n} (time-averaged weight)."""
    r = math.isqrt(n)
    K = lattice_points_in_ball(AffineSublattice((0,) * d, Sublattice.full(d)), n, n - 1)
    if len(K) == 0 or r * r > n + 1:
        raise ValueError(f"no lattice points with |k|^2 = {n} in dimension {d}")
    modes = [tuple(int(x) for x in k) for k in K]
    m = K[:, None, :] - K[None, :, :]
    G = chi_sq.coeff(np.zeros(m.shape[:-1], dtype=int), m)
    return ObservabilityReport.from_gram(G, modes, n=n, d=d)


def observation_norm_sq(chi_sq: Multiplier, u: SpectrumField, Nt: int, Nx: int) -> float:
    """Grid quadrature of ∫ w |u|^2 with t sampled from -π."""
    shifted = SpectrumField(u.dim, {(n, k): a * (-1) ** (n % 2) for (n, k), a in u.coeffs.items()})
    U = evaluate_grid(shifted, Nt, Nx)
    return float(np.mean(chi_sq.samples(Nt, Nx) * np.abs(U) ** 2))


def decoupling_defect(zeta: SpectrumField, decomp: ClusterDecomposition,
                      u0_samples: Iterable[SpectrumField]) -> float:
    """max over samples of | ||ζu||^2 - Σ_α ||ζ u_α||^2 | for u = e^{itΔ}u0.

    Free waves live on the paraboloid, so projecting onto the cluster points
    Q^α or onto the near sets N^α gives the same pieces u_α.
    """
    worst = 0.0
    owner = {}
    for c in decomp.clusters:
        for p in c.points:
            owner[(p.n, tuple(p.k))] = c.id
    for u0 in u0_samples:
        u = free_evolve(u0)
        pieces: dict = {}
        for key, a in u.coeffs.items():
            cid = owner.get(key)
            if cid is None:
                raise ValueError(f"sample mode {key[1]} lies outside the decomposition box")
            pieces.setdefault(cid, {})[key] = a
        whole = l2_norm(multiply(zeta, u)) ** 2
        parts = sum(l2_norm(multiply(zeta, SpectrumField(u.dim, p))) ** 2 for _, p in sorted(pieces.items()))
        worst = max(worst, abs(whole - parts))
    return worst


# ---------------------------------------------------------------- probes

def random_unit_data(rng: np.random.Generator, modes: Sequence[tuple[int, ...]]) -> np.ndarray:
    a = rng.normal(size=len(modes)) + 1j * rng.normal(size=len(modes))
    return a / np.linalg.norm(a)


def _box_modes(d: int, F: int) -> list[tuple[int, ...]]:
    K = lattice_points_in_ball(AffineSublattice((0,) * d, Sublattice.full(d)), F * F)
    return [tuple(int(x) for x in k) for k in K]


def _wave_grid(modes, amps, Nt: int, Nx: int) -> np.ndarray:
    d = len(modes[0])
    f = SpectrumField(d, {(-sum(x * x for x in k), k): a for k, a in zip(modes, amps)})
    return evaluate_grid(f, Nt, Nx)


def _resolving_grid(F: int, p: float, d: int) -> tuple[int, int]:
    q = max(2.0, p)
    Nt = 1 << max(3, int(math.ceil(math.log2(q * F * F + 2))))
    Nx = 1 << max(3, int(math.ceil(math.log2(q * F + 2))))
    return Nt, Nx


def top_mass(density: np.ndarray, delta: float) -> float:
    """Largest mass of |u|^2 on a union of grid cells of total measure delta.

    Cells are taken greedily in decreasing order; the last one fractionally.
    """
    v = np.sort(density.reshape(-1))[::-1]
    N = len(v)
    c = np.concatenate([[0.0], np.cumsum(v)]) / N
    x = delta * N
    j = min(int(math.floor(x)), N)
    frac = x - j
    return float(c[j] + (frac * v[j] / N if j < N else 0.0))


@dataclass
class UIProfile:
    delta_grid: list[float]
    worst_mass: list[float]
    moment_bound: float
    p: float
    F: int
    d: int
    sample_count: int
    seed: int

    def to_dict(self) -> dict:
        return {"delta_grid": self.delta_grid, "worst_mass": self.worst_mass,
                "moment_bound": self.moment_bound, "p": self.p, "F": self.F, "d": self.d,
                "sample_count": self.sample_count, "seed": self.seed}

    def rows(self) -> list[list[str]]:
        return [[f"{dl:.17g}", f"{m:.17g}"] for dl, m in zip(self.delta_grid, self.worst_mass)]


def density_profile(density: np.ndarray, delta_grid: Sequence[float], p: float) -> tuple[list[float], float]:
    """(top masses for each δ, Φ-moment mean(density^{p/2}))."""
    return [top_mass(density, dl) for dl in delta_grid], float(np.mean(density ** (p / 2)))


def ui_profile(d: int, F: int, sample_count: int, delta_grid: Sequence[float], p: float = 4,
               seed: int = 0) -> UIProfile:
    """Uniform-integrability probe for |e^{itΔ}u0|^2 over random unit data."""
    if p < 2:
        raise ValueError("p must be >= 2")
    modes = _box_modes(d, F)
    Nt, Nx = _resolving_grid(F, p, d)
    rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(sample_count)]

    def one(rng):
        U = _wave_grid(modes, random_unit_data(rng, modes), Nt, Nx)
        return density_profile(np.abs(U) ** 2, delta_grid, p)

    res = _ordered_map(one, rngs)
    worst = [max(r[0][i] for r in res) for i in range(len(delta_grid))]
    return UIProfile(list(map(float, delta_grid)), worst, max(r[1] for r in res), p, F, d, sample_count, seed)


def _power_norm_even(modes, amps, p: int) -> float:
    """||u||_{L^p}^p for even p by exact convolution powers of the coefficients."""
    K = np.asarray(modes, dtype=np.int64).reshape(len(modes), -1)
    keys = np.concatenate([-(K * K).sum(axis=1)[:, None], K], axis=1)
    base_keys, base = keys, np.asarray(amps, dtype=complex)
    cur_keys, cur = base_keys, base
    for _ in range(p // 2 - 1):
        nk = (cur_keys[:, None, :] + base_keys[None, :, :]).reshape(-1, keys.shape[1])
        nv = (cur[:, None] * base[None, :]).reshape(-1)
        uk, inv = np.unique(nk, axis=0, return_inverse=True)
        acc = np.zeros(len(uk), dtype=complex)
        np.add.at(acc, inv.reshape(-1), nv)
        cur_keys, cur = uk, acc
    return float(np.sum(np.abs(cur) ** 2))


def lp_ratio(modes, amps, p: float) -> float:
    """||e^{itΔ}u0||_{L^p} / ||u0||_{L^2}."""
    norm0 = float(np.linalg.norm(amps))
    if float(p).is_integer() and int(p) % 2 == 0:
        val = _power_norm_even(modes, amps, int(p)) ** (1 / p)
    else:
        F = max(max(abs(x) for x in k) for k in modes)
        Nt, Nx = _resolving_grid(max(F, 1), p, len(modes[0]))
        U = _wave_grid(modes, amps, 2 * Nt, 2 * Nx)
        val = float(np.mean(np.abs(U) ** p)) ** (1 / p)
    return val / norm0


def strichartz_scan(d: int, p: float, F_list: Sequence[int], sample_count: int, seed: int = 0) -> list[dict]:
    """Empirical sup of ||e^{itΔ}u0||_{L^p} / ||u0|| over random and designed data."""
    out = []
    for F in F_list:
        modes = _box_modes(d, F)
        rngs = [np.random.default_rng(s) for s in np.random.SeedSequence([seed, F]).spawn(sample_count)]
        ratios = _ordered_map(lambda r: lp_ratio(modes, random_unit_data(r, modes), p), rngs)
        flat = np.ones(len(modes)) / math.sqrt(len(modes))
        ext = lp_ratio(modes, flat, p)
        out.append({"F": F, "p": p, "d": d, "samples": sample_count, "seed": seed,
                    "random_sup": max(ratios) if ratios else float("nan"),
                    "random_mean": float(np.mean(ratios)) if ratios else float("nan"),
                    "extremal_candidate": ext,
                    "sup": max([ext] + list(ratios))})
    return out


def y_norm_estimate(setup: ObservationSetup, tol: float = 1e-14, max_iter: int = 50000,
                    seed: int = 0) -> tuple[float, int]:
    """Largest singular value of u0 -> χ e^{itΔ}u0 by power iteration on the Gram.

    Returns (estimate, iterations).
    """
    G = gram_free(setup).gram
    rng = np.random.default_rng(seed)
    v = np.ones(len(G), dtype=complex) + 0.1 * (rng.normal(size=len(G)) + 1j * rng.normal(size=len(G)))
    v /= np.linalg.norm(v)
    lam = 0.0
    for it in range(1, max_iter + 1):
        w = G @ v
        new = float(np.vdot(v, w).real)
        nrm = np.linalg.norm(w)
        if nrm == 0:
            return 0.0, it
        v = w / nrm
        if abs(new - lam) <= tol * max(abs(new), 1e-300):
            lam = new
            break
        lam = new
    return math.sqrt(max(lam, 0.0)), it


@dataclass
class RiemannApproximation:
    field: SpectrumField
    degree: int
    oscillation_measure: float
    sup_error_off_set: float
    sup_norm: float
    sup_error: float


def riemann_approximate(chi_grid, level: int) -> RiemannApproximation:
    """Fejér-mean approximant of a bounded function sampled on a periodic grid.

    Uses δ = π/level and ε = 1/level: points whose δ-neighbourhood
    oscillation is at least ε form the exceptional set; the uniform error is
    reported on its complement.
    """
    if level < 1:
        raise ValueError("level must be >= 1")
    g = np.asarray(chi_grid, dtype=float)
    d = g.ndim
    N = g.shape[0]
    D = min(4 * level * level, N // 2 - 1)
    C = np.fft.fftn(g) / g.size
    k1 = np.fft.fftfreq(N, 1.0 / N).round().astype(int)
    weight = np.ones(g.shape)
    for j in range(d):
        wj = np.clip(1 - np.abs(k1) / (D + 1), 0, None)
        weight = weight * wj.reshape((1,) * j + (-1,) + (1,) * (d - j - 1))
    A = C * weight
    approx = (np.fft.ifftn(A) * A.size).real
    h = 2 * math.pi / N
    delta = math.pi / level
    r = max(0, math.ceil(delta / h) - 1)
    size = 2 * r + 1
    osc = maximum_filter(g, size=size, mode="wrap") - minimum_filter(g, size=size, mode="wrap")
    bad = osc >= 1.0 / level
    err = np.abs(approx - g)
    sup_off = float(err[~bad].max()) if (~bad).any() else 0.0
    modes = {}
    for idx in zip(*np.nonzero(np.abs(A) > 1e-15)):
        modes[tuple(int(k1[i]) for i in idx)] = complex(A[idx])
    f = SpectrumField.spatial(d, modes)
    return RiemannApproximation(f, D, float(bad.mean()), sup_off, float(np.abs(approx).max()),
                                float(err.max()))
