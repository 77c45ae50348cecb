"""Periodized Duhamel operators and fixed-point solvers.

Sign conventions follow directly from

    (D f)(t) = -i ∫_0^t exp(i(t-s)Δ) f(s) ds.

For a mode exp(i(m t + k.x)) with ω = m + |k|^2 this gives
``-(exp(imt) - exp(-i|k|^2 t))/ω`` when ω ≠ 0 and ``-i t exp(-i|k|^2 t)``
when ω = 0, hence on the Fourier side

    E η D = -Eη Θ + Eη U0 T Θ - i E(tη) U0 P.

The same three-term structure with trigonometric polynomials φ, ψ in place
of Eη, E(tη) defines the approximate operator K.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Literal, Mapping

import numpy as np
from scipy.signal import fftconvolve

from .clusters import lattice_points_in_ball
from .lattice import AffineSublattice, Sublattice
from .spectral import SpectrumField, free_evolve, multiply

Weight = Literal["eta", "t_eta"]


class NonContractionError(RuntimeError):
    """The fixed-point map failed to contract even after shrinking the cutoff."""


# ---------------------------------------------------------------- cutoffs

def _smooth_step(x: np.ndarray) -> np.ndarray:
    """C^∞ step: 0 for x <= 0, 1 for x >= 1."""
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        a = np.where(x > 0, np.exp(-1.0 / np.where(x > 0, x, 1.0)), 0.0)
        b = np.where(x < 1, np.exp(-1.0 / np.where(x < 1, 1.0 - x, 1.0)), 0.0)
    return a / (a + b)


@dataclass(frozen=True)
class CutoffSpec:
    """Smooth even bump: η ≡ 1 on |t| <= plateau·τ, η = 0 for |t| >= τ."""

    half_width: float = math.pi / 4
    plateau: float = 0.5
    fourier_truncation: int = 512
    shape: str = "smooth bump"

    def __post_init__(self):
        if not 0 < self.half_width < math.pi:
            raise ValueError("half_width must lie in (0, π)")
        if not 0 < self.plateau < 1:
            raise ValueError("plateau fraction must lie in (0, 1)")
        if self.fourier_truncation < 1:
            raise ValueError("fourier_truncation must be >= 1")
        if self.shape != "smooth bump":
            raise ValueError(f"unknown cutoff shape {self.shape!r}")

    @property
    def plateau_half_width(self) -> float:
        return self.plateau * self.half_width

    def eta(self, t) -> np.ndarray:
        t = np.abs(np.asarray(t, dtype=float))
        tau = self.half_width
        return _smooth_step((tau - t) / (tau - self.plateau * tau))

    def weight(self, t, which: Weight = "eta") -> np.ndarray:
        w = self.eta(t)
        return w * np.asarray(t, dtype=float) if which == "t_eta" else w

    def rescaled(self, factor: float) -> "CutoffSpec":
        """η_τ -> η_{factor·τ}; the Fourier truncation grows like 1/factor."""
        return replace(self, half_width=self.half_width * factor,
                       fourier_truncation=int(math.ceil(self.fourier_truncation / factor)))


def _cutoff_all(spec: CutoffSpec, which: Weight) -> tuple[np.ndarray, np.ndarray]:
    L = spec.fourier_truncation
    N = 1 << max(16, int(math.ceil(math.log2(8 * L + 8))))
    t = -math.pi + 2 * math.pi * np.arange(N) / N
    w = spec.weight(t, which)
    n = np.fft.fftfreq(N, 1.0 / N).round().astype(np.int64)
    # mean over the period of w(t) exp(-int); grid starts at -π
    c = np.fft.fft(w) / N * np.exp(1j * math.pi * n)
    return n, c


def cutoff_coefficients(spec: CutoffSpec, weight: Weight = "eta") -> np.ndarray:
    """Fourier coefficients of Eη (or E(tη)) for n = -L..L, as an array indexed n + L."""
    n, c = _cutoff_all(spec, weight)
    L = spec.fourier_truncation
    out = np.zeros(2 * L + 1, dtype=complex)
    keep = np.abs(n) <= L
    out[n[keep] + L] = c[keep]
    if weight == "eta":
        out = out.real.astype(complex)  # real even function
    else:
        out = 1j * out.imag  # real odd function
    return out


def cutoff_tail_mass(spec: CutoffSpec, weight: Weight = "eta") -> float:
    """Relative ℓ² mass of the coefficients dropped by the truncation."""
    n, c = _cutoff_all(spec, weight)
    tot = np.sum(np.abs(c) ** 2)
    return float(np.sqrt(np.sum(np.abs(c[np.abs(n) > spec.fourier_truncation]) ** 2) / tot))


def cutoff_fourier(spec: CutoffSpec, weight: Weight = "eta", dim: int = 1) -> SpectrumField:
    c = cutoff_coefficients(spec, weight)
    L = spec.fourier_truncation
    return SpectrumField.temporal(dim, {n - L: a for n, a in enumerate(c)})


def temporal_array(phi: SpectrumField) -> np.ndarray:
    """Coefficients of a temporal field as a centered array indexed n + L."""
    if not phi.is_temporal():
        raise ValueError("expected a purely temporal field")
    L = phi.temporal_degree()
    out = np.zeros(2 * L + 1, dtype=complex)
    for (n, _), a in phi.coeffs.items():
        out[n + L] = a
    return out


# ---------------------------------------------------------------- Fourier-side operators

def _omega(n: int, k) -> int:
    return n + sum(x * x for x in k)


def theta_apply(f: SpectrumField) -> SpectrumField:
    """Multiply the amplitude at (n, k) by 1/(n + |k|^2), or by 0 on the paraboloid."""
    out = {}
    for (n, k), a in f.coeffs.items():
        w = _omega(n, k)
        if w:
            out[(n, k)] = a / w
    return SpectrumField(f.dim, out)


def op_T(f: SpectrumField) -> SpectrumField:
    """Spatial field k -> Σ_n f(n, k)."""
    out: dict = {}
    for (n, k), a in f.items():
        out[k] = out.get(k, 0j) + a
    return SpectrumField.spatial(f.dim, out)


def op_P(f: SpectrumField) -> SpectrumField:
    """Trace on the paraboloid: k -> f(-|k|^2, k)."""
    return SpectrumField.spatial(f.dim, {k: a for (n, k), a in f.coeffs.items() if _omega(n, k) == 0})


def k_operator(f: SpectrumField, phi: SpectrumField, psi: SpectrumField) -> SpectrumField:
    """-φΘf + φ U0 T Θ f - i ψ U0 P f for temporal trigonometric polynomials φ, ψ."""
    th = theta_apply(f)
    out = multiply(phi, free_evolve(op_T(th))) - multiply(phi, th)
    p = op_P(f)
    if not p.is_zero():
        out = out - 1j * multiply(psi, free_evolve(p))
    return out


def duhamel_identity_rhs(f: SpectrumField, spec: CutoffSpec) -> SpectrumField:
    """E η D f assembled from Θ, T, P and the truncated cutoff series."""
    return k_operator(f, cutoff_fourier(spec, "eta", f.dim), cutoff_fourier(spec, "t_eta", f.dim))


def _by_k(f: SpectrumField) -> dict:
    groups: dict = {}
    for (n, k), a in f.items():
        groups.setdefault(k, []).append((n, a))
    return groups


def duhamel_fourier(f: SpectrumField, spec: CutoffSpec) -> SpectrumField:
    """E η D f through its Fourier kernel, column by column in k."""
    c = cutoff_coefficients(spec, "eta")
    ct = cutoff_coefficients(spec, "t_eta")
    L = spec.fourier_truncation
    offs = np.arange(-L, L + 1)
    out: dict = {}

    def add(k, n_arr, vals):
        for n, v in zip(n_arr.tolist(), vals):
            out[(n, k)] = out.get((n, k), 0j) + v

    for k, modes in _by_k(f).items():
        s = sum(x * x for x in k)
        total = 0j
        for m, a in modes:
            w = m + s
            if w:
                add(k, m + offs, -(a / w) * c)
                total += a / w
            else:
                add(k, -s + offs, -1j * a * ct)
        if total != 0:
            add(k, -s + offs, total * c)
    return SpectrumField(f.dim, out)


def duhamel_quadrature(f: SpectrumField, spec: CutoffSpec, n_time: int = 1 << 14,
                       max_freq: int | None = None) -> SpectrumField:
    """E η D f by direct time quadrature.

    The cumulative trapezoidal rule integrates exp(i|k|^2 s) f_k(s) from 0
    on a uniform grid of ``n_time`` points over [-π, π); the result is
    multiplied by η and transformed back with an FFT.
    """
    if n_time % 2:
        raise ValueError("n_time must be even")
    h = 2 * math.pi / n_time
    t = -math.pi + h * np.arange(n_time)
    mid = n_time // 2  # t[mid] == 0
    eta = spec.eta(t)
    freqs = np.fft.fftfreq(n_time, 1.0 / n_time).round().astype(np.int64)
    phase = np.exp(1j * math.pi * freqs)
    max_freq = n_time // 2 - 1 if max_freq is None else max_freq
    keep = np.abs(freqs) <= max_freq
    out: dict = {}
    for k, modes in _by_k(f).items():
        s = sum(x * x for x in k)
        g = np.zeros(n_time, dtype=complex)
        for m, a in modes:
            g += a * np.exp(1j * (m + s) * t)
        I = np.zeros(n_time, dtype=complex)
        fwd = g[mid:]
        I[mid:] = np.concatenate([[0], np.cumsum((fwd[1:] + fwd[:-1]) * (h / 2))])
        bwd = g[:mid + 1][::-1]
        I[:mid + 1] = -np.concatenate([[0], np.cumsum((bwd[1:] + bwd[:-1]) * (h / 2))])[::-1]
        D = -1j * np.exp(-1j * s * t) * I * eta
        C = np.fft.fft(D) / n_time * phase
        for n, a in zip(freqs[keep].tolist(), C[keep]):
            out[(n, k)] = a
    return SpectrumField(f.dim, out)


def duhamel_norm(spec: CutoffSpec, b: float = 0.6, eps: float = 0.1, window: int | None = None) -> float:
    """Norm of E η D : X^{b-1+ε} -> X^b restricted to |n + |k|^2| <= window.

    The operator commutes with the frequency shift n -> n + |k|^2, so one
    spatial mode (k = 0) carries the whole norm.
    """
    L = spec.fourier_truncation
    N = 2 * L if window is None else window
    c = cutoff_coefficients(spec, "eta")
    ct = cutoff_coefficients(spec, "t_eta")
    n = np.arange(-N, N + 1)

    def coef(arr, idx):
        out = np.zeros(idx.shape, dtype=complex)
        ok = np.abs(idx) <= L
        out[ok] = arr[idx[ok] + L]
        return out

    theta = np.where(n != 0, 1.0 / np.where(n != 0, n, 1), 0.0)
    M = -coef(c, n[:, None] - n[None, :]) * theta[None, :]
    M += coef(c, n)[:, None] * theta[None, :]
    M[:, N] += -1j * coef(ct, n)
    w_out = (1.0 + n ** 2.0) ** (b / 2)
    w_in = (1.0 + n ** 2.0) ** ((b - 1 + eps) / 2)
    return float(np.linalg.norm(w_out[:, None] * M / w_in[None, :], 2))


# ---------------------------------------------------------------- potentials

@dataclass(frozen=True)
class PotentialSpec:
    """A potential on T^d, either as Fourier modes {k: V̂(k)} or as grid samples."""

    dim: int
    representation: Literal["fourier_modes", "grid_samples"] = "fourier_modes"
    modes_data: Mapping[tuple[int, ...], complex] = field(default_factory=dict)
    samples: np.ndarray | None = None
    degree: int | None = None

    @classmethod
    def from_modes(cls, dim: int, modes: Mapping) -> "PotentialSpec":
        clean = {tuple(int(x) for x in k): complex(a) for k, a in modes.items() if a != 0}
        deg = max((max(map(abs, k)) for k in clean), default=0)
        return cls(dim, "fourier_modes", clean, None, deg)

    @classmethod
    def from_grid(cls, samples) -> "PotentialSpec":
        arr = np.asarray(samples, dtype=complex)
        return cls(arr.ndim, "grid_samples", {}, arr, arr.shape[0] // 2 - 1)

    def modes(self, prune: float = 1e-14) -> dict:
        if self.representation == "fourier_modes":
            return dict(self.modes_data)
        C = np.fft.fftn(self.samples) / self.samples.size
        N = self.samples.shape[0]
        cut = prune * max(np.abs(C).max(), 1e-300)
        out = {}
        for idx in zip(*np.nonzero(np.abs(C) > cut)):
            k = tuple(int(i) - N if i > N // 2 else int(i) for i in idx)
            out[k] = complex(C[idx])
        return out

    def is_real(self, tol: float = 1e-12) -> bool:
        m = self.modes()
        for k, a in m.items():
            b = m.get(tuple(-x for x in k), 0j)
            if abs(a - b.conjugate()) > tol * max(1.0, abs(a)):
                return False
        return True

    def as_field(self) -> SpectrumField:
        return SpectrumField.spatial(self.dim, self.modes())

    def grid(self, N: int) -> np.ndarray:
        if self.representation == "grid_samples" and self.samples.shape[0] == N:
            return np.array(self.samples)
        A = np.zeros((N,) * self.dim, dtype=complex)
        for k, a in self.modes().items():
            A[tuple(x % N for x in k)] += a
        return np.fft.ifftn(A) * A.size


def project_potential(V: PotentialSpec, lat: Sublattice) -> PotentialSpec:
    """Keep the Fourier modes of V lying in ``lat`` (V_Λ = Π_Λ V)."""
    kept = {k: a for k, a in V.modes().items() if k in lat}
    if V.representation == "fourier_modes":
        return PotentialSpec.from_modes(V.dim, kept)
    N = V.samples.shape[0]
    A = np.zeros(V.samples.shape, dtype=complex)
    for k, a in kept.items():
        A[tuple(x % N for x in k)] = a
    return PotentialSpec.from_grid(np.fft.ifftn(A) * A.size)


def fiber_average(V: PotentialSpec, lat: Sublattice, x: np.ndarray, samples: int = 16) -> np.ndarray:
    """Average of V(x + y) over the subtorus spanned by lat⊥ (uniform grid in y).

    Exact for trigonometric potentials whose degree is below ``samples``.
    """
    from .lattice import perp
    P = perp(lat)
    modes = V.modes()
    x = np.atleast_2d(np.asarray(x, dtype=float))
    grids = np.meshgrid(*[2 * np.pi * np.arange(samples) / samples] * P.rank, indexing="ij")
    Y = np.zeros((grids[0].size if P.rank else 1, V.dim))
    for g, p in zip(grids, P.basis):
        Y += np.outer(g.reshape(-1), p)
    out = np.zeros(len(x), dtype=complex)
    for k, a in modes.items():
        kv = np.asarray(k, dtype=float)
        out += a * np.exp(1j * x @ kv) * np.mean(np.exp(1j * Y @ kv))
    return out


# ---------------------------------------------------------------- dense solver core

@dataclass
class _Box:
    """Truncation box: temporal window [n0, n0 + Nn) times the k-list."""

    ks: list[tuple[int, ...]]
    n0: int
    Nn: int
    b: float

    def __post_init__(self):
        self.col = {k: i for i, k in enumerate(self.ks)}
        self.s = np.array([sum(x * x for x in k) for k in self.ks], dtype=np.int64)
        self.n = self.n0 + np.arange(self.Nn)
        self.omega = self.n[:, None] + self.s[None, :]
        self.weight = (1.0 + self.omega.astype(float) ** 2) ** (self.b / 2)
        with np.errstate(divide="ignore"):
            self.theta = np.where(self.omega != 0, 1.0 / np.where(self.omega != 0, self.omega, 1), 0.0)
        self.res_row = -self.s - self.n0  # row of the paraboloid point in each column

    def xb(self, U: np.ndarray) -> float:
        return float(np.linalg.norm(self.weight * U))

    def from_field(self, f: SpectrumField) -> np.ndarray:
        U = np.zeros((self.Nn, len(self.ks)), dtype=complex)
        for (n, k), a in f.coeffs.items():
            j = self.col.get(k)
            if j is not None and 0 <= n - self.n0 < self.Nn:
                U[n - self.n0, j] += a
        return U

    def to_field(self, U: np.ndarray) -> SpectrumField:
        dim = len(self.ks[0])
        rows, cols = np.nonzero(np.abs(U) > 0)
        return SpectrumField(dim, {(int(self.n0 + r), self.ks[c]): U[r, c] for r, c in zip(rows, cols)})

    def shifted(self, arr: np.ndarray) -> np.ndarray:
        """Matrix M[n, col] = arr[n + |k|^2 + L] (zero outside the array)."""
        L = (len(arr) - 1) // 2
        idx = self.omega + L
        out = np.zeros(self.omega.shape, dtype=complex)
        ok = (idx >= 0) & (idx < len(arr))
        out[ok] = arr[idx[ok]]
        return out


class _Propagator:
    """Dense application of u -> K (V u) on a box, K built from φ, ψ arrays."""

    def __init__(self, box: _Box, phi: np.ndarray, psi: np.ndarray, pot: Mapping):
        self.box = box
        self.phi = phi
        self.L = (len(phi) - 1) // 2
        self.phi_sh = box.shifted(phi)
        self.psi_sh = box.shifted(psi)
        self.shifts = []
        for j, v in sorted(pot.items()):
            src = np.array([box.col.get(tuple(a - b for a, b in zip(k, j)), -1) for k in box.ks])
            mask = src >= 0
            if mask.any():
                self.shifts.append((v, np.nonzero(mask)[0], src[mask]))
        self.res_ok = (box.res_row >= 0) & (box.res_row < box.Nn)

    def potential(self, U: np.ndarray) -> np.ndarray:
        out = np.zeros_like(U)
        for v, dst, src in self.shifts:
            out[:, dst] += v * U[:, src]
        return out

    def kernel(self, G: np.ndarray) -> np.ndarray:
        box = self.box
        Gt = box.theta * G
        conv = fftconvolve(Gt, self.phi[:, None], axes=0)[self.L:self.L + box.Nn]
        out = -conv + self.phi_sh * Gt.sum(axis=0)[None, :]
        res = np.zeros(len(box.ks), dtype=complex)
        res[self.res_ok] = G[box.res_row[self.res_ok], np.nonzero(self.res_ok)[0]]
        out -= 1j * self.psi_sh * res[None, :]
        return out

    def __call__(self, U: np.ndarray) -> np.ndarray:
        if not self.shifts:
            return np.zeros_like(U)
        return self.kernel(self.potential(U))


@dataclass
class SolveReport:
    iterations: int
    residual_xb: float
    contraction_estimate: float
    spec: CutoffSpec | None
    b: float
    coefficients: np.ndarray = field(repr=False)
    box: _Box = field(repr=False)
    history: list[float] = field(default_factory=list, repr=False)

    @property
    def solution(self) -> SpectrumField:
        return self.box.to_field(self.coefficients)

    @property
    def modes(self) -> list[tuple[int, ...]]:
        return list(self.box.ks)

    def spatial_at(self, t) -> np.ndarray:
        """Spatial coefficients u(t, k) for each time in ``t``; shape (len(t), n_modes)."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        E = np.exp(1j * np.outer(t, self.box.n))
        return E @ self.coefficients

    def xb_distance(self, other: "SolveReport") -> float:
        """X^b distance to another solution, compared on the union of both boxes."""
        a, b = self.solution, other.solution
        from .spectral import xb_norm
        return xb_norm(a - b, self.b)

    def to_json(self, field_ref: str | None = None) -> str:
        return json.dumps({
            "iterations": self.iterations,
            "residual_xb": self.residual_xb,
            "contraction_estimate": self.contraction_estimate,
            "b": self.b,
            "half_width": None if self.spec is None else self.spec.half_width,
            "fourier_truncation": None if self.spec is None else self.spec.fourier_truncation,
            "modes": [list(k) for k in self.box.ks],
            "time_window": [int(self.box.n0), int(self.box.n0 + self.box.Nn - 1)],
            "field": field_ref,
        }, sort_keys=True)


def _box_modes(u0: SpectrumField, lat: Sublattice | None, freq_bound: int | None,
               gamma: AffineSublattice | None) -> list[tuple[int, ...]]:
    d = u0.dim
    if gamma is None:
        if u0.is_zero():
            raise ValueError("cannot infer the affine lattice from a zero initial datum")
        lat = Sublattice.full(d) if lat is None else lat
        q = next(iter(u0))[1]
        gamma = AffineSublattice(q, lat)
    for _, k in u0.coeffs:
        if k not in gamma:
            raise ValueError(f"initial datum has a mode {k} outside the affine lattice")
    if freq_bound is None:
        freq_bound = max((math.isqrt(sum(x * x for x in k)) + 1 for _, k in u0.coeffs), default=0)
    K = lattice_points_in_ball(gamma, freq_bound * freq_bound)
    return [tuple(int(x) for x in k) for k in K]


def _make_box(ks, pot: Mapping, L: int, b: float) -> _Box:
    s = [sum(x * x for x in k) for k in ks]
    kset = set(ks)
    spread = 0
    for j in pot:
        for k in ks:
            k2 = tuple(a + c for a, c in zip(k, j))
            if k2 in kset:
                spread = max(spread, abs(sum(x * x for x in k2) - sum(x * x for x in k)))
    margin = L + 2 * spread + 8
    n0 = -max(s) - margin
    n1 = -min(s) + margin
    return _Box(list(ks), n0, n1 - n0 + 1, b)


def _fixed_point(prop: _Propagator, base: np.ndarray, tol: float, max_iter: int):
    box = prop.box
    U = base.copy()
    r = base + prop(U) - U
    norms = [box.xb(r)]
    its = 1
    ratios = []
    while norms[-1] > tol:
        if its >= max_iter or norms[-1] > 1e8 * max(norms[0], 1e-300) or not np.isfinite(norms[-1]):
            return None
        U = U + r
        r = prop(r)  # residual of the new iterate (linear map)
        its += 1
        norms.append(box.xb(r))
        ratios.append(norms[-1] / norms[-2] if norms[-2] > 0 else 0.0)
    # re-verify the residual of the returned iterate directly
    res = box.xb(base + prop(U) - U)
    return U, its, res, max(ratios, default=0.0), norms


def _potential_modes(V, lat, dim) -> dict:
    if V is None:
        return {}
    if isinstance(V, PotentialSpec):
        Vp = V if lat is None else project_potential(V, lat)
        return Vp.modes()
    if isinstance(V, SpectrumField):
        return {k: a for (_, k), a in V.coeffs.items() if lat is None or k in lat}
    return {tuple(k): complex(a) for k, a in dict(V).items() if lat is None or tuple(k) in lat}


def solve_periodized(u0: SpectrumField, V, lat: Sublattice | None = None,
                     g: SpectrumField | None = None, spec: CutoffSpec | None = None,
                     b: float = 0.6, tol: float = 1e-10, freq_bound: int | None = None,
                     gamma: AffineSublattice | None = None, max_iter: int = 200,
                     max_shrinks: int = 4) -> SolveReport:
    """Solve u = U0 u0 + Eη D V_Λ u + g by Picard iteration in truncated X^b.

    The box is Γ ∩ {|k| <= F} in space and a temporal window wide enough for
    the cutoff series. If the iteration does not converge, τ is halved (with
    the Fourier truncation doubled) up to ``max_shrinks`` times.
    """
    if not 0.5 < b < 1:
        raise ValueError("b must lie in (1/2, 1)")
    spec = CutoffSpec() if spec is None else spec
    pot = _potential_modes(V, lat, u0.dim)
    ks = _box_modes(u0, lat, freq_bound, gamma)
    for attempt in range(max_shrinks + 1):
        phi = cutoff_coefficients(spec, "eta")
        psi = cutoff_coefficients(spec, "t_eta")
        rep = _solve(u0, pot, ks, phi, psi, g, b, tol, max_iter, spec)
        if rep is not None:
            return rep
        spec = spec.rescaled(0.5)
    raise NonContractionError(f"no contraction after {max_shrinks} halvings of τ")


def solve_approximate(u0: SpectrumField, W, phi: SpectrumField, psi: SpectrumField,
                      lat: Sublattice | None = None, g: SpectrumField | None = None,
                      b: float = 0.6, tol: float = 1e-10, freq_bound: int | None = None,
                      gamma: AffineSublattice | None = None, max_iter: int = 200) -> SolveReport:
    """Solve v = U0 u0 + K W_Λ v + g with K = -φΘ + φU0TΘ - iψU0P."""
    if not 0.5 < b < 1:
        raise ValueError("b must lie in (1/2, 1)")
    pa, sa = temporal_array(phi), temporal_array(psi)
    L = max(len(pa), len(sa)) // 2
    pa = np.pad(pa, (L - len(pa) // 2,) * 2)
    sa = np.pad(sa, (L - len(sa) // 2,) * 2)
    pot = _potential_modes(W, lat, u0.dim)
    ks = _box_modes(u0, lat, freq_bound, gamma)
    rep = _solve(u0, pot, ks, pa, sa, g, b, tol, max_iter, None)
    if rep is None:
        raise NonContractionError("approximate equation did not contract")
    return rep


def _solve(u0, pot, ks, phi, psi, g, b, tol, max_iter, spec):
    L = (len(phi) - 1) // 2
    box = _make_box(ks, pot, L, b)
    prop = _Propagator(box, phi, psi, pot)
    base = box.from_field(free_evolve(u0))
    if g is not None:
        base = base + box.from_field(g)
    out = _fixed_point(prop, base, tol, max_iter)
    if out is None:
        return None
    U, its, res, q, norms = out
    return SolveReport(its, res, q, spec, b, U, box, norms)


def hamiltonian_propagator(ks, pot: Mapping, t) -> np.ndarray:
    """exp(-i t H) on span{e^{ik.x}: k ∈ ks}, H = diag(|k|^2) + (V̂(k - k'))."""
    col = {tuple(k): i for i, k in enumerate(ks)}
    H = np.diag([float(sum(x * x for x in k)) for k in ks]).astype(complex)
    for i, k in enumerate(ks):
        for j, v in pot.items():
            src = col.get(tuple(a - c for a, c in zip(k, j)))
            if src is not None:
                H[i, src] += v
    if not np.allclose(H, H.conj().T, atol=1e-12):
        raise ValueError("truncated Hamiltonian is not Hermitian")
    H = 0.5 * (H + H.conj().T)
    lam, Q = np.linalg.eigh(H)
    t = np.atleast_1d(np.asarray(t, dtype=float))
    return np.stack([(Q * np.exp(-1j * tt * lam)) @ Q.conj().T for tt in t])


def k_operator_bound(phi: SpectrumField, psi: SpectrumField, b: float) -> float:
    """Explicit constant C with ||K f||_{X^b} <= C ||f||_{X^{b-1}}.

    Per spatial mode, in the frame ω = n + |k|^2:
    ||Θ F||_{H^b} <= √2 ||F||_{H^{b-1}}, convolution with φ costs
    2^{b/2} Σ|φ_j|<j>^b, the T-term is bounded with Cauchy–Schwarz and the
    P-term reads a single coefficient.
    """
    pa = temporal_array(phi)
    L = len(pa) // 2
    j = np.arange(-L, L + 1)
    wiener = float(np.sum(np.abs(pa) * (1.0 + j ** 2.0) ** (b / 2)))
    ct = math.sqrt(_bracket_sum(b))
    return math.sqrt(2) * (2 ** (b / 2) * wiener + ct * hb_norm(phi, b)) + hb_norm(psi, b)


def _bracket_sum(b: float, terms: int = 1 << 20) -> float:
    """Σ_{n∈Z} <n>^{-2b} with an integral tail bound (upper estimate)."""
    n = np.arange(1, terms + 1, dtype=float)
    head = 1.0 + 2.0 * np.sum((1.0 + n ** 2) ** (-b))
    tail = 2.0 * terms ** (1 - 2 * b) / (2 * b - 1)
    return float(head + tail)


def hb_norm(phi: SpectrumField, b: float) -> float:
    """H^b_t norm of a temporal trigonometric polynomial."""
    return float(math.sqrt(sum((1 + n * n) ** b * abs(a) ** 2 for (n, _), a in phi.coeffs.items())))


def t_operator_constant(b: float) -> float:
    """(Σ_n <n>^{-2b})^{1/2}: bound of ||T f||_{L^2} by ||f||_{X^b}."""
    return math.sqrt(_bracket_sum(b))
