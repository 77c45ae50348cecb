"""Finite space-time Fourier series on the torus T^{1+d}.

Convention: every integral is a mean over the torus (normalized Haar
measure), so ``f(t, x) = sum c(n, k) exp(i(n t + k.x))`` with
``c(n, k) = mean(f exp(-i(n t + k.x)))`` and ``||exp(i(nt+k.x))||_{L^2} = 1``.
A field whose support lies in ``{n = 0}`` is a purely spatial function.
"""
from __future__ import annotations

import csv
import json
from collections import defaultdict
from types import MappingProxyType
from typing import Callable, Iterable, Iterator, Mapping

import numpy as np

PRUNE = 1e-15

Freq = tuple[int, tuple[int, ...]]


class SpectrumField:
    """Finitely supported map ``(n, k) -> complex``; no stored zeros."""

    __slots__ = ("dim", "_coeffs")

    def __init__(self, dim: int, coeffs: Mapping[Freq, complex] | None = None,
                 prune: float = PRUNE):
        if dim < 1:
            raise ValueError("spatial dimension must be >= 1")
        self.dim = int(dim)
        clean: dict[Freq, complex] = {}
        for (n, k), a in (coeffs or {}).items():
            k = tuple(int(x) for x in k)
            if len(k) != self.dim:
                raise ValueError(f"frequency {k} does not have dimension {dim}")
            a = complex(a)
            if abs(a) >= prune:
                clean[(int(n), k)] = a
        self._coeffs = clean

    # construction helpers
    @classmethod
    def spatial(cls, dim: int, amps: Mapping[tuple[int, ...], complex]) -> "SpectrumField":
        return cls(dim, {(0, tuple(k)): a for k, a in amps.items()})

    @classmethod
    def temporal(cls, dim: int, amps: Mapping[int, complex]) -> "SpectrumField":
        return cls(dim, {(n, (0,) * dim): a for n, a in amps.items()})

    @classmethod
    def constant(cls, dim: int, value: complex = 1.0) -> "SpectrumField":
        return cls(dim, {(0, (0,) * dim): value})

    @classmethod
    def zero(cls, dim: int) -> "SpectrumField":
        return cls(dim)

    @property
    def coeffs(self) -> Mapping[Freq, complex]:
        return MappingProxyType(self._coeffs)

    def support(self) -> frozenset[Freq]:
        return frozenset(self._coeffs)

    def __len__(self) -> int:
        return len(self._coeffs)

    def __iter__(self) -> Iterator[Freq]:
        return iter(sorted(self._coeffs))

    def __getitem__(self, key: Freq) -> complex:
        n, k = key
        return self._coeffs.get((int(n), tuple(k)), 0j)

    def items(self):
        return sorted(self._coeffs.items())

    def is_zero(self) -> bool:
        return not self._coeffs

    def is_spatial(self) -> bool:
        return all(n == 0 for n, _ in self._coeffs)

    def is_temporal(self) -> bool:
        return all(not any(k) for _, k in self._coeffs)

    def degree(self) -> int:
        """Largest sup-norm ``max(|n|, |k_j|)`` over the support."""
        return max((max(abs(n), *map(abs, k)) for n, k in self._coeffs), default=0)

    def spatial_degree(self) -> int:
        return max((max(map(abs, k)) for _, k in self._coeffs), default=0)

    def temporal_degree(self) -> int:
        return max((abs(n) for n, _ in self._coeffs), default=0)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SpectrumField):
            return NotImplemented
        return self.dim == other.dim and self._coeffs == other._coeffs

    def __repr__(self) -> str:
        return f"SpectrumField(dim={self.dim}, modes={len(self._coeffs)})"

    def _combine(self, other: "SpectrumField", sign: float) -> "SpectrumField":
        _same_dim(self, other)
        out = dict(self._coeffs)
        for key, a in other._coeffs.items():
            out[key] = out.get(key, 0j) + sign * a
        return SpectrumField(self.dim, out)

    def __add__(self, other):
        return self._combine(other, 1.0)

    def __sub__(self, other):
        return self._combine(other, -1.0)

    def __mul__(self, scalar):
        if isinstance(scalar, SpectrumField):
            return multiply(self, scalar)
        return SpectrumField(self.dim, {key: scalar * a for key, a in self._coeffs.items()})

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def conj(self) -> "SpectrumField":
        """Fourier coefficients of the complex conjugate function."""
        return SpectrumField(self.dim, {(-n, tuple(-x for x in k)): a.conjugate()
                                        for (n, k), a in self._coeffs.items()})

    def to_json(self) -> str:
        recs = [{"n": n, "k": list(k), "re": a.real, "im": a.imag} for (n, k), a in self.items()]
        return json.dumps({"dim": self.dim, "modes": recs})

    @classmethod
    def from_json(cls, text: str) -> "SpectrumField":
        data = json.loads(text)
        if isinstance(data, list):
            recs, dim = data, len(data[0]["k"]) if data else 1
        else:
            recs, dim = data["modes"], data["dim"]
        return cls(dim, {(r["n"], tuple(r["k"])): complex(r["re"], r["im"]) for r in recs})


def _same_dim(f: SpectrumField, g: SpectrumField) -> None:
    if f.dim != g.dim:
        raise ValueError(f"dimension mismatch: {f.dim} vs {g.dim}")


class FreqSet:
    """A set of space-time frequencies, given by a predicate and optionally enumerated."""

    def __init__(self, predicate: Callable[[int, tuple[int, ...]], bool],
                 points: Iterable[Freq] | None = None):
        self._pred = predicate
        self._points = None if points is None else sorted(points)

    @classmethod
    def from_points(cls, points: Iterable[Freq]) -> "FreqSet":
        pts = frozenset((int(n), tuple(k)) for n, k in points)
        return cls(lambda n, k: (n, k) in pts, pts)

    def __contains__(self, key) -> bool:
        n, k = key
        return bool(self._pred(n, tuple(k)))

    def complement(self) -> "FreqSet":
        return FreqSet(lambda n, k: not self._pred(n, k))

    @property
    def points(self) -> list[Freq] | None:
        return self._points


def l2_norm(f: SpectrumField) -> float:
    return float(np.sqrt(sum(abs(a) ** 2 for a in f.coeffs.values())))


def bracket(s):
    """Japanese bracket <s> = (1 + s^2)^{1/2}."""
    return np.sqrt(1.0 + np.asarray(s, dtype=float) ** 2)


def xb_norm(f: SpectrumField, b: float) -> float:
    """Bourgain norm with weight <n + |k|^2>^b."""
    tot = 0.0
    for (n, k), a in f.coeffs.items():
        w = n + sum(x * x for x in k)
        tot += (1.0 + w * w) ** b * abs(a) ** 2
    return float(np.sqrt(tot))


def project(f: SpectrumField, S) -> SpectrumField:
    """Restrict the support of ``f`` to the frequency set ``S`` (anything supporting ``in``)."""
    return SpectrumField(f.dim, {key: a for key, a in f.coeffs.items() if key in S})


def free_evolve(u0: SpectrumField) -> SpectrumField:
    """Fourier coefficients of t -> exp(i t Δ) u0: mode k moves to (-|k|^2, k)."""
    if not u0.is_spatial():
        raise ValueError("free_evolve expects a purely spatial field (support in n = 0)")
    return SpectrumField(u0.dim, {(-sum(x * x for x in k), k): a for (_, k), a in u0.coeffs.items()})


def galilean(f: SpectrumField, p) -> SpectrumField:
    """Galilean transform: (n, k) -> (n - |p|^2 - 2 p.k, k + p), amplitudes copied."""
    p = tuple(int(x) for x in p)
    if len(p) != f.dim:
        raise ValueError("shift dimension mismatch")
    pp = sum(x * x for x in p)
    out = {}
    for (n, k), a in f.coeffs.items():
        pk = sum(x * y for x, y in zip(p, k))
        out[(n - pp - 2 * pk, tuple(x + y for x, y in zip(k, p)))] = a
    return SpectrumField(f.dim, out)


def modulate(u0: SpectrumField, p) -> SpectrumField:
    """Multiply by exp(i p.x): shifts spatial frequencies by ``p``."""
    p = tuple(int(x) for x in p)
    return SpectrumField(u0.dim, {(n, tuple(x + y for x, y in zip(k, p))): a
                                  for (n, k), a in u0.coeffs.items()})


def multiply(f: SpectrumField, g: SpectrumField) -> SpectrumField:
    """Product of trigonometric polynomials (Fourier convolution).

    Summation runs in sorted index order so the result is deterministic.
    """
    _same_dim(f, g)
    if len(f) > len(g):
        f, g = g, f
    out: dict[Freq, complex] = defaultdict(complex)
    g_items = g.items()
    for (n1, k1), a in f.items():
        for (n2, k2), b in g_items:
            out[(n1 + n2, tuple(x + y for x, y in zip(k1, k2)))] += a * b
    return SpectrumField(f.dim, out)


def _grid_shape(dim: int, Nt: int, Nx: int) -> tuple[int, ...]:
    return (Nt,) + (Nx,) * dim


def check_resolved(f: SpectrumField, Nt: int, Nx: int) -> None:
    if f.is_zero():
        return
    if Nt <= 2 * f.temporal_degree() or Nx <= 2 * f.spatial_degree():
        raise ValueError(f"grid {Nt}x{Nx} does not resolve a field of temporal degree "
                         f"{f.temporal_degree()} and spatial degree {f.spatial_degree()}")


def coefficient_array(f: SpectrumField, Nt: int, Nx: int) -> np.ndarray:
    """FFT-ordered coefficient array (index n mod Nt, k_j mod Nx)."""
    check_resolved(f, Nt, Nx)
    A = np.zeros(_grid_shape(f.dim, Nt, Nx), dtype=complex)
    for (n, k), a in f.coeffs.items():
        A[(n % Nt,) + tuple(x % Nx for x in k)] = a
    return A


def evaluate_grid(f: SpectrumField, Nt: int, Nx: int) -> np.ndarray:
    """Samples at t_j = 2πj/Nt, x_l = 2πl/Nx; shape (Nt, Nx, ..., Nx)."""
    A = coefficient_array(f, Nt, Nx)
    return np.fft.ifftn(A) * A.size


def grid_to_field(grid: np.ndarray, prune: float = 1e-13) -> SpectrumField:
    """Inverse of :func:`evaluate_grid` on resolved fields.

    Bins are mapped to the symmetric range ``-N/2 < index < N/2``; amplitudes
    below ``prune`` (relative to the largest one) are dropped.
    """
    grid = np.asarray(grid)
    dim = grid.ndim - 1
    C = np.fft.fftn(grid) / grid.size
    cutoff = prune * max(np.abs(C).max(), 1e-300)
    out = {}
    Nt, Nx = grid.shape[0], grid.shape[1] if dim else 1
    for idx in zip(*np.nonzero(np.abs(C) >= cutoff)):
        n = _signed(idx[0], Nt)
        k = tuple(_signed(i, Nx) for i in idx[1:])
        out[(n, k)] = C[idx]
    return SpectrumField(dim, out)


def _signed(i: int, N: int) -> int:
    i = int(i)
    return i - N if i > N // 2 else i


def grid_mean(values: np.ndarray) -> float:
    return float(np.mean(values))


def write_grid_csv(grid: np.ndarray, path) -> None:
    """One row per grid node: t-index, x-indices, re, im."""
    grid = np.asarray(grid)
    dim = grid.ndim - 1
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [f"x{j + 1}" for j in range(dim)] + ["re", "im"])
        for idx in np.ndindex(grid.shape):
            z = grid[idx]
            w.writerow(list(idx) + [format(z.real, ".17g"), format(z.imag, ".17g")])


def random_field(rng: np.random.Generator, dim: int, n_range: tuple[int, int],
                 k_bound: int, density: float = 1.0,
                 k_set: Iterable[tuple[int, ...]] | None = None) -> SpectrumField:
    """Complex-Gaussian amplitudes on a box ``n_range x {|k_j| <= k_bound}`` (or ``k_set``)."""
    if k_set is None:
        ks = list(np.ndindex(*(2 * k_bound + 1,) * dim))
        ks = [tuple(x - k_bound for x in k) for k in ks]
    else:
        ks = [tuple(k) for k in k_set]
    out = {}
    for n in range(n_range[0], n_range[1] + 1):
        for k in ks:
            if density < 1.0 and rng.random() > density:
                continue
            out[(n, k)] = complex(rng.normal(), rng.normal())
    return SpectrumField(dim, out)
