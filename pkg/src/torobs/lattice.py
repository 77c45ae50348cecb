"""Exact integer-lattice algebra.

Sublattices of Z^d are stored by their row-style Hermite normal form
(echelon, positive pivots, entries above each pivot reduced into
``[0, pivot)``), which makes structural equality meaningful. All
arithmetic is exact; floats appear only in :func:`covolume`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

IntVector = tuple[int, ...]

INT64_MAX = 2**63 - 1


class LatticeError(ValueError):
    """Invalid lattice input (dimension mismatch, empty input, non-primitive lattice...)."""


def _check64(row: Sequence[int]) -> None:
    for x in row:
        if x > INT64_MAX or x < -INT64_MAX:
            raise OverflowError(f"lattice entry {x} exceeds the 64-bit range")


def as_vector(v: Iterable[int]) -> IntVector:
    out = []
    for x in v:
        if isinstance(x, bool) or int(x) != x:
            raise LatticeError(f"non-integer coordinate {x!r}")
        out.append(int(x))
    _check64(out)
    return tuple(out)


def _hnf(rows: list[list[int]], ncols: int, transform: bool = False):
    """Row-style HNF of the matrix whose rows are ``rows``.

    Returns ``(H, U, Uinv)`` with ``U @ A = [H; 0]`` when ``transform`` is set,
    otherwise ``(H, None, None)``. ``H`` lists only the nonzero rows.
    """
    a = [list(r) for r in rows]
    m = len(a)
    U = [[int(i == j) for j in range(m)] for i in range(m)] if transform else None
    Ui = [[int(i == j) for j in range(m)] for i in range(m)] if transform else None

    def swap(i: int, j: int) -> None:
        a[i], a[j] = a[j], a[i]
        if transform:
            U[i], U[j] = U[j], U[i]
            for row in Ui:
                row[i], row[j] = row[j], row[i]

    def addmul(i: int, r: int, q: int) -> None:
        # row_i -= q * row_r
        if q == 0:
            return
        ai, ar = a[i], a[r]
        for c in range(ncols):
            ai[c] -= q * ar[c]
        _check64(ai)
        if transform:
            ui, ur = U[i], U[r]
            for c in range(m):
                ui[c] -= q * ur[c]
            for row in Ui:
                row[r] += q * row[i]

    def negate(r: int) -> None:
        a[r] = [-x for x in a[r]]
        if transform:
            U[r] = [-x for x in U[r]]
            for row in Ui:
                row[r] = -row[r]

    r = 0
    for col in range(ncols):
        if r == m:
            break
        while True:
            nz = [i for i in range(r, m) if a[i][col] != 0]
            if not nz:
                break
            piv = min(nz, key=lambda i: abs(a[i][col]))
            if piv != r:
                swap(piv, r)
            done = True
            for i in range(r + 1, m):
                if a[i][col]:
                    addmul(i, r, a[i][col] // a[r][col])
                    if a[i][col]:
                        done = False
            if done:
                break
        if r < m and a[r][col] != 0:
            if a[r][col] < 0:
                negate(r)
            p = a[r][col]
            for i in range(r):
                addmul(i, r, a[i][col] // p)
            r += 1
    H = [tuple(row) for row in a[:r]]
    return H, U, Ui


@dataclass(frozen=True)
class Sublattice:
    """A sublattice of Z^d, kept in canonical Hermite normal form.

    Any generating set may be passed as ``basis``; it is replaced by the
    canonical basis, so two lattices compare equal iff they are equal as sets.
    """

    ambient_dim: int
    basis: tuple[IntVector, ...] = ()

    def __post_init__(self):
        if self.ambient_dim < 1:
            raise LatticeError("ambient dimension must be >= 1")
        rows = [as_vector(v) for v in self.basis]
        for v in rows:
            if len(v) != self.ambient_dim:
                raise LatticeError(f"vector {v} does not have dimension {self.ambient_dim}")
        H, _, _ = _hnf([list(v) for v in rows], self.ambient_dim)
        object.__setattr__(self, "basis", tuple(H))

    @property
    def rank(self) -> int:
        return len(self.basis)

    @property
    def pivots(self) -> tuple[int, ...]:
        return tuple(next(j for j, x in enumerate(row) if x) for row in self.basis)

    @classmethod
    def full(cls, d: int) -> "Sublattice":
        return cls(d, tuple(tuple(int(i == j) for j in range(d)) for i in range(d)))

    @classmethod
    def zero(cls, d: int) -> "Sublattice":
        return cls(d, ())

    def reduce(self, v: Sequence[int]) -> IntVector:
        """Canonical representative of ``v`` modulo the lattice (HNF division)."""
        x = list(v)
        for row, p in zip(self.basis, self.pivots):
            q = x[p] // row[p]
            if q:
                x = [a - q * b for a, b in zip(x, row)]
        return tuple(x)

    def __contains__(self, v) -> bool:
        x = list(v)
        for row, p in zip(self.basis, self.pivots):
            if x[p] % row[p]:
                return False
            q = x[p] // row[p]
            x = [a - q * b for a, b in zip(x, row)]
        return not any(x)

    def gram(self) -> list[list[int]]:
        return [[sum(a * b for a, b in zip(u, v)) for v in self.basis] for u in self.basis]

    def gram_det(self) -> int:
        """Exact integer determinant of the Gram matrix (squared covolume)."""
        return _int_det(self.gram())


def hnf_canonicalize(basis: Sequence[Sequence[int]], dim: int | None = None) -> Sublattice:
    """Canonical Sublattice generated by ``basis`` (dependent generators allowed)."""
    if dim is None:
        if not basis:
            raise LatticeError("ambient dimension required for an empty generating set")
        dim = len(basis[0])
    if dim < 1:
        raise LatticeError("ambient dimension must be >= 1")
    return Sublattice(dim, tuple(tuple(v) for v in basis))


def _int_det(M: list[list[int]]) -> int:
    # Bareiss fraction-free elimination
    n = len(M)
    if n == 0:
        return 1
    A = [list(r) for r in M]
    sign, prev = 1, 1
    for k in range(n - 1):
        if A[k][k] == 0:
            sw = next((i for i in range(k + 1, n) if A[i][k]), None)
            if sw is None:
                return 0
            A[k], A[sw] = A[sw], A[k]
            sign = -sign
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                A[i][j] = (A[i][j] * A[k][k] - A[i][k] * A[k][j]) // prev
        prev = A[k][k]
    return sign * A[n - 1][n - 1]


def _transpose(rows: Sequence[Sequence[int]], ncols: int) -> list[list[int]]:
    return [[r[j] for r in rows] for j in range(ncols)]


def saturate(lat: Sublattice) -> Sublattice:
    """Return lsp(lat) ∩ Z^d."""
    d = lat.ambient_dim
    if lat.rank == 0:
        return lat
    # U · Bᵀ = [H; 0]  =>  columns of Uinv[:, :r] span the saturation
    H, _, Ui = _hnf(_transpose(lat.basis, d), lat.rank, transform=True)
    r = len(H)
    cols = [tuple(Ui[i][j] for i in range(d)) for j in range(r)]
    return Sublattice(d, tuple(cols))


def is_primitive(lat: Sublattice) -> bool:
    return saturate(lat) == lat


def covolume(lat: Sublattice) -> float:
    """sqrt(det(B Bᵀ)); 1.0 for the rank-0 lattice."""
    return math.sqrt(lat.gram_det())


def perp(lat: Sublattice) -> Sublattice:
    """Integer vectors orthogonal to every vector of ``lat``."""
    d = lat.ambient_dim
    if lat.rank == 0:
        return Sublattice.full(d)
    H, U, _ = _hnf(_transpose(lat.basis, d), lat.rank, transform=True)
    r = len(H)
    return Sublattice(d, tuple(tuple(U[i]) for i in range(r, d)))


def _solve_fraction(A: list[list[Fraction]], b: list[Fraction]) -> list[Fraction]:
    n = len(A)
    M = [list(A[i]) + [b[i]] for i in range(n)]
    for c in range(n):
        p = next(i for i in range(c, n) if M[i][c] != 0)
        M[c], M[p] = M[p], M[c]
        inv = 1 / M[c][c]
        M[c] = [x * inv for x in M[c]]
        for i in range(n):
            if i != c and M[i][c] != 0:
                f = M[i][c]
                M[i] = [x - f * y for x, y in zip(M[i], M[c])]
    return [M[i][n] for i in range(n)]


def project_span(v: Sequence[int], lat: Sublattice) -> tuple[Fraction, ...]:
    """Exact orthogonal projection of ``v`` onto lsp(lat)."""
    if len(v) != lat.ambient_dim:
        raise LatticeError("dimension mismatch")
    if lat.rank == 0:
        return tuple(Fraction(0) for _ in v)
    G = [[Fraction(x) for x in row] for row in lat.gram()]
    rhs = [Fraction(sum(a * b for a, b in zip(row, v))) for row in lat.basis]
    c = _solve_fraction(G, rhs)
    return tuple(sum((ci * row[j] for ci, row in zip(c, lat.basis)), Fraction(0))
                 for j in range(lat.ambient_dim))


def projection_norm_sq(lat: Sublattice):
    """Return a function k -> |proj_lat k|^2 as an exact Fraction.

    Uses the adjugate of the Gram matrix so the per-point cost is integer only.
    """
    if lat.rank == 0:
        return lambda k: Fraction(0)
    G = lat.gram()
    det = _int_det(G)
    s = lat.rank
    # adj(G) = det * G^{-1}, integral
    Gf = [[Fraction(x) for x in row] for row in G]
    inv_cols = [_solve_fraction(Gf, [Fraction(int(i == j)) for i in range(s)]) for j in range(s)]
    adj = [[int(inv_cols[j][i] * det) for j in range(s)] for i in range(s)]
    B = lat.basis

    def norm_sq(k: Sequence[int]) -> Fraction:
        y = [sum(a * b for a, b in zip(row, k)) for row in B]
        num = sum(y[i] * adj[i][j] * y[j] for i in range(s) for j in range(s))
        return Fraction(num, det)

    return norm_sq


@dataclass(frozen=True)
class AffineSublattice:
    """``offset + direction``, with the offset reduced modulo the direction."""

    offset: IntVector
    direction: Sublattice

    def __post_init__(self):
        off = as_vector(self.offset)
        if len(off) != self.direction.ambient_dim:
            raise LatticeError("offset dimension does not match direction")
        object.__setattr__(self, "offset", self.direction.reduce(off))

    @property
    def dim(self) -> int:
        return self.direction.ambient_dim

    @property
    def rank(self) -> int:
        return self.direction.rank

    @classmethod
    def full(cls, d: int) -> "AffineSublattice":
        return cls((0,) * d, Sublattice.full(d))

    def __contains__(self, k) -> bool:
        return tuple(a - b for a, b in zip(k, self.offset)) in self.direction

    def translate(self, p: Sequence[int]) -> "AffineSublattice":
        return AffineSublattice(tuple(a + b for a, b in zip(self.offset, p)), self.direction)


def affine_hull(points: Sequence[Sequence[int]]) -> AffineSublattice:
    """Smallest primitive affine sublattice containing ``points``."""
    if len(points) == 0:
        raise LatticeError("affine_hull needs at least one point")
    base = as_vector(points[0])
    d = len(base)
    diffs = []
    for p in points[1:]:
        if len(p) != d:
            raise LatticeError("points do not share a dimension")
        diff = tuple(a - b for a, b in zip(p, base))
        if any(diff):
            diffs.append(diff)
    direction = saturate(_incremental_span(diffs, d))
    return AffineSublattice(base, direction)


def _incremental_span(vectors: Sequence[IntVector], d: int) -> Sublattice:
    # Rank is capped at d, so the HNF is refreshed batch-wise to keep it small.
    current: tuple[IntVector, ...] = ()
    batch: list[IntVector] = []
    for v in vectors:
        batch.append(v)
        if len(batch) >= 4 * d:
            current = Sublattice(d, current + tuple(batch)).basis
            batch = []
    if batch:
        current = Sublattice(d, current + tuple(batch)).basis
    return Sublattice(d, current)


@dataclass(frozen=True)
class OrbitCensus:
    lattice: Sublattice
    class_reps: tuple[AffineSublattice, ...]
    class_count: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "class_count", len(self.class_reps))


def orbit_census(lat: Sublattice) -> OrbitCensus:
    """Representatives of the translates ``q + lat`` modulo the action of lat⊥.

    Works through ``q + lat -> proj_{lat⊥} q``: the image of Z^d is a rational
    lattice containing lat⊥, and its cosets mod lat⊥ are enumerated exactly.
    """
    if not is_primitive(lat):
        raise LatticeError("orbit_census requires a primitive sublattice")
    d = lat.ambient_dim
    P = perp(lat)
    s = P.rank
    zero = (0,) * d
    if s == 0:
        return OrbitCensus(lat, (AffineSublattice(zero, lat),))
    G = [[Fraction(x) for x in row] for row in P.gram()]
    coords = []
    for i in range(d):
        rhs = [Fraction(row[i]) for row in P.basis]
        coords.append(_solve_fraction(G, rhs))
    D = 1
    for c in coords:
        for x in c:
            D = D * x.denominator // math.gcd(D, x.denominator)
    gens = [tuple(int(x * D) % D for x in c) for c in coords]
    # closure of the subgroup of (Z/D)^s generated by gens; each element keeps a witness q
    seen: dict[tuple[int, ...], IntVector] = {(0,) * s: zero}
    frontier = [(0,) * s]
    while frontier:
        nxt = []
        for g in frontier:
            q = seen[g]
            for i, h in enumerate(gens):
                e = tuple((a + b) % D for a, b in zip(g, h))
                if e not in seen:
                    seen[e] = tuple(x + int(j == i) for j, x in enumerate(q))
                    nxt.append(e)
        frontier = nxt
    reps = tuple(AffineSublattice(seen[key], lat) for key in sorted(seen))
    return OrbitCensus(lat, reps)
