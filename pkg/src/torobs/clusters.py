"""Cluster decomposition of integer points on the paraboloid n = -|k|^2.

Points of Σ(Γ) = {(-|k|^2, k) : k ∈ Γ, |k| <= F} are joined when their
distance in Z^{1+d} is at most 100R; clusters are the connected components.
All geometric comparisons are done on exact integer squared distances.
"""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, NamedTuple

import numpy as np

from .lattice import AffineSublattice, IntVector, affine_hull, projection_norm_sq

EDGE_FACTOR = 100
NEAR_FACTOR = 10


class SigmaPoint(NamedTuple):
    n: int
    k: IntVector


class Kind(str, enum.Enum):
    FLAT = "flat"
    SHARP = "sharp"


@dataclass(frozen=True)
class Cluster:
    id: int
    points: tuple[SigmaPoint, ...]
    hull: AffineSublattice
    kind: Kind
    truncated: bool

    @property
    def shadow(self) -> tuple[IntVector, ...]:
        return tuple(p.k for p in self.points)

    @property
    def size(self) -> int:
        return len(self.points)

    def array(self) -> np.ndarray:
        return np.array([(p.n,) + p.k for p in self.points], dtype=np.int64)


@dataclass(frozen=True)
class ClusterDecomposition:
    gamma: AffineSublattice
    scale: int
    freq_bound: int
    clusters: tuple[Cluster, ...]
    _index: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        idx = {}
        for c in self.clusters:
            for p in c.points:
                idx[p.k] = c.id
        object.__setattr__(self, "_index", idx)

    @property
    def dim(self) -> int:
        return self.gamma.dim

    def cluster_of(self, k) -> int | None:
        """Cluster id of the shadow point ``k`` (None outside the box)."""
        return self._index.get(tuple(k))

    def points(self) -> list[SigmaPoint]:
        return [p for c in self.clusters for p in c.points]


# ---------------------------------------------------------------- enumeration

def lattice_points_in_ball(gamma: AffineSublattice, radius_sq: int, lower_sq: int = -1) -> np.ndarray:
    """All k ∈ Γ with lower_sq < |k|^2 <= radius_sq, as an int64 array (m, d)."""
    d = gamma.dim
    r = math.isqrt(max(radius_sq, 0))
    axes = [np.arange(-r, r + 1, dtype=np.int64)] * d
    K = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    s = (K * K).sum(axis=1)
    K = K[(s <= radius_sq) & (s > lower_sq)]
    # vectorized HNF membership test for Γ
    X = K - np.asarray(gamma.offset, dtype=np.int64)
    ok = np.ones(len(K), dtype=bool)
    for row, p in zip(gamma.direction.basis, gamma.direction.pivots):
        piv = row[p]
        ok &= (X[:, p] % piv) == 0
        X = X - np.outer(X[:, p] // piv, np.asarray(row, dtype=np.int64))
    ok &= ~X.any(axis=1)
    K = K[ok]
    s = (K * K).sum(axis=1)
    order = np.lexsort(tuple(K[:, j] for j in range(d - 1, -1, -1)) + (s,))
    return K[order]


def sigma_points(gamma: AffineSublattice, freq_bound: int) -> list[SigmaPoint]:
    """Points (-|k|^2, k) with k ∈ Γ and |k| <= freq_bound, ordered by (|k|^2, k)."""
    if freq_bound < 0:
        raise ValueError("freq_bound must be >= 0")
    K = lattice_points_in_ball(gamma, freq_bound * freq_bound)
    return [SigmaPoint(-int((k * k).sum()), tuple(int(x) for x in k)) for k in K]


def _sigma_array(K: np.ndarray) -> np.ndarray:
    return np.concatenate([-(K * K).sum(axis=1, keepdims=True), K], axis=1)


# ---------------------------------------------------------------- pair search

def _any_within(A: np.ndarray, B: np.ndarray, r2: int, budget: int = 4_000_000) -> bool:
    """True iff some a ∈ A, b ∈ B satisfy |a - b|^2 <= r2 (exact, int64)."""
    if len(A) == 0 or len(B) == 0:
        return False
    # bounding-box lower bound on the distance
    lo = np.maximum(A.min(0) - B.max(0), B.min(0) - A.max(0))
    lo = np.maximum(lo, 0)
    if int((lo * lo).sum()) > r2:
        return False
    step = max(1, budget // (len(B) * A.shape[1]))
    for i in range(0, len(A), step):
        D = A[i:i + step, None, :] - B[None, :, :]
        if ((D * D).sum(-1) <= r2).any():
            return True
    return False


def _min_dist_sq(A: np.ndarray, B: np.ndarray, budget: int = 4_000_000) -> int:
    step = max(1, budget // (len(B) * A.shape[1]))
    best = None
    for i in range(0, len(A), step):
        D = A[i:i + step, None, :] - B[None, :, :]
        m = int((D * D).sum(-1).min())
        best = m if best is None else min(best, m)
    return best


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, i: int) -> int:
        p = self.parent
        while p[i] != i:
            p[i] = p[p[i]]
            i = p[i]
        return i

    def union(self, i: int, j: int) -> bool:
        a, b = self.find(i), self.find(j)
        if a == b:
            return False
        if a > b:
            a, b = b, a
        self.parent[b] = a
        return True


def connected_components(P: np.ndarray, r2: int) -> np.ndarray:
    """Component label per row of ``P`` for the graph with edges |p - q|^2 <= r2.

    Points are binned into cubes small enough that every cube is a clique;
    cubes are then merged by an exact cross-cube search.
    """
    N, D = P.shape
    if N == 0:
        return np.zeros(0, dtype=np.int64)
    side = max(1, math.isqrt(r2 // D))
    cells = P // side
    keys, inv = np.unique(cells, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    members = [[] for _ in range(len(keys))]
    for i, c in enumerate(inv):
        members[c].append(i)
    members = [np.asarray(m) for m in members]
    lookup = {tuple(int(x) for x in key): i for i, key in enumerate(keys)}
    reach = math.isqrt(r2) // side + 1
    offsets = [np.array(o) - reach for o in np.ndindex(*(2 * reach + 1,) * D)]
    offsets = [o for o in offsets if tuple(o) > (0,) * D]  # each unordered pair once
    uf = _UnionFind(len(keys))
    for ci, key in enumerate(keys):
        for o in offsets:
            gap = np.maximum(np.abs(o) - 1, 0) * side + (np.abs(o) > 0)
            if int((gap * gap).sum()) > r2:
                continue
            cj = lookup.get(tuple(int(x) for x in key + o))
            if cj is None or uf.find(ci) == uf.find(cj):
                continue
            if _any_within(P[members[ci]], P[members[cj]], r2):
                uf.union(ci, cj)
    roots = np.array([uf.find(c) for c in range(len(keys))])
    return roots[inv]


# ---------------------------------------------------------------- decomposition

def classify(cluster: Cluster, gamma: AffineSublattice) -> Kind:
    """Flat iff the cluster's primitive hull has the full rank of Γ."""
    return Kind.FLAT if cluster.hull.rank == gamma.rank else Kind.SHARP


def decompose(gamma: AffineSublattice, scale: int, freq_bound: int) -> ClusterDecomposition:
    if scale < 1:
        raise ValueError("scale R must be >= 1")
    if freq_bound < 0:
        raise ValueError("freq_bound must be >= 0")
    K = lattice_points_in_ball(gamma, freq_bound * freq_bound)
    P = _sigma_array(K)
    r = EDGE_FACTOR * scale
    labels = connected_components(P, r * r)
    truncated_labels = _truncated_labels(gamma, freq_bound, P, labels, r * r)
    groups: dict[int, list[int]] = {}
    for i, lab in enumerate(labels):
        groups.setdefault(int(lab), []).append(i)
    raw = []
    for lab, idx in groups.items():
        pts = sorted(SigmaPoint(int(P[i, 0]), tuple(int(x) for x in P[i, 1:])) for i in idx)
        raw.append((pts, lab in truncated_labels))
    raw.sort(key=lambda item: (item[0][0].n,) + item[0][0].k)
    clusters = []
    for cid, (pts, trunc) in enumerate(raw):
        hull = affine_hull([p.k for p in pts])
        kind = Kind.FLAT if hull.rank == gamma.rank else Kind.SHARP
        clusters.append(Cluster(cid, tuple(pts), hull, kind, trunc))
    return ClusterDecomposition(gamma, scale, freq_bound, tuple(clusters))


def _truncated_labels(gamma, F, P, labels, r2) -> set[int]:
    """Labels of components having an edge to a point of Σ(Γ) outside the box.

    Such a component may be a piece of a larger cluster cut by the box.
    """
    r = math.isqrt(r2)
    outer = lattice_points_in_ball(gamma, F * F + r, lower_sq=F * F)
    if len(outer) == 0:
        return set()
    Q = _sigma_array(outer)
    inner_mask = -P[:, 0] >= F * F + 1 - r
    out = set()
    for lab in np.unique(labels[inner_mask]):
        A = P[inner_mask & (labels == lab)]
        if _any_within(A, Q, r2):
            out.add(int(lab))
    return out


# ---------------------------------------------------------------- neighborhoods

@dataclass(frozen=True)
class NeighborhoodSplit:
    """Split of the box {|n| <= T} x (Γ ∩ {|k| <= F}) into N^α and N^c.

    ``near[α]`` lists the points of N^α explicitly; the far set is kept
    implicit (it is the box minus the near sets) and can be iterated.
    """

    decomp: ClusterDecomposition
    time_bound: int
    near: dict[int, tuple[tuple[int, IntVector], ...]]

    @property
    def width(self) -> int:
        return NEAR_FACTOR * self.decomp.scale

    def n_range(self, k) -> tuple[int, int]:
        s = sum(x * x for x in k)
        return max(-self.time_bound, -s - self.width), min(self.time_bound, -s + self.width)

    def label(self, n: int, k) -> int | None:
        """Cluster id if (n, k) ∈ N^α, -1 if in N^c, None if outside the box."""
        k = tuple(k)
        cid = self.decomp.cluster_of(k)
        if cid is None or abs(n) > self.time_bound:
            return None
        s = sum(x * x for x in k)
        return cid if abs(n + s) <= self.width else -1

    def in_far(self, n: int, k) -> bool:
        return self.label(n, k) == -1

    def in_near(self, alpha: int, n: int, k) -> bool:
        return self.label(n, k) == alpha

    def near_set(self, alpha: int):
        from .spectral import FreqSet
        return FreqSet(lambda n, k: self.in_near(alpha, n, k), self.near[alpha])

    def far_set(self):
        from .spectral import FreqSet
        return FreqSet(self.in_far)

    def iter_far(self) -> Iterator[tuple[int, IntVector]]:
        for c in self.decomp.clusters:
            for p in c.points:
                lo, hi = self.n_range(p.k)
                for n in range(-self.time_bound, self.time_bound + 1):
                    if n < lo or n > hi:
                        yield (n, p.k)

    def box_size(self) -> int:
        return (2 * self.time_bound + 1) * sum(c.size for c in self.decomp.clusters)

    def far_count(self) -> int:
        return self.box_size() - sum(len(v) for v in self.near.values())


def neighborhoods(decomp: ClusterDecomposition, time_bound: int | None = None) -> NeighborhoodSplit:
    width = NEAR_FACTOR * decomp.scale
    max_s = max((-p.n for c in decomp.clusters for p in c.points), default=0)
    need = max_s + width
    if time_bound is None:
        time_bound = need
    elif time_bound < need:
        raise ValueError(f"time_bound {time_bound} is insufficient: need >= {need} "
                         f"to hold every |n + |k|^2| <= {width}")
    near = {}
    for c in decomp.clusters:
        pts = []
        for p in c.points:
            s = -p.n
            for n in range(-s - width, -s + width + 1):
                pts.append((n, p.k))
        near[c.id] = tuple(pts)
    return NeighborhoodSplit(decomp, time_bound, near)


# ---------------------------------------------------------------- statistics

def separation_sq(a: Cluster, b: Cluster) -> int:
    """Exact squared distance between two clusters in Z^{1+d}."""
    return _min_dist_sq(a.array(), b.array())


def diameter_sq(cluster: Cluster) -> int:
    """Exact squared diameter.

    Points sharing |k|^2 = s form shells; shell pairs are visited in order
    of an upper bound (s - s')^2 + (sqrt s + sqrt s')^2 and the scan stops
    once no remaining pair can beat the best value found.
    """
    if cluster.size <= 1:
        return 0
    P = cluster.array()
    if cluster.size <= 1500:
        return int(max(((P[i + 1:] - P[i]) ** 2).sum(1).max() for i in range(len(P) - 1)))
    shells: dict[int, list[int]] = {}
    for i, n in enumerate(P[:, 0]):
        shells.setdefault(int(-n), []).append(i)
    svals = np.array(sorted(shells))
    S1, S2 = np.meshgrid(svals, svals, indexing="ij")
    ub = (S1 - S2) ** 2 + (np.sqrt(S1) + np.sqrt(S2)) ** 2 + 1.0
    iu = np.triu_indices(len(svals))
    order = np.argsort(-ub[iu], kind="stable")
    best = 0
    for o in order:
        i, j = iu[0][o], iu[1][o]
        if ub[i, j] < best:
            break
        A = P[shells[int(svals[i])]]
        B = P[shells[int(svals[j])]]
        D = A[:, None, :] - B[None, :, :]
        best = max(best, int((D * D).sum(-1).max()))
    return best


def min_cross_distance_sq(P: np.ndarray, labels: np.ndarray, slack: int = 0,
                          n_lo: np.ndarray | None = None, n_hi: np.ndarray | None = None) -> int | None:
    """Smallest squared distance between points with different labels.

    Rows of ``P`` are (n, k). With ``n_lo``/``n_hi`` each row stands for the
    vertical segment {n_lo <= n <= n_hi} x {k}; distance between segments uses
    the gap between their n-intervals. Exact integers; sweep over sorted n.
    """
    if len(np.unique(labels)) < 2:
        return None
    if n_lo is None:
        n_lo = P[:, 0] - slack
        n_hi = P[:, 0] + slack
    order = np.argsort(n_lo, kind="stable")
    lo, hi, K, lab = n_lo[order], n_hi[order], P[order, 1:], labels[order]

    def seg_d2(i, j):
        gap = max(int(lo[j] - hi[i]), int(lo[i] - hi[j]), 0)
        dk = K[j] - K[i]
        return gap * gap + int((dk * dk).sum())

    # cheap initial upper bound from neighbours in sweep order
    cross = np.nonzero(lab[1:] != lab[:-1])[0]
    best = min((seg_d2(i, i + 1) for i in cross), default=None)
    N = len(P)
    block = 256
    for i in range(N):
        j0 = i + 1
        while j0 < N:
            j1 = min(N, j0 + block)
            gap = np.maximum(np.maximum(lo[j0:j1] - hi[i], lo[i] - hi[j0:j1]), 0)
            dk = K[j0:j1] - K[i]
            d2 = gap * gap + (dk * dk).sum(1)
            mask = lab[j0:j1] != lab[i]
            if mask.any():
                best = min(best, int(d2[mask].min()))
            g = int(lo[j1 - 1] - hi[i])
            if g > 0 and g * g > best:
                break
            j0 = j1
    return best


@dataclass
class ClusterStats:
    ids: list[int]
    sizes: list[int]
    diameters_sq: list[int]
    kinds: list[str]
    truncated: list[bool]
    hull_ranks: list[int]
    max_shadow_projection: list[float]
    min_separation_sq: int | None
    flat_count: int
    sharp_count: int

    def rows(self):
        for i in range(len(self.ids)):
            yield (self.ids[i], self.sizes[i], self.diameters_sq[i], self.kinds[i],
                   self.truncated[i], self.hull_ranks[i], self.max_shadow_projection[i])


def cluster_stats(decomp: ClusterDecomposition) -> ClusterStats:
    norm_sq = projection_norm_sq(decomp.gamma.direction)
    diam, proj = [], []
    for c in decomp.clusters:
        diam.append(diameter_sq(c))
        best = max((norm_sq(k) for k in c.shadow), default=Fraction(0))
        proj.append(math.sqrt(best))
    P = np.array([(p.n,) + p.k for c in decomp.clusters for p in c.points], dtype=np.int64)
    labels = np.array([c.id for c in decomp.clusters for _ in c.points])
    sep = min_cross_distance_sq(P, labels) if len(P) else None
    kinds = [c.kind.value for c in decomp.clusters]
    return ClusterStats(
        ids=[c.id for c in decomp.clusters],
        sizes=[c.size for c in decomp.clusters],
        diameters_sq=diam,
        kinds=kinds,
        truncated=[c.truncated for c in decomp.clusters],
        hull_ranks=[c.hull.rank for c in decomp.clusters],
        max_shadow_projection=proj,
        min_separation_sq=sep,
        flat_count=kinds.count("flat"),
        sharp_count=kinds.count("sharp"),
    )


CSV_HEADER = ["id", "size", "diameter_sq", "kind", "truncated", "hull_rank", "max_shadow_projection"]


def write_cluster_csv(stats: ClusterStats, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for cid, size, d2, kind, trunc, rank, proj in stats.rows():
            w.writerow([cid, size, d2, kind, int(trunc), rank, format(proj, ".17g")])


def neighborhood_separation_sq(split: NeighborhoodSplit) -> int | None:
    """Exact squared distance between near sets of distinct clusters."""
    d = split.decomp
    if len(d.clusters) < 2:
        return None
    rows, labels, lo, hi = [], [], [], []
    for c in d.clusters:
        for p in c.points:
            a, b = split.n_range(p.k)
            rows.append((p.n,) + p.k)
            labels.append(c.id)
            lo.append(a)
            hi.append(b)
    return min_cross_distance_sq(np.array(rows, dtype=np.int64), np.array(labels),
                                 n_lo=np.array(lo, dtype=np.int64), n_hi=np.array(hi, dtype=np.int64))
