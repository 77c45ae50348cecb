import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components as cc_oracle

from torobs.clusters import (
    Cluster, Kind, SigmaPoint, classify, cluster_stats, decompose, diameter_sq,
    neighborhood_separation_sq, neighborhoods, separation_sq, sigma_points, write_cluster_csv,
)
from torobs.lattice import AffineSublattice, Sublattice, affine_hull, hnf_canonicalize

Z1 = AffineSublattice.full(1)


def line(direction, offset=None):
    d = len(direction)
    return AffineSublattice(offset or (0,) * d, hnf_canonicalize([direction], d))


def partition_oracle(gamma, R, F):
    """Components of the dense distance graph (O(N^2))."""
    pts = np.array([(p.n,) + p.k for p in sigma_points(gamma, F)], dtype=np.int64)
    D = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2)
    _, lab = cc_oracle(csr_matrix(D <= (100 * R) ** 2), directed=False)
    groups = {}
    for p, l in zip(map(tuple, pts), lab):
        groups.setdefault(l, set()).add(p)
    return sorted(sorted(g) for g in groups.values())


def partition(dec):
    return sorted(sorted((p.n,) + p.k for p in c.points) for c in dec.clusters)


def test_sigma_points_examples():
    pts = lambda g, F: sorted((p.n, p.k[0]) for p in sigma_points(g, F))
    assert pts(Z1, 2) == sorted([(0, 0), (-1, 1), (-1, -1), (-4, 2), (-4, -2)])
    assert pts(line((2,)), 2) == sorted([(0, 0), (-4, 2), (-4, -2)])
    assert pts(line((2,), (1,)), 3) == sorted([(-1, 1), (-1, -1), (-9, 3), (-9, -3)])


def test_reference_decomposition():
    dec = decompose(Z1, 1, 60)
    sizes = sorted((c.size for c in dec.clusters), reverse=True)
    assert sizes == [101] + [1] * 20
    big = max(dec.clusters, key=lambda c: c.size)
    assert sorted(k[0] for k in big.shadow) == list(range(-50, 51))
    assert big.kind is Kind.FLAT
    assert partition(dec) == partition_oracle(Z1, 1, 60)
    assert not any(c.truncated for c in dec.clusters)


def test_singleton_and_complete_graph():
    pt = AffineSublattice((3,), Sublattice.zero(1))
    dec = decompose(pt, 1, 5)
    assert len(dec.clusters) == 1 and dec.clusters[0].size == 1
    assert dec.clusters[0].kind is Kind.FLAT  # rank 0 hull equals rank 0 lattice
    dec = decompose(Z1, 50, 10)
    assert len(dec.clusters) == 1 and dec.clusters[0].size == 21


@pytest.mark.parametrize("gamma,R,F", [
    (Z1, 1, 120), (Z1, 2, 150), (line((1, 1)), 1, 100), (line((1, 2), (0, 1)), 1, 120),
    (line((1, 0)), 2, 90), (line((1, 1, 0)), 1, 90),
])
def test_partition_matches_dense_graph(gamma, R, F):
    dec = decompose(gamma, R, F)
    assert partition(dec) == partition_oracle(gamma, R, F)


def test_classify_sharp_singletons():
    g = line((1, 0))
    dec = decompose(g, 1, 60)
    far = dec.clusters[dec.cluster_of((55, 0))]
    assert far.size == 1 and classify(far, g) is Kind.SHARP
    centre = dec.clusters[dec.cluster_of((0, 0))]
    assert classify(centre, g) is Kind.FLAT
    lone = Cluster(0, (SigmaPoint(-4, (2,)),), affine_hull([(2,)]), Kind.SHARP, False)
    assert classify(lone, Z1) is Kind.SHARP


def test_stats_examples():
    dec = decompose(Z1, 1, 60)
    a = dec.clusters[dec.cluster_of((51,))]
    b = dec.clusters[dec.cluster_of((53,))]
    assert separation_sq(a, b) == (53 ** 2 - 51 ** 2) ** 2 + 2 ** 2 == 43268
    assert diameter_sq(a) == 0
    st_ = cluster_stats(dec)
    assert st_.min_separation_sq > 100 ** 2
    assert st_.flat_count == 1 and st_.sharp_count == 20
    big = dec.clusters[dec.cluster_of((0,))]
    assert diameter_sq(big) == 2500 ** 2 + 50 ** 2  # (0, 0) to (-2500, ±50)


def test_neighborhood_examples():
    dec = decompose(Z1, 1, 60)
    split = neighborhoods(dec)
    assert split.in_far(12, (0,))
    alpha = dec.cluster_of((1,))
    assert split.in_near(alpha, 5, (1,))
    assert split.label(5, (1,)) == alpha
    with pytest.raises(ValueError):
        neighborhoods(dec, time_bound=100)


def test_neighborhood_partition_small():
    dec = decompose(Z1, 1, 55)
    split = neighborhoods(dec)
    T = split.time_bound
    counts = {}
    for k in range(-55, 56):
        ns = set(range(-k * k - 15, -k * k + 16)) | {-T, T, 0, -T // 2}
        for n in sorted(x for x in ns if -T <= x <= T):
            lab = split.label(n, (k,))
            assert lab is not None
            hits = [c.id for c in dec.clusters if split.in_near(c.id, n, (k,))]
            assert len(hits) + split.in_far(n, (k,)) == 1
            counts[lab] = counts.get(lab, 0) + 1
    assert split.box_size() == 111 * (2 * T + 1)
    assert split.far_count() == split.box_size() - 111 * 21


def test_neighborhood_separation():
    for g, F in [(Z1, 200), (line((1, 1)), 100)]:
        split = neighborhoods(decompose(g, 1, F))
        sep = neighborhood_separation_sq(split)
        assert sep > 10 ** 2
        # brute-force check on segment endpoints
        dec = split.decomp
        ends = [(c.id, n, p.k) for c in dec.clusters for p in c.points for n in split.n_range(p.k)]
        brute = min(sum((a - b) ** 2 for a, b in zip((n1,) + k1, (n2,) + k2))
                    for i, (c1, n1, k1) in enumerate(ends) for (c2, n2, k2) in ends[i + 1:] if c1 != c2)
        assert sep <= brute


def test_cluster_csv(tmp_path):
    dec = decompose(Z1, 1, 60)
    write_cluster_csv(cluster_stats(dec), tmp_path / "c.csv")
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert lines[0] == "id,size,diameter_sq,kind,truncated,hull_rank,max_shadow_projection"
    assert len(lines) == 22


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 3), st.integers(20, 110), st.integers(-2, 2), st.integers(1, 3))
def test_cover_and_separation(R, F, a, b):
    g = line((a, b)) if (a, b) != (0, 0) else AffineSublattice.full(2)
    dec = decompose(g, R, F)
    pts = [(p.n, p.k) for c in dec.clusters for p in c.points]
    assert len(pts) == len(set(pts)) == len(sigma_points(g, F))
    shadows = sorted(k for c in dec.clusters for k in c.shadow)
    assert shadows == sorted(p.k for p in sigma_points(g, F))
    for i, c1 in enumerate(dec.clusters):
        for c2 in dec.clusters[i + 1:]:
            assert separation_sq(c1, c2) > (100 * R) ** 2
