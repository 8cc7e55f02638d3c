import heapq

import numpy as np
import pytest

from fnbasis.errors import DimensionError, EmptyResult
from fnbasis.fmap import Correspondence
from fnbasis.geodesics import (
    cut_geodesic_ball,
    geodesic_error,
    geodesic_from,
    load_kept_to_full,
    restrict_correspondence,
    save_partial_cut,
    surface_graph,
)
from fnbasis.mesh import load_mesh
from fnbasis.synthetic import bumpy_sphere, flat_strip, icosphere


def dijkstra_oracle(mesh, source):
    """Plain binary-heap Dijkstra over the same augmented graph."""
    g = surface_graph(mesh).tocoo()
    adj = [[] for _ in range(mesh.n)]
    for i, j, w in zip(g.row, g.col, g.data):
        adj[i].append((j, w))
        adj[j].append((i, w))
    dist = np.full(mesh.n, np.inf)
    dist[source] = 0.0
    heap = [(0.0, source)]
    while heap:
        d, u = heapq.heappop(heap)
        if d > dist[u]:
            continue
        for v, w in adj[u]:
            nd = d + w
            if nd < dist[v]:
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    return dist


def test_source_to_itself(blob):
    assert geodesic_from(blob, 5).distances[5] == 0.0


def test_collinear_chain(strip):
    # bottom boundary is a straight chain of unit edges; the plane admits
    # nothing shorter, so the endpoint distance is exactly 3
    d = geodesic_from(strip, 0).distances
    assert d[3] == pytest.approx(3.0, abs=1e-12)
    assert d[1] == pytest.approx(1.0, abs=1e-12)
    assert d[2] == pytest.approx(2.0, abs=1e-12)


def test_icosphere_antipodal(sphere_2562):
    v = sphere_2562.vertices
    far = int(np.argmin(v @ v[0]))
    d = geodesic_from(sphere_2562, 0).distances[far]
    arc = np.arccos(np.clip(v[0] @ v[far], -1, 1))
    assert d == pytest.approx(arc, rel=0.05)


def test_matches_dijkstra_oracle(blob):
    ours = geodesic_from(blob, 0).distances
    assert np.abs(ours - dijkstra_oracle(blob, 0)).max() < 1e-9
    ours = geodesic_from(blob, 77).distances
    assert np.abs(ours - dijkstra_oracle(blob, 77)).max() < 1e-9


def test_symmetry(blob):
    rng = np.random.default_rng(0)
    for _ in range(50):
        a, b = (int(x) for x in rng.integers(0, blob.n, 2))
        dab = geodesic_from(blob, a).distances[b]
        dba = geodesic_from(blob, b).distances[a]
        assert dab == pytest.approx(dba, abs=1e-9)


def test_edge_triangle_inequality(blob):
    d = geodesic_from(blob, 3).distances
    for u, v in blob.edges():
        length = np.linalg.norm(blob.vertices[u] - blob.vertices[v])
        assert abs(d[u] - d[v]) <= length + 1e-9


def test_unreachable_is_inf(tetra):
    import numpy as np

    from fnbasis.mesh import Mesh

    v = np.concatenate([tetra.vertices, tetra.vertices + 10.0])
    t = np.concatenate([tetra.triangles, tetra.triangles + 4])
    two = Mesh(v, t)
    d = geodesic_from(two, 0).distances
    assert np.isinf(d[4:]).all()
    assert np.isfinite(d[:4]).all()


def test_source_out_of_range(tetra):
    with pytest.raises(IndexError):
        geodesic_from(tetra, 4)


def test_geodesic_error_identity(blob):
    ident = Correspondence(np.arange(blob.n))
    errors, mean = geodesic_error(ident, ident, blob, "none")
    assert np.all(errors == 0)
    assert mean == 0.0


def test_geodesic_error_single_mismatch():
    mesh = bumpy_sphere(1, amplitude=0.2, seed=2)  # 42 vertices
    n = mesh.n
    u, v = (int(x) for x in mesh.edges()[7])
    gt = Correspondence(np.arange(n))
    predicted = np.arange(n)
    predicted[u] = v  # one vertex sent to an edge-adjacent vertex
    pred = Correspondence(predicted)
    edge_length = geodesic_from(mesh, u).distances[v]
    errors, mean = geodesic_error(pred, gt, mesh, "none")
    assert errors[u] == pytest.approx(edge_length, abs=1e-12)
    assert mean == pytest.approx(edge_length / n, rel=1e-12)


def test_geodesic_error_sqrt_area_normalization(blob):
    rng = np.random.default_rng(0)
    gt = Correspondence(np.arange(blob.n))
    pred = Correspondence(rng.integers(0, blob.n, blob.n))
    raw, raw_mean = geodesic_error(pred, gt, blob, "none")
    norm, norm_mean = geodesic_error(pred, gt, blob, "sqrt_area")
    scale = 100.0 / np.sqrt(blob.total_area())
    assert norm == pytest.approx(raw * scale, rel=1e-12)
    assert norm_mean == pytest.approx(raw_mean * scale, rel=1e-12)


def test_geodesic_error_length_mismatch(blob):
    gt = Correspondence(np.arange(blob.n))
    pred = Correspondence(np.arange(blob.n - 1))
    with pytest.raises(DimensionError):
        geodesic_error(pred, gt, blob)


def test_geodesic_error_bad_index(blob):
    gt = Correspondence(np.arange(blob.n))
    bad = Correspondence(np.full(blob.n, blob.n + 3))
    with pytest.raises(IndexError):
        geodesic_error(bad, gt, blob)


def test_cut_radius_zero_removes_landmark(blob):
    cut = cut_geodesic_ball(blob, 11, 0.0)
    assert blob.n - cut.partial.n == 1
    assert 11 not in set(cut.kept_to_full)


def test_cut_beyond_diameter(blob):
    with pytest.raises(EmptyResult):
        cut_geodesic_ball(blob, 0, 1e6)


def test_cut_nesting(blob):
    c1 = cut_geodesic_ball(blob, 0, 0.4)
    c2 = cut_geodesic_ball(blob, 0, 0.8)
    assert set(c2.kept_to_full) <= set(c1.kept_to_full)


def test_cut_distances_exceed_radius(blob):
    radius = 0.6
    cut = cut_geodesic_ball(blob, 0, radius)
    full = geodesic_from(blob, 0).distances
    assert np.all(full[cut.kept_to_full] > radius)


def test_cut_partial_is_valid_and_reindexed(blob):
    cut = cut_geodesic_ball(blob, 0, 0.5)
    assert cut.partial.n == len(cut.kept_to_full)
    # injective kept_to_full
    assert len(set(cut.kept_to_full)) == cut.partial.n
    assert np.abs(cut.partial.vertices - blob.vertices[cut.kept_to_full]).max() == 0.0


def test_cut_keeps_largest_component():
    strip = flat_strip(9)
    mid = 4  # bottom-middle vertex
    cut_largest = cut_geodesic_ball(strip, mid, 1.01)
    cut_all = cut_geodesic_ball(strip, mid, 1.01, keep_all_components=True)
    assert cut_all.partial.n > cut_largest.partial.n
    from fnbasis.mesh import connected_components

    assert len(connected_components(cut_largest.partial)) == 1
    assert len(connected_components(cut_all.partial)) > 1


def test_partial_cut_serialization(tmp_path, blob):
    cut = cut_geodesic_ball(blob, 0, 0.5)
    base = tmp_path / "blob_cut"
    save_partial_cut(cut, base)
    back = load_mesh(f"{base}.off")
    assert np.abs(back.vertices - cut.partial.vertices).max() < 1e-9
    assert np.array_equal(back.triangles, cut.partial.triangles)
    assert np.array_equal(load_kept_to_full(f"{base}.kept_to_full"), cut.kept_to_full)


def test_restrict_correspondence(blob):
    rng = np.random.default_rng(0)
    full = Correspondence(rng.integers(0, 99, blob.n))
    cut = cut_geodesic_ball(blob, 0, 0.5)
    sub = restrict_correspondence(full, cut.kept_to_full)
    assert np.array_equal(sub.targets, full.targets[cut.kept_to_full])
