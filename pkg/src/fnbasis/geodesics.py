"""Geodesic distances, the matching error metric, and the partiality cutter.

Distances are shortest paths on the mesh edge graph augmented, for every
pair of adjacent triangles, with the chord joining their opposite vertices
at its hinge-unfolded length (added only when the unfolded segment actually
crosses the shared edge, so every graph edge is a realizable surface path).
This tightens the plain edge-graph metric while keeping it an upper bound
on the true geodesic distance.
"""

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from .errors import DimensionError, EmptyResult
from .fmap import Correspondence
from .mesh import Mesh, connected_components, save_mesh


@dataclass(frozen=True)
class GeodesicField:
    """Distances from one source vertex to every vertex (+inf if unreachable)."""

    source: int
    distances: np.ndarray


@dataclass(frozen=True)
class PartialCut:
    """Result of removing a geodesic ball around a landmark."""

    partial: Mesh
    kept_to_full: np.ndarray
    landmark: int
    radius: float


def surface_graph(mesh):
    """Sparse upper-triangular graph of edge lengths plus unfolded chords.

    Chords can coincide with real edges (e.g. on a tetrahedron), so
    duplicate entries keep the minimum length. Use with undirected
    shortest-path routines.
    """
    v = mesh.vertices
    e = mesh.edges()
    if e.size == 0:
        return sparse.csr_matrix((mesh.n, mesh.n))
    lengths = np.linalg.norm(v[e[:, 0]] - v[e[:, 1]], axis=1)

    ci, cj, cl = _unfolded_chords(mesh)
    lo = np.concatenate([e[:, 0], np.minimum(ci, cj)])
    hi = np.concatenate([e[:, 1], np.maximum(ci, cj)])
    vals = np.concatenate([lengths, cl])
    key = lo * mesh.n + hi
    order = np.lexsort((vals, key))
    first = np.concatenate([[True], key[order][1:] != key[order][:-1]])
    keep = order[first]
    return sparse.coo_matrix((vals[keep], (lo[keep], hi[keep])), shape=(mesh.n, mesh.n)).tocsr()


def _unfolded_chords(mesh):
    """Chords (p, q, length) across each interior edge, hinge-unfolded into a plane."""
    t = mesh.triangles
    v = mesh.vertices
    half = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    opp = np.concatenate([t[:, 2], t[:, 0], t[:, 1]])
    key = np.sort(half, axis=1)
    uniq, inv, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    order = np.argsort(inv, kind="stable")
    starts = np.concatenate([[0], np.cumsum(counts)])
    interior = np.nonzero(counts == 2)[0]
    if interior.size == 0:
        return (np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0))

    first = order[starts[interior]]
    second = order[starts[interior] + 1]
    u, w = uniq[interior, 0], uniq[interior, 1]
    p, q = opp[first], opp[second]

    el = np.linalg.norm(v[w] - v[u], axis=1)
    up2 = np.einsum("ij,ij->i", v[p] - v[u], v[p] - v[u])
    wp2 = np.einsum("ij,ij->i", v[p] - v[w], v[p] - v[w])
    uq2 = np.einsum("ij,ij->i", v[q] - v[u], v[q] - v[u])
    wq2 = np.einsum("ij,ij->i", v[q] - v[w], v[q] - v[w])

    # planar hinge coordinates: u at the origin, w at (el, 0), p above, q below
    xp = (up2 + el * el - wp2) / (2.0 * el)
    yp = np.sqrt(np.maximum(up2 - xp * xp, 0.0))
    xq = (uq2 + el * el - wq2) / (2.0 * el)
    yq = np.sqrt(np.maximum(uq2 - xq * xq, 0.0))

    length = np.sqrt((xp - xq) ** 2 + (yp + yq) ** 2)
    # the straight unfolded segment is a surface path only if it crosses the hinge
    denom = yp + yq
    with np.errstate(invalid="ignore", divide="ignore"):
        xstar = xp + (xq - xp) * np.where(denom > 0, yp / np.where(denom > 0, denom, 1.0), 0.5)
    crossing = (denom > 0) & (xstar >= 0.0) & (xstar <= el)
    return p[crossing].astype(np.int64), q[crossing].astype(np.int64), length[crossing]


def _distance_matrix(mesh, sources):
    g = surface_graph(mesh)
    return csgraph.dijkstra(g, directed=False, indices=np.asarray(sources, dtype=np.int64))


def geodesic_from(mesh, source):
    """Geodesic distance field from one vertex.

    Parameters
    ----------
    mesh : Mesh
    source : int
        Vertex index; must be < mesh.n.

    Returns
    -------
    GeodesicField
        Unreachable vertices carry +inf.
    """
    if not 0 <= source < mesh.n:
        raise IndexError(f"source {source} out of range [0, {mesh.n})")
    d = _distance_matrix(mesh, [source])[0]
    return GeodesicField(source=int(source), distances=d)


def geodesic_error(predicted, ground_truth, target, normalization="sqrt_area"):
    """Per-vertex geodesic error of a predicted map against the ground truth.

    ``error[i]`` is the geodesic distance on the target mesh between
    ``predicted[i]`` and ``ground_truth[i]``. The ``sqrt_area`` mode divides
    by the square root of the total target area and multiplies by 100.

    Returns
    -------
    (errors, mean) : ((n,) ndarray, float)
    """
    if len(predicted) != len(ground_truth):
        raise DimensionError(
            f"map lengths differ: {len(predicted)} vs {len(ground_truth)}"
        )
    predicted.check_range(target.n)
    ground_truth.check_range(target.n)
    uniq, inverse = np.unique(ground_truth.targets, return_inverse=True)
    dmat = _distance_matrix(target, uniq)
    errors = dmat[inverse, predicted.targets]
    if normalization == "sqrt_area":
        errors = errors * (100.0 / np.sqrt(target.total_area()))
    elif normalization != "none":
        raise ValueError(f"unknown normalization {normalization!r}")
    return errors, float(errors.mean())


def cut_geodesic_ball(mesh, landmark, radius, keep_all_components=False):
    """Remove every vertex within geodesic distance ``radius`` of a landmark.

    Vertices with distance <= radius and their incident triangles are
    dropped and the rest reindexed (``radius=0`` removes only the landmark
    itself). When the cut disconnects the mesh, only the largest remaining
    component is kept unless ``keep_all_components`` is set.

    Returns
    -------
    PartialCut

    Raises
    ------
    EmptyResult
        If no vertex survives the cut.
    """
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    dist = geodesic_from(mesh, landmark).distances
    keep = dist > radius
    if not keep.any():
        raise EmptyResult(f"radius {radius} removes every vertex")
    kept = np.nonzero(keep)[0]
    partial, kept_to_full = _submesh(mesh, kept, f"{mesh.name}_cut")
    if not keep_all_components:
        comps = connected_components(partial)
        if len(comps) > 1:
            largest = max(comps, key=lambda c: (len(c), -min(c)))
            sub = np.array(sorted(largest), dtype=np.int64)
            partial, sub_to_old = _submesh(partial, sub, partial.name)
            kept_to_full = kept_to_full[sub_to_old]
    return PartialCut(
        partial=partial, kept_to_full=kept_to_full, landmark=int(landmark), radius=float(radius)
    )


def _submesh(mesh, kept, name):
    """Restriction of a mesh to a sorted kept-vertex index array."""
    remap = -np.ones(mesh.n, dtype=np.int64)
    remap[kept] = np.arange(kept.size)
    tri = mesh.triangles
    alive = np.all(remap[tri] >= 0, axis=1) if tri.size else np.zeros(0, bool)
    return Mesh(mesh.vertices[kept], remap[tri[alive]], name=name), kept.astype(np.int64)


def save_partial_cut(cut, base_path):
    """Write ``<base>.off`` plus the ``<base>.kept_to_full`` sidecar."""
    save_mesh(cut.partial, f"{base_path}.off")
    with open(f"{base_path}.kept_to_full", "w", encoding="utf-8", newline="\n") as f:
        for idx in cut.kept_to_full:
            f.write(f"{idx}\n")


def load_kept_to_full(path):
    with open(path, "r", encoding="utf-8") as f:
        return np.array([int(line) for line in f if line.strip()], dtype=np.int64)


def restrict_correspondence(full_corr, kept_to_full):
    """Ground truth for a cut source: gather the full map at the kept vertices."""
    return Correspondence(
        full_corr.targets[kept_to_full],
        source_name=full_corr.source_name + "_cut",
        target_name=full_corr.target_name,
    )
