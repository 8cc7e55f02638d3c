"""Synthetic test shapes: icospheres, deformed sphere corpora and simple
strips. These power the documentation examples, the demo configs and the
test suite; none of them require external data."""

import numpy as np

from .mesh import Mesh


def icosahedron():
    """Unit icosahedron vertices and faces."""
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    v = np.array(
        [
            [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
            [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
            [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
        ],
        dtype=np.float64,
    )
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    t = np.array(
        [
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ],
        dtype=np.int64,
    )
    return v, t


def icosphere(subdivisions=3, radius=1.0, name="icosphere"):
    """Subdivided icosahedron projected onto a sphere.

    Vertex counts by subdivision level: 12, 42, 162, 642, 2562.
    """
    v, t = icosahedron()
    for _ in range(subdivisions):
        v, t = _subdivide(v, t)
        v /= np.linalg.norm(v, axis=1, keepdims=True)
    return Mesh(v * radius, t, name=name)


def _subdivide(v, t):
    """Split every triangle in four, reusing edge midpoints."""
    verts = list(v)
    cache = {}

    def midpoint(a, b):
        key = (a, b) if a < b else (b, a)
        if key not in cache:
            cache[key] = len(verts)
            verts.append(0.5 * (v[a] + v[b]))
        return cache[key]

    tris = []
    for a, b, c in t:
        ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
        tris.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]])
    return np.array(verts, dtype=np.float64), np.array(tris, dtype=np.int64)


def bumpy_sphere(subdivisions=3, amplitude=0.25, n_bumps=6, seed=0, name=None):
    """Icosphere with smooth random radial bumps.

    Shapes generated from the same subdivision level share connectivity
    and vertex order, so the identity map is a ground-truth correspondence
    between any two of them; different seeds give non-isometric geometry.
    """
    base = icosphere(subdivisions)
    rng = np.random.default_rng(seed)
    centers = rng.standard_normal((n_bumps, 3))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    amps = amplitude * rng.uniform(0.5, 1.0, n_bumps) * rng.choice([-1.0, 1.0], n_bumps)
    widths = rng.uniform(0.35, 0.7, n_bumps)
    r = np.ones(base.n)
    for c, a, wdt in zip(centers, amps, widths):
        d2 = np.einsum("ij,ij->i", base.vertices - c, base.vertices - c)
        r += a * np.exp(-d2 / (2.0 * wdt * wdt))
    return Mesh(
        base.vertices * r[:, None], base.triangles, name=name or f"bumpy{seed}"
    )


def sphere_corpus(n_shapes=4, subdivisions=3, amplitude=0.25, seed=0):
    """Family of mutually non-isometric deformed icospheres with shared indexing."""
    return [
        bumpy_sphere(subdivisions, amplitude, seed=seed * 1000 + i, name=f"shape{i}")
        for i in range(n_shapes)
    ]


def humanoid(height=1.8, name="humanoid"):
    """Crude human-proportioned blob: an elongated icosphere with four limb
    lobes and a head lobe. The lowest-z vertex sits on a "foot", making it a
    convenient landmark for partiality cuts at human-scale radii."""
    base = icosphere(3)
    v = base.vertices.copy()
    lobes = [
        (np.array([0.0, 0.0, 1.0]), 0.55, 0.45),    # head
        (np.array([0.85, 0.0, -0.55]), 0.75, 0.40),  # right leg
        (np.array([-0.85, 0.0, -0.55]), 0.75, 0.40),  # left leg
        (np.array([0.95, 0.0, 0.45]), 0.55, 0.35),   # right arm
        (np.array([-0.95, 0.0, 0.45]), 0.55, 0.35),  # left arm
    ]
    r = np.ones(base.n)
    for center, amp, width in lobes:
        center = center / np.linalg.norm(center)
        d2 = np.einsum("ij,ij->i", v - center, v - center)
        r += amp * np.exp(-d2 / (2.0 * width * width))
    v = v * r[:, None]
    v[:, 2] *= 1.35  # stretch along the body axis
    v[:, 1] *= 0.55  # flatten front-to-back
    span = v[:, 2].max() - v[:, 2].min()
    return Mesh(v * (height / span), base.triangles, name=name)


def foot_landmark(mesh):
    """Index of the lowest vertex (minimal z), a stand-in for a foot point."""
    return int(np.argmin(mesh.vertices[:, 2]))


def flat_strip(n_segments=3, segment=1.0, height=0.8, name="strip"):
    """Planar triangle strip whose bottom boundary is a straight chain of
    ``n_segments`` collinear edges of length ``segment``."""
    bottom = np.array([[i * segment, 0.0, 0.0] for i in range(n_segments + 1)])
    top = np.array([[(i + 0.5) * segment, height, 0.0] for i in range(n_segments)])
    v = np.concatenate([bottom, top])
    tris = []
    for i in range(n_segments):
        tris.append([i, i + 1, n_segments + 1 + i])
        if i + 1 < n_segments:
            tris.append([i + 1, n_segments + 2 + i, n_segments + 1 + i])
    return Mesh(v, np.array(tris, dtype=np.int64), name=name)


def random_sphere_mesh(n_points=80, seed=0, name=None):
    """Triangulated convex hull of random points on the unit sphere."""
    from scipy.spatial import ConvexHull

    rng = np.random.default_rng(seed)
    pts = rng.standard_normal((n_points, 3))
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    hull = ConvexHull(pts)
    return Mesh(pts, hull.simplices.astype(np.int64), name=name or f"hull{seed}")


def tetrahedron(name="tetra"):
    """Regular tetrahedron, the smallest closed triangle mesh."""
    v = np.array(
        [[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=np.float64
    ) / np.sqrt(3.0)
    t = np.array([[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]], dtype=np.int64)
    return Mesh(v, t, name=name)
