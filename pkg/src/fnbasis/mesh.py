"""Triangle mesh representation, file I/O and per-vertex geometric quantities.

Vertex order is the canonical identity for every correspondence in the
toolkit: loaders preserve file order exactly and nothing ever reorders
vertices silently.
"""

import os
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from .errors import ParseError, UnsupportedFormat, ValidationError

FORMATS = ("off", "obj", "ply")


class Mesh:
    """Immutable triangle mesh.

    Parameters
    ----------
    vertices : (n, 3) array_like
        3D vertex coordinates.
    triangles : (m, 3) array_like
        Oriented triplets of 0-based vertex indices.
    name : str
        Identifier used in reports and file naming.

    Raises
    ------
    ValidationError
        If a triangle references a vertex outside [0, n), repeats a vertex,
        has (near-)zero area, or an edge is shared by more than 2 triangles.
    """

    def __init__(self, vertices, triangles, name=""):
        v = np.ascontiguousarray(vertices, dtype=np.float64)
        t = np.ascontiguousarray(triangles, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 3:
            raise ValidationError(f"vertices must be (n, 3), got {v.shape}")
        if t.size == 0:
            t = t.reshape(0, 3)
        if t.ndim != 2 or t.shape[1] != 3:
            raise ValidationError(f"triangles must be (m, 3), got {t.shape}")
        if not np.all(np.isfinite(v)):
            raise ValidationError("non-finite vertex coordinate")
        n = v.shape[0]
        if t.size and (t.min() < 0 or t.max() >= n):
            raise ValidationError(
                f"triangle index out of range [0, {n}): found {t.min()}..{t.max()}"
            )
        if t.size and (
            np.any(t[:, 0] == t[:, 1]) or np.any(t[:, 1] == t[:, 2]) or np.any(t[:, 0] == t[:, 2])
        ):
            raise ValidationError("triangle with repeated vertex")
        self.vertices = v
        self.triangles = t
        self.name = str(name)
        self._check_degenerate()
        self._check_edge_manifold()
        v.flags.writeable = False
        t.flags.writeable = False

    # scale-invariant degeneracy threshold: 1e-12 x (bbox diagonal)^2
    @property
    def eps_area(self):
        if self.n == 0:
            return 0.0
        diag = float(np.linalg.norm(self.vertices.max(axis=0) - self.vertices.min(axis=0)))
        return 1e-12 * diag * diag

    def _check_degenerate(self):
        if self.m == 0:
            return
        areas = triangle_areas(self)
        bad = np.nonzero(areas <= self.eps_area)[0]
        if bad.size:
            raise ValidationError(f"degenerate (zero-area) triangle at index {bad[0]}")

    def _check_edge_manifold(self):
        if self.m == 0:
            return
        e = np.sort(
            np.concatenate(
                [self.triangles[:, [0, 1]], self.triangles[:, [1, 2]], self.triangles[:, [2, 0]]]
            ),
            axis=1,
        )
        _, counts = np.unique(e, axis=0, return_counts=True)
        if np.any(counts > 2):
            raise ValidationError("edge shared by more than 2 triangles")

    @property
    def n(self):
        return self.vertices.shape[0]

    @property
    def m(self):
        return self.triangles.shape[0]

    def edges(self):
        """Unique undirected edges as a (n_edges, 2) sorted index array."""
        if self.m == 0:
            return np.zeros((0, 2), dtype=np.int64)
        e = np.sort(
            np.concatenate(
                [self.triangles[:, [0, 1]], self.triangles[:, [1, 2]], self.triangles[:, [2, 0]]]
            ),
            axis=1,
        )
        return np.unique(e, axis=0)

    def bbox_diagonal(self):
        if self.n == 0:
            return 0.0
        return float(np.linalg.norm(self.vertices.max(axis=0) - self.vertices.min(axis=0)))

    def total_area(self):
        return float(triangle_areas(self).sum())

    def scaled(self, s, name=None):
        """Mesh with coordinates multiplied by scalar ``s``."""
        return Mesh(self.vertices * float(s), self.triangles, name or self.name)

    def __repr__(self):
        return f"Mesh(name={self.name!r}, n={self.n}, m={self.m})"


@dataclass(frozen=True)
class VertexAreas:
    """Barycentric lumped vertex areas: one third of incident triangle area."""

    values: np.ndarray

    @property
    def total(self):
        return float(self.values.sum())


def triangle_areas(mesh):
    """Per-triangle areas from the cross product formula."""
    v = mesh.vertices
    t = mesh.triangles
    c = np.cross(v[t[:, 1]] - v[t[:, 0]], v[t[:, 2]] - v[t[:, 0]])
    return 0.5 * np.linalg.norm(c, axis=1)


def vertex_areas(mesh):
    """Barycentric vertex areas.

    Each triangle contributes one third of its area to each of its three
    vertices, so the values sum to the total surface area.

    Returns
    -------
    VertexAreas
    """
    areas = triangle_areas(mesh)
    values = np.zeros(mesh.n)
    for corner in range(3):
        np.add.at(values, mesh.triangles[:, corner], areas / 3.0)
    return VertexAreas(values=values)


def connected_components(mesh):
    """Partition vertices by edge connectivity.

    Returns
    -------
    list of set of int
        One vertex index set per component, ordered by smallest member.
        Isolated vertices form singleton components.
    """
    e = mesh.edges()
    g = sparse.coo_matrix(
        (np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(mesh.n, mesh.n)
    )
    ncomp, labels = csgraph.connected_components(g, directed=False)
    comps = [set() for _ in range(ncomp)]
    for i, lab in enumerate(labels):
        comps[lab].add(int(i))
    comps.sort(key=min)
    return comps


# ---------------------------------------------------------------------------
# file I/O


def _detect_format(path, fmt=None):
    if fmt is not None:
        fmt = fmt.lower()
        if fmt not in FORMATS:
            raise UnsupportedFormat(f"unknown mesh format {fmt!r}")
        return fmt
    ext = os.path.splitext(str(path))[1].lower().lstrip(".")
    if ext not in FORMATS:
        raise UnsupportedFormat(f"cannot infer mesh format from extension {ext!r}")
    return ext


def load_mesh(path, fmt=None):
    """Load and validate a triangle mesh from an OFF, OBJ or ascii PLY file.

    Parameters
    ----------
    path : str or Path
    fmt : {"off", "obj", "ply"}, optional
        Inferred from the file extension when omitted.

    Returns
    -------
    Mesh
        Vertex order preserved exactly as in the file.
    """
    fmt = _detect_format(path, fmt)
    name = os.path.splitext(os.path.basename(str(path)))[0]
    with open(path, "r", encoding="utf-8") as f:
        text = f.read()
    if fmt == "off":
        v, t = _parse_off(text)
    elif fmt == "obj":
        v, t = _parse_obj(text)
    else:
        v, t = _parse_ply(text)
    return Mesh(v, t, name=name)


def save_mesh(mesh, path, fmt=None):
    """Write a mesh in OFF, OBJ or ascii PLY format (LF line endings)."""
    fmt = _detect_format(path, fmt)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        if fmt == "off":
            f.write("OFF\n")
            f.write(f"{mesh.n} {mesh.m} 0\n")
            for p in mesh.vertices:
                f.write(f"{p[0]:.17g} {p[1]:.17g} {p[2]:.17g}\n")
            for t in mesh.triangles:
                f.write(f"3 {t[0]} {t[1]} {t[2]}\n")
        elif fmt == "obj":
            for p in mesh.vertices:
                f.write(f"v {p[0]:.17g} {p[1]:.17g} {p[2]:.17g}\n")
            for t in mesh.triangles:
                f.write(f"f {t[0] + 1} {t[1] + 1} {t[2] + 1}\n")
        else:
            f.write("ply\nformat ascii 1.0\n")
            f.write(f"element vertex {mesh.n}\n")
            f.write("property double x\nproperty double y\nproperty double z\n")
            f.write(f"element face {mesh.m}\n")
            f.write("property list uchar int vertex_indices\nend_header\n")
            for p in mesh.vertices:
                f.write(f"{p[0]:.17g} {p[1]:.17g} {p[2]:.17g}\n")
            for t in mesh.triangles:
                f.write(f"3 {t[0]} {t[1]} {t[2]}\n")


def _parse_off(text):
    lines = [ln for ln in (raw.split("#", 1)[0].strip() for raw in text.splitlines()) if ln]
    if not lines or lines[0] != "OFF":
        raise ParseError("missing OFF header")
    try:
        n, m, _ = (int(x) for x in lines[1].split())
    except (ValueError, IndexError) as exc:
        raise ParseError(f"bad OFF count line: {exc}") from exc
    if len(lines) < 2 + n + m:
        raise ParseError("truncated OFF file")
    try:
        verts = [[float(x) for x in lines[2 + i].split()[:3]] for i in range(n)]
        tris = []
        for i in range(m):
            parts = [int(x) for x in lines[2 + n + i].split()]
            if parts[0] != 3:
                raise ParseError(f"non-triangular OFF face with {parts[0]} vertices")
            tris.append(parts[1:4])
    except (ValueError, IndexError) as exc:
        raise ParseError(f"malformed OFF body: {exc}") from exc
    return np.array(verts, dtype=np.float64).reshape(n, 3), np.array(tris, dtype=np.int64).reshape(m, 3)


def _parse_obj(text):
    verts, tris = [], []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tag, *rest = line.split()
        if tag == "v":
            try:
                verts.append([float(x) for x in rest[:3]])
            except ValueError as exc:
                raise ParseError(f"bad vertex on line {lineno}: {exc}") from exc
        elif tag == "f":
            if len(rest) != 3:
                raise ParseError(f"non-triangular OBJ face on line {lineno}")
            try:
                # "i", "i/j" and "i/j/k" references all resolve to the vertex index
                tris.append([int(r.split("/")[0]) - 1 for r in rest])
            except ValueError as exc:
                raise ParseError(f"bad face on line {lineno}: {exc}") from exc
        # other tags (vn, vt, o, g, s, mtllib, usemtl) are ignored
    if not verts:
        raise ParseError("OBJ file contains no vertices")
    return np.array(verts, dtype=np.float64), np.array(tris, dtype=np.int64).reshape(len(tris), 3)


def _parse_ply(text):
    lines = text.splitlines()
    if not lines or lines[0].strip() != "ply":
        raise ParseError("missing ply header")
    n = m = None
    i = 1
    order = []  # element order in the body
    while i < len(lines):
        line = lines[i].strip()
        i += 1
        if line.startswith("format"):
            if "ascii" not in line:
                raise UnsupportedFormat("binary PLY is not supported; convert to ascii")
        elif line.startswith("element vertex"):
            n = int(line.split()[2])
            order.append("vertex")
        elif line.startswith("element face"):
            m = int(line.split()[2])
            order.append("face")
        elif line.startswith("element"):
            raise UnsupportedFormat(f"unsupported PLY element: {line}")
        elif line == "end_header":
            break
    else:
        raise ParseError("PLY header without end_header")
    if n is None or m is None:
        raise ParseError("PLY header missing vertex or face element")
    if order != ["vertex", "face"]:
        raise UnsupportedFormat("PLY elements must be vertex then face")
    body = [ln for ln in (s.strip() for s in lines[i:]) if ln]
    if len(body) < n + m:
        raise ParseError("truncated PLY body")
    try:
        verts = [[float(x) for x in body[j].split()[:3]] for j in range(n)]
        tris = []
        for j in range(m):
            parts = [int(float(x)) for x in body[n + j].split()]
            if parts[0] != 3:
                raise ParseError(f"non-triangular PLY face with {parts[0]} vertices")
            tris.append(parts[1:4])
    except (ValueError, IndexError) as exc:
        raise ParseError(f"malformed PLY body: {exc}") from exc
    return np.array(verts, dtype=np.float64).reshape(n, 3), np.array(tris, dtype=np.int64).reshape(m, 3)
