"""Cotangent Laplacian assembly, truncated eigenbases and smoothness diagnostics.

The stiffness matrix follows the classic cotangent weight discretization:
off-diagonal entries ``W[i, j] = -(cot a + cot b) / 2`` over the one or two
angles opposite edge ``(i, j)``, diagonal entries the negated row sums, so
``W`` is symmetric positive semi-definite with the constant vector in its
kernel. The mass matrix is the barycentric lumping ``A = diag(vertex_areas)``.
"""

import io
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.linalg import eigh
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

from .errors import (
    ConvergenceError,
    DegenerateGeometry,
    DimensionError,
    ParseError,
    RankError,
    ValidationError,
    ZeroFunction,
)
from .mesh import vertex_areas

KINDS = ("LBO", "Learned", "Hybrid")

# dense generalized solve below this size; iterative shift-invert above
DENSE_LIMIT = 500
SHIFT = -1e-8


@dataclass(frozen=True)
class LaplacianPair:
    """Stiffness matrix W and lumped mass matrix A of a mesh."""

    stiffness: sparse.csr_matrix
    mass: np.ndarray  # diagonal of A, i.e. the vertex areas
    mesh_name: str = ""

    @property
    def n(self):
        return self.stiffness.shape[0]

    def mass_matrix(self):
        return sparse.diags(self.mass)


@dataclass
class SpectralBasis:
    """An n-by-k functional basis (spectral embedding) on one mesh.

    Rows are per-vertex embeddings, columns are basis functions.
    ``eigenvalues`` is None for learned and hybrid bases. ``mass`` carries
    the vertex areas when known, enabling A-orthonormality checks.
    """

    functions: np.ndarray
    eigenvalues: np.ndarray | None = None
    kind: str = "Learned"
    mesh_name: str = ""
    mass: np.ndarray | None = None

    def __post_init__(self):
        self.functions = np.asarray(self.functions, dtype=np.float64)
        if self.functions.ndim != 2:
            raise ValidationError("basis functions must form an (n, k) matrix")
        if self.kind not in KINDS:
            raise ValidationError(f"unknown basis kind {self.kind!r}")
        if self.eigenvalues is not None:
            self.eigenvalues = np.asarray(self.eigenvalues, dtype=np.float64)
            if self.eigenvalues.shape != (self.k,):
                raise ValidationError("eigenvalue count does not match basis width")
            if np.any(np.diff(self.eigenvalues) < -1e-10 * max(abs(self.eigenvalues[-1]), 1e-30)):
                raise ValidationError("eigenvalues not sorted non-descending")
        self.validate_rank()
        if self.kind == "LBO" and self.mass is not None:
            gram = self.functions.T @ (self.mass[:, None] * self.functions)
            err = np.abs(gram - np.eye(self.k)).max()
            if err > 1e-8:
                raise ValidationError(f"LBO basis not A-orthonormal (max error {err:.2e})")

    @property
    def n(self):
        return self.functions.shape[0]

    @property
    def k(self):
        return self.functions.shape[1]

    def validate_rank(self):
        """Full column rank check: smallest singular value > 1e-10 x largest."""
        if min(self.functions.shape) == 0:
            return
        sv = np.linalg.svd(self.functions, compute_uv=False)
        if sv[0] == 0 or sv[-1] <= 1e-10 * sv[0]:
            raise RankError(
                f"rank-deficient basis: sigma_min/sigma_max = {sv[-1] / max(sv[0], 1e-300):.2e}"
            )

    def head(self, k):
        """First ``k`` columns as a new basis of the same kind."""
        if k > self.k:
            raise DimensionError(f"requested {k} columns from a {self.k}-column basis")
        eigs = self.eigenvalues[:k] if self.eigenvalues is not None else None
        return SpectralBasis(self.functions[:, :k].copy(), eigs, self.kind, self.mesh_name, self.mass)


def build_laplacian(mesh):
    """Assemble the cotangent stiffness matrix and barycentric mass matrix.

    Parameters
    ----------
    mesh : Mesh

    Returns
    -------
    LaplacianPair

    Raises
    ------
    DegenerateGeometry
        If any corner cotangent exceeds 1/eps_area in magnitude
        (a numerically collapsed angle).
    """
    v = mesh.vertices
    t = mesh.triangles
    n = mesh.n

    # corner cotangents: at corner c of each triangle, cot = (u . w) / |u x w|
    cots = np.empty((mesh.m, 3))
    for c in range(3):
        a, b = (c + 1) % 3, (c + 2) % 3
        u = v[t[:, a]] - v[t[:, c]]
        w = v[t[:, b]] - v[t[:, c]]
        cross = np.linalg.norm(np.cross(u, w), axis=1)
        cots[:, c] = np.einsum("ij,ij->i", u, w) / cross
    if mesh.m and np.abs(cots).max() > 1.0 / mesh.eps_area:
        raise DegenerateGeometry("cotangent weight exceeds 1/eps_area (near-zero angle)")

    # the cotangent at corner c weights the opposite edge (a, b)
    rows = np.concatenate([t[:, 1], t[:, 2], t[:, 0]])
    cols = np.concatenate([t[:, 2], t[:, 0], t[:, 1]])
    vals = 0.5 * np.concatenate([cots[:, 0], cots[:, 1], cots[:, 2]])
    off = sparse.coo_matrix((vals, (rows, cols)), shape=(n, n))
    off = off + off.T  # symmetric accumulation of the one or two opposite angles
    w = sparse.diags(np.asarray(off.sum(axis=1)).ravel()) - off
    w = w.tocsr()

    asym = abs(w - w.T).max() if w.nnz else 0.0
    scale = abs(w).max() if w.nnz else 1.0
    if asym > 1e-12 * max(scale, 1e-300):
        raise ValidationError("stiffness matrix lost symmetry during assembly")

    return LaplacianPair(stiffness=w, mass=vertex_areas(mesh).values, mesh_name=mesh.name)


def eigenbasis(lap, k):
    """Solve ``W phi = lambda A phi`` for the k smallest eigenpairs.

    Uses a dense generalized solve for small problems and shift-invert
    Lanczos (shift -1e-8, kernel-safe) above ``DENSE_LIMIT`` vertices.
    Eigenfunctions are A-orthonormal; each is sign-flipped so its entry of
    largest magnitude is positive; tiny negative eigenvalues from the
    solver are clamped to zero.

    Returns
    -------
    SpectralBasis
        kind="LBO", with eigenvalues and the mass diagonal attached.
    """
    n = lap.n
    if not 1 <= k <= n:
        raise DimensionError(f"k={k} outside [1, {n}]")
    w = lap.stiffness
    a = lap.mass

    if n <= DENSE_LIMIT or k > n - 2:
        vals, vecs = eigh(w.toarray(), np.diag(a))
        vals, vecs = vals[:k], vecs[:, :k]
    else:
        v0 = np.random.default_rng(0).standard_normal(n)  # fixed start vector: deterministic output
        try:
            vals, vecs = eigsh(w, k=k, M=lap.mass_matrix().tocsc(), sigma=SHIFT, which="LM", v0=v0)
        except ArpackNoConvergence as exc:
            raise ConvergenceError(f"eigensolver did not converge: {exc}") from exc
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]

    floor = -1e-10 * max(abs(vals).max(), 1e-300)
    if vals.min() < floor:
        raise ConvergenceError(f"negative eigenvalue {vals.min():.3e} beyond PSD tolerance")
    vals = np.maximum(vals, 0.0)

    for j in range(k):
        col = vecs[:, j]
        if col[np.argmax(np.abs(col))] < 0:
            vecs[:, j] = -col
    return SpectralBasis(vecs, vals, kind="LBO", mesh_name=lap.mesh_name, mass=a.copy())


def dirichlet_energy(f, lap, mode="l2"):
    """Smoothness of a function on the mesh.

    Parameters
    ----------
    f : (n,) array_like
    lap : LaplacianPair
    mode : {"l2", "mass_normalized"}
        "l2" returns f'Wf / f'f (the report convention);
        "mass_normalized" returns the Rayleigh quotient f'Wf / f'Af,
        which equals the eigenvalue on an eigenfunction.
    """
    f = np.asarray(f, dtype=np.float64).ravel()
    nrm2 = float(f @ f)
    if np.sqrt(nrm2) < 1e-14:
        raise ZeroFunction("function norm below 1e-14")
    num = float(f @ (lap.stiffness @ f))
    if mode == "l2":
        return num / nrm2
    if mode == "mass_normalized":
        return num / float(f @ (lap.mass * f))
    raise ValueError(f"unknown mode {mode!r}")


def hybrid_basis(learned, lbo, cut):
    """Learned columns 1..cut followed by LBO columns cut+1..k.

    ``cut=0`` returns the LBO basis unchanged. The concatenation is
    validated to have full column rank.

    Returns
    -------
    SpectralBasis
        kind="Hybrid" (or the untouched LBO basis when cut is 0).
    """
    if cut < 0:
        raise DimensionError("cut must be nonnegative")
    if cut == 0:
        return lbo
    if learned.k < cut:
        raise DimensionError(f"learned basis has {learned.k} < cut={cut} columns")
    if lbo.k <= cut:
        raise DimensionError(f"LBO basis needs more than cut={cut} columns, has {lbo.k}")
    if learned.n != lbo.n:
        raise DimensionError("bases live on different meshes")
    funcs = np.concatenate([learned.functions[:, :cut], lbo.functions[:, cut:]], axis=1)
    return SpectralBasis(funcs, None, kind="Hybrid", mesh_name=lbo.mesh_name, mass=lbo.mass)


def eigenvalue_groups(values, rel_gap=0.2):
    """Cluster sorted eigenvalues into near-degenerate groups by gap detection.

    A new group starts wherever the gap to the previous eigenvalue exceeds
    ``rel_gap`` times the local scale.

    Returns
    -------
    list of (mean, multiplicity)
    """
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        return []
    scale = max(abs(values).max(), 1e-300)
    groups = [[values[0]]]
    for prev, cur in zip(values[:-1], values[1:]):
        if cur - prev > rel_gap * max(cur, 0.05 * scale):
            groups.append([cur])
        else:
            groups[-1].append(cur)
    return [(float(np.mean(g)), len(g)) for g in groups]


# ---------------------------------------------------------------------------
# FNBASIS v1 file format (shared with externally trained embeddings)


def save_basis(basis, path, kind=None):
    """Write a basis in the FNBASIS v1 text format.

    Layout: header line "FNBASIS v1", a line "n k kind", an optional
    "eigs:" line, then n rows of k floats at 17 significant digits.
    """
    kind = kind or basis.kind
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("FNBASIS v1\n")
        f.write(f"{basis.n} {basis.k} {kind}\n")
        if basis.eigenvalues is not None:
            f.write("eigs: " + " ".join(f"{x:.17g}" for x in basis.eigenvalues) + "\n")
        for row in basis.functions:
            f.write(" ".join(f"{x:.17g}" for x in row) + "\n")


def load_matrix_file(path, magic="FNBASIS"):
    """Read an FNBASIS-layout file; returns (matrix, eigenvalues-or-None, kind)."""
    with open(path, "r", encoding="utf-8") as f:
        if f.readline().strip() != f"{magic} v1":
            raise ParseError(f"not a {magic} v1 file: {path}")
        parts = f.readline().split()
        if len(parts) != 3:
            raise ParseError(f"bad {magic} size line in {path}")
        n, k, kind = int(parts[0]), int(parts[1]), parts[2]
        pos = f.tell()
        line = f.readline()
        eigs = None
        if line.startswith("eigs:"):
            eigs = np.array([float(x) for x in line.split()[1:]], dtype=np.float64)
            if eigs.shape != (k,):
                raise ParseError(f"eigs line has {eigs.size} values, expected {k}")
        else:
            f.seek(pos)
        mat = np.loadtxt(io.StringIO(f.read()), dtype=np.float64, ndmin=2)
    if mat.shape != (n, k):
        raise ParseError(f"matrix body is {mat.shape}, header says {(n, k)}")
    return mat, eigs, kind


def load_basis(path):
    """Load a SpectralBasis from an FNBASIS v1 file."""
    mat, eigs, kind = load_matrix_file(path)
    if kind not in KINDS:
        raise ParseError(f"unknown basis kind {kind!r} in {path}")
    name = _stem(path)
    return SpectralBasis(mat, eigs, kind=kind, mesh_name=name)


def _stem(path):
    import os

    return os.path.splitext(os.path.basename(str(path)))[0]
