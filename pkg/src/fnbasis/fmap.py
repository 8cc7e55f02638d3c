"""Functional-map algebra, point-map recovery and the matching losses.

A point-to-point map from mesh M to mesh N is stored as a dense index
array (one target index per source vertex), i.e. the row support of the
binary matrix it represents; that matrix is never materialized, its action
is a row gather.
"""

import io
import os
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

from .errors import DimensionError, MissingEigenvalues, ParseError, RankWarning
from .spectral import SpectralBasis, load_matrix_file

# pseudoinverse singular-value cutoff, relative to the largest singular value
PINV_RCOND = 1e-10
# condition number beyond which solves are flagged with RankWarning
COND_WARN = 1e8


@dataclass(frozen=True)
class Correspondence:
    """Point-to-point map: ``targets[i]`` is the target vertex matched to source vertex i."""

    targets: np.ndarray
    source_name: str = ""
    target_name: str = ""

    def __post_init__(self):
        t = np.ascontiguousarray(self.targets, dtype=np.int64)
        if t.ndim != 1:
            raise DimensionError("correspondence targets must be a 1-D index array")
        if t.size and t.min() < 0:
            raise DimensionError("negative target index in correspondence")
        object.__setattr__(self, "targets", t)

    def __len__(self):
        return self.targets.shape[0]

    def check_range(self, n_target):
        if self.targets.size and self.targets.max() >= n_target:
            raise IndexError(
                f"correspondence target {self.targets.max()} out of range [0, {n_target})"
            )


@dataclass(frozen=True)
class FunctionalMap:
    """Dense k_M x k_N matrix mapping coefficients on N to coefficients on M."""

    matrix: np.ndarray
    basis_M: SpectralBasis
    basis_N: SpectralBasis

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if not np.all(np.isfinite(m)):
            raise ValueError("functional map contains non-finite entries")
        if m.shape != (self.basis_M.k, self.basis_N.k):
            raise DimensionError(
                f"map is {m.shape}, bases give ({self.basis_M.k}, {self.basis_N.k})"
            )
        object.__setattr__(self, "matrix", m)


@dataclass(frozen=True)
class DescriptorSet:
    """Per-vertex feature functions, one column per descriptor."""

    values: np.ndarray
    mesh_name: str = ""

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[1] < 1:
            raise DimensionError("descriptors must form an (n, d) matrix with d >= 1")
        object.__setattr__(self, "values", v)

    @property
    def d(self):
        return self.values.shape[1]


def _funcs(x):
    """Accept a SpectralBasis or a raw (n, k) array."""
    if isinstance(x, SpectralBasis):
        return x.functions
    return np.asarray(x, dtype=np.float64)


def _pinv_apply(a, b, context=""):
    """Moore-Penrose solve pinv(a) @ b through one SVD, flagging bad conditioning."""
    if not np.all(np.isfinite(a)):
        # LAPACK SVD can spin forever on non-finite input
        raise ValueError(f"non-finite entries in solve{' in ' + context if context else ''}")
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    if s[0] > 0 and s[-1] > 0 and s[0] / s[-1] > COND_WARN:
        warnings.warn(
            f"ill-conditioned solve{' in ' + context if context else ''} "
            f"(cond={s[0] / s[-1]:.2e})",
            RankWarning,
            stacklevel=3,
        )
    keep = s > PINV_RCOND * s[0]
    inv = np.where(keep, 1.0 / np.where(keep, s, 1.0), 0.0)
    return vt.T @ (inv[:, None] * (u.T @ b))


def nearest_rows(points, queries):
    """Index of the nearest row of ``points`` for each row of ``queries``.

    Exact Euclidean nearest neighbor through a k-d tree; ties are broken
    by the smallest index (ambiguous queries fall back to a brute-force
    argmin, which is what defines the tie semantics).
    """
    points = np.ascontiguousarray(points, dtype=np.float64)
    queries = np.ascontiguousarray(queries, dtype=np.float64)
    n = points.shape[0]
    if n == 1:
        return np.zeros(queries.shape[0], dtype=np.int64)
    tree = cKDTree(points)
    dist, idx = tree.query(queries, k=2)
    out = idx[:, 0].astype(np.int64)
    # near-ties: settle by explicit squared-distance argmin (first index wins)
    tau = 1e-12 * (1.0 + dist[:, 0])
    for i in np.nonzero(dist[:, 1] - dist[:, 0] <= tau)[0]:
        diff = points - queries[i]
        out[i] = int(np.argmin(np.einsum("ij,ij->i", diff, diff)))
    return out


def c_from_correspondence(basis_M, basis_N, pi):
    """Least-squares functional map induced by a point-to-point map.

    Solves ``argmin_C || Phi_M C - Pi Phi_N ||_F`` where ``Pi Phi_N`` is the
    row gather of the target basis by the correspondence.

    Returns
    -------
    FunctionalMap
    """
    phi_m, phi_n = _funcs(basis_M), _funcs(basis_N)
    pi.check_range(phi_n.shape[0])
    if len(pi) != phi_m.shape[0]:
        raise DimensionError(f"correspondence length {len(pi)} != source size {phi_m.shape[0]}")
    c = _pinv_apply(phi_m, phi_n[pi.targets], context="c_from_correspondence")
    if isinstance(basis_M, SpectralBasis) and isinstance(basis_N, SpectralBasis):
        return FunctionalMap(c, basis_M, basis_N)
    return FunctionalMap(c, _as_basis(phi_m), _as_basis(phi_n))


def _as_basis(mat):
    return SpectralBasis(np.asarray(mat, dtype=np.float64), None, kind="Learned")


def pointmap_from_c(fmap):
    """Recover a point-to-point map from a functional map by nearest neighbor.

    Each row of ``Phi_M C`` is matched to the nearest row of ``Phi_N``.
    """
    aligned = fmap.basis_M.functions @ fmap.matrix
    targets = nearest_rows(fmap.basis_N.functions, aligned)
    return Correspondence(
        targets, source_name=fmap.basis_M.mesh_name, target_name=fmap.basis_N.mesh_name
    )


def soft_correspondence(emb_M, emb_N, fmap, temperature=1.0):
    """Row-stochastic similarity scores between aligned embeddings.

    ``softmax(-D / temperature)`` per row, where D holds the Euclidean
    distances between rows of ``Phi_M C`` and rows of ``Phi_N``. Computed
    with a per-row max shift so it cannot overflow.
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    d = cdist(_funcs(emb_M) @ fmap.matrix, _funcs(emb_N))
    logits = -d / temperature
    logits -= logits.max(axis=1, keepdims=True)
    s = np.exp(logits)
    s /= s.sum(axis=1, keepdims=True)
    return s


def loss_alignment(emb_M, emb_N, pi_gt, target_coords, temperature=1.0):
    """Soft-correspondence alignment loss against ground-truth positions.

    Builds the optimal map from the ground-truth correspondence, scores
    every pair of points, and sums the squared distances between the
    score-weighted target coordinates and the ground-truth image of each
    source vertex.
    """
    c = c_from_correspondence(emb_M, emb_N, pi_gt)
    s = soft_correspondence(emb_M, emb_N, c, temperature)
    x = np.asarray(target_coords, dtype=np.float64)
    r = s @ x - x[pi_gt.targets]
    return float(np.sum(r * r))


def loss_universal(emb_M, emb_N, pi_gt):
    """Universal-signature baseline: squared row distance through the correspondence."""
    d = _funcs(emb_M) - _funcs(emb_N)[pi_gt.targets]
    return float(np.sum(d * d))


def loss_coord(emb, coords):
    """Squared reconstruction error of the coordinates in the embedding's span."""
    phi = _funcs(emb)
    x = np.asarray(coords, dtype=np.float64)
    r = phi @ _pinv_apply(phi, x, context="loss_coord") - x
    return float(np.sum(r * r))


def loss_l1(emb):
    """Sum of absolute values of all embedding entries (sparsity penalty)."""
    return float(np.abs(_funcs(emb)).sum())


def loss_smooth(emb, lbo, mass):
    """Dense spectral smoothness penalty of an embedding.

    Squared 2-norm of ``diag(E' P L P' A E)`` with E the embedding, P the
    LBO basis, L its eigenvalues and A the lumped mass matrix. The diagonal
    is accumulated from two tall-skinny products; no n-by-n intermediate.
    """
    e = _funcs(emb)
    if lbo.eigenvalues is None:
        raise MissingEigenvalues("smoothness penalty needs an eigenvalue-carrying basis")
    a = np.asarray(getattr(mass, "values", mass), dtype=np.float64)
    if e.shape[0] != lbo.n:
        raise DimensionError("embedding and basis row counts differ")
    left = e.T @ lbo.functions  # (k, k_lbo)
    right = lbo.functions.T @ (a[:, None] * e)  # (k_lbo, k)
    diag = np.einsum("il,l,li->i", left, lbo.eigenvalues, right)
    return float(diag @ diag)


def c_from_descriptors(basis_M, basis_N, desc_M, desc_N):
    """Functional map from descriptor preservation.

    Projects both descriptor sets onto their bases (``A = pinv(Phi) G``)
    and returns the least-squares C with ``C A_N ~ A_M``.
    """
    if desc_M.d != desc_N.d:
        raise DimensionError(f"descriptor counts differ: {desc_M.d} != {desc_N.d}")
    phi_m, phi_n = _funcs(basis_M), _funcs(basis_N)
    a_m = _pinv_apply(phi_m, desc_M.values, context="c_from_descriptors/source")
    a_n = _pinv_apply(phi_n, desc_N.values, context="c_from_descriptors/target")
    sv = np.linalg.svd(a_n, compute_uv=False)
    if sv[0] > 0 and (sv[-1] == 0 or sv[0] / sv[-1] > COND_WARN):
        warnings.warn("ill-conditioned descriptor projection", RankWarning, stacklevel=2)
    ct, *_ = np.linalg.lstsq(a_n.T, a_m.T, rcond=PINV_RCOND)
    return FunctionalMap(ct.T, basis_M, basis_N)


# ---------------------------------------------------------------------------
# file formats


def save_correspondence(corr, path):
    """One 0-based target index per line."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for t in corr.targets:
            f.write(f"{t}\n")


def load_correspondence(path, index_base=0, source_name="", target_name=""):
    """Read a plain-text correspondence file (one target index per line).

    ``index_base=1`` shifts 1-based dataset conventions down to 0-based.
    """
    with open(path, "r", encoding="utf-8") as f:
        try:
            targets = np.array([int(line.split()[0]) for line in f if line.strip()], dtype=np.int64)
        except (ValueError, IndexError) as exc:
            raise ParseError(f"bad correspondence file {path}: {exc}") from exc
    return Correspondence(targets - index_base, source_name=source_name, target_name=target_name)


def save_fmap(fmap, path):
    """FNMAP v1: header, "kM kN" line, then kM rows of kN floats."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("FNMAP v1\n")
        km, kn = fmap.matrix.shape
        f.write(f"{km} {kn}\n")
        for row in fmap.matrix:
            f.write(" ".join(f"{x:.17g}" for x in row) + "\n")


def load_fmap_matrix(path):
    """Read the raw matrix of an FNMAP v1 file."""
    with open(path, "r", encoding="utf-8") as f:
        if f.readline().strip() != "FNMAP v1":
            raise ParseError(f"not an FNMAP v1 file: {path}")
        try:
            km, kn = (int(x) for x in f.readline().split())
        except ValueError as exc:
            raise ParseError(f"bad FNMAP size line in {path}") from exc
        mat = np.loadtxt(io.StringIO(f.read()), dtype=np.float64, ndmin=2)
    if mat.shape != (km, kn):
        raise ParseError(f"FNMAP body is {mat.shape}, header says {(km, kn)}")
    return mat


def save_descriptors(desc, path):
    """Descriptor file: FNBASIS layout with kind tag DESC."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("FNBASIS v1\n")
        n, d = desc.values.shape
        f.write(f"{n} {d} DESC\n")
        for row in desc.values:
            f.write(" ".join(f"{x:.17g}" for x in row) + "\n")


def load_descriptors(path):
    mat, _, kind = load_matrix_file(path)
    if kind != "DESC":
        raise ParseError(f"expected kind DESC in {path}, got {kind!r}")
    name = os.path.splitext(os.path.basename(str(path)))[0]
    return DescriptorSet(mat, mesh_name=name)
