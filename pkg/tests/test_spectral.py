import numpy as np
import pytest
from scipy.linalg import eigh

from fnbasis.errors import (
    DegenerateGeometry,
    DimensionError,
    RankError,
    ValidationError,
    ZeroFunction,
)
from fnbasis.mesh import Mesh, vertex_areas
from fnbasis.spectral import (
    SpectralBasis,
    build_laplacian,
    dirichlet_energy,
    eigenbasis,
    eigenvalue_groups,
    hybrid_basis,
    load_basis,
    save_basis,
)
from fnbasis.synthetic import icosphere, random_sphere_mesh


def test_unit_square_cotangent_weights(unit_square):
    # hand computation: every boundary edge faces one 45-degree angle, so its
    # weight is cot(45)/2 = 0.5; the diagonal faces the two right angles, so
    # its weight is (cot 90 + cot 90)/2 = 0
    w = build_laplacian(unit_square).stiffness.toarray()
    for i, j in [(0, 1), (1, 2), (2, 3), (0, 3)]:
        assert -w[i, j] == pytest.approx(0.5, abs=1e-12)
    assert -w[0, 2] == pytest.approx(0.0, abs=1e-12)
    assert np.abs(w @ np.ones(4)).max() < 1e-12


def test_equilateral_weights(equilateral):
    w = build_laplacian(equilateral).stiffness.toarray()
    expected = 0.5 / np.tan(np.pi / 3)
    for i, j in [(0, 1), (1, 2), (0, 2)]:
        assert -w[i, j] == pytest.approx(expected, rel=1e-12)


def test_row_sums_vanish(blob):
    w = build_laplacian(blob).stiffness
    ones = np.ones(blob.n)
    assert np.abs(w @ ones).max() < 1e-10 * abs(w).max()


def test_stiffness_symmetric_and_psd(blob):
    w = build_laplacian(blob).stiffness
    assert abs(w - w.T).max() < 1e-12 * abs(w).max()
    lam_min = eigh(w.toarray(), eigvals_only=True, subset_by_index=[0, 0])[0]
    assert lam_min >= -1e-10 * abs(w).max()


def test_mass_matches_vertex_areas(blob):
    assert build_laplacian(blob).mass == pytest.approx(vertex_areas(blob).values)


def test_degenerate_sliver_raises():
    theta = 1e-7  # passes area validation but collapses a cotangent
    v = [[0, 0, 0], [1000.0, 0, 0], [1000 * np.cos(theta), 1000 * np.sin(theta), 0]]
    mesh = Mesh(v, [[0, 1, 2]], name="sliver")
    with pytest.raises(DegenerateGeometry):
        build_laplacian(mesh)


def test_kernel_pair(tetra):
    basis = eigenbasis(build_laplacian(tetra), 1)
    assert basis.eigenvalues[0] <= 1e-8
    phi = basis.functions[:, 0]
    assert np.abs(phi - phi[0]).max() < 1e-8 * abs(phi[0])


def test_full_spectrum_matches_dense_oracle():
    mesh = random_sphere_mesh(10, seed=3)
    lap = build_laplacian(mesh)
    basis = eigenbasis(lap, mesh.n)
    vals, _ = eigh(lap.stiffness.toarray(), np.diag(lap.mass))
    assert basis.eigenvalues == pytest.approx(np.maximum(vals, 0.0), abs=1e-10)
    gram = basis.functions.T @ (lap.mass[:, None] * basis.functions)
    assert np.abs(gram - np.eye(mesh.n)).max() < 1e-8


def test_iterative_path_matches_dense_oracle(monkeypatch, blob):
    import fnbasis.spectral as spectral

    lap = build_laplacian(blob)
    dense = eigenbasis(lap, 12)
    monkeypatch.setattr(spectral, "DENSE_LIMIT", 0)
    sparse_basis = eigenbasis(lap, 12)
    assert sparse_basis.eigenvalues == pytest.approx(dense.eigenvalues, abs=1e-8)
    # eigenvalue counts below any threshold agree between the two solvers
    for thr in (0.5, 1.0, 2.0, 5.0):
        assert np.sum(sparse_basis.eigenvalues < thr) == np.sum(dense.eigenvalues < thr)


def test_k_out_of_range(tetra):
    lap = build_laplacian(tetra)
    with pytest.raises(DimensionError):
        eigenbasis(lap, 5)
    with pytest.raises(DimensionError):
        eigenbasis(lap, 0)


def test_sphere_spectrum_groups(sphere_642):
    basis = eigenbasis(build_laplacian(sphere_642), 9)
    groups = eigenvalue_groups(basis.eigenvalues)
    assert [mult for _, mult in groups] == [1, 3, 5]
    assert groups[0][0] == pytest.approx(0.0, abs=1e-8)
    assert groups[1][0] == pytest.approx(2.0, rel=0.05)
    assert groups[2][0] == pytest.approx(6.0, rel=0.05)


def test_eigen_scaling_property(blob):
    s = 3.0
    b1 = eigenbasis(build_laplacian(blob), 8)
    b2 = eigenbasis(build_laplacian(blob.scaled(s)), 8)
    assert b2.eigenvalues == pytest.approx(b1.eigenvalues / s**2, rel=1e-6)
    # A-orthonormalization absorbs a 1/s factor; compare after rescaling, up to sign
    for j in range(8):
        col1, col2 = b1.functions[:, j], s * b2.functions[:, j]
        err = min(np.abs(col1 - col2).max(), np.abs(col1 + col2).max())
        assert err < 1e-6 * np.abs(col1).max()


def test_determinism(blob):
    lap = build_laplacian(blob)
    a = eigenbasis(lap, 6)
    b = eigenbasis(lap, 6)
    assert np.array_equal(a.functions, b.functions)
    assert np.array_equal(a.eigenvalues, b.eigenvalues)


def test_sign_convention(blob):
    basis = eigenbasis(build_laplacian(blob), 6)
    for j in range(6):
        col = basis.functions[:, j]
        assert col[np.argmax(np.abs(col))] > 0


def test_dirichlet_constant_is_zero(blob):
    lap = build_laplacian(blob)
    assert dirichlet_energy(np.ones(blob.n), lap) == pytest.approx(0.0, abs=1e-12)


def test_dirichlet_eigen_identity(blob):
    lap = build_laplacian(blob)
    basis = eigenbasis(lap, 10)
    for j in range(10):
        e = dirichlet_energy(basis.functions[:, j], lap, mode="mass_normalized")
        assert e == pytest.approx(basis.eigenvalues[j], rel=1e-8, abs=1e-12)


def test_dirichlet_l2_vs_mass_modes(blob):
    lap = build_laplacian(blob)
    rng = np.random.default_rng(0)
    f = rng.standard_normal(blob.n)
    num = f @ (lap.stiffness @ f)
    assert dirichlet_energy(f, lap, "l2") == pytest.approx(num / (f @ f), rel=1e-12)
    assert dirichlet_energy(f, lap, "mass_normalized") == pytest.approx(
        num / (f @ (lap.mass * f)), rel=1e-12
    )


def test_dirichlet_zero_function(blob):
    with pytest.raises(ZeroFunction):
        dirichlet_energy(np.zeros(blob.n), build_laplacian(blob))


def test_lbo_frame_is_smoothest(blob):
    # no random A-orthonormal frame beats the eigenframe's total energy
    k = 6
    lap = build_laplacian(blob)
    basis = eigenbasis(lap, k)
    a = lap.mass

    def total_energy(frame):
        return sum(
            dirichlet_energy(frame[:, j], lap, "mass_normalized") for j in range(k)
        )

    lbo_total = total_energy(basis.functions)
    rng = np.random.default_rng(1)
    for trial in range(40):
        if trial % 2 == 0:
            q, _ = np.linalg.qr(rng.standard_normal((k, k)))
            frame = basis.functions @ q  # rotation stays A-orthonormal
        else:
            raw = rng.standard_normal((blob.n, k))
            gram = raw.T @ (a[:, None] * raw)
            vals, vecs = np.linalg.eigh(gram)
            frame = raw @ (vecs / np.sqrt(vals)) @ vecs.T
        assert total_energy(frame) >= lbo_total - 1e-9


def test_hybrid_cut_zero_returns_lbo(blob):
    lbo = eigenbasis(build_laplacian(blob), 6)
    rng = np.random.default_rng(0)
    learned = SpectralBasis(rng.standard_normal((blob.n, 6)), kind="Learned")
    assert hybrid_basis(learned, lbo, 0) is lbo


def test_hybrid_columns(blob):
    lbo = eigenbasis(build_laplacian(blob), 6)
    rng = np.random.default_rng(0)
    learned = SpectralBasis(rng.standard_normal((blob.n, 4)), kind="Learned")
    hyb = hybrid_basis(learned, lbo, 4)
    assert hyb.kind == "Hybrid"
    assert hyb.k == 6
    assert np.array_equal(hyb.functions[:, :4], learned.functions)
    assert np.array_equal(hyb.functions[:, 4:], lbo.functions[:, 4:])


def test_hybrid_of_lbo_with_itself(blob):
    lbo = eigenbasis(build_laplacian(blob), 6)
    hyb = hybrid_basis(lbo, lbo, 3)
    assert np.array_equal(hyb.functions, lbo.functions)


def test_hybrid_rank_deficient_raises(blob):
    lbo = eigenbasis(build_laplacian(blob), 6)
    dup = SpectralBasis(lbo.functions[:, 3:5].copy(), kind="Learned")
    with pytest.raises(RankError):
        hybrid_basis(dup, lbo, 2)


def test_hybrid_dimension_errors(blob):
    lbo = eigenbasis(build_laplacian(blob), 6)
    rng = np.random.default_rng(0)
    learned = SpectralBasis(rng.standard_normal((blob.n, 4)), kind="Learned")
    with pytest.raises(DimensionError):
        hybrid_basis(learned, lbo, 5)  # learned too narrow
    with pytest.raises(DimensionError):
        hybrid_basis(learned, lbo.head(4), 4)  # lbo adds nothing


def test_basis_validation_rejects_unsorted_eigenvalues(blob):
    rng = np.random.default_rng(0)
    funcs = rng.standard_normal((10, 3))
    with pytest.raises(ValidationError):
        SpectralBasis(funcs, eigenvalues=[2.0, 1.0, 3.0], kind="LBO")


def test_basis_file_roundtrip_exact(tmp_path, blob):
    basis = eigenbasis(build_laplacian(blob), 5)
    path = tmp_path / "blob.fnbasis"
    save_basis(basis, path)
    back = load_basis(path)
    assert back.kind == "LBO"
    assert np.array_equal(back.functions, basis.functions)
    assert np.array_equal(back.eigenvalues, basis.eigenvalues)


def test_basis_file_learned_no_eigs(tmp_path):
    rng = np.random.default_rng(0)
    basis = SpectralBasis(rng.standard_normal((12, 3)), kind="Learned")
    path = tmp_path / "emb.fnbasis"
    save_basis(basis, path)
    back = load_basis(path)
    assert back.eigenvalues is None
    assert np.array_equal(back.functions, basis.functions)
    header = path.read_text().splitlines()[:2]
    assert header == ["FNBASIS v1", "12 3 Learned"]


def test_icosphere_area_converges():
    # sanity on the synthetic sphere itself: area approaches 4*pi from below
    assert icosphere(3).total_area() == pytest.approx(4 * np.pi, rel=0.01)
