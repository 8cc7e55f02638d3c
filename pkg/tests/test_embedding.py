import numpy as np
import pytest

from fnbasis.embedding import (
    EmbeddingSet,
    TrainConfig,
    export_embeddings,
    freeze_pair_state,
    identity_correspondences,
    init_embeddings,
    pair_objective,
    pair_objective_value,
    paper_schedule,
    shape_coordinates,
    step_gradient,
    train,
    write_loss_curve,
)
from fnbasis.errors import DimensionError, NonFiniteGradient
from fnbasis.fmap import Correspondence, loss_alignment, loss_coord
from fnbasis.spectral import load_basis
from fnbasis.synthetic import icosphere, random_sphere_mesh, tetrahedron


def small_pair_setup(k=3, seed=0, spread=True):
    """Two 20-vertex shapes with a random ground truth, entries away from 0."""
    rng = np.random.default_rng(seed)
    a = random_sphere_mesh(20, seed=10, name="a")
    b = random_sphere_mesh(20, seed=11, name="b")
    corpus = {"a": a, "b": b}
    pi = rng.permutation(20)
    corrs = {("a", "b"): Correspondence(pi, "a", "b")}
    eset = init_embeddings(corpus, corrs, k, strategy="random_gaussian", seed=seed)
    if spread:
        # keep entries away from 0 so the l1 subgradient is exact under FD
        for name in eset.embeddings:
            e = eset.embeddings[name]
            eset.embeddings[name] = np.sign(e) * (np.abs(e) + 0.3)
    return eset


def fd_gradient_check(objective, seed=0, h=1e-6, tol=1e-5):
    eset = small_pair_setup(seed=seed)
    pair = ("a", "b")
    cfg = TrainConfig(objective=objective, temperature=0.8, track_accuracy=False)
    frozen = freeze_pair_state(eset, pair, cfg)
    phi_m = eset.embeddings["a"].copy()
    phi_n = eset.embeddings["b"].copy()
    _, g_m, g_n = pair_objective(phi_m, phi_n, frozen, cfg)
    for arr, grad in ((phi_m, g_m), (phi_n, g_n)):
        fd = np.zeros_like(grad)
        for idx in np.ndindex(arr.shape):
            orig = arr[idx]
            arr[idx] = orig + h
            up = pair_objective_value(phi_m, phi_n, frozen, cfg)
            arr[idx] = orig - h
            down = pair_objective_value(phi_m, phi_n, frozen, cfg)
            arr[idx] = orig
            fd[idx] = (up - down) / (2 * h)
        scale = max(np.abs(grad).max(), 1e-12)
        err = np.abs(fd - grad).max() / scale
        assert err < tol, f"{objective}: FD mismatch {err:.2e}"


@pytest.mark.parametrize(
    "objective",
    [
        {"alignment": 1.0},
        {"coord": 1.0},
        {"l1": 1.0},
        {"smooth": 1.0},
        {"alignment": 1.0, "coord": 0.5, "l1": 0.25, "smooth": 2.0},
    ],
    ids=["alignment", "coord", "l1", "smooth", "weighted_sum"],
)
def test_frozen_gradients_match_finite_differences(objective):
    fd_gradient_check(objective)


def test_init_lbo_seed_aligns_isometric_selfpair():
    mesh_a = icosphere(1, name="a")
    mesh_b = icosphere(1, name="b")
    corpus = {"a": mesh_a, "b": mesh_b}
    corrs = identity_correspondences(["a", "b"], mesh_a.n)
    eset = init_embeddings(corpus, corrs, 5, strategy="LBO_seed")
    x = shape_coordinates(mesh_b, True)
    loss = loss_alignment(
        eset.embeddings["a"], eset.embeddings["b"], corrs[("a", "b")], x, temperature=1e-6
    )
    assert loss < 1e-6


def test_init_random_gaussian_deterministic():
    mesh = tetrahedron()
    corpus = {"t": mesh}
    a = init_embeddings(corpus, {}, 3, strategy="random_gaussian", seed=42)
    b = init_embeddings(corpus, {}, 3, strategy="random_gaussian", seed=42)
    assert np.array_equal(a.embeddings["t"], b.embeddings["t"])
    c = init_embeddings(corpus, {}, 3, strategy="random_gaussian", seed=43)
    assert not np.array_equal(a.embeddings["t"], c.embeddings["t"])


def test_init_k_exceeds_vertices():
    corpus = {"t": tetrahedron()}
    with pytest.raises(DimensionError):
        init_embeddings(corpus, {}, 5, strategy="LBO_seed")
    with pytest.raises(DimensionError):
        init_embeddings(corpus, {}, 5, strategy="random_gaussian")


def test_step_zero_learning_rate_keeps_embeddings():
    eset = small_pair_setup()
    before = {k: v.copy() for k, v in eset.embeddings.items()}
    cfg = TrainConfig(objective={"alignment": 1.0}, track_accuracy=False)
    after, loss = step_gradient(eset, ("a", "b"), cfg, lr=0.0)
    assert np.isfinite(loss)
    for name in before:
        assert np.array_equal(after.embeddings[name], before[name])


def test_step_pure_l1_gradient_on_positive_orthant():
    eset = small_pair_setup()
    for name in eset.embeddings:
        eset.embeddings[name] = np.abs(eset.embeddings[name]) + 0.5
    weight, lr = 0.7, 0.01
    cfg = TrainConfig(objective={"l1": weight}, track_accuracy=False)
    before = {k: v.copy() for k, v in eset.embeddings.items()}
    after, _ = step_gradient(eset, ("a", "b"), cfg, lr=lr)
    for name in before:
        # the subgradient on the positive orthant is the all-ones matrix
        assert after.embeddings[name] == pytest.approx(before[name] - lr * weight, abs=1e-15)


def test_step_unknown_pair():
    eset = small_pair_setup()
    with pytest.raises(KeyError):
        step_gradient(eset, ("a", "zzz"), TrainConfig(track_accuracy=False))


def test_step_nonfinite_gradient():
    eset = small_pair_setup()
    eset.embeddings["a"][0, 0] = np.inf
    cfg = TrainConfig(objective={"coord": 1.0}, track_accuracy=False)
    with pytest.raises(NonFiniteGradient):
        step_gradient(eset, ("a", "b"), cfg)


def test_train_zero_epochs():
    eset = small_pair_setup()
    before = {k: v.copy() for k, v in eset.embeddings.items()}
    out, result = train(eset, TrainConfig(epochs=0, track_accuracy=False))
    assert result.curve == []
    for name in before:
        assert np.array_equal(out.embeddings[name], before[name])


def test_train_deterministic_curves():
    def run():
        eset = small_pair_setup(seed=5, spread=False)
        cfg = TrainConfig(
            objective={"alignment": 1.0}, learning_rate=0.5, epochs=20,
            pair_schedule=7, temperature=0.2, restart_period=8, track_accuracy=False,
        )
        _, result = train(eset, cfg)
        return [(p.step, p.loss, p.lr, p.restart) for p in result.curve]

    assert run() == run()


def test_train_convergence_smoke_isometric_spheres():
    a = icosphere(2, name="a")
    b = icosphere(2, name="b")
    corpus = {"a": a, "b": b}
    n = a.n
    corrs = {("a", "b"): Correspondence(np.arange(n), "a", "b")}
    eset = init_embeddings(corpus, corrs, 8, strategy="random_gaussian", seed=0)
    tau = 0.1
    x = shape_coordinates(b, True)
    initial = loss_alignment(
        eset.embeddings["a"], eset.embeddings["b"], corrs[("a", "b")], x, tau
    )
    cfg = TrainConfig(
        objective={"alignment": 1.0}, learning_rate=1.0, epochs=500,
        pair_schedule=0, temperature=tau, restart_period=250, track_accuracy=False,
    )
    eset, result = train(eset, cfg)
    assert len(result.curve) == 500
    final = loss_alignment(
        eset.embeddings["a"], eset.embeddings["b"], corrs[("a", "b")], x, tau
    )
    assert final < 0.1 * initial


def test_train_coord_only_square_embeddings_reach_exact_span():
    mesh = tetrahedron()
    corpus = {"a": mesh, "b": tetrahedron(name="b")}
    corrs = identity_correspondences(["a", "b"], mesh.n)
    k = mesh.n
    eset = init_embeddings(corpus, corrs, k, strategy="random_gaussian", seed=1)
    cfg = TrainConfig(
        objective={"coord": 1.0}, learning_rate=0.05, epochs=20, track_accuracy=False
    )
    eset, _ = train(eset, cfg)
    for name, mesh in corpus.items():
        assert loss_coord(eset.embeddings[name], mesh.vertices) < 1e-8


def test_cosine_schedule_and_restart_marks():
    eset = small_pair_setup()
    cfg = TrainConfig(
        objective={"l1": 1.0}, learning_rate=0.01, epochs=12,
        restart_period=5, track_accuracy=False,
    )
    assert cfg.lr_at(0) == pytest.approx(0.01)
    assert cfg.lr_at(4) < cfg.lr_at(1) < cfg.lr_at(0)
    assert cfg.lr_at(5) == pytest.approx(0.01)  # warm restart
    _, result = train(eset, cfg)
    assert result.restart_epochs == [5, 10]
    flagged_steps = [p.step for p in result.curve if p.restart]
    assert flagged_steps == [5, 10]  # one pair: step index equals epoch


def test_accuracy_tracking_reports_monotone_flag():
    a = icosphere(1, name="a")
    b = icosphere(1, name="b")
    corpus = {"a": a, "b": b}
    corrs = {("a", "b"): Correspondence(np.arange(a.n), "a", "b")}
    eset = init_embeddings(corpus, corrs, 4, strategy="random_gaussian", seed=2)
    cfg = TrainConfig(
        objective={"alignment": 1.0}, learning_rate=0.5, epochs=30,
        temperature=0.1, restart_period=15,
    )
    _, result = train(eset, cfg)
    assert 2 <= len(result.accuracy) <= 10
    assert all(0.0 <= acc <= 1.0 for _, acc in result.accuracy)
    assert isinstance(result.accuracy_monotone, bool)


def test_validation_of_config():
    with pytest.raises(ValueError):
        TrainConfig(objective={})
    with pytest.raises(ValueError):
        TrainConfig(objective={"alignment": 0.0})
    with pytest.raises(ValueError):
        TrainConfig(objective={"bogus": 1.0})
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0.0)
    cfg = paper_schedule()
    assert cfg.learning_rate == pytest.approx(1e-4)
    assert cfg.epochs == 1200


def test_embedding_set_validation():
    mesh = tetrahedron()
    with pytest.raises(DimensionError):
        EmbeddingSet(
            embeddings={"a": np.zeros((4, 3))}, k=3, corpus={}, correspondences={}
        )
    with pytest.raises(DimensionError):
        EmbeddingSet(
            embeddings={"a": np.zeros((5, 3))}, k=3, corpus={"a": mesh}, correspondences={}
        )


def test_export_and_curve_files(tmp_path):
    eset = small_pair_setup()
    cfg = TrainConfig(objective={"l1": 1.0}, learning_rate=0.01, epochs=3,
                      track_accuracy=False)
    eset, result = train(eset, cfg)
    paths = export_embeddings(eset, tmp_path)
    assert len(paths) == 2
    back = load_basis(paths[0])
    assert back.kind == "Learned"
    assert np.array_equal(back.functions, eset.embeddings["a"])
    curve_path = tmp_path / "loss_curve.csv"
    write_loss_curve(result, curve_path)
    lines = curve_path.read_text().splitlines()
    assert lines[0] == "step,loss,lr,restart_flag"
    assert len(lines) == 1 + len(result.curve)
