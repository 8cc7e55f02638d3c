"""Desk-scale learned-embedding optimizer.

Fits one free n_s-by-k matrix per shape over a training corpus by plain
gradient descent on the matching losses, standing in for full network
training. Within each step the map estimated from the current embeddings
is held fixed (block-coordinate treatment) and only the remaining
expression is differentiated; the finite-difference checks in the test
suite target exactly this frozen objective.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial.distance import cdist

from .errors import DimensionError, NonFiniteGradient
from .fmap import Correspondence, _pinv_apply, nearest_rows
from .spectral import SpectralBasis, build_laplacian, eigenbasis, save_basis

OBJECTIVE_TERMS = ("alignment", "coord", "l1", "smooth")
INIT_STRATEGIES = ("LBO_seed", "random_gaussian")


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer configuration.

    ``objective`` maps term names (alignment, coord, l1, smooth) to
    nonnegative weights; at least one must be positive. The learning rate
    follows cosine annealing with warm restarts every ``restart_period``
    epochs. ``pair_schedule`` seeds the per-epoch pair ordering.
    """

    objective: dict = field(default_factory=lambda: {"alignment": 1.0})
    learning_rate: float = 1e-2
    epochs: int = 500
    pair_schedule: int = 0
    temperature: float = 1.0
    restart_period: int = 100
    center_unit_area: bool = True
    smooth_lbo_k: int = 20
    track_accuracy: bool = True

    def __post_init__(self):
        unknown = set(self.objective) - set(OBJECTIVE_TERMS)
        if unknown:
            raise ValueError(f"unknown objective terms: {sorted(unknown)}")
        if not any(wgt > 0 for wgt in self.objective.values()):
            raise ValueError("at least one objective weight must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.restart_period < 1:
            raise ValueError("restart_period must be >= 1")

    def lr_at(self, epoch):
        """Cosine-annealed learning rate with warm restarts (floor at 0)."""
        pos = epoch % self.restart_period
        return 0.5 * self.learning_rate * (1.0 + math.cos(math.pi * pos / self.restart_period))


def paper_schedule(**overrides):
    """The published training schedule: initial rate 1e-4, 1200 epochs."""
    base = dict(learning_rate=1e-4, epochs=1200, restart_period=100)
    base.update(overrides)
    return TrainConfig(**base)


@dataclass
class EmbeddingSet:
    """Free per-shape embedding matrices over a correspondence-annotated corpus.

    ``embeddings`` maps shape name to an (n_s, k) matrix; ``corpus`` maps
    shape name to its Mesh; ``correspondences`` maps ordered name pairs to
    their ground-truth point maps.
    """

    embeddings: dict
    k: int
    corpus: dict
    correspondences: dict

    def __post_init__(self):
        for name, emb in self.embeddings.items():
            if name not in self.corpus:
                raise DimensionError(f"embedding for unknown shape {name!r}")
            if emb.shape != (self.corpus[name].n, self.k):
                raise DimensionError(
                    f"embedding for {name!r} is {emb.shape}, expected "
                    f"({self.corpus[name].n}, {self.k})"
                )
        for (src, tgt), corr in self.correspondences.items():
            if src not in self.corpus or tgt not in self.corpus:
                raise DimensionError(f"correspondence references unknown pair ({src}, {tgt})")
            if len(corr) != self.corpus[src].n:
                raise DimensionError(f"ground truth for ({src}, {tgt}) has wrong length")
            corr.check_range(self.corpus[tgt].n)

    def pairs(self):
        return sorted(self.correspondences.keys())


def init_embeddings(corpus, correspondences, k, strategy="LBO_seed", seed=0):
    """Create an EmbeddingSet with seeded initial matrices.

    ``LBO_seed`` copies each shape's first k eigenfunctions;
    ``random_gaussian`` draws i.i.d. N(0, 1/k) entries from ``seed``.
    """
    if strategy not in INIT_STRATEGIES:
        raise ValueError(f"unknown init strategy {strategy!r}")
    embeddings = {}
    if strategy == "LBO_seed":
        for name in sorted(corpus):
            mesh = corpus[name]
            if mesh.n < k:
                raise DimensionError(f"shape {name!r} has {mesh.n} < k={k} vertices")
            embeddings[name] = eigenbasis(build_laplacian(mesh), k).functions
    else:
        rng = np.random.default_rng(seed)
        for name in sorted(corpus):
            mesh = corpus[name]
            if mesh.n < k:
                raise DimensionError(f"shape {name!r} has {mesh.n} < k={k} vertices")
            embeddings[name] = rng.standard_normal((mesh.n, k)) / np.sqrt(k)
    return EmbeddingSet(embeddings=embeddings, k=k, corpus=corpus, correspondences=correspondences)


def shape_coordinates(mesh, center_unit_area=True):
    """Training coordinates of a shape: optionally centered and scaled to unit area."""
    x = mesh.vertices
    if not center_unit_area:
        return np.array(x)
    return (x - x.mean(axis=0)) / np.sqrt(mesh.total_area())


# ---------------------------------------------------------------------------
# objective terms: each returns (value, gradients...) at fixed frozen inputs


def alignment_term(phi_m, phi_n, cmat, pi_targets, x_n, temperature):
    """Soft-correspondence alignment with a frozen map matrix.

    Returns (value, grad wrt phi_m, grad wrt phi_n). Entries at exactly
    zero distance take the zero subgradient of the Euclidean norm.
    """
    p = phi_m @ cmat
    d = cdist(p, phi_n)
    s = d * (-1.0 / temperature)
    s -= s.max(axis=1, keepdims=True)
    np.exp(s, out=s)
    s /= s.sum(axis=1, keepdims=True)

    r = s @ x_n - x_n[pi_targets]
    value = float(np.sum(r * r))

    g = 2.0 * (r @ x_n.T)
    g -= np.einsum("ij,ij->i", s, g)[:, None]
    g *= s  # gradient w.r.t. the logits
    g *= -1.0 / temperature  # now w.r.t. the distances
    np.divide(g, d, out=g, where=d > 1e-30)  # w.r.t. squared structure: w = g_d / d
    g[d <= 1e-30] = 0.0
    g_p = g.sum(axis=1)[:, None] * p - g @ phi_n
    g_m = g_p @ cmat.T
    g_n = g.sum(axis=0)[:, None] * phi_n - g.T @ p
    return value, g_m, g_n


def coord_term(phi, coeff, x):
    """Coordinate reconstruction with frozen projection coefficients."""
    r = phi @ coeff - x
    return float(np.sum(r * r)), 2.0 * (r @ coeff.T)


def l1_term(phi):
    """Entrywise absolute-value penalty; subgradient 0 at exact zeros."""
    return float(np.abs(phi).sum()), np.sign(phi)


def smooth_term(phi, lbo_funcs, lbo_vals, areas):
    """Dense spectral smoothness penalty; see fmap.loss_smooth for the value."""
    proj = lbo_funcs.T @ (areas[:, None] * phi)  # (k_lbo, k)
    back = lbo_funcs.T @ phi  # (k_lbo, k)
    diag = np.einsum("li,l,li->i", back, lbo_vals, proj)
    value = float(diag @ diag)
    k_phi = lbo_funcs @ (lbo_vals[:, None] * proj)
    kt_phi = areas[:, None] * (lbo_funcs @ (lbo_vals[:, None] * back))
    return value, 2.0 * (k_phi + kt_phi) * diag[None, :]


@dataclass(frozen=True)
class FrozenPairState:
    """Per-step constants: the frozen map, projection coefficients, shape data."""

    pair: tuple
    cmat: np.ndarray | None
    coeff_m: np.ndarray | None
    coeff_n: np.ndarray | None
    x_m: np.ndarray
    x_n: np.ndarray
    pi_targets: np.ndarray
    lbo_m: tuple | None
    lbo_n: tuple | None


def freeze_pair_state(eset, pair, cfg, lbo_cache=None):
    """Compute the quantities held constant during one gradient step."""
    src, tgt = pair
    phi_m, phi_n = eset.embeddings[src], eset.embeddings[tgt]
    pi = eset.correspondences[pair]
    x_m = shape_coordinates(eset.corpus[src], cfg.center_unit_area)
    x_n = shape_coordinates(eset.corpus[tgt], cfg.center_unit_area)
    weights = cfg.objective
    cmat = None
    if weights.get("alignment", 0) > 0:
        # raw least-squares map: identical to c_from_correspondence but does
        # not hard-fail on transiently ill-conditioned embeddings
        cmat = _pinv_apply(phi_m, phi_n[pi.targets])
    coeff_m = coeff_n = None
    if weights.get("coord", 0) > 0:
        coeff_m = _pinv_apply(phi_m, x_m)
        coeff_n = _pinv_apply(phi_n, x_n)
    lbo_m = lbo_n = None
    if weights.get("smooth", 0) > 0:
        lbo_m = _lbo_data(eset, src, cfg, lbo_cache)
        lbo_n = _lbo_data(eset, tgt, cfg, lbo_cache)
    return FrozenPairState(
        pair=pair, cmat=cmat, coeff_m=coeff_m, coeff_n=coeff_n,
        x_m=x_m, x_n=x_n, pi_targets=pi.targets, lbo_m=lbo_m, lbo_n=lbo_n,
    )


def _lbo_data(eset, name, cfg, cache):
    if cache is not None and name in cache:
        return cache[name]
    mesh = eset.corpus[name]
    lap = build_laplacian(mesh)
    basis = eigenbasis(lap, min(cfg.smooth_lbo_k, mesh.n))
    data = (basis.functions, basis.eigenvalues, lap.mass)
    if cache is not None:
        cache[name] = data
    return data


def alignment_value(phi_m, phi_n, cmat, pi_targets, x_n, temperature):
    """Forward-only evaluation of the alignment term."""
    s = cdist(phi_m @ cmat, phi_n) * (-1.0 / temperature)
    s -= s.max(axis=1, keepdims=True)
    np.exp(s, out=s)
    s /= s.sum(axis=1, keepdims=True)
    r = s @ x_n - x_n[pi_targets]
    return float(np.sum(r * r))


def pair_objective_value(phi_m, phi_n, frozen, cfg):
    """Weighted objective value at the frozen per-step state (no gradients)."""
    weights = cfg.objective
    value = 0.0
    wa = weights.get("alignment", 0)
    if wa > 0:
        value += wa * alignment_value(
            phi_m, phi_n, frozen.cmat, frozen.pi_targets, frozen.x_n, cfg.temperature
        )
    wc = weights.get("coord", 0)
    if wc > 0:
        for phi, coeff, x in ((phi_m, frozen.coeff_m, frozen.x_m), (phi_n, frozen.coeff_n, frozen.x_n)):
            r = phi @ coeff - x
            value += wc * float(np.sum(r * r))
    wl = weights.get("l1", 0)
    if wl > 0:
        value += wl * (float(np.abs(phi_m).sum()) + float(np.abs(phi_n).sum()))
    ws = weights.get("smooth", 0)
    if ws > 0:
        for phi, lbo in ((phi_m, frozen.lbo_m), (phi_n, frozen.lbo_n)):
            value += ws * smooth_term(phi, *lbo)[0]
    return value


def pair_objective(phi_m, phi_n, frozen, cfg):
    """Weighted objective and gradients at the frozen per-step state."""
    weights = cfg.objective
    value = 0.0
    g_m = np.zeros_like(phi_m)
    g_n = np.zeros_like(phi_n)
    wa = weights.get("alignment", 0)
    if wa > 0:
        val, gm, gn = alignment_term(
            phi_m, phi_n, frozen.cmat, frozen.pi_targets, frozen.x_n, cfg.temperature
        )
        value += wa * val
        g_m += wa * gm
        g_n += wa * gn
    wc = weights.get("coord", 0)
    if wc > 0:
        val, grad = coord_term(phi_m, frozen.coeff_m, frozen.x_m)
        value += wc * val
        g_m += wc * grad
        val, grad = coord_term(phi_n, frozen.coeff_n, frozen.x_n)
        value += wc * val
        g_n += wc * grad
    wl = weights.get("l1", 0)
    if wl > 0:
        for phi, grad_acc in ((phi_m, g_m), (phi_n, g_n)):
            val, grad = l1_term(phi)
            value += wl * val
            grad_acc += wl * grad
    ws = weights.get("smooth", 0)
    if ws > 0:
        for phi, grad_acc, lbo in ((phi_m, g_m, frozen.lbo_m), (phi_n, g_n, frozen.lbo_n)):
            val, grad = smooth_term(phi, *lbo)
            value += ws * val
            grad_acc += ws * grad
    return value, g_m, g_n


def step_gradient(eset, pair, cfg, lr=None, lbo_cache=None):
    """One gradient-descent update on both embeddings of a pair.

    The map and projection coefficients are frozen from the embeddings at
    step start; the returned loss is the frozen objective re-evaluated at
    the updated embeddings.

    Returns
    -------
    (EmbeddingSet, float)
    """
    if pair not in eset.correspondences:
        raise KeyError(f"pair {pair} not in corpus")
    lr = cfg.learning_rate if lr is None else lr
    src, tgt = pair
    phi_m, phi_n = eset.embeddings[src], eset.embeddings[tgt]
    if not (np.all(np.isfinite(phi_m)) and np.all(np.isfinite(phi_n))):
        raise NonFiniteGradient(
            f"non-finite embedding entries on pair {pair} before the step "
            f"(lr={lr:g}, objective={cfg.objective})"
        )
    frozen = freeze_pair_state(eset, pair, cfg, lbo_cache)
    _, g_m, g_n = pair_objective(phi_m, phi_n, frozen, cfg)
    if not (np.all(np.isfinite(g_m)) and np.all(np.isfinite(g_n))):
        raise NonFiniteGradient(
            f"non-finite gradient on pair {pair}: "
            f"|g_m| max={np.abs(g_m).max():g}, |g_n| max={np.abs(g_n).max():g}, "
            f"lr={lr:g}, objective={cfg.objective}"
        )
    new_m = phi_m - lr * g_m
    new_n = phi_n - lr * g_n
    loss = pair_objective_value(new_m, new_n, frozen, cfg)
    embeddings = dict(eset.embeddings)
    embeddings[src] = new_m
    embeddings[tgt] = new_n
    return replace(eset, embeddings=embeddings), float(loss)


@dataclass(frozen=True)
class CurvePoint:
    step: int
    loss: float
    lr: float
    restart: bool


@dataclass
class TrainResult:
    """Per-step loss curve plus accuracy checkpoints and restart markers."""

    curve: list
    accuracy: list  # (epoch, fraction of exactly-correct matches over training pairs)
    restart_epochs: list
    accuracy_monotone: bool | None


def train(eset, cfg):
    """Run the full schedule; deterministic given the config seeds.

    Returns
    -------
    (EmbeddingSet, TrainResult)
    """
    pairs = eset.pairs()
    if not pairs:
        raise DimensionError("corpus has no correspondence-annotated pairs")
    rng = np.random.default_rng(cfg.pair_schedule)
    lbo_cache = {}
    curve = []
    accuracy = []
    restart_epochs = []
    check_epochs = _checkpoint_epochs(cfg.epochs)
    step = 0
    for epoch in range(cfg.epochs):
        lr = cfg.lr_at(epoch)
        restart = epoch > 0 and epoch % cfg.restart_period == 0
        if restart:
            restart_epochs.append(epoch)
        order = rng.permutation(len(pairs))
        for j, idx in enumerate(order):
            eset, loss = step_gradient(eset, pairs[idx], cfg, lr=lr, lbo_cache=lbo_cache)
            curve.append(CurvePoint(step=step, loss=loss, lr=lr, restart=restart and j == 0))
            step += 1
        if cfg.track_accuracy and cfg.objective.get("alignment", 0) > 0 and epoch in check_epochs:
            accuracy.append((epoch, training_accuracy(eset)))
    monotone = None
    if len(accuracy) >= 2:
        vals = [a for _, a in accuracy]
        monotone = all(b >= a for a, b in zip(vals[:-1], vals[1:]))
    return eset, TrainResult(
        curve=curve, accuracy=accuracy, restart_epochs=restart_epochs,
        accuracy_monotone=monotone,
    )


def _checkpoint_epochs(epochs, count=10):
    if epochs <= 0:
        return set()
    return {int(round(x)) for x in np.linspace(0, epochs - 1, min(count, epochs))}


def training_accuracy(eset):
    """Fraction of exactly-correct matches over all training pairs (map + NN)."""
    total = hits = 0
    for pair in eset.pairs():
        src, tgt = pair
        pi = eset.correspondences[pair]
        cmat = _pinv_apply(eset.embeddings[src], eset.embeddings[tgt][pi.targets])
        pred = nearest_rows(eset.embeddings[tgt], eset.embeddings[src] @ cmat)
        hits += int(np.sum(pred == pi.targets))
        total += len(pi)
    return hits / total if total else 0.0


def write_loss_curve(result, path):
    """CSV curve: step,loss,lr,restart_flag."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("step,loss,lr,restart_flag\n")
        for pt in result.curve:
            f.write(f"{pt.step},{pt.loss:.17g},{pt.lr:.17g},{int(pt.restart)}\n")


def export_embeddings(eset, out_dir):
    """Write one FNBASIS v1 file (kind=Learned) per shape; returns the paths."""
    import os

    paths = []
    for name in sorted(eset.embeddings):
        basis = SpectralBasis(eset.embeddings[name], None, kind="Learned", mesh_name=name)
        path = os.path.join(out_dir, f"{name}.fnbasis")
        save_basis(basis, path)
        paths.append(path)
    return paths


def identity_correspondences(names, n):
    """Identity ground truth for every ordered pair of same-size shapes."""
    out = {}
    for a in names:
        for b in names:
            if a != b:
                out[(a, b)] = Correspondence(
                    np.arange(n, dtype=np.int64), source_name=a, target_name=b
                )
    return out
