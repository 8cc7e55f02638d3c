"""Experiment orchestration: benchmark runs over pair lists, report CSVs
shaped like the standard matching tables, and the partiality protocol.

Reports are deterministic: rows are sorted by pair id, floats use fixed
formatting and the wall-time column defaults to zero so that reruns are
byte-identical (pass ``timing=True`` to record real timings instead).
"""

import configparser
import os
import time
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ParseError
from .fmap import (
    c_from_correspondence,
    c_from_descriptors,
    load_correspondence,
    load_descriptors,
    pointmap_from_c,
    save_correspondence,
    save_fmap,
)
from .geodesics import cut_geodesic_ball, geodesic_error, restrict_correspondence
from .mesh import load_mesh
from .spectral import SpectralBasis, build_laplacian, eigenbasis, hybrid_basis, load_basis
from .zoomout import ZoomOutConfig, zoomout

CSV_HEADER = "pair,pipeline,basis,k,d,checkpoint,mean_err,time_ms"
PIPELINES = ("optimal_C", "descriptor_C", "zoomout_refine")
BASIS_KINDS = ("lbo", "learned", "hybrid")


@dataclass(frozen=True)
class PairSpec:
    pair_id: str
    source: str
    target: str
    gt: str


@dataclass(frozen=True)
class BasisSpec:
    """How to build the per-shape basis: LBO width, learned file dir, hybrid cut."""

    kind: str = "lbo"
    k: int = 20
    learned_dir: str | None = None
    cut: int | None = None

    def __post_init__(self):
        if self.kind not in BASIS_KINDS:
            raise ValueError(f"unknown basis kind {self.kind!r}")
        if self.kind in ("learned", "hybrid") and not self.learned_dir:
            raise ValueError(f"basis kind {self.kind!r} needs learned_dir")


@dataclass(frozen=True)
class ExperimentConfig:
    pairs: tuple
    basis: BasisSpec = BasisSpec()
    pipeline: str = "optimal_C"
    descriptor_dir: str | None = None
    zoomout: ZoomOutConfig | None = None
    zoomout_init: str = "optimal_C"
    checkpoints: tuple | None = None
    error_normalization: str = "sqrt_area"
    seed: int = 0
    index_base: int = 0
    jobs: int = 1

    def __post_init__(self):
        if not self.pairs:
            raise ValueError("experiment needs at least one pair")
        if self.pipeline not in PIPELINES:
            raise ValueError(f"unknown pipeline {self.pipeline!r}")
        if self.pipeline == "zoomout_refine" and self.zoomout is None:
            raise ValueError("zoomout_refine needs a [zoomout] section")


@dataclass
class ReportRow:
    pair_id: str
    pipeline: str
    basis_kind: str
    k: int
    d: int | None = None
    checkpoint: str = ""
    mean_err: float = float("nan")
    time_ms: float = 0.0
    error: str | None = None
    radius: float | None = None
    n_source: int | None = None
    per_vertex: np.ndarray | None = None

    def csv_line(self):
        d = "" if self.d is None else str(self.d)
        checkpoint = self.error if self.error else self.checkpoint
        return (
            f"{self.pair_id},{self.pipeline},{self.basis_kind},{self.k},{d},"
            f"{checkpoint},{self.mean_err:.6f},{self.time_ms:.6f}"
        )


def pair_seed(seed, pair_id):
    """Per-pair seed: run seed xor a stable hash of the pair id."""
    return seed ^ zlib.crc32(pair_id.encode("utf-8"))


def _learned_path(spec, mesh_name):
    return os.path.join(spec.learned_dir, f"{mesh_name}.fnbasis")


def _build_basis(spec, mesh, need_k, lap=None):
    """Basis for one shape per the spec, at least ``need_k`` columns wide."""
    if spec.kind == "lbo":
        lap = lap or build_laplacian(mesh)
        return eigenbasis(lap, need_k)
    learned = load_basis(_learned_path(spec, mesh.name))
    if spec.kind == "learned":
        return learned
    cut = spec.cut if spec.cut is not None else learned.k
    lap = lap or build_laplacian(mesh)
    lbo = eigenbasis(lap, max(need_k, cut + 1))
    return hybrid_basis(learned.head(min(cut, learned.k)), lbo, min(cut, learned.k))


def _match_once(basis_m, basis_n, gt, cfg, tgt, descriptors=None):
    """One map estimation + point recovery + geodesic evaluation."""
    if descriptors is not None:
        fmap = c_from_descriptors(basis_m, basis_n, descriptors[0], descriptors[1])
    else:
        fmap = c_from_correspondence(basis_m, basis_n, gt)
    pi = pointmap_from_c(fmap)
    errors, mean = geodesic_error(pi, gt, tgt, cfg.error_normalization)
    return fmap, pi, errors, mean


def _load_pair(cfg, pair):
    src = load_mesh(pair.source)
    tgt = load_mesh(pair.target)
    gt = load_correspondence(
        pair.gt, index_base=cfg.index_base, source_name=src.name, target_name=tgt.name
    )
    if len(gt) != src.n:
        raise ParseError(
            f"ground truth for {pair.pair_id} has {len(gt)} lines, source has {src.n} vertices"
        )
    gt.check_range(tgt.n)
    return src, tgt, gt


def _pair_descriptors(cfg, src, tgt):
    if cfg.descriptor_dir is None:
        raise ValueError("descriptor_C pipeline needs a descriptor directory")
    d_m = load_descriptors(os.path.join(cfg.descriptor_dir, f"{src.name}.fndesc"))
    d_n = load_descriptors(os.path.join(cfg.descriptor_dir, f"{tgt.name}.fndesc"))
    return d_m, d_n


def run_pair(cfg, pair, out_dir=None):
    """Execute the configured pipeline on one pair; returns its report rows."""
    t0 = time.perf_counter()
    src, tgt, gt = _load_pair(cfg, pair)
    rows = []
    if cfg.pipeline in ("optimal_C", "descriptor_C"):
        need_k = cfg.basis.k
        basis_m = _build_basis(cfg.basis, src, need_k).head(need_k)
        basis_n = _build_basis(cfg.basis, tgt, need_k).head(need_k)
        descriptors = _pair_descriptors(cfg, src, tgt) if cfg.pipeline == "descriptor_C" else None
        _, pi, errors, mean = _match_once(basis_m, basis_n, gt, cfg, tgt, descriptors)
        if out_dir:
            save_correspondence(pi, os.path.join(out_dir, f"{pair.pair_id}.corr"))
            _write_errors(errors, os.path.join(out_dir, f"{pair.pair_id}_errors.txt"))
        rows.append(
            ReportRow(
                pair_id=pair.pair_id, pipeline=cfg.pipeline, basis_kind=cfg.basis.kind,
                k=need_k, d=descriptors[0].d if descriptors else None,
                mean_err=mean, n_source=src.n, per_vertex=errors,
            )
        )
    else:
        zo = cfg.zoomout
        basis_m = _build_basis(cfg.basis, src, zo.end_k)
        basis_n = _build_basis(cfg.basis, tgt, zo.end_k)
        descriptors = (
            _pair_descriptors(cfg, src, tgt) if cfg.zoomout_init == "descriptor_C" else None
        )
        _, pi_init, err0, mean0 = _match_once(
            basis_m.head(zo.start_k), basis_n.head(zo.start_k), gt, cfg, tgt, descriptors
        )
        rows.append(
            ReportRow(
                pair_id=pair.pair_id, pipeline=cfg.pipeline, basis_kind=cfg.basis.kind,
                k=zo.start_k, d=descriptors[0].d if descriptors else None,
                checkpoint="init", mean_err=mean0, n_source=src.n, per_vertex=err0,
            )
        )
        trace = zoomout(pi_init, basis_m, basis_n, zo)
        wanted = list(cfg.checkpoints) if cfg.checkpoints else [zo.end_k]
        reached = {rec.k for rec in trace.records}
        for k in wanted:
            if k not in reached:
                continue
            rec = trace.at(k)
            errors, mean = geodesic_error(rec.correspondence, gt, tgt, cfg.error_normalization)
            if out_dir:
                save_fmap(rec.fmap, os.path.join(out_dir, f"{pair.pair_id}_zo{k}.fnmap"))
                save_correspondence(
                    rec.correspondence, os.path.join(out_dir, f"{pair.pair_id}_zo{k}.corr")
                )
            rows.append(
                ReportRow(
                    pair_id=pair.pair_id, pipeline=cfg.pipeline, basis_kind=cfg.basis.kind,
                    k=k, d=descriptors[0].d if descriptors else None,
                    checkpoint=str(k), mean_err=mean, n_source=src.n, per_vertex=errors,
                )
            )
    elapsed = (time.perf_counter() - t0) * 1000.0
    for row in rows:
        row.time_ms = elapsed
    return rows


def run_experiment(cfg, out_dir=None, timing=False):
    """Run every pair of the experiment; failures become error rows.

    Returns the full row list sorted by pair id. When ``out_dir`` is given,
    per-pair artifacts and ``report.csv`` are written there.
    """
    _check_inputs(cfg)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)

    def one(pair):
        try:
            return run_pair(cfg, pair, out_dir)
        except Exception as exc:  # a failed pair must not abort the batch
            return [
                ReportRow(
                    pair_id=pair.pair_id, pipeline=cfg.pipeline, basis_kind=cfg.basis.kind,
                    k=cfg.basis.k, error=type(exc).__name__,
                )
            ]

    pairs = sorted(cfg.pairs, key=lambda p: p.pair_id)
    if cfg.jobs > 1:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            chunks = list(pool.map(one, pairs))
    else:
        chunks = [one(p) for p in pairs]
    rows = [row for chunk in chunks for row in chunk]
    rows.sort(key=lambda r: r.pair_id)
    if not timing:
        for row in rows:
            row.time_ms = 0.0
    if out_dir:
        write_report_csv(rows, os.path.join(out_dir, "report.csv"))
    return rows


def _check_inputs(cfg):
    for pair in cfg.pairs:
        for path in (pair.source, pair.target, pair.gt):
            if not os.path.exists(path):
                raise FileNotFoundError(f"input file missing: {path}")


def run_partiality(cfg, landmark, radii, out_dir=None, timing=False):
    """Partiality protocol: cut the source at each radius and re-match.

    Radius 0 means the full shape. The LBO basis is recomputed on each
    partial mesh; a learned basis is row-restricted through the kept-vertex
    map. Rows carry ``pair_id:r=<radius>`` ids; per-radius failures become
    error rows.
    """
    _check_inputs(cfg)
    if cfg.basis.kind == "hybrid":
        raise ValueError("partiality protocol supports lbo and learned bases")
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
    rows = []
    for pair in sorted(cfg.pairs, key=lambda p: p.pair_id):
        src, tgt, gt = _load_pair(cfg, pair)
        basis_n = _build_basis(cfg.basis, tgt, cfg.basis.k).head(cfg.basis.k)
        for radius in radii:
            row_id = f"{pair.pair_id}:r={radius:g}"
            t0 = time.perf_counter()
            try:
                if radius == 0:
                    part_src, gt_r = src, gt
                    basis_m = _build_basis(cfg.basis, src, cfg.basis.k).head(cfg.basis.k)
                else:
                    cut = cut_geodesic_ball(src, landmark, radius)
                    part_src = cut.partial
                    gt_r = restrict_correspondence(gt, cut.kept_to_full)
                    if cfg.basis.kind == "lbo":
                        basis_m = eigenbasis(build_laplacian(part_src), cfg.basis.k)
                    else:
                        full = load_basis(_learned_path(cfg.basis, src.name))
                        basis_m = SpectralBasis(
                            full.functions[cut.kept_to_full], None,
                            kind="Learned", mesh_name=part_src.name,
                        )
                _, pi, errors, mean = _match_once(basis_m, basis_n, gt_r, cfg, tgt)
                elapsed = (time.perf_counter() - t0) * 1000.0
                rows.append(
                    ReportRow(
                        pair_id=row_id, pipeline=cfg.pipeline, basis_kind=cfg.basis.kind,
                        k=cfg.basis.k, mean_err=mean, time_ms=elapsed if timing else 0.0,
                        radius=float(radius), n_source=part_src.n, per_vertex=errors,
                    )
                )
            except Exception as exc:
                rows.append(
                    ReportRow(
                        pair_id=row_id, pipeline=cfg.pipeline, basis_kind=cfg.basis.kind,
                        k=cfg.basis.k, error=type(exc).__name__, radius=float(radius),
                    )
                )
    rows.sort(key=lambda r: r.pair_id)
    if out_dir:
        write_report_csv(rows, os.path.join(out_dir, "report.csv"))
        _write_partiality_summary(rows, os.path.join(out_dir, "partiality_summary.csv"))
    return rows


def partiality_summary(rows):
    """Mean error per radius over the non-failed rows (the per-column means
    of a partiality table)."""
    by_radius = {}
    for row in rows:
        if row.radius is None or row.error:
            continue
        by_radius.setdefault(row.radius, []).append(row.mean_err)
    return {r: float(np.mean(v)) for r, v in sorted(by_radius.items())}


def _write_partiality_summary(rows, path):
    summary = partiality_summary(rows)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("radius,mean_err,n_rows\n")
        for radius, mean in summary.items():
            count = sum(1 for r in rows if r.radius == radius and not r.error)
            f.write(f"{radius:.6f},{mean:.6f},{count}\n")


def write_report_csv(rows, path):
    """The report CSV: fixed header, 6-decimal floats, LF endings."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(CSV_HEADER + "\n")
        for row in rows:
            f.write(row.csv_line() + "\n")


def _write_errors(errors, path):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for e in errors:
            f.write(f"{e:.17g}\n")


def load_errors(path):
    with open(path, "r", encoding="utf-8") as f:
        return np.array([float(line) for line in f if line.strip()], dtype=np.float64)


def accuracy_curve(error_arrays, thresholds):
    """Fraction of points with error <= t for each threshold t.

    Monotone non-decreasing in t by construction.
    """
    errors = np.concatenate([np.asarray(e, dtype=np.float64).ravel() for e in error_arrays])
    thresholds = np.asarray(thresholds, dtype=np.float64)
    if errors.size == 0:
        return np.zeros_like(thresholds)
    return np.array([np.mean(errors <= t) for t in thresholds])


def write_curve_csv(thresholds, fractions, path):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("threshold,accuracy\n")
        for t, a in zip(thresholds, fractions):
            f.write(f"{t:.6f},{a:.6f}\n")


# ---------------------------------------------------------------------------
# config file: ini-style sections, documented in the README


def load_experiment_config(path):
    """Parse an experiment config file.

    Sections: [experiment] (pipeline, normalization, seed, index_base,
    jobs), [basis] (kind, k, learned_dir, cut), [descriptors] (dir),
    [zoomout] (start_k, end_k, step, source, init, checkpoints) and
    [pairs] (one ``id = source target gt`` entry per pair). Relative paths
    resolve against the config file's directory.
    """
    parser = configparser.ConfigParser()
    parser.optionxform = str  # pair ids are case-sensitive
    read = parser.read(path)
    if not read:
        raise ParseError(f"cannot read config file {path}")
    base = os.path.dirname(os.path.abspath(path))

    def resolve(p):
        return p if os.path.isabs(p) else os.path.join(base, p)

    if "pairs" not in parser or not parser["pairs"]:
        raise ParseError("config needs a [pairs] section with at least one pair")
    pairs = []
    for pair_id, value in parser["pairs"].items():
        parts = value.split()
        if len(parts) != 3:
            raise ParseError(f"pair {pair_id!r} needs 'source target gt', got {value!r}")
        pairs.append(
            PairSpec(pair_id, resolve(parts[0]), resolve(parts[1]), resolve(parts[2]))
        )

    exp = parser["experiment"] if "experiment" in parser else {}
    bas = parser["basis"] if "basis" in parser else {}
    basis = BasisSpec(
        kind=bas.get("kind", "lbo"),
        k=int(bas.get("k", 20)),
        learned_dir=resolve(bas["learned_dir"]) if bas.get("learned_dir") else None,
        cut=int(bas["cut"]) if bas.get("cut") else None,
    )
    zo = None
    checkpoints = None
    zoomout_init = "optimal_C"
    if "zoomout" in parser:
        sec = parser["zoomout"]
        source = "HybridLearnedThenLBO" if basis.kind == "hybrid" else "LBO"
        zo = ZoomOutConfig(
            start_k=int(sec.get("start_k", basis.k)),
            end_k=int(sec["end_k"]),
            step=int(sec.get("step", 1)),
            basis_source=source,
        )
        zoomout_init = sec.get("init", "optimal_C")
        if sec.get("checkpoints"):
            checkpoints = tuple(int(x) for x in sec["checkpoints"].split())
    desc = parser["descriptors"] if "descriptors" in parser else {}
    return ExperimentConfig(
        pairs=tuple(pairs),
        basis=basis,
        pipeline=exp.get("pipeline", "optimal_C"),
        descriptor_dir=resolve(desc["dir"]) if desc.get("dir") else None,
        zoomout=zo,
        zoomout_init=zoomout_init,
        checkpoints=checkpoints,
        error_normalization=exp.get("normalization", "sqrt_area"),
        seed=int(exp.get("seed", 0)),
        index_base=int(exp.get("index_base", 0)),
        jobs=int(exp.get("jobs", 1)),
    )


def load_partiality_section(path):
    """Optional [partiality] section: landmark index and radii list."""
    parser = configparser.ConfigParser()
    parser.optionxform = str
    parser.read(path)
    if "partiality" not in parser:
        return None
    sec = parser["partiality"]
    return int(sec["landmark"]), tuple(float(x) for x in sec["radii"].split())


def load_training_config(path):
    """Parse a training config for the embedding optimizer.

    Needs the same [pairs] section as experiment configs plus a [train]
    section (k, epochs, learning_rate, temperature, restart_period, init,
    objective as space-separated ``term:weight`` entries, seed,
    center_unit_area, smooth_lbo_k, index_base).

    Returns
    -------
    (corpus, correspondences, k, init_strategy, TrainConfig)
    """
    from .embedding import TrainConfig

    parser = configparser.ConfigParser()
    parser.optionxform = str
    if not parser.read(path):
        raise ParseError(f"cannot read config file {path}")
    base = os.path.dirname(os.path.abspath(path))

    def resolve(p):
        return p if os.path.isabs(p) else os.path.join(base, p)

    if "pairs" not in parser or not parser["pairs"]:
        raise ParseError("training config needs a [pairs] section")
    sec = parser["train"] if "train" in parser else {}
    index_base = int(sec.get("index_base", 0))

    corpus = {}
    correspondences = {}
    for pair_id, value in parser["pairs"].items():
        parts = value.split()
        if len(parts) != 3:
            raise ParseError(f"pair {pair_id!r} needs 'source target gt', got {value!r}")
        src = load_mesh(resolve(parts[0]))
        tgt = load_mesh(resolve(parts[1]))
        corpus.setdefault(src.name, src)
        corpus.setdefault(tgt.name, tgt)
        correspondences[(src.name, tgt.name)] = load_correspondence(
            resolve(parts[2]), index_base=index_base,
            source_name=src.name, target_name=tgt.name,
        )

    objective = {"alignment": 1.0}
    if sec.get("objective"):
        objective = {}
        for entry in sec["objective"].split():
            term, _, weight = entry.partition(":")
            objective[term] = float(weight) if weight else 1.0
    cfg = TrainConfig(
        objective=objective,
        learning_rate=float(sec.get("learning_rate", 1e-2)),
        epochs=int(sec.get("epochs", 500)),
        pair_schedule=int(sec.get("seed", 0)),
        temperature=float(sec.get("temperature", 1.0)),
        restart_period=int(sec.get("restart_period", 100)),
        center_unit_area=sec.get("center_unit_area", "true").lower() in ("1", "true", "yes"),
        smooth_lbo_k=int(sec.get("smooth_lbo_k", 20)),
    )
    k = int(sec.get("k", 8))
    strategy = sec.get("init", "random_gaussian")
    return corpus, correspondences, k, strategy, cfg
