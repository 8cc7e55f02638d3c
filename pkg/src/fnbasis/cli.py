"""Command-line interface.

Every subcommand takes ``--seed`` and ``--out-dir``; all outputs are
deterministic for fixed inputs and seed. Exit codes: 0 success, 2 when
some pairs of a batch failed, 1 for configuration or I/O errors.
"""

import os
import sys
from dataclasses import replace

import click
import numpy as np

from . import embedding as emb
from . import harness
from .errors import FnbasisError
from .fmap import load_correspondence, save_correspondence, save_fmap
from .geodesics import cut_geodesic_ball, save_partial_cut
from .mesh import load_mesh
from .spectral import build_laplacian, eigenbasis, save_basis


def common_options(f):
    f = click.option("--seed", type=int, default=0, show_default=True,
                     help="Seed for any stochastic stage.")(f)
    f = click.option("--out-dir", type=click.Path(file_okay=False), default=".",
                     show_default=True, help="Directory for output files.")(f)
    return f


def _ensure_out(out_dir):
    os.makedirs(out_dir, exist_ok=True)
    return out_dir


@click.group()
def cli():
    """Functional-basis shape matching toolkit."""


@cli.command()
@click.argument("mesh_path", type=click.Path(exists=True, dir_okay=False))
@click.option("-k", type=int, default=20, show_default=True, help="Number of eigenfunctions.")
@common_options
def basis(mesh_path, k, seed, out_dir):
    """Compute and save the LBO eigenbasis of MESH_PATH."""
    _ensure_out(out_dir)
    mesh = load_mesh(mesh_path)
    b = eigenbasis(build_laplacian(mesh), k)
    path = os.path.join(out_dir, f"{mesh.name}.fnbasis")
    save_basis(b, path)
    click.echo(f"wrote {path} (n={b.n}, k={b.k}, lambda_max={b.eigenvalues[-1]:.6g})")


def _basis_spec(basis_kind, k, learned_dir, cut):
    return harness.BasisSpec(kind=basis_kind, k=k, learned_dir=learned_dir, cut=cut)


def _single_pair(source, target, gt):
    src_id = os.path.splitext(os.path.basename(source))[0]
    tgt_id = os.path.splitext(os.path.basename(target))[0]
    return harness.PairSpec(f"{src_id}__{tgt_id}", source, target, gt)


@cli.command()
@click.argument("source", type=click.Path(exists=True, dir_okay=False))
@click.argument("target", type=click.Path(exists=True, dir_okay=False))
@click.argument("gt", type=click.Path(exists=True, dir_okay=False))
@click.option("--pipeline", type=click.Choice(["optimal_C", "descriptor_C"]),
              default="optimal_C", show_default=True)
@click.option("--basis-kind", type=click.Choice(["lbo", "learned", "hybrid"]),
              default="lbo", show_default=True)
@click.option("-k", type=int, default=20, show_default=True)
@click.option("--learned-dir", type=click.Path(file_okay=False), default=None,
              help="Directory holding <mesh>.fnbasis files.")
@click.option("--cut", type=int, default=None, help="Hybrid basis cut column.")
@click.option("--desc-dir", type=click.Path(file_okay=False), default=None,
              help="Directory holding <mesh>.fndesc files.")
@click.option("--normalization", type=click.Choice(["sqrt_area", "none"]),
              default="sqrt_area", show_default=True)
@click.option("--index-base", type=int, default=0, show_default=True,
              help="Index base of the ground-truth file (0 or 1).")
@common_options
def match(source, target, gt, pipeline, basis_kind, k, learned_dir, cut, desc_dir,
          normalization, index_base, seed, out_dir):
    """Match one SOURCE/TARGET pair and report the mean geodesic error."""
    _ensure_out(out_dir)
    cfg = harness.ExperimentConfig(
        pairs=(_single_pair(source, target, gt),),
        basis=_basis_spec(basis_kind, k, learned_dir, cut),
        pipeline=pipeline,
        descriptor_dir=desc_dir,
        error_normalization=normalization,
        seed=seed,
        index_base=index_base,
    )
    rows = harness.run_experiment(cfg, out_dir=out_dir)
    _echo_rows(rows)
    if any(r.error for r in rows):
        sys.exit(2)


@cli.command()
@click.argument("source", type=click.Path(exists=True, dir_okay=False))
@click.argument("target", type=click.Path(exists=True, dir_okay=False))
@click.argument("gt", type=click.Path(exists=True, dir_okay=False))
@click.option("--start-k", type=int, default=20, show_default=True)
@click.option("--end-k", type=int, default=40, show_default=True)
@click.option("--step", type=int, default=1, show_default=True)
@click.option("--basis-kind", type=click.Choice(["lbo", "learned", "hybrid"]),
              default="lbo", show_default=True)
@click.option("--learned-dir", type=click.Path(file_okay=False), default=None)
@click.option("--cut", type=int, default=None)
@click.option("--init", type=click.Choice(["optimal_C", "descriptor_C"]),
              default="optimal_C", show_default=True)
@click.option("--desc-dir", type=click.Path(file_okay=False), default=None)
@click.option("--checkpoints", type=str, default=None,
              help="Space-separated widths to report (default: end-k).")
@click.option("--normalization", type=click.Choice(["sqrt_area", "none"]),
              default="sqrt_area", show_default=True)
@click.option("--index-base", type=int, default=0, show_default=True)
@common_options
def zoomout(source, target, gt, start_k, end_k, step, basis_kind, learned_dir, cut,
            init, desc_dir, checkpoints, normalization, index_base, seed, out_dir):
    """Refine a map by spectral upsampling, exporting per-checkpoint snapshots."""
    from .zoomout import ZoomOutConfig

    _ensure_out(out_dir)
    source_kind = "HybridLearnedThenLBO" if basis_kind == "hybrid" else "LBO"
    cfg = harness.ExperimentConfig(
        pairs=(_single_pair(source, target, gt),),
        basis=_basis_spec(basis_kind, start_k, learned_dir, cut),
        pipeline="zoomout_refine",
        descriptor_dir=desc_dir,
        zoomout=ZoomOutConfig(start_k=start_k, end_k=end_k, step=step, basis_source=source_kind),
        zoomout_init=init,
        checkpoints=tuple(int(x) for x in checkpoints.split()) if checkpoints else None,
        error_normalization=normalization,
        seed=seed,
        index_base=index_base,
    )
    rows = harness.run_experiment(cfg, out_dir=out_dir)
    _echo_rows(rows)
    if any(r.error for r in rows):
        sys.exit(2)


@cli.command()
@click.argument("mesh_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--landmark", type=int, required=True, help="Full-mesh vertex index.")
@click.option("--radius", type=float, required=True, help="Geodesic cut radius.")
@click.option("--keep-all-components", is_flag=True, default=False,
              help="Keep every component of the remainder, not just the largest.")
@common_options
def cut(mesh_path, landmark, radius, keep_all_components, seed, out_dir):
    """Remove the geodesic ball around a landmark and save the partial mesh."""
    _ensure_out(out_dir)
    mesh = load_mesh(mesh_path)
    result = cut_geodesic_ball(mesh, landmark, radius, keep_all_components=keep_all_components)
    base = os.path.join(out_dir, f"{mesh.name}_cut{radius:g}")
    save_partial_cut(result, base)
    click.echo(
        f"wrote {base}.off and {base}.kept_to_full "
        f"({result.partial.n}/{mesh.n} vertices kept)"
    )


@cli.command("learn-embedding")
@click.argument("config_path", type=click.Path(exists=True, dir_okay=False))
@common_options
def learn_embedding(config_path, seed, out_dir):
    """Train free per-shape embeddings on a correspondence-annotated corpus."""
    _ensure_out(out_dir)
    corpus, corrs, k, strategy, cfg = harness.load_training_config(config_path)
    cfg = replace(cfg, pair_schedule=seed if seed else cfg.pair_schedule)
    eset = emb.init_embeddings(corpus, corrs, k, strategy=strategy, seed=seed)
    eset, result = emb.train(eset, cfg)
    emb.export_embeddings(eset, out_dir)
    emb.write_loss_curve(result, os.path.join(out_dir, "loss_curve.csv"))
    with open(os.path.join(out_dir, "train_config.txt"), "w", encoding="utf-8", newline="\n") as f:
        f.write(f"k = {k}\ninit = {strategy}\nseed = {seed}\n")
        for key in ("objective", "learning_rate", "epochs", "temperature",
                    "restart_period", "center_unit_area", "smooth_lbo_k"):
            f.write(f"{key} = {getattr(cfg, key)}\n")
    final = result.curve[-1].loss if result.curve else float("nan")
    click.echo(f"trained {len(corpus)} shapes, k={k}, final step loss {final:.6g}")
    if result.accuracy:
        acc = ", ".join(f"{e}:{a:.3f}" for e, a in result.accuracy)
        click.echo(f"pointmap accuracy checkpoints (epoch:acc): {acc}")
        if result.accuracy_monotone is False:
            click.echo("note: accuracy was not monotone over checkpoints (reported, not an error)")


@cli.command("eval")
@click.argument("config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--jobs", type=int, default=None, help="Concurrent pairs (overrides config).")
@click.option("--timing", is_flag=True, default=False,
              help="Record real wall times in the CSV (reruns then differ).")
@common_options
def eval_cmd(config_path, jobs, timing, seed, out_dir):
    """Run a full experiment config; writes report.csv."""
    _ensure_out(out_dir)
    cfg = harness.load_experiment_config(config_path)
    if jobs:
        cfg = replace(cfg, jobs=jobs)
    part = harness.load_partiality_section(config_path)
    if part is not None:
        landmark, radii = part
        rows = harness.run_partiality(cfg, landmark, radii, out_dir=out_dir, timing=timing)
    else:
        rows = harness.run_experiment(cfg, out_dir=out_dir, timing=timing)
    _echo_rows(rows)
    click.echo(f"wrote {os.path.join(out_dir, 'report.csv')}")
    if any(r.error for r in rows):
        sys.exit(2)


@cli.command()
@click.argument("error_files", type=click.Path(exists=True, dir_okay=False), nargs=-1,
                required=True)
@click.option("--thresholds", type=str, default="0:10:51", show_default=True,
              help="start:stop:count grid, or comma-separated values.")
@common_options
def curve(error_files, thresholds, seed, out_dir):
    """Cumulative accuracy curve from per-vertex error files."""
    _ensure_out(out_dir)
    if ":" in thresholds:
        start, stop, count = thresholds.split(":")
        grid = np.linspace(float(start), float(stop), int(count))
    else:
        grid = np.array([float(x) for x in thresholds.split(",")])
    arrays = [harness.load_errors(p) for p in error_files]
    fractions = harness.accuracy_curve(arrays, grid)
    path = os.path.join(out_dir, "curve.csv")
    harness.write_curve_csv(grid, fractions, path)
    click.echo(f"wrote {path}")


def _echo_rows(rows):
    for row in rows:
        if row.error:
            click.echo(f"{row.pair_id}: ERROR {row.error}")
        else:
            tag = f" [{row.checkpoint}]" if row.checkpoint else ""
            click.echo(f"{row.pair_id}{tag}: mean_err={row.mean_err:.6f}")


def main():
    try:
        cli(standalone_mode=False)
    except click.exceptions.Abort:
        sys.exit(1)
    except click.exceptions.Exit as exc:
        sys.exit(exc.exit_code)
    except click.ClickException as exc:
        exc.show()
        sys.exit(1)
    except (FnbasisError, FileNotFoundError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)


if __name__ == "__main__":
    main()
