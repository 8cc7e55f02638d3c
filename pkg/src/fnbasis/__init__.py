"""Spectral and learned functional bases for non-rigid shape matching."""

from .embedding import (
    EmbeddingSet,
    TrainConfig,
    init_embeddings,
    paper_schedule,
    step_gradient,
    train,
)
from .fmap import (
    Correspondence,
    DescriptorSet,
    FunctionalMap,
    c_from_correspondence,
    c_from_descriptors,
    load_correspondence,
    loss_alignment,
    loss_coord,
    loss_l1,
    loss_smooth,
    loss_universal,
    pointmap_from_c,
    save_correspondence,
    soft_correspondence,
)
from .geodesics import (
    GeodesicField,
    PartialCut,
    cut_geodesic_ball,
    geodesic_error,
    geodesic_from,
)
from .harness import (
    BasisSpec,
    ExperimentConfig,
    PairSpec,
    ReportRow,
    accuracy_curve,
    load_experiment_config,
    run_experiment,
    run_partiality,
)
from .mesh import Mesh, VertexAreas, connected_components, load_mesh, save_mesh, vertex_areas
from .spectral import (
    LaplacianPair,
    SpectralBasis,
    build_laplacian,
    dirichlet_energy,
    eigenbasis,
    hybrid_basis,
    load_basis,
    save_basis,
)
from .zoomout import ZoomOutConfig, ZoomOutTrace, block_difference, offdiag_blocks, zoomout

__version__ = "0.1.0"

__all__ = [
    "BasisSpec",
    "Correspondence",
    "DescriptorSet",
    "EmbeddingSet",
    "ExperimentConfig",
    "FunctionalMap",
    "GeodesicField",
    "LaplacianPair",
    "Mesh",
    "PairSpec",
    "PartialCut",
    "ReportRow",
    "SpectralBasis",
    "TrainConfig",
    "VertexAreas",
    "ZoomOutConfig",
    "ZoomOutTrace",
    "accuracy_curve",
    "block_difference",
    "build_laplacian",
    "c_from_correspondence",
    "c_from_descriptors",
    "connected_components",
    "cut_geodesic_ball",
    "dirichlet_energy",
    "eigenbasis",
    "geodesic_error",
    "geodesic_from",
    "hybrid_basis",
    "init_embeddings",
    "load_basis",
    "load_correspondence",
    "load_experiment_config",
    "load_mesh",
    "loss_alignment",
    "loss_coord",
    "loss_l1",
    "loss_smooth",
    "loss_universal",
    "offdiag_blocks",
    "paper_schedule",
    "pointmap_from_c",
    "run_experiment",
    "run_partiality",
    "save_basis",
    "save_correspondence",
    "save_mesh",
    "soft_correspondence",
    "step_gradient",
    "train",
    "vertex_areas",
    "zoomout",
]
